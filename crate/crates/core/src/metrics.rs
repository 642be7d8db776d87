//! Image comparison: SSIM, RMS error, 2 pi offset alignment and stitched profiles.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::InterferogramStack;
use crate::image::{Image, PhaseMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Side of the square Gaussian window.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L` of the compared values.
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Default window with `L = max - min` of `reference` (1 when the reference is flat).
    pub fn for_reference<T: Scalar>(reference: &Image<T>) -> Self {
        Self {
            dynamic_range: value_range(reference),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(invalid("window", format!("{} must be odd and > 0", self.window)));
        }
        if !(self.sigma > 0.0) {
            return Err(invalid("sigma", "must be > 0"));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(invalid("k1/k2", "must be > 0"));
        }
        if !(self.dynamic_range > 0.0 && self.dynamic_range.is_finite()) {
            return Err(invalid("dynamic_range", "must be > 0"));
        }
        Ok(())
    }

    /// Normalized 1D Gaussian taps; the 2D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let c = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - c;
                (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// `max - min`, or 1 for a constant image.
pub fn value_range<T: Scalar>(img: &Image<T>) -> f64 {
    let (lo, hi) = img.min_max();
    let r = (hi - lo).as_f64();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsimResult<T> {
    pub mean: f64,
    /// One value per valid window position, `(W - window + 1) x (H - window + 1)`.
    pub map: Image<T>,
}

impl<T: Scalar> SsimResult<T> {
    /// Mean of the map over windows whose center pixel is set in `mask`.
    /// `mask` has the dimensions of the compared images. `None` when no window qualifies.
    pub fn masked_mean(&self, mask: &[bool], image_width: usize, window: usize) -> Option<f64> {
        let r = window / 2;
        let (mw, mh) = self.map.dims();
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..mh {
            for x in 0..mw {
                if mask[(y + r) * image_width + x + r] {
                    sum += self.map.get(x, y).as_f64();
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

// Valid-mode separable filtering of `src` (w x h) with `taps`.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Gaussian-windowed SSIM over every valid window position.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>, params: &SsimParams) -> Result<SsimResult<T>> {
    params.validate()?;
    a.ensure_same_dims(b)?;
    let (w, h) = a.dims();
    if w < params.window || h < params.window {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            window: params.window,
        });
    }
    let taps = params.taps();
    let av: Vec<f64> = a.data().iter().map(|v| v.as_f64()).collect();
    let bv: Vec<f64> = b.data().iter().map(|v| v.as_f64()).collect();
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter_valid(&av, w, h, &taps);
    let mu_b = filter_valid(&bv, w, h, &taps);
    let aa = filter_valid(&prod(&av, &av), w, h, &taps);
    let bb = filter_valid(&prod(&bv, &bv), w, h, &taps);
    let ab = filter_valid(&prod(&av, &bv), w, h, &taps);
    let (c1, c2) = (params.c1(), params.c2());
    let map: Vec<f64> = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    let (ow, oh) = (w - params.window + 1, h - params.window + 1);
    Ok(SsimResult {
        mean,
        map: Image::new(ow, oh, map.into_iter().map(T::of).collect())?,
    })
}

/// Pixels that differ from the median of `reference` by more than `fraction` of its range.
pub fn foreground_mask<T: Scalar>(reference: &Image<T>, fraction: f64) -> Vec<bool> {
    let med = median(reference.data().iter().map(|v| v.as_f64()).collect());
    let thr = fraction * value_range(reference);
    reference
        .data()
        .iter()
        .map(|v| (v.as_f64() - med).abs() > thr)
        .collect()
}

pub fn rms_error<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let ss: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok((ss / a.data().len() as f64).sqrt())
}

pub fn mean_abs_error<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .sum();
    Ok(s / a.data().len() as f64)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Removes the whole number of 2 pi turns closest to the median of `pred - truth`.
/// The residual median offset lies in `[-pi, pi)`.
pub fn align_global_offset<T: Scalar>(pred: &PhaseMap<T>, truth: &PhaseMap<T>) -> Result<PhaseMap<T>> {
    if pred.is_wrapped() || truth.is_wrapped() {
        return Err(Error::WrappedState("unwrapped"));
    }
    pred.image().ensure_same_dims(truth.image())?;
    let diffs = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| p.as_f64() - t.as_f64())
        .collect();
    let turns = (median(diffs) / TAU + 0.5).floor();
    if turns == 0.0 {
        return Ok(pred.clone());
    }
    let shift = T::of(turns * TAU);
    Ok(PhaseMap::unwrapped(pred.image().map(|p| p - shift)))
}

/// Rows of consecutive frames laid end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile<T> {
    pub values: Vec<T>,
    /// Start index of every segment after the first.
    pub boundaries: Vec<usize>,
}

impl<T: Scalar> Profile<T> {
    pub fn segments(&self) -> Vec<&[T]> {
        let mut cuts = vec![0];
        cuts.extend(&self.boundaries);
        cuts.push(self.values.len());
        cuts.windows(2).map(|c| &self.values[c[0]..c[1]]).collect()
    }
}

/// Row `row` of each frame, concatenated in frame order.
pub fn stitched_line_profile<T: Scalar>(stack: &InterferogramStack<T>, row: usize) -> Result<Profile<T>> {
    stitch_rows(stack.frames(), row)
}

pub fn stitch_rows<T: Scalar>(frames: &[Image<T>], row: usize) -> Result<Profile<T>> {
    let first = frames.first().ok_or_else(|| invalid("frames", "empty"))?;
    for f in frames {
        first.ensure_same_dims(f)?;
    }
    if row >= first.height() {
        return Err(Error::OutOfBounds(format!("row {row} outside 0..{}", first.height())));
    }
    let w = first.width();
    Ok(Profile {
        values: frames.iter().flat_map(|f| f.row(row).iter().copied()).collect(),
        boundaries: (1..frames.len()).map(|k| k * w).collect(),
    })
}

/// Serializable metric summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub params: serde_json::Value,
    pub value: f64,
    pub per_image: Vec<PerImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerImage {
    pub name: String,
    pub value: f64,
}

impl MetricReport {
    /// Report whose `value` is the mean of the per-image entries.
    pub fn from_entries(metric: &str, params: serde_json::Value, per_image: Vec<PerImage>) -> Self {
        let value = if per_image.is_empty() {
            f64::NAN
        } else {
            per_image.iter().map(|p| p.value).sum::<f64>() / per_image.len() as f64
        };
        Self {
            metric: metric.to_string(),
            params,
            value,
            per_image,
        }
    }
}
