//! Training pairs, augmentation and splitting.

use psim_core::rng::STREAM_SPLIT;
use psim_core::{Image, Sample, SimRng, FRAME_COUNT};
use serde::{Deserialize, Serialize};

use crate::error::{spec_err, Error, Result};
use crate::spec::Mode;

/// Affine map to the normalized range: `n = (x - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

/// Phase targets fill this fraction of [-1, 1], keeping them off tanh saturation.
pub const PHASE_HEADROOM: f64 = 0.9;

impl Normalization {
    pub const IDENTITY: Self = Self {
        offset: 0.0,
        scale: 1.0,
    };

    /// Maps `[lo, hi]` onto `[-fill, fill]`; a flat range gets unit scale.
    pub fn from_range(lo: f64, hi: f64, fill: f64) -> Self {
        let half = (hi - lo) / 2.0;
        Self {
            offset: (hi + lo) / 2.0,
            scale: if half > 0.0 { half / fill } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.offset
    }

    pub fn normalize(&self, img: &Image<f64>) -> Image<f64> {
        img.map(|v| self.apply(v))
    }

    pub fn denormalize(&self, img: &Image<f64>) -> Image<f64> {
        img.map(|v| self.invert(v))
    }
}

/// One acquisition as seen by the trainer: five frames and, when known, the
/// unwrapped ground-truth phase.
#[derive(Debug, Clone, PartialEq)]
pub struct StackRecord {
    pub frames: Vec<Image<f64>>,
    pub truth: Option<Image<f64>>,
}

impl From<&Sample<f64>> for StackRecord {
    fn from(s: &Sample<f64>) -> Self {
        Self {
            frames: s.stack.frames().to_vec(),
            truth: Some(s.truth.image().clone()),
        }
    }
}

impl StackRecord {
    /// Ground truth if present, otherwise the classical reconstruction
    /// (unwrapped, which already fixes the piston up to the unwrap seed).
    pub fn phase_target(&self) -> Result<Image<f64>> {
        match &self.truth {
            Some(t) => Ok(t.clone()),
            None => classical_phase(self),
        }
    }

    fn intensity_range(&self) -> (f64, f64) {
        self.frames
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                let (a, b) = f.min_max();
                (lo.min(a), hi.max(b))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub input: Image<f64>,
    pub target: Image<f64>,
    pub input_norm: Normalization,
    pub target_norm: Normalization,
    /// Index of the source stack.
    pub stack: usize,
    /// Frame-advance hop `k` for `I_k -> I_{k+1}` pairs (1-based).
    pub hop: Option<usize>,
}

/// Normalization constants a trained model needs at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    /// Mean of the per-stack intensity normalizations.
    pub intensity: Normalization,
    /// Dataset-wide phase range (phase mode only).
    pub phase: Option<Normalization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<PairedSample>,
    pub norms: NormRecord,
}

/// Frames mode: `(I_k -> I_{k+1})` for k = 1..4 with the stack's min/max
/// mapped to [-1, 1]. Phase mode: `(I_1 -> phase)` with a dataset-wide phase range.
pub fn build_pairs(stacks: &[StackRecord], mode: Mode) -> Result<PairSet> {
    build_pairs_with(stacks, mode, None)
}

/// As [`build_pairs`], but phase targets use `phase_range` when given (e.g.
/// the range stored with a model being resumed).
pub fn build_pairs_with(stacks: &[StackRecord], mode: Mode, phase_range: Option<Normalization>) -> Result<PairSet> {
    if stacks.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut intensity = Vec::with_capacity(stacks.len());
    for (i, s) in stacks.iter().enumerate() {
        if s.frames.len() != FRAME_COUNT {
            return Err(spec_err("frames", format!("stack {i} has {} frames", s.frames.len())));
        }
        let (lo, hi) = s.intensity_range();
        intensity.push(Normalization::from_range(lo, hi, 1.0));
    }
    let n = stacks.len() as f64;
    let mean_norm = Normalization {
        offset: intensity.iter().map(|r| r.offset).sum::<f64>() / n,
        scale: intensity.iter().map(|r| r.scale).sum::<f64>() / n,
    };
    let mut pairs = Vec::new();
    let phase = match mode {
        Mode::Frames => {
            for (i, (s, norm)) in stacks.iter().zip(&intensity).enumerate() {
                for k in 0..FRAME_COUNT - 1 {
                    pairs.push(PairedSample {
                        input: norm.normalize(&s.frames[k]),
                        target: norm.normalize(&s.frames[k + 1]),
                        input_norm: *norm,
                        target_norm: *norm,
                        stack: i,
                        hop: Some(k + 1),
                    });
                }
            }
            None
        }
        Mode::Phase => {
            let targets = stacks
                .iter()
                .map(StackRecord::phase_target)
                .collect::<Result<Vec<_>>>()?;
            let (lo, hi) = targets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let (a, b) = t.min_max();
                (lo.min(a), hi.max(b))
            });
            let pn = phase_range.unwrap_or_else(|| Normalization::from_range(lo, hi, PHASE_HEADROOM));
            for (i, ((s, norm), t)) in stacks.iter().zip(&intensity).zip(&targets).enumerate() {
                pairs.push(PairedSample {
                    input: norm.normalize(&s.frames[0]),
                    target: pn.normalize(t),
                    input_norm: *norm,
                    target_norm: pn,
                    stack: i,
                    hop: None,
                });
            }
            Some(pn)
        }
    };
    Ok(PairSet {
        pairs,
        norms: NormRecord {
            intensity: mean_norm,
            phase,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Identity,
    /// Counter-clockwise rotation by `k * 30` degrees, k in 0..12.
    Rotate(u8),
    FlipH,
    FlipV,
}

pub const ROTATION_STEPS: u8 = 12;

impl AugmentOp {
    pub fn rotations() -> impl Iterator<Item = AugmentOp> {
        (0..ROTATION_STEPS).map(AugmentOp::Rotate)
    }
}

/// Exact cosine and sine of `k * 30` degrees for multiples of 90.
fn rotation_trig(k: u8) -> (f64, f64) {
    match k % ROTATION_STEPS {
        0 => (1.0, 0.0),
        3 => (0.0, 1.0),
        6 => (-1.0, 0.0),
        9 => (0.0, -1.0),
        k => {
            let t = (k as f64 * 30.0).to_radians();
            (t.cos(), t.sin())
        }
    }
}

/// Folds a coordinate into `[0, n - 1]` by mirroring about the edge pixels.
fn reflect(t: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let period = 2.0 * (n - 1) as f64;
    let t = t.rem_euclid(period);
    if t > (n - 1) as f64 {
        period - t
    } else {
        t
    }
}

fn bilinear(img: &Image<f64>, x: f64, y: f64) -> f64 {
    let (w, h) = img.dims();
    let (x, y) = (reflect(x, w), reflect(y, h));
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Rotates about the image center with bilinear sampling; samples falling
/// outside are taken from the mirror-reflected image, so the output keeps the
/// input size. Multiples of 90 degrees on square images are exact permutations.
pub fn rotate_image(img: &Image<f64>, k: u8) -> Image<f64> {
    let (c, s) = rotation_trig(k);
    let (w, h) = img.dims();
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    // y grows downward, so a counter-clockwise turn on screen flips the sine
    Image::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        bilinear(img, cx + c * dx - s * dy, cy + s * dx + c * dy)
    })
}

pub fn flip_h(img: &Image<f64>) -> Image<f64> {
    let w = img.width();
    Image::from_fn(w, img.height(), |x, y| img.get(w - 1 - x, y))
}

pub fn flip_v(img: &Image<f64>) -> Image<f64> {
    let h = img.height();
    Image::from_fn(img.width(), h, |x, y| img.get(x, h - 1 - y))
}

pub fn apply_op(img: &Image<f64>, op: AugmentOp) -> Image<f64> {
    match op {
        AugmentOp::Identity => img.clone(),
        AugmentOp::Rotate(k) => rotate_image(img, k),
        AugmentOp::FlipH => flip_h(img),
        AugmentOp::FlipV => flip_v(img),
    }
}

/// Applies the same geometric transform to input and target.
pub fn augment(sample: &PairedSample, op: AugmentOp) -> PairedSample {
    PairedSample {
        input: apply_op(&sample.input, op),
        target: apply_op(&sample.target, op),
        ..sample.clone()
    }
}

/// Every sample under all twelve 30-degree rotations.
pub fn augment_rotations(samples: &[PairedSample]) -> Vec<PairedSample> {
    samples
        .iter()
        .flat_map(|s| AugmentOp::rotations().map(move |op| augment(s, op)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic shuffled split of `0..n`. The train side gets
/// `ceil(train_fraction * n)` indices unless `train_count` overrides it.
pub fn split_dataset(n: usize, train_fraction: f64, train_count: Option<usize>, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(spec_err("dataset", format!("{n} samples, need at least 2")));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(spec_err("train_fraction", format!("{train_fraction} not in [0, 1]")));
    }
    let k = match train_count {
        Some(k) if k > n => return Err(spec_err("train_count", format!("{k} > {n}"))),
        Some(k) => k,
        None => ((train_fraction * n as f64).ceil() as usize).min(n),
    };
    let mut idx: Vec<usize> = (0..n).collect();
    SimRng::new(seed, STREAM_SPLIT).shuffle(&mut idx);
    let test = idx.split_off(k);
    Ok(Split { train: idx, test })
}

pub fn select<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

/// Classical reconstruction used as a reference for learned phase maps.
pub fn classical_phase(stack: &StackRecord) -> Result<Image<f64>> {
    Ok(psim_core::psi::reconstruct_frames(&stack.frames)?
        .unwrapped
        .phase
        .into_image())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |x, y| (x * 7 + y * 13) as f64 * 0.01)
    }

    #[test]
    fn normalization_round_trip() {
        let img = ramp(9, 5);
        let (lo, hi) = img.min_max();
        let n = Normalization::from_range(lo, hi, 1.0);
        let z = n.normalize(&img);
        let (a, b) = z.min_max();
        assert!((a + 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        let back = n.denormalize(&z);
        for (p, q) in back.data().iter().zip(img.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turns_are_permutations() {
        let img = ramp(6, 6);
        let r = rotate_image(&img, 3);
        // counter-clockwise quarter turn: top row becomes left column reversed
        for x in 0..6 {
            assert_eq!(r.get(0, 5 - x), img.get(x, 0));
        }
        let full = (0..4).fold(img.clone(), |acc, _| rotate_image(&acc, 3));
        assert_eq!(full, img);
        assert_eq!(rotate_image(&img, 6), flip_h(&flip_v(&img)));
    }

    #[test]
    fn flips_are_involutions() {
        let img = ramp(7, 4);
        assert_eq!(flip_h(&flip_h(&img)), img);
        assert_eq!(flip_v(&flip_v(&img)), img);
        assert_ne!(flip_h(&img), img);
    }

    #[test]
    fn rotation_keeps_constant_images() {
        let img = Image::filled(8, 8, 2.5);
        for k in 0..12 {
            assert!(rotate_image(&img, k).data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        }
    }

    #[test]
    fn reflect_folds() {
        assert_eq!(reflect(-1.0, 5), 1.0);
        assert_eq!(reflect(5.0, 5), 3.0);
        assert_eq!(reflect(8.5, 5), 0.5);
        assert_eq!(reflect(2.25, 5), 2.25);
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(312, 0.8, None, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (250, 62));
        let o = split_dataset(312, 0.8, Some(270), 1).unwrap();
        assert_eq!((o.train.len(), o.test.len()), (270, 42));
        assert!(split_dataset(1, 0.8, None, 1).is_err());
    }
}
