//! Classical phase-shifting reconstruction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{InterferogramStack, FRAME_COUNT};
use crate::image::{wrap_to_pi, Image, PhaseMap};
use crate::scalar::Scalar;

/// Per-pixel fringe modulation amplitude, used as the unwrapping quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityMap<T> {
    image: Image<T>,
}

impl<T: Scalar> QualityMap<T> {
    pub fn new(image: Image<T>) -> Result<Self> {
        if let Some(i) = image.data().iter().position(|v| *v < T::zero()) {
            return Err(Error::InvalidParameter {
                field: "quality",
                reason: format!("negative value at index {i}"),
            });
        }
        Ok(Self { image })
    }

    pub fn image(&self) -> &Image<T> {
        &self.image
    }

    pub fn into_image(self) -> Image<T> {
        self.image
    }
}

/// Surface height in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightMap<T> {
    image: Image<T>,
    lambda0: f64,
}

impl<T: Scalar> HeightMap<T> {
    pub fn image(&self) -> &Image<T> {
        &self.image
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
}

/// Numerator `2(I2 - I4)` and denominator `2 I3 - I1 - I5` of the five-step estimator.
#[inline]
fn five_step_terms<T: Scalar>(i: [T; FRAME_COUNT]) -> (T, T) {
    let two = T::of(2.0);
    (two * (i[1] - i[3]), two * i[2] - i[0] - i[4])
}

fn check_stack<T: Scalar>(frames: &[Image<T>]) -> Result<()> {
    if frames.len() != FRAME_COUNT {
        return Err(Error::FrameCount {
            expected: FRAME_COUNT,
            got: frames.len(),
        });
    }
    for f in &frames[1..] {
        frames[0].ensure_same_dims(f)?;
    }
    Ok(())
}

fn pixel_terms<T: Scalar>(frames: &[Image<T>], idx: usize) -> (T, T) {
    five_step_terms([
        frames[0].data()[idx],
        frames[1].data()[idx],
        frames[2].data()[idx],
        frames[3].data()[idx],
        frames[4].data()[idx],
    ])
}

/// Wrapped phase `atan2(2(I2 - I4), 2 I3 - I1 - I5)` for a shift schedule of
/// `(-pi, -pi/2, 0, pi/2, pi)`. Pixels where both terms vanish get 0.
pub fn five_step_wrapped_phase<T: Scalar>(stack: &InterferogramStack<T>) -> Result<PhaseMap<T>> {
    five_step_from_frames(stack.frames())
}

/// Same as [`five_step_wrapped_phase`] on a bare slice of frames.
pub fn five_step_from_frames<T: Scalar>(frames: &[Image<T>]) -> Result<PhaseMap<T>> {
    check_stack(frames)?;
    let (w, h) = frames[0].dims();
    let pi = T::PI();
    let data = (0..w * h)
        .map(|idx| {
            let (num, den) = pixel_terms(frames, idx);
            if num == T::zero() && den == T::zero() {
                return T::zero();
            }
            let phi = num.atan2(den);
            // atan2(-0, den < 0) yields -pi; keep the interval half-open at -pi.
            if phi <= -pi {
                phi + pi + pi
            } else {
                phi
            }
        })
        .collect();
    PhaseMap::wrapped(Image::new(w, h, data)?)
}

/// Modulation `B = 1/4 sqrt((2(I2 - I4))^2 + (2 I3 - I1 - I5)^2)`.
pub fn modulation_amplitude<T: Scalar>(stack: &InterferogramStack<T>) -> Result<QualityMap<T>> {
    modulation_from_frames(stack.frames())
}

pub fn modulation_from_frames<T: Scalar>(frames: &[Image<T>]) -> Result<QualityMap<T>> {
    check_stack(frames)?;
    let (w, h) = frames[0].dims();
    let quarter = T::of(0.25);
    let data = (0..w * h)
        .map(|idx| {
            let (num, den) = pixel_terms(frames, idx);
            quarter * num.hypot(den)
        })
        .collect();
    QualityMap::new(Image::new(w, h, data)?)
}

/// Traversal used by [`unwrap_phase_detailed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnwrapOrder {
    QualityGuided,
    /// Fallback for an all-zero quality map: first column top to bottom, then every row left to right.
    Raster,
}

/// Unwrapped phase plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Unwrapped<T> {
    pub phase: PhaseMap<T>,
    /// Start pixel `(x, y)`; it keeps its wrapped value, which fixes the 2 pi branch.
    pub seed: (usize, usize),
    pub order: UnwrapOrder,
}

#[derive(Debug)]
struct Frontier {
    quality: f64,
    index: usize,
    parent: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Max-heap on quality; among equals the lowest row-major index pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.quality
            .total_cmp(&other.quality)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Quality-guided flood-fill unwrapping. See [`unwrap_phase_detailed`].
pub fn unwrap_phase<T: Scalar>(wrapped: &PhaseMap<T>, quality: &QualityMap<T>) -> Result<PhaseMap<T>> {
    Ok(unwrap_phase_detailed(wrapped, quality)?.phase)
}

/// Starts at the highest-quality pixel (lowest index on ties), then repeatedly
/// takes the best frontier pixel and integrates the wrapped difference to the
/// already-unwrapped neighbour that first reached it.
pub fn unwrap_phase_detailed<T: Scalar>(wrapped: &PhaseMap<T>, quality: &QualityMap<T>) -> Result<Unwrapped<T>> {
    if !wrapped.is_wrapped() {
        return Err(Error::WrappedState("wrapped"));
    }
    wrapped.image().ensure_same_dims(quality.image())?;
    let q = quality.image().data();
    let (seed_idx, &seed_q) = q
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.as_f64().total_cmp(&b.as_f64()).then_with(|| j.cmp(i)))
        .expect("image is non-empty");
    if seed_q <= T::zero() {
        log::warn!("quality map is all zero; unwrapping in raster order");
        let phase = unwrap_raster(wrapped)?;
        return Ok(Unwrapped {
            phase,
            seed: (0, 0),
            order: UnwrapOrder::Raster,
        });
    }

    let (w, h) = wrapped.dims();
    let wp = wrapped.data();
    let mut out = vec![T::zero(); w * h];
    let mut queued = vec![false; w * h];
    let mut heap = BinaryHeap::new();

    out[seed_idx] = wp[seed_idx];
    queued[seed_idx] = true;
    let push_neighbours = |idx: usize, heap: &mut BinaryHeap<Frontier>, queued: &mut [bool]| {
        let (x, y) = (idx % w, idx / w);
        let mut visit = |n: usize| {
            if !queued[n] {
                queued[n] = true;
                heap.push(Frontier {
                    quality: q[n].as_f64(),
                    index: n,
                    parent: idx,
                });
            }
        };
        if y > 0 {
            visit(idx - w);
        }
        if x > 0 {
            visit(idx - 1);
        }
        if x + 1 < w {
            visit(idx + 1);
        }
        if y + 1 < h {
            visit(idx + w);
        }
    };
    push_neighbours(seed_idx, &mut heap, &mut queued);
    while let Some(Frontier { index, parent, .. }) = heap.pop() {
        out[index] = out[parent] + wrap_to_pi(wp[index] - wp[parent]);
        push_neighbours(index, &mut heap, &mut queued);
    }
    Ok(Unwrapped {
        phase: PhaseMap::unwrapped(Image::new(w, h, out)?),
        seed: (seed_idx % w, seed_idx / w),
        order: UnwrapOrder::QualityGuided,
    })
}

/// Itoh unwrapping along the first column, then along every row.
pub fn unwrap_raster<T: Scalar>(wrapped: &PhaseMap<T>) -> Result<PhaseMap<T>> {
    if !wrapped.is_wrapped() {
        return Err(Error::WrappedState("wrapped"));
    }
    let (w, h) = wrapped.dims();
    let wp = wrapped.image();
    let mut out = Image::zeros(w, h);
    out.set(0, 0, wp.get(0, 0));
    for y in 1..h {
        let v = out.get(0, y - 1) + wrap_to_pi(wp.get(0, y) - wp.get(0, y - 1));
        out.set(0, y, v);
    }
    for y in 0..h {
        for x in 1..w {
            let v = out.get(x - 1, y) + wrap_to_pi(wp.get(x, y) - wp.get(x - 1, y));
            out.set(x, y, v);
        }
    }
    Ok(PhaseMap::unwrapped(out))
}

/// Reflection-mode conversion `h = lambda0 phi / (4 pi)`.
pub fn phase_to_height<T: Scalar>(phase: &PhaseMap<T>, lambda0: f64) -> Result<HeightMap<T>> {
    if phase.is_wrapped() {
        return Err(Error::WrappedState("unwrapped"));
    }
    let k = T::of(lambda0 / (4.0 * std::f64::consts::PI));
    Ok(HeightMap {
        image: phase.image().map(|p| p * k),
        lambda0,
    })
}

/// Wrapped phase, quality and unwrapped phase of one stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T> {
    pub wrapped: PhaseMap<T>,
    pub quality: QualityMap<T>,
    pub unwrapped: Unwrapped<T>,
}

pub fn reconstruct_frames<T: Scalar>(frames: &[Image<T>]) -> Result<Reconstruction<T>> {
    let wrapped = five_step_from_frames(frames)?;
    let quality = modulation_from_frames(frames)?;
    let unwrapped = unwrap_phase_detailed(&wrapped, &quality)?;
    Ok(Reconstruction {
        wrapped,
        quality,
        unwrapped,
    })
}

pub fn reconstruct<T: Scalar>(stack: &InterferogramStack<T>) -> Result<Reconstruction<T>> {
    reconstruct_frames(stack.frames())
}
