//! Synthetic phase objects and low-coherence phase-shifted interferograms.

use std::f64::consts::{LN_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{Image, PhaseMap};
use crate::rng::{derive_seed, SimRng, STREAM_GEOMETRY, STREAM_SIMULATION};
use crate::scalar::Scalar;

/// Number of phase-shifted frames in a stack.
pub const FRAME_COUNT: usize = 5;

/// Nominal shift schedule `(-pi, -pi/2, 0, pi/2, pi)`.
pub const DEFAULT_SCHEDULE: [f64; FRAME_COUNT] = [-PI, -PI / 2.0, 0.0, PI / 2.0, PI];

/// Smallest accepted side length for generated phase objects.
pub const MIN_OBJECT_SIDE: usize = 8;

/// Band-limited light source. `coherence_length` is derived from the other two fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceSpec {
    pub lambda0: f64,
    pub delta_lambda: f64,
    pub coherence_length: f64,
}

impl SourceSpec {
    pub fn new(lambda0: f64, delta_lambda: f64) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(invalid("lambda0", format!("{lambda0} must be > 0")));
        }
        if !(delta_lambda > 0.0 && delta_lambda.is_finite()) {
            return Err(invalid("delta_lambda", format!("{delta_lambda} must be > 0")));
        }
        Ok(Self {
            lambda0,
            delta_lambda,
            coherence_length: coherence_length(lambda0, delta_lambda),
        })
    }

    /// Filtered white light, 520 nm center with a +/-36 nm pass band.
    pub fn green_filtered() -> Self {
        Self::new(520.0, 72.0).expect("valid constants")
    }
}

/// `L_c = (2 ln 2 / pi) * lambda0^2 / delta_lambda`, all lengths in nm.
pub fn coherence_length(lambda0: f64, delta_lambda: f64) -> f64 {
    (2.0 * LN_2 / PI) * lambda0 * lambda0 / delta_lambda
}

impl<'de> Deserialize<'de> for SourceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            lambda0: f64,
            delta_lambda: f64,
            #[serde(default)]
            coherence_length: Option<f64>,
        }
        let raw = Raw::deserialize(d)?;
        let spec = SourceSpec::new(raw.lambda0, raw.delta_lambda).map_err(serde::de::Error::custom)?;
        if let Some(lc) = raw.coherence_length {
            if (lc - spec.coherence_length).abs() > 1e-9 * spec.coherence_length {
                return Err(serde::de::Error::custom(format!(
                    "coherence_length {lc} disagrees with derived value {}",
                    spec.coherence_length
                )));
            }
        }
        Ok(spec)
    }
}

/// Gaussian fringe envelope `exp(-(opd / L_c)^2)`.
pub fn coherence_envelope(opd: f64, source: &SourceSpec) -> f64 {
    let r = opd / source.coherence_length;
    (-r * r).exp()
}

/// One bump of a cell-like object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    /// `(x, y)` in pixels.
    pub center: [f64; 2],
    /// Support radius in pixels; the profile is exactly zero beyond it.
    pub radius: f64,
    /// Height at the center, nm.
    pub peak_height: f64,
}

impl Blob {
    /// Gaussian (sigma = radius / 3) tapered by a raised cosine so it reaches zero at `radius`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let r = (dx * dx + dy * dy).sqrt();
        if r >= self.radius {
            return 0.0;
        }
        let sigma = self.radius / 3.0;
        let gauss = (-(r * r) / (2.0 * sigma * sigma)).exp();
        let taper = 0.5 * (1.0 + (PI * r / self.radius).cos());
        self.peak_height * gauss * taper
    }
}

/// Geometry of a sample, as a height profile over the substrate.
///
/// The refractive-index contrast is folded into the heights, so a height
/// here is an effective optical thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseObjectSpec {
    /// Ridge running along the y axis.
    WaveguideRidge {
        /// Column of the ridge axis, px.
        center: f64,
        /// Full plateau width, px.
        width: f64,
        /// Plateau height, nm.
        height: f64,
        /// Raised-cosine shoulder on each side, px. Zero gives a hard step.
        #[serde(default = "default_edge")]
        edge: f64,
    },
    CellBlobs {
        blobs: Vec<Blob>,
    },
    Flat,
}

fn default_edge() -> f64 {
    4.0
}

impl PhaseObjectSpec {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        match self {
            PhaseObjectSpec::WaveguideRidge {
                center,
                width: rw,
                height: rh,
                edge,
            } => {
                if !(*rw >= 1.0) {
                    return Err(invalid("width", format!("ridge width {rw} must be >= 1 px")));
                }
                if !(*rh >= 0.0) {
                    return Err(invalid("height", format!("ridge height {rh} must be >= 0")));
                }
                if !(*edge >= 0.0) {
                    return Err(invalid("edge", format!("edge {edge} must be >= 0")));
                }
                let (lo, hi) = (center - rw / 2.0, center + rw / 2.0);
                if !(lo >= 0.0 && hi <= w) {
                    return Err(Error::OutOfBounds(format!(
                        "ridge plateau [{lo}, {hi}] leaves the columns [0, {w}]"
                    )));
                }
            }
            PhaseObjectSpec::CellBlobs { blobs } => {
                for (i, b) in blobs.iter().enumerate() {
                    if !(b.radius >= 1.0) {
                        return Err(invalid(
                            "radius",
                            format!("blob {i} radius {} must be >= 1 px", b.radius),
                        ));
                    }
                    if !(b.peak_height >= 0.0) {
                        return Err(invalid(
                            "peak_height",
                            format!("blob {i} peak height {} must be >= 0", b.peak_height),
                        ));
                    }
                    let [cx, cy] = b.center;
                    if !((0.0..=w).contains(&cx) && (0.0..=h).contains(&cy)) {
                        return Err(Error::OutOfBounds(format!(
                            "blob {i} center ({cx}, {cy}) lies outside [0, {w}] x [0, {h}]"
                        )));
                    }
                }
            }
            PhaseObjectSpec::Flat => {}
        }
        Ok(())
    }

    /// Height in nm at pixel center `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match self {
            PhaseObjectSpec::WaveguideRidge {
                center,
                width,
                height,
                edge,
            } => {
                let d = (x - center).abs() - width / 2.0;
                if d <= 0.0 {
                    *height
                } else if d < *edge {
                    height * 0.5 * (1.0 + (PI * d / edge).cos())
                } else {
                    0.0
                }
            }
            PhaseObjectSpec::CellBlobs { blobs } => blobs.iter().map(|b| b.height_at(x, y)).sum(),
            PhaseObjectSpec::Flat => 0.0,
        }
    }
}

/// Ground-truth (unwrapped) phase of a reflective sample: `phi = 4 pi h / lambda0`.
pub fn make_phase_object<T: Scalar>(
    spec: &PhaseObjectSpec,
    width: usize,
    height: usize,
    lambda0: f64,
) -> Result<PhaseMap<T>> {
    if width < MIN_OBJECT_SIDE || height < MIN_OBJECT_SIDE {
        return Err(invalid(
            "width/height",
            format!("{width}x{height} is below the {MIN_OBJECT_SIDE}x{MIN_OBJECT_SIDE} minimum"),
        ));
    }
    if !(lambda0 > 0.0) {
        return Err(invalid("lambda0", format!("{lambda0} must be > 0")));
    }
    spec.validate(width, height)?;
    let k = 4.0 * PI / lambda0;
    Ok(PhaseMap::unwrapped(Image::from_fn(width, height, |x, y| {
        T::of(k * spec.height_at(x as f64, y as f64))
    })))
}

/// Acquisition model for one stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardModelSpec {
    pub source: SourceSpec,
    pub i_object: f64,
    pub i_reference: f64,
    pub shift_schedule: [f64; FRAME_COUNT],
    pub jitter_sigma: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub envelope_reference_opd: f64,
}

impl Default for ForwardModelSpec {
    fn default() -> Self {
        Self {
            source: SourceSpec::green_filtered(),
            i_object: 1.0,
            i_reference: 1.0,
            shift_schedule: DEFAULT_SCHEDULE,
            jitter_sigma: 0.0,
            noise_sigma: 0.0,
            envelope_reference_opd: 0.0,
        }
    }
}

impl ForwardModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_object > 0.0 && self.i_object.is_finite()) {
            return Err(invalid("i_object", format!("{} must be > 0", self.i_object)));
        }
        if !(self.i_reference > 0.0 && self.i_reference.is_finite()) {
            return Err(invalid("i_reference", format!("{} must be > 0", self.i_reference)));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(invalid("jitter_sigma", format!("{} must be >= 0", self.jitter_sigma)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma", format!("{} must be >= 0", self.noise_sigma)));
        }
        if self.shift_schedule.iter().any(|s| !s.is_finite()) {
            return Err(invalid("shift_schedule", "entries must be finite"));
        }
        if !self.envelope_reference_opd.is_finite() {
            return Err(invalid("envelope_reference_opd", "must be finite"));
        }
        Ok(())
    }

    /// Background intensity `A = I_o + I_r`.
    pub fn background(&self) -> f64 {
        self.i_object + self.i_reference
    }

    /// Fringe amplitude at full coherence, `2 sqrt(I_o I_r)`.
    pub fn fringe_amplitude(&self) -> f64 {
        2.0 * (self.i_object * self.i_reference).sqrt()
    }

    /// Optical path difference at a pixel with phase `phi`; reflection doubles the height.
    pub fn pixel_opd(&self, phi: f64) -> f64 {
        // 2 h with h = lambda0 phi / (4 pi)
        phi * self.source.lambda0 / TAU - self.envelope_reference_opd
    }

    /// Noise-free intensity for one pixel.
    pub fn intensity(&self, phi: f64, shift: f64) -> f64 {
        let gamma = coherence_envelope(self.pixel_opd(phi), &self.source);
        interference(self.i_object, self.i_reference, gamma, phi, shift)
    }
}

/// Two-beam intensity `I_o + I_r + 2 sqrt(I_o I_r) gamma cos(phi + shift)`.
#[inline]
pub fn interference(i_object: f64, i_reference: f64, gamma: f64, phi: f64, shift: f64) -> f64 {
    i_object + i_reference + 2.0 * (i_object * i_reference).sqrt() * gamma * (phi + shift).cos()
}

/// Renders one interferogram for a given phase shift.
pub fn simulate_frame<T: Scalar>(
    phase: &PhaseMap<T>,
    shift: f64,
    model: &ForwardModelSpec,
    noise_field: Option<&Image<T>>,
) -> Result<Image<T>> {
    if phase.is_wrapped() {
        return Err(Error::WrappedState("unwrapped ground truth"));
    }
    model.validate()?;
    if let Some(n) = noise_field {
        phase.image().ensure_same_dims(n)?;
    }
    let img = phase.image();
    let frame = Image::from_fn(img.width(), img.height(), |x, y| {
        let i = model.intensity(img.get(x, y).as_f64(), shift);
        let n = noise_field.map_or(0.0, |n| n.get(x, y).as_f64());
        T::of(i + n)
    });
    frame.validate()?;
    Ok(frame)
}

/// Five phase-shifted frames plus the shifts actually applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferogramStack<T> {
    frames: Vec<Image<T>>,
    realized_shifts: [f64; FRAME_COUNT],
    model: ForwardModelSpec,
    seed: u64,
}

impl<T: Scalar> InterferogramStack<T> {
    /// Assembles a stack from existing frames (recorded, predicted or ingested).
    pub fn from_frames(
        frames: Vec<Image<T>>,
        realized_shifts: [f64; FRAME_COUNT],
        model: ForwardModelSpec,
        seed: u64,
    ) -> Result<Self> {
        if frames.len() != FRAME_COUNT {
            return Err(Error::FrameCount {
                expected: FRAME_COUNT,
                got: frames.len(),
            });
        }
        for f in &frames[1..] {
            frames[0].ensure_same_dims(f)?;
        }
        for f in &frames {
            f.validate()?;
        }
        Ok(Self {
            frames,
            realized_shifts,
            model,
            seed,
        })
    }

    pub fn frames(&self) -> &[Image<T>] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &Image<T> {
        &self.frames[k]
    }

    pub fn realized_shifts(&self) -> &[f64; FRAME_COUNT] {
        &self.realized_shifts
    }

    pub fn model(&self) -> &ForwardModelSpec {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// Global `(min, max)` over all five frames.
    pub fn min_max(&self) -> (T, T) {
        self.frames
            .iter()
            .map(|f| f.min_max())
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            })
    }
}

/// Simulates the five frames of one acquisition.
///
/// Random draws from `SimRng::new(seed, STREAM_SIMULATION)`, in order: the
/// five jitter offsets `eps_k = jitter_sigma * N(0, 1)`, then the noise field
/// of frame 1 (row-major), frame 2, and so on. Noise fields are drawn only
/// when `noise_sigma > 0`.
pub fn simulate_stack<T: Scalar>(
    phase: &PhaseMap<T>,
    model: &ForwardModelSpec,
    seed: u64,
) -> Result<InterferogramStack<T>> {
    model.validate()?;
    let mut rng = SimRng::new(seed, STREAM_SIMULATION);
    let mut realized = model.shift_schedule;
    for s in realized.iter_mut() {
        *s += model.jitter_sigma * rng.normal();
    }
    let (w, h) = phase.dims();
    let mut frames = Vec::with_capacity(FRAME_COUNT);
    for &shift in &realized {
        let noise =
            (model.noise_sigma > 0.0).then(|| Image::from_fn(w, h, |_, _| T::of(model.noise_sigma * rng.normal())));
        frames.push(simulate_frame(phase, shift, model, noise.as_ref())?);
    }
    InterferogramStack::from_frames(frames, realized, model.clone(), seed)
}

/// Distribution of random objects for dataset synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectFamily {
    WaveguideRidge {
        /// Plateau width range, px.
        width_range: [f64; 2],
        /// Plateau height range, nm.
        height_range: [f64; 2],
        #[serde(default = "default_edge")]
        edge: f64,
    },
    CellBlobs {
        count_range: [usize; 2],
        radius_range: [f64; 2],
        peak_range: [f64; 2],
    },
    Flat,
}

impl ObjectFamily {
    /// Cells of 6 to 14 px radius with effective heights that keep the phase below pi/2.
    pub fn default_cells() -> Self {
        ObjectFamily::CellBlobs {
            count_range: [2, 5],
            radius_range: [6.0, 14.0],
            peak_range: [15.0, 55.0],
        }
    }

    pub fn default_ridge() -> Self {
        ObjectFamily::WaveguideRidge {
            width_range: [6.0, 20.0],
            height_range: [40.0, 120.0],
            edge: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn range(field: &'static str, r: [f64; 2], min: f64) -> Result<()> {
            if !(r[0] >= min && r[1] >= r[0] && r[1].is_finite()) {
                return Err(invalid(field, format!("{r:?} must satisfy {min} <= lo <= hi")));
            }
            Ok(())
        }
        match self {
            ObjectFamily::WaveguideRidge {
                width_range,
                height_range,
                edge,
            } => {
                range("width_range", *width_range, 1.0)?;
                range("height_range", *height_range, 0.0)?;
                if !(*edge >= 0.0) {
                    return Err(invalid("edge", "must be >= 0"));
                }
            }
            ObjectFamily::CellBlobs {
                count_range,
                radius_range,
                peak_range,
            } => {
                if count_range[0] > count_range[1] {
                    return Err(invalid("count_range", format!("{count_range:?} is empty")));
                }
                range("radius_range", *radius_range, 1.0)?;
                range("peak_range", *peak_range, 0.0)?;
            }
            ObjectFamily::Flat => {}
        }
        Ok(())
    }

    /// Draws one object that fits a `width` x `height` field.
    pub fn draw(&self, width: usize, height: usize, rng: &mut SimRng) -> PhaseObjectSpec {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        match self {
            ObjectFamily::WaveguideRidge {
                width_range,
                height_range,
                edge,
            } => {
                let rw = rng.uniform_in(width_range[0], width_range[1]).min(w);
                let rh = rng.uniform_in(height_range[0], height_range[1]);
                let center = rng.uniform_in(rw / 2.0, w - rw / 2.0);
                PhaseObjectSpec::WaveguideRidge {
                    center,
                    width: rw,
                    height: rh,
                    edge: *edge,
                }
            }
            ObjectFamily::CellBlobs {
                count_range,
                radius_range,
                peak_range,
            } => {
                let n = rng.int_in(count_range[0], count_range[1]);
                let blobs = (0..n)
                    .map(|_| {
                        let radius = rng.uniform_in(radius_range[0], radius_range[1]);
                        let margin = (radius / 2.0).min(w / 2.0).min(h / 2.0);
                        Blob {
                            center: [rng.uniform_in(margin, w - margin), rng.uniform_in(margin, h - margin)],
                            radius,
                            peak_height: rng.uniform_in(peak_range[0], peak_range[1]),
                        }
                    })
                    .collect();
                PhaseObjectSpec::CellBlobs { blobs }
            }
            ObjectFamily::Flat => PhaseObjectSpec::Flat,
        }
    }
}

/// One synthetic acquisition with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub object: PhaseObjectSpec,
    pub truth: PhaseMap<T>,
    pub stack: InterferogramStack<T>,
}

/// Generates sample `index` of a dataset; `synth_dataset` is the sequential
/// loop over this function, so samples can also be produced in parallel.
pub fn synth_sample<T: Scalar>(
    index: usize,
    width: usize,
    height: usize,
    family: &ObjectFamily,
    model: &ForwardModelSpec,
    seed: u64,
) -> Result<Sample<T>> {
    let sample_seed = derive_seed(seed, index as u64);
    let mut rng = SimRng::new(sample_seed, STREAM_GEOMETRY);
    let object = family.draw(width, height, &mut rng);
    let truth = make_phase_object(&object, width, height, model.source.lambda0)?;
    let stack = simulate_stack(&truth, model, sample_seed)?;
    Ok(Sample { object, truth, stack })
}

pub fn synth_dataset<T: Scalar>(
    count: usize,
    width: usize,
    height: usize,
    family: &ObjectFamily,
    model: &ForwardModelSpec,
    seed: u64,
) -> Result<Vec<Sample<T>>> {
    if count == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    family.validate()?;
    model.validate()?;
    (0..count)
        .map(|i| synth_sample(i, width, height, family, model, seed))
        .collect()
}
