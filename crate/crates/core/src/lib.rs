//! Low-coherence phase-shifting interferometry toolkit.
//!
//! * [`field`]: synthetic phase objects and five-frame interferogram stacks.
//! * [`psi`]: five-step wrapped phase, modulation, unwrapping, height.
//! * [`metrics`]: SSIM, RMS, 2 pi offset alignment, stitched line profiles.
//! * [`io`]: PFM images with JSON sidecars and profile CSVs.
//!
//! Image-valued operations are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below name the common instantiations.

pub mod error;
pub mod field;
pub mod image;
pub mod io;
pub mod metrics;
pub mod psi;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use field::{
    coherence_envelope, make_phase_object, simulate_frame, simulate_stack, synth_dataset, synth_sample,
    ForwardModelSpec, InterferogramStack, ObjectFamily, PhaseObjectSpec, Sample, SourceSpec, FRAME_COUNT,
};
pub use image::{wrap_to_pi, Image, PhaseMap};
pub use metrics::{align_global_offset, rms_error, ssim, stitched_line_profile, Profile, SsimParams, SsimResult};
pub use psi::{five_step_wrapped_phase, modulation_amplitude, phase_to_height, unwrap_phase, HeightMap, QualityMap};
pub use rng::SimRng;
pub use scalar::Scalar;

pub type Image64 = Image<f64>;
pub type Image32 = Image<f32>;
pub type PhaseMap64 = PhaseMap<f64>;
pub type PhaseMap32 = PhaseMap<f32>;
pub type Stack64 = InterferogramStack<f64>;
pub type Stack32 = InterferogramStack<f32>;
pub type QualityMap64 = QualityMap<f64>;
pub type HeightMap64 = HeightMap<f64>;
pub type Sample64 = Sample<f64>;
