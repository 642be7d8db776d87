//! Conditional GAN at toy scale for single-shot phase imaging.
//!
//! Two uses of one architecture: in [`Mode::Frames`] the generator learns the
//! constant pi/2 frame advance `I_k -> I_{k+1}` and is chained at inference to
//! synthesize a full five-frame stack from `I_1`; in [`Mode::Phase`] it maps
//! `I_1` straight to the unwrapped phase.

pub mod data;
pub mod error;
pub mod infer;
pub mod loss;
pub mod net;
pub mod spec;
pub mod train;

pub use data::{
    augment, augment_rotations, build_pairs, build_pairs_with, split_dataset, AugmentOp, NormRecord, Normalization,
    PairSet, PairedSample, Split, StackRecord,
};
pub use error::{Error, Result};
pub use infer::{assemble_stack, chain_frames, chain_infer_frames, infer_phase, FrameAdvance};
pub use loss::{gan_losses, GanLosses};
pub use net::{build_networks, Discriminator, Generator};
pub use spec::{GanSpec, Mode, TrainConfig};
pub use train::{GanState, LossRecord};
