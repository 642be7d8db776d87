use psim_core::{Image, PhaseMap, FRAME_COUNT};

use crate::error::{Error, Result};
use crate::spec::Mode;
use crate::train::GanState;

/// Anything that maps frame `I_k` to `I_{k+1}` in intensity units.
pub trait FrameAdvance {
    fn advance(&self, frame: &Image<f64>) -> Result<Image<f64>>;
}

impl<F> FrameAdvance for F
where
    F: Fn(&Image<f64>) -> Result<Image<f64>>,
{
    fn advance(&self, frame: &Image<f64>) -> Result<Image<f64>> {
        self(frame)
    }
}

/// A frames-mode model; inputs and outputs go through the recorded intensity normalization.
pub struct TrainedAdvance<'a>(&'a GanState);

impl FrameAdvance for TrainedAdvance<'_> {
    fn advance(&self, frame: &Image<f64>) -> Result<Image<f64>> {
        let n = self.0.norms.intensity;
        Ok(n.denormalize(&self.0.generate(&n.normalize(frame))?))
    }
}

fn expect_mode(state: &GanState, mode: Mode) -> Result<()> {
    if state.spec.mode != mode {
        return Err(Error::Mode {
            expected: mode,
            found: state.spec.mode,
        });
    }
    Ok(())
}

/// `I2' = G(I1)`, `I3' = G(I2')`, and so on: the four predicted frames.
pub fn chain_frames(advance: &impl FrameAdvance, i1: &Image<f64>) -> Result<Vec<Image<f64>>> {
    let mut out: Vec<Image<f64>> = Vec::with_capacity(FRAME_COUNT - 1);
    for _ in 1..FRAME_COUNT {
        let next = advance.advance(out.last().unwrap_or(i1))?;
        i1.ensure_same_dims(&next)?;
        out.push(next);
    }
    Ok(out)
}

pub fn chain_infer_frames(state: &GanState, i1: &Image<f64>) -> Result<Vec<Image<f64>>> {
    expect_mode(state, Mode::Frames)?;
    chain_frames(&TrainedAdvance(state), i1)
}

/// `I1` followed by the predicted frames.
pub fn assemble_stack(i1: &Image<f64>, predicted: Vec<Image<f64>>) -> Vec<Image<f64>> {
    std::iter::once(i1.clone()).chain(predicted).collect()
}

/// Direct phase prediction, denormalized with the recorded phase range.
pub fn infer_phase(state: &GanState, i1: &Image<f64>) -> Result<PhaseMap<f64>> {
    expect_mode(state, Mode::Phase)?;
    let pn = state
        .norms
        .phase
        .ok_or_else(|| Error::Checkpoint("phase model without a phase range".into()))?;
    let out = state.generate(&state.norms.intensity.normalize(i1))?;
    Ok(PhaseMap::unwrapped(pn.denormalize(&out)))
}
