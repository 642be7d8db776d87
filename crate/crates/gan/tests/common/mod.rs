#![allow(dead_code)]

use psim_core::{ForwardModelSpec, Image, FRAME_COUNT};
use psim_gan::{FrameAdvance, Result};

/// Frame-advance oracle built from the simulator's own model: it identifies
/// which scheduled frame it was given (closest noiseless rendering over the
/// whole image) and renders the next one.
pub struct AnalyticAdvance {
    pub model: ForwardModelSpec,
    pub truth: Image<f64>,
}

impl AnalyticAdvance {
    fn render(&self, k: usize) -> Image<f64> {
        let shift = self.model.shift_schedule[k];
        self.truth.map(|phi| self.model.intensity(phi, shift))
    }
}

impl FrameAdvance for AnalyticAdvance {
    fn advance(&self, frame: &Image<f64>) -> Result<Image<f64>> {
        let k = (0..FRAME_COUNT - 1)
            .min_by(|&a, &b| {
                let d = |k| {
                    self.render(k)
                        .data()
                        .iter()
                        .zip(frame.data())
                        .map(|(p, q)| (p - q).powi(2))
                        .sum::<f64>()
                };
                d(a).total_cmp(&d(b))
            })
            .expect("four candidates");
        Ok(self.render(k + 1))
    }
}

pub struct IdentityAdvance;

impl FrameAdvance for IdentityAdvance {
    fn advance(&self, frame: &Image<f64>) -> Result<Image<f64>> {
        Ok(frame.clone())
    }
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}
