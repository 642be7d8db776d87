use psim_autonet::{sigmoid, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Stable `-[y ln s(z) + (1 - y) ln(1 - s(z))]`.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean BCE over all logits against a constant label, and its gradient.
pub fn bce_mean(logits: &Tensor, label: f64) -> (f64, Tensor) {
    let n = logits.len() as f64;
    let loss = logits.data().iter().map(|&z| bce_with_logits(z, label)).sum::<f64>() / n;
    (loss, logits.map(|z| (sigmoid(z) - label) / n))
}

/// Mean absolute error and its (sub)gradient with respect to `pred`.
pub fn l1_mean(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let n = pred.len() as f64;
    let diff = pred.zip_map(target, |a, b| a - b)?;
    let loss = diff.data().iter().map(|d| d.abs()).sum::<f64>() / n;
    Ok((loss, diff.map(|d| if d == 0.0 { 0.0 } else { d.signum() / n })))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    /// `(BCE(real, 1) + BCE(fake, 0)) / 2`.
    pub d: f64,
    /// `BCE(fake, 1) + lambda * l1`.
    pub g: f64,
    pub g_adv: f64,
    /// Unweighted mean absolute error.
    pub g_l1: f64,
}

pub fn gan_losses(
    real_logits: &Tensor,
    fake_logits: &Tensor,
    g_out: &Tensor,
    target: &Tensor,
    lambda_l1: f64,
) -> Result<GanLosses> {
    let (real, _) = bce_mean(real_logits, 1.0);
    let (fake, _) = bce_mean(fake_logits, 0.0);
    let (g_adv, _) = bce_mean(fake_logits, 1.0);
    let (g_l1, _) = l1_mean(g_out, target)?;
    Ok(GanLosses {
        d: 0.5 * (real + fake),
        g: g_adv + lambda_l1 * g_l1,
        g_adv,
        g_l1,
    })
}
