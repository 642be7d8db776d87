use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// `(tensor, element)` where the maximum occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` around `params`.
pub fn grad_check(params: &[Tensor], analytic: &[Tensor], loss: impl Fn(&[Tensor]) -> f64, h: f64) -> GradCheckReport {
    let all: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |i| (t, i)))
        .collect();
    grad_check_at(params, analytic, loss, h, &all)
}

/// As [`grad_check`], restricted to the `(tensor, element)` positions in `picks`.
pub fn grad_check_at(
    params: &[Tensor],
    analytic: &[Tensor],
    loss: impl Fn(&[Tensor]) -> f64,
    h: f64,
    picks: &[(usize, usize)],
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len());
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for &(t, i) in picks {
        assert_eq!(work[t].shape(), analytic[t].shape());
        {
            let orig = work[t].data()[i];
            let (hi, lo) = (orig + h, orig - h);
            work[t].data_mut()[i] = hi;
            let up = loss(&work);
            work[t].data_mut()[i] = lo;
            let down = loss(&work);
            work[t].data_mut()[i] = orig;
            // divide by the step actually taken after rounding
            let numeric = (up - down) / (hi - lo);
            let a = analytic[t].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (t, i);
            }
            report.checked += 1;
        }
    }
    report
}
