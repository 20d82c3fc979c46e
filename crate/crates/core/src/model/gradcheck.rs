//! Central finite-difference verification of the analytic gradient.

use super::network::{backward, batch_loss, Sample};
use super::params::CaptionerParams;
use super::ModelError;

/// Worst disagreement found in one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares every analytic partial derivative of the mean batch loss with
/// `(L(w + eps) - L(w - eps)) / 2 eps`. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    params: &CaptionerParams<f64>,
    batch: &[Sample<'_, f64>],
    eps: f64,
    floor: f64,
) -> Result<Vec<TensorCheck>, ModelError> {
    let (_, grads) = backward(params, batch)?;
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.data.clone())).collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (k, (name, a)) in analytic.iter().enumerate() {
        let mut check = TensorCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, &ai) in a.iter().enumerate() {
            let original = params.tensors()[k].1.data[i];
            set(&mut probe, k, i, original + eps);
            let plus = batch_loss(&probe, batch)?;
            set(&mut probe, k, i, original - eps);
            let minus = batch_loss(&probe, batch)?;
            set(&mut probe, k, i, original);
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (ai - numeric).abs() / ai.abs().max(numeric.abs()).max(floor);
            if rel > check.max_rel_error {
                check = TensorCheck {
                    name: name.clone(),
                    max_rel_error: rel,
                    worst_index: i,
                    analytic: ai,
                    numeric,
                };
            }
        }
        out.push(check);
    }
    Ok(out)
}

fn set(params: &mut CaptionerParams<f64>, tensor: usize, index: usize, value: f64) {
    params.tensors_mut()[tensor].1.data[index] = value;
}
