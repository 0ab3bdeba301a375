//! Adam optimizer with bias correction.

use super::network::NamedArray;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment accumulators, one pair per parameter array, plus
/// the step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every parameter array:
/// m ← β1·m + (1−β1)·g, v ← β2·v + (1−β2)·g², then
/// w ← w − lr·m̂/(√v̂ + ε) with bias-corrected m̂ = m/(1−β1^t),
/// v̂ = v/(1−β2^t).
pub fn adam_step(
    weights: &mut [NamedArray],
    gradients: &[Tensor],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if gradients.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} gradient arrays for {} weight arrays",
            gradients.len(),
            weights.len()
        )));
    }
    if state.m.is_empty() {
        state.m = weights.iter().map(|a| vec![0.0; a.tensor.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != weights.len() {
        return Err(Error::invalid("optimizer state does not match parameter count"));
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for ((arr, grad), (m, v)) in weights
        .iter_mut()
        .zip(gradients)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if grad.shape() != arr.tensor.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not match {} {:?}",
                grad.shape(),
                arr.name,
                arr.tensor.shape()
            )));
        }
        for ((w, &g), (mi, vi)) in arr
            .tensor
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}
