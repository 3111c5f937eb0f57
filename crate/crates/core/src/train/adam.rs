use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::tensor::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    /// Zero moments shaped like `params`, with the standard settings.
    pub fn new(params: &ParamSet) -> Self {
        Self::with_settings(params, 1e-4, 0.9, 0.999, 1e-8)
    }

    pub fn with_settings(
        params: &ParamSet,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Self {
        OptimizerState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            learning_rate,
            beta1,
            beta2,
            eps,
        }
    }
}

pub fn global_norm(grads: &ParamSet) -> Real {
    grads
        .tensors()
        .flat_map(|t| t.data())
        .map(|g| g * g)
        .sum::<Real>()
        .sqrt()
}

/// Bias-corrected ADAM update of every tensor in `params`. With `clip` set,
/// gradients are first rescaled so their global norm is at most `clip`.
/// Returns the global norm before clipping. Nothing is modified when a
/// gradient is non-finite.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    clip: Option<f64>,
) -> Result<Real> {
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(Error::numeric(format!("gradient of {name}")));
        }
        let p = params.get(name)?;
        if p.shape() != g.shape() || state.m.get(name)?.shape() != g.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    let norm = global_norm(grads);
    let scale = match clip {
        Some(c) if norm > c as Real => c as Real / norm,
        _ => 1.0,
    };
    state.t += 1;
    let (b1, b2) = (state.beta1 as Real, state.beta2 as Real);
    let c1 = 1.0 - (state.beta1).powi(state.t as i32) as Real;
    let c2 = 1.0 - (state.beta2).powi(state.t as i32) as Real;
    let (lr, eps) = (state.learning_rate as Real, state.eps as Real);
    for (name, g) in grads.iter() {
        let p = params.get_mut(name).expect("checked above").data_mut();
        let m = state.m.get_mut(name).expect("checked above").data_mut();
        let v = state.v.get_mut(name).expect("checked above").data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i] * scale;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(norm)
}
