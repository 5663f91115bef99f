use gisr_tensor::{Element, ParamStore};

use crate::error::{shape, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter in store
/// order, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Element> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Element> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| vec![T::zero(); p.tensor.numel()])
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// Gradients of every parameter in store order; parameters that received no
/// gradient contribute zeros.
pub fn collect_grads<T: Element>(params: &ParamStore<T>) -> Vec<Vec<T>> {
    params
        .iter()
        .map(|p| {
            p.tensor
                .grad()
                .unwrap_or_else(|| vec![T::zero(); p.tensor.numel()])
        })
        .collect()
}

pub fn global_norm<T: Element>(grads: &[Vec<T>]) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|g| g.to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Element>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64_lossy(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g = *g * s);
    }
    norm
}

/// One bias-corrected Adam update of every parameter, in place.
pub fn adam_step<T: Element>(
    params: &ParamStore<T>,
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return shape(format!(
            "adam: {} parameters, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    for (i, p) in params.iter().enumerate() {
        let (g, m, v) = (&grads[i], &mut state.m[i], &mut state.v[i]);
        if g.len() != m.len() {
            return shape(format!(
                "adam: gradient for {} has {} values, expected {}",
                p.name,
                g.len(),
                m.len()
            ));
        }
        let mut data = p.tensor.data_mut();
        for j in 0..g.len() {
            m[j] = b1 * m[j] + one_b1 * g[j];
            v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
            let m_hat = m[j].to_f64_lossy() / c1;
            let v_hat = v[j].to_f64_lossy() / c2;
            let step = lr * m_hat / (v_hat.sqrt() + cfg.eps);
            data[j] = data[j] - T::from_f64_lossy(step);
        }
    }
    Ok(())
}
