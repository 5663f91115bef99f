//! Classical half-quadratic splitting solver.
//!
//! Minimizes `1/2 |L - DKH|^2 + eta1/2 |U - H|^2 + lambda1/2 |V - H|^2` plus
//! implicit priors on `U` and `V`, by alternating one proximal-gradient step on
//! `U`, one on `V` and one gradient step on `H`. In classical mode the refined
//! image `N` is simply `H`.

use gisr_tensor::{bicubic_resize, Tensor};

use crate::degradation::{apply_dk, apply_dk_adjoint, DegradationSpec};
use crate::error::{arg, shape, CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HqsParams {
    pub eta1: f64,
    pub lambda1: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub iters: usize,
}

impl Default for HqsParams {
    fn default() -> Self {
        Self {
            eta1: 0.5,
            lambda1: 0.5,
            delta1: 0.1,
            delta2: 0.1,
            delta3: 0.1,
            iters: 10,
        }
    }
}

impl HqsParams {
    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return arg("HQS needs at least one iteration");
        }
        if !(self.eta1 >= 0.0 && self.lambda1 >= 0.0) {
            return arg("penalty weights must be non-negative");
        }
        if !(self.delta1 > 0.0 && self.delta2 > 0.0 && self.delta3 > 0.0) {
            return arg("step sizes must be positive");
        }
        Ok(())
    }
}

/// Proximal map `(z, guidance) -> z'` with `z'` shaped like `z`.
pub trait Prox {
    fn apply(&self, z: &Tensor<f64>, guide: &Tensor<f64>) -> Result<Tensor<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProx;

impl Prox for IdentityProx {
    fn apply(&self, z: &Tensor<f64>, _guide: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(z.clone())
    }
}

impl<F> Prox for F
where
    F: Fn(&Tensor<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
{
    fn apply(&self, z: &Tensor<f64>, guide: &Tensor<f64>) -> Result<Tensor<f64>> {
        self(z, guide)
    }
}

fn same_shape(a: &Tensor<f64>, b: &Tensor<f64>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// Gradient of `1/2 |U - H|^2` in `U`.
pub fn grad_f1(u_prev: &Tensor<f64>, h: &Tensor<f64>) -> Result<Tensor<f64>> {
    same_shape(u_prev, h, "grad_f1")?;
    Ok(u_prev.sub(h)?)
}

/// Gradient of `1/2 |V - N|^2` in `V`.
pub fn grad_f2(v_prev: &Tensor<f64>, n: &Tensor<f64>) -> Result<Tensor<f64>> {
    same_shape(v_prev, n, "grad_f2")?;
    Ok(v_prev.sub(n)?)
}

/// Gradient of the `H` sub-problem, computed in three steps: the simulated
/// observation `DKH`, the observation residual `E = L - DKH` lifted back by
/// `(DK)^T`, and the penalty terms. Returns
/// `(DK)^T (DKH - L) + eta1 (H - U) + lambda1 (H - V)`.
pub fn grad_f3(
    h: &Tensor<f64>,
    l: &Tensor<f64>,
    u: &Tensor<f64>,
    v: &Tensor<f64>,
    spec: &DegradationSpec,
    p: &HqsParams,
) -> Result<Tensor<f64>> {
    same_shape(h, u, "grad_f3 H/U")?;
    same_shape(h, v, "grad_f3 H/V")?;
    let dkh = apply_dk(h, spec)?;
    same_shape(&dkh, l, "grad_f3 DKH/L")?;
    let uh = apply_dk_adjoint(&l.sub(&dkh)?, spec)?;
    let pen_u = h.sub(u)?.mul_const(p.eta1);
    let pen_v = h.sub(v)?.mul_const(p.lambda1);
    Ok(pen_u.add(&pen_v)?.sub(&uh)?)
}

/// `1/2 |L - DKH|^2 + eta1/2 |U - H|^2 + lambda1/2 |V - H|^2`.
pub fn h_objective(
    h: &Tensor<f64>,
    l: &Tensor<f64>,
    u: &Tensor<f64>,
    v: &Tensor<f64>,
    spec: &DegradationSpec,
    p: &HqsParams,
) -> Result<f64> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let dkh = apply_dk(h, spec)?;
    same_shape(&dkh, l, "h_objective DKH/L")?;
    let (hv, uv, vv) = (h.to_vec(), u.to_vec(), v.to_vec());
    Ok(0.5 * sq(&l.to_vec(), &dkh.to_vec())
        + 0.5 * p.eta1 * sq(&uv, &hv)
        + 0.5 * p.lambda1 * sq(&vv, &hv))
}

/// Bicubic upsampling of a `[bands, h, w]` (or any rank >= 2) image by `r`.
pub fn bicubic_init(l: &Tensor<f64>, r: usize) -> Result<Tensor<f64>> {
    Ok(bicubic_resize(l, r, 1)?)
}

const DIVERGENCE_LIMIT: f64 = 1e3;

/// Runs the HQS iteration from the bicubic upsampling of `l`.
pub fn hqs_solve(
    l: &Tensor<f64>,
    guide: &Tensor<f64>,
    spec: &DegradationSpec,
    p: &HqsParams,
    prox1: &dyn Prox,
    prox2: &dyn Prox,
) -> Result<Tensor<f64>> {
    let h0 = bicubic_init(l, spec.ratio)?;
    hqs_solve_from(&h0, l, guide, spec, p, prox1, prox2)
}

/// Runs the HQS iteration from an explicit initial estimate; `U` and `V`
/// start equal to it.
pub fn hqs_solve_from(
    h0: &Tensor<f64>,
    l: &Tensor<f64>,
    guide: &Tensor<f64>,
    spec: &DegradationSpec,
    p: &HqsParams,
    prox1: &dyn Prox,
    prox2: &dyn Prox,
) -> Result<Tensor<f64>> {
    p.validate()?;
    let mut h = h0.clone();
    let mut u = h0.clone();
    let mut v = h0.clone();
    for k in 0..p.iters {
        u = prox1.apply(&u.sub(&grad_f1(&u, &h)?.mul_const(p.delta1))?, guide)?;
        same_shape(&u, &h, "prox1 output")?;
        let n = &h;
        v = prox2.apply(&v.sub(&grad_f2(&v, n)?.mul_const(p.delta2))?, guide)?;
        same_shape(&v, &h, "prox2 output")?;
        h = h.sub(&grad_f3(&h, l, &u, &v, spec, p)?.mul_const(p.delta3))?;
        let peak = h.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(peak <= DIVERGENCE_LIMIT) {
            return Err(CoreError::Numeric(format!(
                "HQS diverged at iteration {}: max |H| = {peak:.3e}",
                k + 1
            )));
        }
    }
    Ok(h)
}
