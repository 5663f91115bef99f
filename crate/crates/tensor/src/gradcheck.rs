//! Central finite-difference checks of reverse-mode gradients.
//!
//! The numeric side only ever evaluates the forward function, so it is an
//! oracle independent of every backward rule it checks.

use rand::seq::index::sample;

use crate::element::Element;
use crate::error::Result;
use crate::init::seeded_rng;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Half-width of the central difference.
    pub eps: f64,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is ~0 are judged on absolute error instead.
    pub floor: f64,
    /// Check only this many entries, drawn uniformly across all tensors.
    pub sample: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-3,
            sample: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckResult {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the autodiff gradient of the scalar `f()` with respect to each
/// tensor in `wrt` against central differences. The tensors must be
/// gradient-tracking leaves; their values are restored afterwards.
pub fn check<T, F>(wrt: &[Tensor<T>], f: F, opts: GradCheckOptions) -> Result<GradCheckResult>
where
    T: Element,
    F: Fn() -> Result<Tensor<T>>,
{
    wrt.iter().for_each(|t| t.zero_grad());
    f()?.backward()?;
    let analytic: Vec<Vec<T>> = wrt
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![T::zero(); t.numel()]))
        .collect();

    let sizes: Vec<usize> = wrt.iter().map(|t| t.numel()).collect();
    let total: usize = sizes.iter().sum();
    let flat: Vec<usize> = match opts.sample {
        Some(k) if k < total => {
            let mut idx = sample(&mut seeded_rng(opts.seed), total, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };

    let mut out = GradCheckResult {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
    };
    let eval = || -> Result<f64> { Ok(no_grad(&f)?.item().to_f64_lossy()) };
    for g in flat {
        let (mut ti, mut off) = (0, g);
        while off >= sizes[ti] {
            off -= sizes[ti];
            ti += 1;
        }
        let t = &wrt[ti];
        let orig = t.data()[off];
        let eps = T::from_f64_lossy(opts.eps);
        t.data_mut()[off] = orig + eps;
        let plus = eval();
        t.data_mut()[off] = orig - eps;
        let minus = eval();
        t.data_mut()[off] = orig;
        let (plus, minus) = (plus?, minus?);
        // Divide by the perturbation actually applied after rounding.
        let step =
            ((orig + eps).to_f64_lossy() - (orig - eps).to_f64_lossy()).max(f64::MIN_POSITIVE);
        let numeric = (plus - minus) / step;
        let a = analytic[ti][off].to_f64_lossy();
        out.max_abs_err = out.max_abs_err.max((a - numeric).abs());
        out.max_rel_err = out.max_rel_err.max(relative_error(a, numeric, opts.floor));
        out.checked += 1;
    }
    wrt.iter().for_each(|t| t.zero_grad());
    Ok(out)
}
