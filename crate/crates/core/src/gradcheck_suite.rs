//! End-to-end finite-difference verification of every differentiable piece,
//! from single tensor ops up to the full unfolded model, in 64-bit.

use gisr_tensor::gradcheck::{check, GradCheckOptions};
use gisr_tensor::init::{seeded_rng, uniform_fan_in, SeededRng};
use gisr_tensor::{
    bicubic_resize, bilinear_resize, concat_channels, conv2d, conv2d_transpose, matmul, Activation,
    ParamStore, Tensor, TensorError,
};
use rand::Rng;

use crate::error::{arg, CoreError, Result};
use crate::madunet::{Builder, Cnl, ConvLstm, Crb, HNet, MadUNet, Memory, ModelConfig, ProxNet};
use crate::training::mae_loss;

/// Maximum relative error accepted by the suite.
pub const TOLERANCE: f64 = 1e-4;

pub const CHECK_NAMES: &[&str] = &[
    "conv2d",
    "conv2d_transpose",
    "matmul",
    "softmax",
    "sigmoid",
    "tanh",
    "relu",
    "leaky_relu",
    "abs",
    "add_sub_mul",
    "mul_scalar",
    "sum_mean",
    "concat_narrow",
    "reshape_transpose",
    "bicubic_resize",
    "bilinear_resize",
    "mae_loss",
    "crb",
    "convlstm",
    "cnl",
    "unet_stage",
    "vnet_stage",
    "hnet_stage",
    "madunet",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    pub passed: bool,
}

struct Ctx {
    rng: SeededRng,
}

impl Ctx {
    fn leaf(&mut self, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::parameter(shape, uniform_fan_in(n, 3, &mut self.rng)).unwrap()
    }

    /// Values bounded away from 0 so kinked activations are smooth under
    /// the perturbation.
    fn leaf_off_zero(&mut self, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let v = (0..n)
            .map(|_| {
                let m = self.rng.random_range(0.1..1.0);
                if self.rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect();
        Tensor::parameter(shape, v).unwrap()
    }

    fn fixed(&mut self, shape: &[usize]) -> Tensor<f64> {
        self.leaf(shape).detach()
    }
}

fn opts(eps: f64, seed: u64, sample: Option<usize>) -> GradCheckOptions {
    GradCheckOptions {
        eps,
        floor: 1e-3,
        sample,
        seed,
    }
}

/// Adapts a closure returning core errors to the tensor-level checker.
fn lifted(
    f: impl Fn() -> Result<Tensor<f64>>,
) -> impl Fn() -> std::result::Result<Tensor<f64>, TensorError> {
    move || {
        f().map_err(|e| match e {
            CoreError::Tensor(t) => t,
            other => TensorError::Numeric(other.to_string()),
        })
    }
}

/// Builds small-network parameters in their own store.
fn build<M>(
    seed: u64,
    f: impl FnOnce(&mut Builder<'_, f64>) -> Result<M>,
) -> Result<(M, ParamStore<f64>)> {
    let mut store = ParamStore::new();
    let mut rng = seeded_rng(seed);
    let m = f(&mut Builder::new(&mut store, &mut rng))?;
    fill_zero_weights(&store, &mut rng)?;
    Ok((m, store))
}

/// Zero-initialized output heads would hide every upstream gradient, so the
/// checks redraw them.
fn fill_zero_weights(store: &ParamStore<f64>, rng: &mut SeededRng) -> Result<()> {
    for p in store.iter() {
        let t = &p.tensor;
        if p.name.ends_with("weight") && t.to_vec().iter().all(|&x| x == 0.0) {
            let fan_in = t.numel() / t.shape()[0];
            t.set_data(&uniform_fan_in(t.numel(), fan_in, rng))?;
        }
    }
    Ok(())
}

fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        stages: 2,
        channels: 8,
        ratio: 2,
        target_bands: 2,
        guide_bands: 1,
        seed,
        ..ModelConfig::default()
    }
}

pub fn run_check(name: &str, seed: u64) -> Result<CheckReport> {
    let Some(&name) = CHECK_NAMES.iter().find(|&&n| n == name) else {
        return arg(format!(
            "unknown check {name:?}; known: {}",
            CHECK_NAMES.join(", ")
        ));
    };
    let mut cx = Ctx {
        rng: seeded_rng(seed),
    };
    let o = opts(1e-6, seed, None);
    let r = match name {
        "conv2d" => {
            let (x, w, b) = (
                cx.leaf(&[2, 2, 5, 5]),
                cx.leaf(&[3, 2, 3, 3]),
                cx.leaf(&[3]),
            );
            let y = cx.fixed(&[2, 3, 3, 3]);
            check(
                &[x.clone(), w.clone(), b.clone()],
                || Ok(conv2d(&x, &w, Some(&b), 2, 1)?.mul(&y)?.sum()),
                opts(1e-4, seed, None),
            )?
        }
        "conv2d_transpose" => {
            let (x, w, b) = (
                cx.leaf(&[2, 3, 3, 3]),
                cx.leaf(&[3, 2, 3, 3]),
                cx.leaf(&[2]),
            );
            let y = cx.fixed(&[2, 2, 5, 5]);
            check(
                &[x.clone(), w.clone(), b.clone()],
                || Ok(conv2d_transpose(&x, &w, Some(&b), 2, 1)?.mul(&y)?.sum()),
                o,
            )?
        }
        "matmul" => {
            let (a, b) = (cx.leaf(&[2, 3, 4]), cx.leaf(&[2, 4, 5]));
            let y = cx.fixed(&[2, 3, 5]);
            check(
                &[a.clone(), b.clone()],
                || Ok(matmul(&a, &b)?.mul(&y)?.sum()),
                o,
            )?
        }
        "softmax" => {
            let x = cx.leaf(&[2, 3, 4]);
            let y = cx.fixed(&[2, 3, 4]);
            check(
                std::slice::from_ref(&x),
                || Ok(x.softmax(2)?.add(&x.softmax(1)?)?.mul(&y)?.sum()),
                o,
            )?
        }
        "sigmoid" | "tanh" | "relu" | "leaky_relu" | "abs" => {
            let kind = match name {
                "sigmoid" => Some(Activation::Sigmoid),
                "tanh" => Some(Activation::Tanh),
                "relu" => Some(Activation::Relu),
                "leaky_relu" => Some(Activation::LEAKY),
                _ => None,
            };
            let x = cx.leaf_off_zero(&[2, 3, 4]);
            let y = cx.fixed(&[2, 3, 4]);
            check(
                std::slice::from_ref(&x),
                || {
                    let a = match kind {
                        Some(k) => x.activation(k),
                        None => x.abs(),
                    };
                    Ok(a.mul(&y)?.sum())
                },
                o,
            )?
        }
        "add_sub_mul" => {
            let (a, b) = (cx.leaf(&[3, 4]), cx.leaf(&[3, 4]));
            let y = cx.fixed(&[3, 4]);
            check(
                &[a.clone(), b.clone()],
                || Ok(a.add(&b)?.mul(&a.sub(&b)?)?.mul(&a)?.mul(&y)?.sum()),
                o,
            )?
        }
        "mul_scalar" => {
            let (a, s) = (cx.leaf(&[3, 4]), cx.leaf(&[1]));
            let y = cx.fixed(&[3, 4]);
            check(
                &[a.clone(), s.clone()],
                || Ok(a.mul_scalar(&s)?.mul(&y)?.sum()),
                o,
            )?
        }
        "sum_mean" => {
            let a = cx.leaf(&[3, 4]);
            check(
                std::slice::from_ref(&a),
                || a.mul(&a)?.sum().add(&a.mean().mul(&a.mean())?),
                o,
            )?
        }
        "concat_narrow" => {
            let (a, b) = (cx.leaf(&[2, 2, 3, 3]), cx.leaf(&[2, 3, 3, 3]));
            let y = cx.fixed(&[2, 3, 3, 3]);
            check(
                &[a.clone(), b.clone()],
                || {
                    Ok(concat_channels(&[&a, &b])?
                        .narrow_channels(1, 3)?
                        .mul(&y)?
                        .sum())
                },
                o,
            )?
        }
        "reshape_transpose" => {
            let a = cx.leaf(&[2, 3, 2, 2]);
            let y = cx.fixed(&[2, 4, 3]);
            check(
                std::slice::from_ref(&a),
                || Ok(a.reshape(&[2, 3, 4])?.transpose_last2()?.mul(&y)?.sum()),
                o,
            )?
        }
        "bicubic_resize" => {
            let x = cx.leaf(&[1, 2, 4, 5]);
            let y = cx.fixed(&[1, 2, 8, 10]);
            check(
                std::slice::from_ref(&x),
                || Ok(bicubic_resize(&x, 2, 1)?.mul(&y)?.sum()),
                o,
            )?
        }
        "bilinear_resize" => {
            let x = cx.leaf(&[1, 2, 4, 5]);
            let y = cx.fixed(&[1, 2, 8, 10]);
            check(
                std::slice::from_ref(&x),
                || Ok(bilinear_resize(&x, 8, 10)?.mul(&y)?.sum()),
                o,
            )?
        }
        "mae_loss" => {
            let x = cx.leaf_off_zero(&[2, 3, 4]);
            let gt = Tensor::zeros(&[2, 3, 4]);
            check(std::slice::from_ref(&x), lifted(|| mae_loss(&x, &gt)), o)?
        }
        "crb" => {
            let (crb, store) = build(seed, |b| Crb::new(&mut b.sub("crb"), 3, 4, 2))?;
            let x = cx.leaf(&[1, 3, 6, 6]);
            let y = cx.fixed(&[1, 4, 6, 6]);
            let mut wrt = store.tensors();
            wrt.push(x.clone());
            check(&wrt, lifted(|| Ok(crb.forward(&x)?.mul(&y)?.sum())), o)?
        }
        "convlstm" => {
            let (cell, store) = build(seed, |b| ConvLstm::new(&mut b.sub("lstm"), 3))?;
            let (x1, x2) = (cx.leaf(&[1, 3, 5, 5]), cx.leaf(&[1, 3, 5, 5]));
            let (h0, c0) = (cx.leaf(&[1, 3, 5, 5]), cx.leaf(&[1, 3, 5, 5]));
            let (yh, yc) = (cx.fixed(&[1, 3, 5, 5]), cx.fixed(&[1, 3, 5, 5]));
            let mut wrt = store.tensors();
            wrt.extend([x1.clone(), x2.clone(), h0.clone(), c0.clone()]);
            check(
                &wrt,
                lifted(|| {
                    let (h1, c1) = cell.step(&x1, &h0, &c0)?;
                    let (h2, c2) = cell.step(&x2, &h1, &c1)?;
                    Ok(h2.mul(&yh)?.add(&c2.mul(&yc)?)?.sum())
                }),
                o,
            )?
        }
        "cnl" => {
            let (cnl, store) = build(seed, |b| Cnl::new(&mut b.sub("cnl"), 4, 1))?;
            let (h, p) = (cx.leaf(&[1, 4, 6, 6]), cx.leaf(&[1, 4, 6, 6]));
            let y = cx.fixed(&[1, 4, 6, 6]);
            let mut wrt = store.tensors();
            wrt.extend([h.clone(), p.clone()]);
            check(
                &wrt,
                lifted(|| Ok(cnl.forward(&h, &p)?.features.mul(&y)?.sum())),
                o,
            )?
        }
        "unet_stage" | "vnet_stage" => {
            let cfg = toy_config(seed);
            let tag = if name == "unet_stage" { "unet" } else { "vnet" };
            let (net, store) = build(seed + u64::from(tag == "vnet"), |b| {
                ProxNet::new(&mut b.sub(tag), &cfg)
            })?;
            let (x, prev) = (cx.leaf(&[1, 2, 8, 8]), cx.leaf(&[1, 2, 8, 8]));
            let p_feat = cx.leaf(&[1, 8, 8, 8]);
            let mem = Memory {
                feat: cx.leaf(&[1, 8, 8, 8]),
                h: cx.leaf(&[1, 8, 8, 8]),
                c: cx.leaf(&[1, 8, 8, 8]),
            };
            let (yi, ym) = (cx.fixed(&[1, 2, 8, 8]), cx.fixed(&[1, 8, 8, 8]));
            let mut wrt = store.tensors();
            wrt.extend([
                x.clone(),
                prev.clone(),
                p_feat.clone(),
                mem.feat.clone(),
                mem.h.clone(),
                mem.c.clone(),
            ]);
            check(
                &wrt,
                lifted(|| {
                    let out = net.forward(&x, &p_feat, &prev, &mem)?;
                    Ok(out
                        .image
                        .mul(&yi)?
                        .sum()
                        .add(&out.memory.feat.mul(&ym)?.sum())?)
                }),
                opts(1e-6, seed, Some(400)),
            )?
        }
        "hnet_stage" => {
            let cfg = toy_config(seed);
            let (net, store) = build(seed, |b| HNet::new(&mut b.sub("hnet"), &cfg))?;
            let (h, u, v) = (
                cx.leaf(&[1, 2, 8, 8]),
                cx.leaf(&[1, 2, 8, 8]),
                cx.leaf(&[1, 2, 8, 8]),
            );
            let l = cx.leaf(&[1, 2, 4, 4]);
            let mem = Memory {
                feat: cx.leaf(&[1, 8, 8, 8]),
                h: cx.leaf(&[1, 8, 8, 8]),
                c: cx.leaf(&[1, 8, 8, 8]),
            };
            let (yi, ym) = (cx.fixed(&[1, 2, 8, 8]), cx.fixed(&[1, 8, 8, 8]));
            let mut wrt = store.tensors();
            wrt.extend([h.clone(), u.clone(), v.clone(), l.clone(), mem.feat.clone()]);
            check(
                &wrt,
                lifted(|| {
                    let out = net.forward(&h, &l, &u, &v, &mem)?;
                    Ok(out
                        .image
                        .mul(&yi)?
                        .sum()
                        .add(&out.memory.feat.mul(&ym)?.sum())?)
                }),
                opts(1e-6, seed, Some(400)),
            )?
        }
        "madunet" => {
            let model = MadUNet::<f64>::new(toy_config(seed))?;
            fill_zero_weights(&model.params, &mut cx.rng)?;
            let l = cx.fixed(&[1, 2, 4, 4]);
            let p = cx.fixed(&[1, 1, 8, 8]);
            let gt = cx.fixed(&[1, 2, 8, 8]);
            check(
                &model.params.tensors(),
                lifted(|| mae_loss(&model.forward(&l, &p)?.output, &gt)),
                opts(1e-6, seed, Some(20)),
            )?
        }
        _ => unreachable!("every name in CHECK_NAMES has an arm"),
    };
    Ok(CheckReport {
        name,
        max_rel_err: r.max_rel_err,
        max_abs_err: r.max_abs_err,
        checked: r.checked,
        passed: r.max_rel_err < TOLERANCE,
    })
}

/// Runs every check, or only `only` when given.
pub fn run_suite(only: Option<&str>, seed: u64) -> Result<Vec<CheckReport>> {
    match only {
        Some(name) => Ok(vec![run_check(name, seed)?]),
        None => CHECK_NAMES.iter().map(|n| run_check(n, seed)).collect(),
    }
}
