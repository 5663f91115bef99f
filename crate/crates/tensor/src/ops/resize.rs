//! Separable resampling over the last two axes.
//!
//! Both kernels use the half-pixel (align-corners = false) coordinate
//! mapping `src = (dst + 0.5) * in / out - 0.5` with edge clamping, so each
//! output sample is a fixed linear combination of inputs and the backward
//! pass is the transposed combination.

use std::sync::Arc;

use crate::element::Element;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Taps (source index, weight) contributing to each output index.
type AxisTaps = Vec<Vec<(usize, f64)>>;

/// Catmull-Rom cubic convolution kernel (a = -0.5).
fn cubic_weight(d: f64) -> f64 {
    const A: f64 = -0.5;
    let d = d.abs();
    if d <= 1.0 {
        ((A + 2.0) * d - (A + 3.0)) * d * d + 1.0
    } else if d < 2.0 {
        ((A * d - 5.0 * A) * d + 8.0 * A) * d - 4.0 * A
    } else {
        0.0
    }
}

fn push_tap(taps: &mut Vec<(usize, f64)>, idx: usize, w: f64) {
    match taps.iter_mut().find(|(i, _)| *i == idx) {
        Some((_, acc)) => *acc += w,
        None => taps.push((idx, w)),
    }
}

fn cubic_taps(input: usize, output: usize) -> AxisTaps {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let mut taps = Vec::with_capacity(4);
            for k in -1i64..=2 {
                let idx = (base as i64 + k).clamp(0, input as i64 - 1) as usize;
                push_tap(&mut taps, idx, cubic_weight(t - k as f64));
            }
            taps
        })
        .collect()
}

fn linear_taps(input: usize, output: usize) -> AxisTaps {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let t = src - i0 as f64;
            let mut taps = Vec::with_capacity(2);
            push_tap(&mut taps, i0, 1.0 - t);
            push_tap(&mut taps, i1, t);
            taps
        })
        .collect()
}

struct Resampler {
    h: usize,
    w: usize,
    rows: AxisTaps,
    cols: AxisTaps,
}

impl Resampler {
    fn oh(&self) -> usize {
        self.rows.len()
    }

    fn ow(&self) -> usize {
        self.cols.len()
    }

    fn forward<T: Element>(&self, src: &[T], planes: usize) -> Vec<T> {
        let (h, w, oh, ow) = (self.h, self.w, self.oh(), self.ow());
        let mut tmp = vec![0.0f64; h * ow];
        let mut out = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let plane = &src[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for (x, taps) in self.cols.iter().enumerate() {
                    tmp[y * ow + x] = taps
                        .iter()
                        .map(|&(i, wt)| plane[y * w + i].to_f64_lossy() * wt)
                        .sum();
                }
            }
            for taps in &self.rows {
                for x in 0..ow {
                    let v: f64 = taps.iter().map(|&(i, wt)| tmp[i * ow + x] * wt).sum();
                    out.push(T::from_f64_lossy(v));
                }
            }
        }
        out
    }

    fn adjoint<T: Element>(&self, g: &[T], planes: usize) -> Vec<T> {
        let (h, w, oh, ow) = (self.h, self.w, self.oh(), self.ow());
        let mut out = vec![T::zero(); planes * h * w];
        let mut tmp = vec![0.0f64; h * ow];
        for p in 0..planes {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            let gp = &g[p * oh * ow..(p + 1) * oh * ow];
            for (y, taps) in self.rows.iter().enumerate() {
                for &(i, wt) in taps {
                    for x in 0..ow {
                        tmp[i * ow + x] += gp[y * ow + x].to_f64_lossy() * wt;
                    }
                }
            }
            let plane = &mut out[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for (x, taps) in self.cols.iter().enumerate() {
                    let gv = tmp[y * ow + x];
                    for &(i, wt) in taps {
                        plane[y * w + i] = plane[y * w + i] + T::from_f64_lossy(gv * wt);
                    }
                }
            }
        }
        out
    }
}

fn apply<T: Element>(op: &'static str, x: &Tensor<T>, r: Resampler) -> Tensor<T> {
    let nd = x.ndim();
    let planes = x.numel() / (r.h * r.w).max(1);
    let mut shape = x.shape().to_vec();
    shape[nd - 2] = r.oh();
    shape[nd - 1] = r.ow();
    let data = r.forward(&x.data(), planes);
    let r = Arc::new(r);
    Tensor::from_op(
        op,
        shape,
        data,
        &[x],
        Box::new(move |ctx| vec![Some(r.adjoint(ctx.grad_out, planes))]),
    )
}

fn spatial_dims<T: Element>(x: &Tensor<T>, op: &str) -> Result<(usize, usize)> {
    if x.ndim() < 2 {
        return shape_err(format!("{op}: need rank >= 2, got dims {:?}", x.shape()));
    }
    let nd = x.ndim();
    let (h, w) = (x.dim(nd - 2), x.dim(nd - 1));
    if h == 0 || w == 0 {
        return shape_err(format!("{op}: empty spatial dims {:?}", x.shape()));
    }
    Ok((h, w))
}

/// Catmull-Rom bicubic resize of the last two axes by the rational factor
/// `num / den`. Both output dims must come out integral.
pub fn bicubic_resize<T: Element>(x: &Tensor<T>, num: usize, den: usize) -> Result<Tensor<T>> {
    let (h, w) = spatial_dims(x, "bicubic_resize")?;
    if num == 0 || den == 0 {
        return arg_err("bicubic_resize: scale must be positive");
    }
    if !(h * num).is_multiple_of(den) || !(w * num).is_multiple_of(den) {
        return arg_err(format!(
            "bicubic_resize: {h}x{w} times {num}/{den} is not an integer size"
        ));
    }
    let (oh, ow) = (h * num / den, w * num / den);
    let r = Resampler {
        h,
        w,
        rows: cubic_taps(h, oh),
        cols: cubic_taps(w, ow),
    };
    Ok(apply("bicubic_resize", x, r))
}

/// Bilinear resize of the last two axes to `(out_h, out_w)`.
pub fn bilinear_resize<T: Element>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (h, w) = spatial_dims(x, "bilinear_resize")?;
    if out_h == 0 || out_w == 0 {
        return arg_err("bilinear_resize: output dims must be positive");
    }
    let r = Resampler {
        h,
        w,
        rows: linear_taps(h, out_h),
        cols: linear_taps(w, out_w),
    };
    Ok(apply("bilinear_resize", x, r))
}
