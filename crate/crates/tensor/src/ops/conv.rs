//! 2-D convolution (cross-correlation convention, zero padding) and its
//! exact adjoint, the transposed convolution.
//!
//! Both lower to `im2col` + GEMM per batch item. Column buffers are
//! recomputed in the backward pass rather than kept alive with the graph.

use std::borrow::Cow;

use crate::element::Element;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Output extent of a strided, padded correlation along one axis.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return arg_err("stride must be at least 1");
    }
    if input + 2 * pad < kernel {
        return arg_err(format!(
            "kernel {kernel} larger than padded input {input}+2*{pad}"
        ));
    }
    Ok((input + 2 * pad - kernel) / stride + 1)
}

/// Geometry of a correlation from a `[c, h, w]` plane stack to `[.., ho, wo]`.
#[derive(Debug, Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn new(
        c: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let ho = conv_output_dim(h, kh, stride, pad)?;
        let wo = conv_output_dim(w, kw, stride, pad)?;
        Ok(Self {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output positions `lo..hi` whose tap at kernel offset `k` lands inside
    /// an input axis of length `extent`.
    #[inline]
    fn valid(k: usize, stride: usize, pad: usize, extent: usize, out: usize) -> (usize, usize) {
        let lo = pad.saturating_sub(k).div_ceil(stride);
        let hi = if extent + pad > k {
            ((extent + pad - k - 1) / stride + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn im2col<'a, T: Element>(&self, x: &'a [T]) -> Cow<'a, [T]> {
        if self.is_pointwise() {
            return Cow::Borrowed(x);
        }
        let n = self.col_cols();
        let (s, p) = (self.stride, self.pad);
        let mut col = vec![T::zero(); self.col_rows() * n];
        let mut row = 0;
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (oh0, oh1) = Self::valid(ki, s, p, self.h, self.ho);
                for kj in 0..self.kw {
                    let (ow0, ow1) = Self::valid(kj, s, p, self.w, self.wo);
                    let dst = &mut col[row * n..(row + 1) * n];
                    for oh in oh0..oh1 {
                        let ih = oh * s + ki - p;
                        let src_row = &plane[ih * self.w..(ih + 1) * self.w];
                        let dst_row = &mut dst[oh * self.wo + ow0..oh * self.wo + ow1];
                        let iw0 = ow0 * s + kj - p;
                        if s == 1 {
                            dst_row.copy_from_slice(&src_row[iw0..iw0 + (ow1 - ow0)]);
                        } else {
                            for (j, d) in dst_row.iter_mut().enumerate() {
                                *d = src_row[iw0 + j * s];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        Cow::Owned(col)
    }

    /// Adjoint of `im2col`: scatter-adds columns back into `out`.
    fn col2im<T: Element>(&self, col: &[T], out: &mut [T]) {
        if self.is_pointwise() {
            out.iter_mut().zip(col).for_each(|(o, &c)| *o = *o + c);
            return;
        }
        let n = self.col_cols();
        let (s, p) = (self.stride, self.pad);
        let mut row = 0;
        for ci in 0..self.c {
            let plane = &mut out[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                let (oh0, oh1) = Self::valid(ki, s, p, self.h, self.ho);
                for kj in 0..self.kw {
                    let (ow0, ow1) = Self::valid(kj, s, p, self.w, self.wo);
                    let src = &col[row * n..(row + 1) * n];
                    for oh in oh0..oh1 {
                        let ih = oh * s + ki - p;
                        let dst_row = &mut plane[ih * self.w..(ih + 1) * self.w];
                        let src_row = &src[oh * self.wo + ow0..oh * self.wo + ow1];
                        let iw0 = ow0 * s + kj - p;
                        if s == 1 {
                            dst_row[iw0..iw0 + src_row.len()]
                                .iter_mut()
                                .zip(src_row)
                                .for_each(|(d, &v)| *d = *d + v);
                        } else {
                            for (j, &v) in src_row.iter().enumerate() {
                                dst_row[iw0 + j * s] = dst_row[iw0 + j * s] + v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `dst[c * rows + r] = src[r * cols + c]`, in cache-sized tiles. GEMM reads
/// a transposed operand far faster once it is laid out contiguously.
fn transpose_into<T: Element>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

fn check_bias<T: Element>(b: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    if let Some(b) = b {
        if b.numel() != channels {
            return shape_err(format!(
                "bias has {} values, expected {channels}",
                b.numel()
            ));
        }
    }
    Ok(())
}

fn add_bias<T: Element>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Element>(g: &[T], channels: usize, plane: usize) -> Vec<T> {
    let mut gb = vec![T::zero(); channels];
    for (i, chunk) in g.chunks(plane).enumerate() {
        gb[i % channels] = gb[i % channels] + chunk.iter().fold(T::zero(), |a, &v| a + v);
    }
    gb
}

fn inputs<'a, T: Element>(
    x: &'a Tensor<T>,
    w: &'a Tensor<T>,
    b: Option<&'a Tensor<T>>,
) -> Vec<&'a Tensor<T>> {
    let mut v = vec![x, w];
    v.extend(b);
    v
}

/// Cross-correlation of `x: [B,Cin,H,W]` with `w: [Cout,Cin,kh,kw]`, zero
/// padding `pad` on every side.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (&[batch, cin, h, wd], &[cout, cin_w, kh, kw]) = (x.shape(), w.shape()) else {
        return shape_err(format!(
            "conv2d: expected 4-d input and weight, got {:?} and {:?}",
            x.shape(),
            w.shape()
        ));
    };
    if cin != cin_w {
        return shape_err(format!(
            "conv2d: input has {cin} channels but weight expects {cin_w}"
        ));
    }
    check_bias(b, cout)?;
    let g = Geom::new(cin, h, wd, kh, kw, stride, pad)?;
    let (kdim, n) = (g.col_rows(), g.col_cols());
    let in_plane = cin * h * wd;
    let out_plane = cout * n;

    let mut out = vec![T::zero(); batch * out_plane];
    {
        let xd = x.data();
        let wdat = w.data();
        for bi in 0..batch {
            let col = g.im2col(&xd[bi * in_plane..(bi + 1) * in_plane]);
            T::gemm(
                cout,
                kdim,
                n,
                T::one(),
                &wdat,
                (kdim as isize, 1),
                &col,
                (n as isize, 1),
                T::zero(),
                &mut out[bi * out_plane..(bi + 1) * out_plane],
                (n as isize, 1),
            );
        }
        if let Some(b) = b {
            add_bias(&mut out, &b.data(), n);
        }
    }

    Ok(Tensor::from_op(
        "conv2d",
        vec![batch, cout, g.ho, g.wo],
        out,
        &inputs(x, w, b),
        Box::new(move |ctx| {
            let xd = ctx.inputs[0].data();
            let wdat = ctx.inputs[1].data();
            let dy = ctx.grad_out;
            let mut gx = ctx.inputs[0]
                .requires_grad()
                .then(|| vec![T::zero(); batch * in_plane]);
            let mut gw = ctx.inputs[1]
                .requires_grad()
                .then(|| vec![T::zero(); cout * kdim]);
            let mut dcol = gx.as_ref().map(|_| vec![T::zero(); kdim * n]);
            let mut col_t = gw.as_ref().map(|_| vec![T::zero(); kdim * n]);
            for bi in 0..batch {
                let dyb = &dy[bi * out_plane..(bi + 1) * out_plane];
                if let (Some(gw), Some(col_t)) = (gw.as_mut(), col_t.as_mut()) {
                    let col = g.im2col(&xd[bi * in_plane..(bi + 1) * in_plane]);
                    transpose_into(&col, kdim, n, col_t);
                    // dW += dY * col^T
                    T::gemm(
                        cout,
                        n,
                        kdim,
                        T::one(),
                        dyb,
                        (n as isize, 1),
                        col_t,
                        (kdim as isize, 1),
                        T::one(),
                        gw,
                        (kdim as isize, 1),
                    );
                }
                if let (Some(gx), Some(dcol)) = (gx.as_mut(), dcol.as_mut()) {
                    // dcol = W^T * dY
                    T::gemm(
                        kdim,
                        cout,
                        n,
                        T::one(),
                        &wdat,
                        (1, kdim as isize),
                        dyb,
                        (n as isize, 1),
                        T::zero(),
                        dcol,
                        (n as isize, 1),
                    );
                    g.col2im(dcol, &mut gx[bi * in_plane..(bi + 1) * in_plane]);
                }
            }
            let mut grads = vec![gx, gw];
            if ctx.inputs.len() == 3 {
                grads.push(Some(bias_grad(dy, cout, n)));
            }
            grads
        }),
    ))
}

/// Transposed convolution with the output size implied by the geometry,
/// `H'' = (H - 1) * stride - 2 * pad + kh`.
pub fn conv2d_transpose<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (&[_, _, h, wd], &[_, _, kh, kw]) = (x.shape(), w.shape()) else {
        return shape_err(format!(
            "conv2d_transpose: expected 4-d input and weight, got {:?} and {:?}",
            x.shape(),
            w.shape()
        ));
    };
    let out_dim = |i: usize, k: usize| -> Result<usize> {
        let full = (i.saturating_sub(1)) * stride + k;
        if full < 2 * pad || i == 0 {
            return arg_err(format!(
                "conv2d_transpose: padding {pad} consumes the output"
            ));
        }
        Ok(full - 2 * pad)
    };
    let size = (out_dim(h, kh)?, out_dim(wd, kw)?);
    conv2d_transpose_sized(x, w, b, stride, pad, size)
}

/// Transposed convolution producing an explicit output size. This is the
/// exact adjoint of [`conv2d`] from a `[.., out_h, out_w]` input with the same
/// weight, stride and padding; `out_hw` must map back to `x`'s spatial dims
/// under that correlation.
pub fn conv2d_transpose_sized<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    out_hw: (usize, usize),
) -> Result<Tensor<T>> {
    let (&[batch, cin, h, wd], &[cin_w, cout, kh, kw]) = (x.shape(), w.shape()) else {
        return shape_err(format!(
            "conv2d_transpose: expected 4-d input and weight, got {:?} and {:?}",
            x.shape(),
            w.shape()
        ));
    };
    if cin != cin_w {
        return shape_err(format!(
            "conv2d_transpose: input has {cin} channels but weight expects {cin_w}"
        ));
    }
    check_bias(b, cout)?;
    let g = Geom::new(cout, out_hw.0, out_hw.1, kh, kw, stride, pad)?;
    if g.ho != h || g.wo != wd {
        return shape_err(format!(
            "conv2d_transpose: output {out_hw:?} does not correlate back to {h}x{wd}"
        ));
    }
    let (kdim, n) = (g.col_rows(), g.col_cols());
    let in_plane = cin * n;
    let out_plane = cout * out_hw.0 * out_hw.1;

    let mut out = vec![T::zero(); batch * out_plane];
    {
        let xd = x.data();
        let wdat = w.data();
        let mut col = vec![T::zero(); kdim * n];
        for bi in 0..batch {
            // col = W^T * x_b, W viewed as [Cin, Cout*kh*kw]
            T::gemm(
                kdim,
                cin,
                n,
                T::one(),
                &wdat,
                (1, kdim as isize),
                &xd[bi * in_plane..(bi + 1) * in_plane],
                (n as isize, 1),
                T::zero(),
                &mut col,
                (n as isize, 1),
            );
            g.col2im(&col, &mut out[bi * out_plane..(bi + 1) * out_plane]);
        }
        if let Some(b) = b {
            add_bias(&mut out, &b.data(), out_hw.0 * out_hw.1);
        }
    }

    Ok(Tensor::from_op(
        "conv2d_transpose",
        vec![batch, cout, out_hw.0, out_hw.1],
        out,
        &inputs(x, w, b),
        Box::new(move |ctx| {
            let xd = ctx.inputs[0].data();
            let wdat = ctx.inputs[1].data();
            let dy = ctx.grad_out;
            let mut gx = ctx.inputs[0]
                .requires_grad()
                .then(|| vec![T::zero(); batch * in_plane]);
            let mut gw = ctx.inputs[1]
                .requires_grad()
                .then(|| vec![T::zero(); cin * kdim]);
            let mut col_t = gw.as_ref().map(|_| vec![T::zero(); kdim * n]);
            for bi in 0..batch {
                let col = g.im2col(&dy[bi * out_plane..(bi + 1) * out_plane]);
                if let Some(gx) = gx.as_mut() {
                    // dx = W * col(dY)
                    T::gemm(
                        cin,
                        kdim,
                        n,
                        T::one(),
                        &wdat,
                        (kdim as isize, 1),
                        &col,
                        (n as isize, 1),
                        T::zero(),
                        &mut gx[bi * in_plane..(bi + 1) * in_plane],
                        (n as isize, 1),
                    );
                }
                if let (Some(gw), Some(col_t)) = (gw.as_mut(), col_t.as_mut()) {
                    transpose_into(&col, kdim, n, col_t);
                    // dW += x_b * col(dY)^T
                    T::gemm(
                        cin,
                        n,
                        kdim,
                        T::one(),
                        &xd[bi * in_plane..(bi + 1) * in_plane],
                        (n as isize, 1),
                        col_t,
                        (kdim as isize, 1),
                        T::one(),
                        gw,
                        (kdim as isize, 1),
                    );
                }
            }
            let mut grads = vec![gx, gw];
            if ctx.inputs.len() == 3 {
                grads.push(Some(bias_grad(dy, cout, out_hw.0 * out_hw.1)));
            }
            grads
        }),
    ))
}
