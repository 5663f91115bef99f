use crate::element::Element;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Splits `shape` around axis 1 into (outer, inner) block sizes.
fn channel_blocks(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[2..].iter().product())
}

/// Concatenates tensors along the channel axis (axis 1). Channel blocks
/// appear in argument order.
pub fn concat_channels<T: Element>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let Some(first) = xs.first() else {
        return arg_err("concat_channels: empty input list");
    };
    if first.ndim() < 2 {
        return shape_err(format!(
            "concat_channels: need rank >= 2, got dims {:?}",
            first.shape()
        ));
    }
    let base = first.shape();
    for x in xs.iter().skip(1) {
        let s = x.shape();
        if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
            return shape_err(format!(
                "concat_channels: dims {:?} incompatible with {:?}",
                s, base
            ));
        }
    }
    let (outer, inner) = channel_blocks(base);
    let channels: Vec<usize> = xs.iter().map(|x| x.dim(1)).collect();
    let total: usize = channels.iter().sum();
    let mut shape = base.to_vec();
    shape[1] = total;

    let mut data = Vec::with_capacity(outer * total * inner);
    let guards: Vec<_> = xs.iter().map(|x| x.data()).collect();
    for o in 0..outer {
        for (g, &c) in guards.iter().zip(&channels) {
            data.extend_from_slice(&g[o * c * inner..(o + 1) * c * inner]);
        }
    }
    drop(guards);

    Ok(Tensor::from_op(
        "concat_channels",
        shape,
        data,
        xs,
        Box::new(move |ctx| {
            let mut grads: Vec<Vec<T>> = channels
                .iter()
                .map(|&c| Vec::with_capacity(outer * c * inner))
                .collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (g, &c) in grads.iter_mut().zip(&channels) {
                    g.extend_from_slice(&ctx.grad_out[pos..pos + c * inner]);
                    pos += c * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }),
    ))
}

impl<T: Element> Tensor<T> {
    /// Channels `start..start + len` along axis 1.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        if self.ndim() < 2 || start + len > self.dim(1) {
            return shape_err(format!(
                "narrow_channels: range {start}..{} out of dims {:?}",
                start + len,
                self.shape()
            ));
        }
        let (outer, inner) = channel_blocks(self.shape());
        let c = self.dim(1);
        let mut shape = self.shape().to_vec();
        shape[1] = len;
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * c + start) * inner;
            data.extend_from_slice(&src[off..off + len * inner]);
        }
        drop(src);
        Ok(Tensor::from_op(
            "narrow_channels",
            shape,
            data,
            &[self],
            Box::new(move |ctx| {
                let mut g = vec![T::zero(); outer * c * inner];
                for o in 0..outer {
                    let off = (o * c + start) * inner;
                    g[off..off + len * inner]
                        .copy_from_slice(&ctx.grad_out[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(g)]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return shape_err(format!(
                "reshape: cannot view {:?} as {:?}",
                self.shape(),
                shape
            ));
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            &[self],
            Box::new(|ctx| vec![Some(ctx.grad_out.to_vec())]),
        ))
    }

    /// Swaps the last two axes, batched over any leading axes.
    pub fn transpose_last2(&self) -> Result<Tensor<T>> {
        let nd = self.ndim();
        if nd < 2 {
            return shape_err(format!(
                "transpose_last2: need rank >= 2, got dims {:?}",
                self.shape()
            ));
        }
        let (r, c) = (self.dim(nd - 2), self.dim(nd - 1));
        let batch = self.numel() / (r * c).max(1);
        let mut shape = self.shape().to_vec();
        shape.swap(nd - 2, nd - 1);
        let data = transpose_blocks(&self.data(), batch, r, c);
        Ok(Tensor::from_op(
            "transpose_last2",
            shape,
            data,
            &[self],
            Box::new(move |ctx| vec![Some(transpose_blocks(ctx.grad_out, batch, c, r))]),
        ))
    }
}

fn transpose_blocks<T: Copy + Default>(src: &[T], batch: usize, r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for b in 0..batch {
        let s = &src[b * r * c..(b + 1) * r * c];
        let d = &mut out[b * r * c..(b + 1) * r * c];
        for i in 0..r {
            for j in 0..c {
                d[j * r + i] = s[i * c + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arange(shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn concat_single_is_identity() {
        let x = arange(&[2, 3, 2, 2]);
        let y = concat_channels(&[&x]).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn concat_orders_blocks() {
        let a = arange(&[1, 2, 2, 2]);
        let b = Tensor::<f64>::full(&[1, 3, 2, 2], -1.0);
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[1, 5, 2, 2]);
        assert_eq!(&y.to_vec()[..8], &a.to_vec()[..]);
        assert!(y.to_vec()[8..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = arange(&[1, 2, 2, 2]);
        let b = arange(&[1, 2, 3, 2]);
        assert!(concat_channels(&[&a, &b]).is_err());
    }

    #[test]
    fn narrow_inverts_concat() {
        let a = arange(&[2, 2, 2, 2]);
        let b = Tensor::<f64>::full(&[2, 1, 2, 2], 7.0);
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.narrow_channels(0, 2).unwrap().to_vec(), a.to_vec());
        assert_eq!(y.narrow_channels(2, 1).unwrap().to_vec(), b.to_vec());
        assert!(y.narrow_channels(2, 2).is_err());
    }

    #[test]
    fn transpose_swaps_last_axes() {
        let x = arange(&[2, 2, 3]);
        let t = x.transpose_last2().unwrap();
        assert_eq!(t.shape(), &[2, 3, 2]);
        assert_eq!(
            t.to_vec(),
            vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0, 6.0, 9.0, 7.0, 10.0, 8.0, 11.0]
        );
    }
}
