use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

impl<T: Element> Tensor<T> {
    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.ndim() {
            return shape_err(format!(
                "softmax: axis {axis} out of range for dims {:?}",
                self.shape()
            ));
        }
        let len = self.dim(axis);
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let src = self.data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).fold(T::neg_infinity(), |m, j| m.max(src[idx(j)]));
                let mut total = T::zero();
                for j in 0..len {
                    let e = (src[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[idx(j)] = out[idx(j)] / total;
                }
            }
        }
        drop(src);
        Ok(Tensor::from_op(
            "softmax",
            self.shape().to_vec(),
            out,
            &[self],
            Box::new(move |ctx| {
                let y = ctx.output;
                let g = ctx.grad_out;
                let mut dx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot = (0..len).fold(T::zero(), |acc, j| acc + g[idx(j)] * y[idx(j)]);
                        for j in 0..len {
                            dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                vec![Some(dx)]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let x = Tensor::<f64>::from_f64(&[2], &[0.0, 0.0]).unwrap();
        assert_eq!(x.softmax(0).unwrap().to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn log_three() {
        let x = Tensor::<f64>::from_f64(&[2], &[0.0, 3f64.ln()]).unwrap();
        let y = x.softmax(0).unwrap().to_vec();
        assert!((y[0] - 0.25).abs() < 1e-15);
        assert!((y[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance() {
        let v = [0.3, -1.2, 2.5, 0.0];
        let x = Tensor::<f64>::from_f64(&[4], &v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|a| a + 17.25).collect();
        let xs = Tensor::<f64>::from_f64(&[4], &shifted).unwrap();
        let (a, b) = (
            x.softmax(0).unwrap().to_vec(),
            xs.softmax(0).unwrap().to_vec(),
        );
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one_on_any_axis() {
        let x = Tensor::<f64>::from_vec(
            &[2, 3, 4],
            (0..24).map(|v| (v as f64).sin() * 5.0).collect(),
        )
        .unwrap();
        for axis in 0..3 {
            let y = x.softmax(axis).unwrap();
            let d = y.to_vec();
            assert!(d.iter().all(|&v| v > 0.0));
            let shape = y.shape().to_vec();
            let len = shape[axis];
            let outer: usize = shape[..axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            for o in 0..outer {
                for i in 0..inner {
                    let s: f64 = (0..len).map(|j| d[(o * len + j) * inner + i]).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(x.softmax(3).is_err());
    }
}
