use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Matrix product `[M,K] x [K,N] -> [M,N]`, or batched
/// `[B,M,K] x [B,K,N] -> [B,M,N]`.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, m, k, n, shape) = match (a.shape(), b.shape()) {
        (&[m, k], &[k2, n]) if k == k2 => (1, m, k, n, vec![m, n]),
        (&[ba, m, k], &[bb, k2, n]) if ba == bb && k == k2 => (ba, m, k, n, vec![ba, m, n]),
        (sa, sb) => {
            return shape_err(format!("matmul: incompatible dims {sa:?} and {sb:?}"));
        }
    };
    let mut out = vec![T::zero(); batch * m * n];
    {
        let ad = a.data();
        let bd = b.data();
        for i in 0..batch {
            T::gemm(
                m,
                k,
                n,
                T::one(),
                &ad[i * m * k..(i + 1) * m * k],
                (k as isize, 1),
                &bd[i * k * n..(i + 1) * k * n],
                (n as isize, 1),
                T::zero(),
                &mut out[i * m * n..(i + 1) * m * n],
                (n as isize, 1),
            );
        }
    }
    Ok(Tensor::from_op(
        "matmul",
        shape,
        out,
        &[a, b],
        Box::new(move |ctx| {
            let ad = ctx.inputs[0].data();
            let bd = ctx.inputs[1].data();
            let g = ctx.grad_out;
            let need_a = ctx.inputs[0].requires_grad();
            let need_b = ctx.inputs[1].requires_grad();
            let mut ga = need_a.then(|| vec![T::zero(); batch * m * k]);
            let mut gb = need_b.then(|| vec![T::zero(); batch * k * n]);
            for i in 0..batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                if let Some(ga) = ga.as_mut() {
                    // dA = dC * B^T
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        gi,
                        (n as isize, 1),
                        &bd[i * k * n..(i + 1) * k * n],
                        (1, n as isize),
                        T::zero(),
                        &mut ga[i * m * k..(i + 1) * m * k],
                        (k as isize, 1),
                    );
                }
                if let Some(gb) = gb.as_mut() {
                    // dB = A^T * dC
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        &ad[i * m * k..(i + 1) * m * k],
                        (1, k as isize),
                        gi,
                        (n as isize, 1),
                        T::zero(),
                        &mut gb[i * k * n..(i + 1) * k * n],
                        (n as isize, 1),
                    );
                }
            }
            vec![ga, gb]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_product() {
        let a = Tensor::<f64>::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 2], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(
            matmul(&a, &b).unwrap().to_vec(),
            vec![19.0, 22.0, 43.0, 50.0]
        );
    }

    #[test]
    fn identity_left_factor() {
        let eye = Tensor::<f64>::from_f64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let b = Tensor::<f64>::from_vec(&[3, 2], (0..6).map(|v| v as f64 * 0.3).collect()).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap().to_vec(), b.to_vec());
    }

    #[test]
    fn inner_dim_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(crate::TensorError::Shape(_))));
    }

    #[test]
    fn batched_matches_per_slice() {
        let a = Tensor::<f64>::from_vec(&[2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let b = Tensor::<f64>::from_vec(&[2, 3, 1], (0..6).map(|v| v as f64).collect()).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 2, 1]);
        // slice 0: [[0,1,2],[3,4,5]] * [0,1,2]^T = [5, 14]
        // slice 1: [[6,7,8],[9,10,11]] * [3,4,5]^T = [86, 122]
        assert_eq!(c.to_vec(), vec![5.0, 14.0, 86.0, 122.0]);
    }
}
