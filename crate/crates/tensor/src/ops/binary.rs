use crate::element::Element;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

fn same_shape<T: Element>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!(
            "{op}: operands have dims {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            "add",
            self.shape().to_vec(),
            data,
            &[self, other],
            Box::new(|ctx| vec![Some(ctx.grad_out.to_vec()), Some(ctx.grad_out.to_vec())]),
        ))
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            data,
            &[self, other],
            Box::new(|ctx| {
                vec![
                    Some(ctx.grad_out.to_vec()),
                    Some(ctx.grad_out.iter().map(|&g| -g).collect()),
                ]
            }),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            data,
            &[self, other],
            Box::new(|ctx| {
                let a = ctx.inputs[0].data();
                let b = ctx.inputs[1].data();
                let ga = ctx
                    .grad_out
                    .iter()
                    .zip(b.iter())
                    .map(|(&g, &v)| g * v)
                    .collect();
                let gb = ctx
                    .grad_out
                    .iter()
                    .zip(a.iter())
                    .map(|(&g, &v)| g * v)
                    .collect();
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Multiplies every element by the single value held in `s`.
    pub fn mul_scalar(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        if s.numel() != 1 {
            return shape_err(format!(
                "mul_scalar: scale must hold one value, got dims {:?}",
                s.shape()
            ));
        }
        let sv = s.item();
        let data = self.data().iter().map(|&a| a * sv).collect();
        Ok(Tensor::from_op(
            "mul_scalar",
            self.shape().to_vec(),
            data,
            &[self, s],
            Box::new(move |ctx| {
                let x = ctx.inputs[0].data();
                let gx = ctx.grad_out.iter().map(|&g| g * sv).collect();
                let gs = ctx
                    .grad_out
                    .iter()
                    .zip(x.iter())
                    .fold(T::zero(), |acc, (&g, &v)| acc + g * v);
                vec![Some(gx), Some(vec![gs])]
            }),
        ))
    }

    pub fn mul_const(&self, c: f64) -> Tensor<T> {
        let c = T::from_f64_lossy(c);
        let data = self.data().iter().map(|&a| a * c).collect();
        Tensor::from_op(
            "mul_const",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(move |ctx| vec![Some(ctx.grad_out.iter().map(|&g| g * c).collect())]),
        )
    }

    pub fn add_const(&self, c: f64) -> Tensor<T> {
        let c = T::from_f64_lossy(c);
        let data = self.data().iter().map(|&a| a + c).collect();
        Tensor::from_op(
            "add_const",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(|ctx| vec![Some(ctx.grad_out.to_vec())]),
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.mul_const(-1.0)
    }

    /// Inner product of two same-shape tensors, as a scalar tensor.
    pub fn dot(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.mul(other)?.sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn elementwise_values() {
        let a = t(&[3], &[1.0, 2.0, 3.0]);
        let b = t(&[3], &[4.0, 5.0, 6.0]);
        assert_eq!(a.add(&b).unwrap().to_vec(), vec![5.0, 7.0, 9.0]);
        assert_eq!(a.sub(&b).unwrap().to_vec(), vec![-3.0, -3.0, -3.0]);
        assert_eq!(a.mul(&b).unwrap().to_vec(), vec![4.0, 10.0, 18.0]);
        assert_eq!(a.mul_const(2.0).to_vec(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let a = t(&[3], &[1.0, 2.0, 3.0]);
        let b = t(&[1, 3], &[4.0, 5.0, 6.0]);
        assert!(a.add(&b).is_err());
        assert!(a.mul_scalar(&a).is_err());
    }

    #[test]
    fn mul_scalar_grads() {
        let x = Tensor::<f64>::parameter(&[2], vec![1.0, 3.0]).unwrap();
        let s = Tensor::<f64>::parameter(&[1], vec![0.5]).unwrap();
        x.mul_scalar(&s).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.5, 0.5]);
        assert_eq!(s.grad().unwrap(), vec![4.0]);
    }
}
