use crate::element::Element;
use crate::tensor::Tensor;

impl<T: Element> Tensor<T> {
    /// Sum of all elements as a scalar (zero-dimensional) tensor.
    pub fn sum(&self) -> Tensor<T> {
        let s = self.data().iter().fold(T::zero(), |acc, &v| acc + v);
        let n = self.numel();
        Tensor::from_op(
            "sum",
            Vec::new(),
            vec![s],
            &[self],
            Box::new(move |ctx| vec![Some(vec![ctx.grad_out[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().mul_const(1.0 / n as f64)
    }
}
