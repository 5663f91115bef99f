use crate::element::Element;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// Leaky ReLU with the given negative slope.
    LeakyRelu(f64),
}

impl Activation {
    /// Slope used by the residual blocks.
    pub const LEAKY: Activation = Activation::LeakyRelu(0.2);

    fn forward<T: Element>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => {
                // Split on sign so exp never overflows.
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu(slope) => {
                if x > T::zero() {
                    x
                } else {
                    x * T::from_f64_lossy(slope)
                }
            }
        }
    }

    fn derivative<T: Element>(self, x: T, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::from_f64_lossy(slope)
                }
            }
        }
    }
}

impl<T: Element> Tensor<T> {
    pub fn activation(&self, kind: Activation) -> Tensor<T> {
        let data = self.data().iter().map(|&v| kind.forward(v)).collect();
        Tensor::from_op(
            "activation",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(move |ctx| {
                let x = ctx.inputs[0].data();
                let g = ctx
                    .grad_out
                    .iter()
                    .zip(x.iter().zip(ctx.output))
                    .map(|(&g, (&x, &y))| g * kind.derivative(x, y))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.activation(Activation::Sigmoid)
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.activation(Activation::Tanh)
    }

    pub fn relu(&self) -> Tensor<T> {
        self.activation(Activation::Relu)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        self.activation(Activation::LeakyRelu(slope))
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&self) -> Tensor<T> {
        let data = self.data().iter().map(|v| v.abs()).collect();
        Tensor::from_op(
            "abs",
            self.shape().to_vec(),
            data,
            &[self],
            Box::new(|ctx| {
                let x = ctx.inputs[0].data();
                let g = ctx
                    .grad_out
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &x)| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                vec![Some(g)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_reference_values() {
        let x = Tensor::<f64>::from_f64(&[3], &[0.0, -2.0, 3.0]).unwrap();
        assert_eq!(x.sigmoid().to_vec()[0], 0.5);
        assert_eq!(x.tanh().to_vec()[0], 0.0);
        assert_eq!(x.relu().to_vec(), vec![0.0, 0.0, 3.0]);
        assert_eq!(x.leaky_relu(0.2).to_vec(), vec![0.0, -0.4, 3.0]);
    }

    #[test]
    fn sigmoid_and_tanh_stay_in_open_range() {
        let x = Tensor::<f64>::from_f64(&[4], &[-30.0, -1.0, 1.0, 30.0]).unwrap();
        for v in x.sigmoid().to_vec() {
            assert!(v > 0.0 && v <= 1.0);
        }
        for v in x.tanh().to_vec() {
            assert!(v > -1.0 - 1e-15 && v < 1.0 + 1e-15);
        }
        let mid = Tensor::<f64>::from_f64(&[2], &[-3.0, 3.0]).unwrap();
        for v in mid.sigmoid().to_vec() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn abs_subgradient_at_zero() {
        let x = Tensor::<f64>::parameter(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        x.abs().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![-1.0, 0.0, 1.0]);
    }
}
