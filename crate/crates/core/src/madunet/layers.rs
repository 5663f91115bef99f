use gisr_tensor::init::{uniform_fan_in, SeededRng};
use gisr_tensor::{conv2d, conv2d_transpose, Activation, Element, ParamStore, Tensor};

use crate::error::Result;

/// Registers parameters under a dotted prefix while drawing their initial
/// values from one seeded stream.
pub struct Builder<'a, T: Element> {
    pub(crate) store: &'a mut ParamStore<T>,
    pub(crate) rng: &'a mut SeededRng,
    prefix: String,
}

impl<'a, T: Element> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut SeededRng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: &str) -> Builder<'_, T> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn path(&self, leaf: &str) -> String {
        if self.prefix.is_empty() {
            leaf.to_string()
        } else {
            format!("{}.{leaf}", self.prefix)
        }
    }

    pub fn weight(&mut self, leaf: &str, shape: &[usize], fan_in: usize) -> Result<Tensor<T>> {
        let n = shape.iter().product();
        let t = Tensor::from_vec(shape, uniform_fan_in(n, fan_in, self.rng))?;
        Ok(self.store.register(self.path(leaf), t)?)
    }

    pub fn zeros(&mut self, leaf: &str, shape: &[usize]) -> Result<Tensor<T>> {
        Ok(self.store.register(self.path(leaf), Tensor::zeros(shape))?)
    }

    pub fn constant(&mut self, leaf: &str, value: f64) -> Result<Tensor<T>> {
        let t = Tensor::from_f64(&[1], &[value])?;
        Ok(self.store.register(self.path(leaf), t)?)
    }
}

#[derive(Debug, Clone)]
pub struct Conv<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> Conv<T> {
    pub fn new(
        b: &mut Builder<'_, T>,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = b.weight("weight", &[cout, cin, k, k], cin * k * k)?;
        let bias = if bias {
            Some(b.zeros("bias", &[cout])?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            pad,
        })
    }

    /// 3x3, stride 1, pad 1.
    pub fn same(b: &mut Builder<'_, T>, cin: usize, cout: usize) -> Result<Self> {
        Self::new(b, cin, cout, 3, 1, 1, true)
    }

    /// 3x3 "same" conv with all-zero weights, for heads that add a
    /// correction to an image so a fresh network leaves the image unchanged.
    pub fn zero_head(b: &mut Builder<'_, T>, cin: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            weight: b.zeros("weight", &[cout, cin, 3, 3])?,
            bias: Some(b.zeros("bias", &[cout])?),
            stride: 1,
            pad: 1,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(conv2d(
            x,
            &self.weight,
            self.bias.as_ref(),
            self.stride,
            self.pad,
        )?)
    }
}

/// Transposed convolution; weight is `[cin, cout, k, k]`.
#[derive(Debug, Clone)]
pub struct ConvT<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Element> ConvT<T> {
    pub fn new(
        b: &mut Builder<'_, T>,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
    ) -> Result<Self> {
        // Each output pixel of a k = stride transposed conv sees exactly cin taps.
        let fan_in = cin * (k / stride).max(1).pow(2);
        Ok(Self {
            weight: b.weight("weight", &[cin, cout, k, k], fan_in)?,
            bias: b.zeros("bias", &[cout])?,
            stride,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(conv2d_transpose(
            x,
            &self.weight,
            Some(&self.bias),
            self.stride,
            0,
        )?)
    }
}

#[derive(Debug, Clone)]
pub struct ResBlock<T: Element> {
    pub conv1: Conv<T>,
    pub conv2: Conv<T>,
}

impl<T: Element> ResBlock<T> {
    pub fn new(b: &mut Builder<'_, T>, c: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv::same(&mut b.sub("conv1"), c, c)?,
            conv2: Conv::same(&mut b.sub("conv2"), c, c)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv1.forward(x)?.activation(Activation::LEAKY);
        Ok(x.add(&self.conv2.forward(&y)?)?)
    }
}

#[derive(Debug, Clone)]
pub enum Head<T: Element> {
    Conv(Conv<T>),
    Up(ConvT<T>),
}

/// Convolution followed by residual blocks. The head is a same-size 3x3
/// convolution, or a stride-`r` (transposed) convolution for the resampling
/// variants.
#[derive(Debug, Clone)]
pub struct Crb<T: Element> {
    pub head: Head<T>,
    pub blocks: Vec<ResBlock<T>>,
}

impl<T: Element> Crb<T> {
    pub fn new(b: &mut Builder<'_, T>, cin: usize, cout: usize, n_res: usize) -> Result<Self> {
        let head = Head::Conv(Conv::same(&mut b.sub("conv"), cin, cout)?);
        Self::with_head(b, head, cout, n_res)
    }

    /// Downsamples by `r` with a `r x r`, stride-`r` head.
    pub fn down(
        b: &mut Builder<'_, T>,
        cin: usize,
        cout: usize,
        r: usize,
        n_res: usize,
    ) -> Result<Self> {
        let head = Head::Conv(Conv::new(&mut b.sub("conv"), cin, cout, r, r, 0, true)?);
        Self::with_head(b, head, cout, n_res)
    }

    /// Upsamples by `r` with a `r x r`, stride-`r` transposed head.
    pub fn up(
        b: &mut Builder<'_, T>,
        cin: usize,
        cout: usize,
        r: usize,
        n_res: usize,
    ) -> Result<Self> {
        let head = Head::Up(ConvT::new(&mut b.sub("deconv"), cin, cout, r, r)?);
        Self::with_head(b, head, cout, n_res)
    }

    fn with_head(b: &mut Builder<'_, T>, head: Head<T>, c: usize, n_res: usize) -> Result<Self> {
        let blocks = (0..n_res)
            .map(|i| ResBlock::new(&mut b.sub(&format!("res{i}")), c))
            .collect::<Result<_>>()?;
        Ok(Self { head, blocks })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = match &self.head {
            Head::Conv(c) => c.forward(x)?,
            Head::Up(c) => c.forward(x)?,
        };
        for blk in &self.blocks {
            y = blk.forward(&y)?;
        }
        Ok(y)
    }
}

/// Convolutional LSTM cell. The input and hidden convolutions produce all
/// four gates at once, split in the order input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct ConvLstm<T: Element> {
    pub wx: Conv<T>,
    pub wh: Conv<T>,
    pub channels: usize,
}

impl<T: Element> ConvLstm<T> {
    pub fn new(b: &mut Builder<'_, T>, c: usize) -> Result<Self> {
        Ok(Self {
            wx: Conv::new(&mut b.sub("wx"), c, 4 * c, 3, 1, 1, true)?,
            wh: Conv::new(&mut b.sub("wh"), c, 4 * c, 3, 1, 1, false)?,
            channels: c,
        })
    }

    pub fn step(
        &self,
        x: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let z = self.wx.forward(x)?.add(&self.wh.forward(h_prev)?)?;
        let c = self.channels;
        let i = z.narrow_channels(0, c)?.sigmoid();
        let f = z.narrow_channels(c, c)?.sigmoid();
        let g = z.narrow_channels(2 * c, c)?.tanh();
        let o = z.narrow_channels(3 * c, c)?.sigmoid();
        let c_new = f.mul(c_prev)?.add(&i.mul(&g)?)?;
        let h_new = o.mul(&c_new.tanh())?;
        Ok((h_new, c_new))
    }
}
