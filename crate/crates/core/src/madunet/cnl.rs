//! Cross-modality non-local attention.
//!
//! Both inputs are reduced to half resolution. The target features attend to
//! themselves across channels (`F_HH`, `C/2 x C/2`) and to the guidance across
//! positions (`F_HP`, `HW/4 x HW/4`); the two attended embeddings are fused by
//! a CRB and upsampled back.

use gisr_tensor::{bilinear_resize, concat_channels, matmul, Element, Tensor};

use super::layers::{Builder, Conv, Crb};
use crate::error::{arg, Result};

#[derive(Debug, Clone)]
pub struct Cnl<T: Element> {
    pub reduce_h: Conv<T>,
    pub reduce_p: Conv<T>,
    pub delta: Conv<T>,
    pub theta: Conv<T>,
    pub phi: Conv<T>,
    pub phi_hat: Conv<T>,
    pub vartheta: Conv<T>,
    pub mix_hp: Conv<T>,
    pub mix_hh: Conv<T>,
    pub fuse: Crb<T>,
    pub channels: usize,
}

/// Output features plus the two attention maps, for inspection.
#[derive(Debug, Clone)]
pub struct CnlOutput<T: Element> {
    pub features: Tensor<T>,
    /// `[B, C/2, C/2]`, rows sum to 1.
    pub f_hh: Tensor<T>,
    /// `[B, HW/4, HW/4]`, rows sum to 1.
    pub f_hp: Tensor<T>,
}

impl<T: Element> Cnl<T> {
    pub fn new(b: &mut Builder<'_, T>, c: usize, n_res: usize) -> Result<Self> {
        let half = c / 2;
        Ok(Self {
            reduce_h: Conv::new(&mut b.sub("reduce_h"), c, c, 3, 2, 1, true)?,
            reduce_p: Conv::new(&mut b.sub("reduce_p"), c, c, 3, 2, 1, true)?,
            delta: Conv::same(&mut b.sub("delta"), c, half)?,
            theta: Conv::same(&mut b.sub("theta"), c, half)?,
            phi: Conv::same(&mut b.sub("phi"), c, half)?,
            phi_hat: Conv::same(&mut b.sub("phi_hat"), c, half)?,
            vartheta: Conv::same(&mut b.sub("vartheta"), c, half)?,
            mix_hp: Conv::new(&mut b.sub("mix_hp"), half, half, 1, 1, 0, true)?,
            mix_hh: Conv::new(&mut b.sub("mix_hh"), half, half, 1, 1, 0, true)?,
            fuse: Crb::new(&mut b.sub("fuse"), c, c, n_res)?,
            channels: c,
        })
    }

    pub fn forward(&self, h: &Tensor<T>, p: &Tensor<T>) -> Result<CnlOutput<T>> {
        if h.ndim() != 4 || h.shape() != p.shape() {
            return arg(format!(
                "CNL inputs must share [B,C,H,W] dims, got {:?} and {:?}",
                h.shape(),
                p.shape()
            ));
        }
        let (bsz, c, hh, ww) = (h.dim(0), h.dim(1), h.dim(2), h.dim(3));
        if hh % 2 != 0 || ww % 2 != 0 {
            return arg(format!("CNL needs even spatial dims, got {hh}x{ww}"));
        }
        if c != self.channels {
            return arg(format!("CNL built for {} channels, got {c}", self.channels));
        }
        let (h2, w2, half) = (hh / 2, ww / 2, c / 2);
        let n = h2 * w2;
        let hr = self.reduce_h.forward(h)?;
        let pr = self.reduce_p.forward(p)?;
        // [B, C/2, n]
        let flat = |x: Tensor<T>| x.reshape(&[bsz, half, n]);
        let h_r1 = flat(self.delta.forward(&hr)?)?;
        let h_r2 = flat(self.theta.forward(&hr)?)?.transpose_last2()?;
        let p_r1 = flat(self.phi.forward(&pr)?)?;
        let h_e = flat(self.phi_hat.forward(&hr)?)?.transpose_last2()?;
        let p_e = flat(self.vartheta.forward(&pr)?)?.transpose_last2()?;

        let f_hh = matmul(&h_r1, &h_r2)?.softmax(2)?;
        let f_hp = matmul(&h_r2, &p_r1)?.softmax(2)?;

        let unflat = |x: Tensor<T>| -> Result<Tensor<T>> {
            Ok(x.transpose_last2()?.reshape(&[bsz, half, h2, w2])?)
        };
        let cross = unflat(matmul(&f_hp, &p_e)?)?;
        let intra = unflat(matmul(&h_e, &f_hh)?)?;
        let fused = self.fuse.forward(&concat_channels(&[
            &self.mix_hp.forward(&cross)?,
            &self.mix_hh.forward(&intra)?,
        ])?)?;
        Ok(CnlOutput {
            features: bilinear_resize(&fused, hh, ww)?,
            f_hh,
            f_hp,
        })
    }
}
