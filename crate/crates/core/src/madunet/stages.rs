//! Per-stage networks: the learned proximal maps for `U` and `V`, and the
//! learned gradient step for `H`.

use gisr_tensor::{concat_channels, Element, Tensor};

use super::config::ModelConfig;
use super::layers::{Builder, Conv, ConvLstm, Crb};
use crate::error::{shape, Result};

/// Feature memory carried between stages: the read-out features and the
/// recurrent cell's hidden and cell states, all `[B, C, H, W]`.
#[derive(Debug, Clone)]
pub struct Memory<T: Element> {
    pub feat: Tensor<T>,
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Element> Memory<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            feat: Tensor::zeros(dims),
            h: Tensor::zeros(dims),
            c: Tensor::zeros(dims),
        }
    }
}

/// Memory update: merge features, one ConvLSTM step, CRB read-out.
#[derive(Debug, Clone)]
pub struct MemoryPath<T: Element> {
    pub lift: Conv<T>,
    pub merge: Crb<T>,
    pub lstm: ConvLstm<T>,
    pub readout: Crb<T>,
}

impl<T: Element> MemoryPath<T> {
    fn new(b: &mut Builder<'_, T>, cfg: &ModelConfig, extra_in: usize) -> Result<Self> {
        let c = cfg.channels;
        let merge_in = if cfg.multi_location_memory {
            extra_in + c
        } else {
            c
        };
        Ok(Self {
            lift: Conv::same(&mut b.sub("lift"), cfg.target_bands, c)?,
            merge: Crb::new(&mut b.sub("merge"), merge_in, c, cfg.n_resblocks)?,
            lstm: ConvLstm::new(&mut b.sub("lstm"), c)?,
            readout: Crb::new(&mut b.sub("readout"), c, c, cfg.n_resblocks)?,
        })
    }

    /// `features` are the stage intermediates fed in multi-location mode;
    /// `image` is the stage's image-space output.
    fn update(
        &self,
        features: &[&Tensor<T>],
        image: &Tensor<T>,
        prev: &Memory<T>,
        multi: bool,
    ) -> Result<Memory<T>> {
        let lifted = self.lift.forward(image)?;
        let merged = if multi {
            let mut parts: Vec<&Tensor<T>> = features.to_vec();
            parts.push(&lifted);
            self.merge.forward(&concat_channels(&parts)?)?
        } else {
            self.merge.forward(&lifted)?
        };
        let (h, c) = self.lstm.step(&merged, &prev.h, &prev.c)?;
        Ok(Memory {
            feat: self.readout.forward(&h)?,
            h,
            c,
        })
    }
}

/// Learned proximal map shared in structure by the `U` and `V` branches.
///
/// Input path: a CRB over `Cat(X, prev - X)` where `X` is `H` (or `N`) and
/// `prev` the branch's previous estimate, concatenated with the memory
/// features. The guidance enters as `Cat(CRB(P), P)`. The estimate is `X`
/// plus a projected correction.
#[derive(Debug, Clone)]
pub struct ProxNet<T: Element> {
    pub input: Crb<T>,
    pub guide: Crb<T>,
    pub fuse: Crb<T>,
    pub out: Crb<T>,
    pub project: Conv<T>,
    pub memory: Option<MemoryPath<T>>,
    multi: bool,
}

/// Result of one branch update: the image-space estimate and the new memory.
#[derive(Debug, Clone)]
pub struct BranchOutput<T: Element> {
    pub image: Tensor<T>,
    pub memory: Memory<T>,
}

impl<T: Element> ProxNet<T> {
    pub fn new(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let (c, bands, nr) = (cfg.channels, cfg.target_bands, cfg.n_resblocks);
        Ok(Self {
            input: Crb::new(&mut b.sub("input"), 2 * bands, c, nr)?,
            guide: Crb::new(&mut b.sub("guide"), c, c, nr)?,
            fuse: Crb::new(&mut b.sub("fuse"), 4 * c, c, nr)?,
            out: Crb::new(&mut b.sub("out"), c, c, nr)?,
            project: Conv::zero_head(&mut b.sub("project"), c, bands)?,
            memory: if cfg.use_memory {
                Some(MemoryPath::new(&mut b.sub("memory"), cfg, 5 * c)?)
            } else {
                None
            },
            multi: cfg.multi_location_memory,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor<T>,
        p_feat: &Tensor<T>,
        prev: &Tensor<T>,
        mem: &Memory<T>,
    ) -> Result<BranchOutput<T>> {
        if x.shape() != prev.shape() {
            return shape(format!(
                "branch input {:?} vs previous estimate {:?}",
                x.shape(),
                prev.shape()
            ));
        }
        let p1 = concat_channels(&[&self.guide.forward(p_feat)?, p_feat])?;
        let entry = self.input.forward(&concat_channels(&[x, &prev.sub(x)?])?)?;
        let h1 = concat_channels(&[&entry, &mem.feat])?;
        let hp1 = concat_channels(&[&h1, &p1])?;
        let hp2 = self.fuse.forward(&hp1)?;
        let image = x.add(&self.project.forward(&self.out.forward(&hp2)?)?)?;
        let memory = match &self.memory {
            Some(path) => path.update(&[&hp1, &hp2], &image, mem, self.multi)?,
            None => mem.clone(),
        };
        Ok(BranchOutput { image, memory })
    }
}

/// Learned gradient step on `H`:
/// `KH = CRB(Cat(lift(H), H_m))`, `DKH = project(CRB_down(KH))`,
/// `UH = CRB_up(L - DKH)`, `R = eta1 (H - U) + lambda1 (H - V) - project(UH)`,
/// `H' = H - delta3 R`.
#[derive(Debug, Clone)]
pub struct HNet<T: Element> {
    pub lift: Conv<T>,
    pub kh: Crb<T>,
    pub down: Crb<T>,
    pub project_down: Conv<T>,
    pub up: Crb<T>,
    pub project_up: Conv<T>,
    pub delta3: Tensor<T>,
    pub eta1: Tensor<T>,
    pub lambda1: Tensor<T>,
    pub memory: Option<MemoryPath<T>>,
    multi: bool,
}

/// Intermediates of the `H` update exposed for inspection.
#[derive(Debug, Clone)]
pub struct HNetOutput<T: Element> {
    pub image: Tensor<T>,
    pub dkh: Tensor<T>,
    pub uh: Tensor<T>,
    pub memory: Memory<T>,
}

impl<T: Element> HNet<T> {
    pub fn new(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let (c, bands, nr, r) = (cfg.channels, cfg.target_bands, cfg.n_resblocks, cfg.ratio);
        let mut scalar = |name: &str, v: f64| -> Result<Tensor<T>> {
            if cfg.learnable_scalars {
                b.constant(name, v)
            } else {
                Ok(Tensor::from_f64(&[1], &[v])?)
            }
        };
        let delta3 = scalar("delta3", cfg.init_delta3)?;
        let eta1 = scalar("eta1", cfg.init_eta1)?;
        let lambda1 = scalar("lambda1", cfg.init_lambda1)?;
        Ok(Self {
            lift: Conv::same(&mut b.sub("lift"), bands, c)?,
            kh: Crb::new(&mut b.sub("kh"), 2 * c, c, nr)?,
            down: Crb::down(&mut b.sub("down"), c, c, r, nr)?,
            project_down: Conv::same(&mut b.sub("project_down"), c, bands)?,
            up: Crb::up(&mut b.sub("up"), bands, c, r, nr)?,
            project_up: Conv::zero_head(&mut b.sub("project_up"), c, bands)?,
            delta3,
            eta1,
            lambda1,
            memory: if cfg.use_memory {
                Some(MemoryPath::new(&mut b.sub("memory"), cfg, 2 * c)?)
            } else {
                None
            },
            multi: cfg.multi_location_memory,
        })
    }

    pub fn forward(
        &self,
        h: &Tensor<T>,
        l: &Tensor<T>,
        u: &Tensor<T>,
        v: &Tensor<T>,
        mem: &Memory<T>,
    ) -> Result<HNetOutput<T>> {
        let kh = self
            .kh
            .forward(&concat_channels(&[&self.lift.forward(h)?, &mem.feat])?)?;
        let dkh = self.project_down.forward(&self.down.forward(&kh)?)?;
        if dkh.shape() != l.shape() {
            return shape(format!(
                "simulated observation {:?} does not match L {:?}",
                dkh.shape(),
                l.shape()
            ));
        }
        let uh = self.up.forward(&l.sub(&dkh)?)?;
        let data_term = self.project_up.forward(&uh)?;
        let r = h
            .sub(u)?
            .mul_scalar(&self.eta1)?
            .add(&h.sub(v)?.mul_scalar(&self.lambda1)?)?
            .sub(&data_term)?;
        let image = h.sub(&r.mul_scalar(&self.delta3)?)?;
        let memory = match &self.memory {
            Some(path) => path.update(&[&kh, &uh], &image, mem, self.multi)?,
            None => mem.clone(),
        };
        Ok(HNetOutput {
            image,
            dkh,
            uh,
            memory,
        })
    }
}
