use gisr_tensor::init::seeded_rng;
use gisr_tensor::{bicubic_resize, Element, ParamStore, Tensor};

use super::cnl::Cnl;
use super::config::ModelConfig;
use super::layers::{Builder, Conv, Crb};
use super::stages::{HNet, Memory, ProxNet};
use crate::error::{shape, Result};

/// Refinement `N = H + project(CNL(lift(H), P_feat))`.
#[derive(Debug, Clone)]
pub struct Refiner<T: Element> {
    pub lift: Conv<T>,
    pub cnl: Cnl<T>,
    pub project: Conv<T>,
}

#[derive(Debug, Clone)]
pub struct StageModules<T: Element> {
    pub unet: ProxNet<T>,
    pub refiner: Option<Refiner<T>>,
    pub vnet: ProxNet<T>,
    pub hnet: HNet<T>,
}

impl<T: Element> StageModules<T> {
    fn new(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Result<Self> {
        let refiner = if cfg.use_cnl {
            let mut rb = b.sub("cnl");
            Some(Refiner {
                lift: Conv::same(&mut rb.sub("lift"), cfg.target_bands, cfg.channels)?,
                cnl: Cnl::new(&mut rb, cfg.channels, cfg.n_resblocks)?,
                project: Conv::zero_head(&mut rb.sub("project"), cfg.channels, cfg.target_bands)?,
            })
        } else {
            None
        };
        Ok(Self {
            unet: ProxNet::new(&mut b.sub("unet"), cfg)?,
            refiner,
            vnet: ProxNet::new(&mut b.sub("vnet"), cfg)?,
            hnet: HNet::new(&mut b.sub("hnet"), cfg)?,
        })
    }
}

/// Module invoked during a forward pass, in call order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    GuideEncoder,
    U,
    N,
    V,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    /// 1-based stage index; 0 for the guidance encoder.
    pub stage: usize,
    pub step: Step,
}

/// Signals and memories after one stage (or at initialization).
#[derive(Debug, Clone)]
pub struct StageState<T: Element> {
    pub u: Tensor<T>,
    pub v: Tensor<T>,
    pub h: Tensor<T>,
    pub n: Tensor<T>,
    pub mem_u: Memory<T>,
    pub mem_v: Memory<T>,
    pub mem_h: Memory<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T: Element> {
    pub output: Tensor<T>,
    pub initial: StageState<T>,
    pub states: Vec<StageState<T>>,
    pub trace: Vec<TraceEvent>,
}

/// The unfolded network. Stage modules are created once and reused for
/// every stage when parameters are shared, otherwise once per stage.
#[derive(Debug, Clone)]
pub struct MadUNet<T: Element> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub guide_encoder: Crb<T>,
    pub stages: Vec<StageModules<T>>,
}

impl<T: Element> MadUNet<T> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = seeded_rng(config.seed);
        let mut b = Builder::new(&mut params, &mut rng);
        let guide_encoder = Crb::new(
            &mut b.sub("guide_enc"),
            config.guide_bands,
            config.channels,
            config.n_resblocks,
        )?;
        let n_sets = if config.share_params {
            1
        } else {
            config.stages
        };
        let stages = (0..n_sets)
            .map(|k| StageModules::new(&mut b.sub(&format!("stage{k}")), &config))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            params,
            guide_encoder,
            stages,
        })
    }

    pub fn stage_modules(&self, k: usize) -> &StageModules<T> {
        if self.config.share_params {
            &self.stages[0]
        } else {
            &self.stages[k]
        }
    }

    /// Number of scalars in stage modules (everything except the guidance
    /// encoder).
    pub fn stage_param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with("stage"))
            .map(|p| p.tensor.numel())
            .sum()
    }

    /// `l`: `[B, target_bands, h, w]`; `p`: `[B, guide_bands, r h, r w]`.
    pub fn forward(&self, l: &Tensor<T>, p: &Tensor<T>) -> Result<ForwardOutput<T>> {
        let cfg = &self.config;
        let r = cfg.ratio;
        if l.ndim() != 4 || l.dim(1) != cfg.target_bands {
            return shape(format!(
                "L must be [B, {}, h, w], got {:?}",
                cfg.target_bands,
                l.shape()
            ));
        }
        let (bsz, hh, ww) = (l.dim(0), l.dim(2) * r, l.dim(3) * r);
        if p.shape() != [bsz, cfg.guide_bands, hh, ww] {
            return shape(format!(
                "P must be [{bsz}, {}, {hh}, {ww}] for L {:?}, got {:?}",
                cfg.guide_bands,
                l.shape(),
                p.shape()
            ));
        }
        let mut trace = Vec::with_capacity(4 * cfg.stages + 1);
        let h0 = bicubic_resize(l, r, 1)?;
        trace.push(TraceEvent {
            stage: 0,
            step: Step::GuideEncoder,
        });
        let p_feat = self.guide_encoder.forward(p)?;
        let zero_mem = Memory::zeros(&[bsz, cfg.channels, hh, ww]);
        let initial = StageState {
            u: h0.clone(),
            v: h0.clone(),
            h: h0.clone(),
            n: h0.clone(),
            mem_u: zero_mem.clone(),
            mem_v: zero_mem.clone(),
            mem_h: zero_mem,
        };
        let mut st = initial.clone();
        let mut states = Vec::with_capacity(cfg.stages);
        for k in 0..cfg.stages {
            let m = self.stage_modules(k);
            let mut log = |step| trace.push(TraceEvent { stage: k + 1, step });

            log(Step::U);
            let u = m.unet.forward(&st.h, &p_feat, &st.u, &st.mem_u)?;

            log(Step::N);
            let n = match &m.refiner {
                Some(rf) => {
                    let feat = rf.cnl.forward(&rf.lift.forward(&st.h)?, &p_feat)?.features;
                    st.h.add(&rf.project.forward(&feat)?)?
                }
                None => st.h.clone(),
            };

            log(Step::V);
            let v = m.vnet.forward(&n, &p_feat, &st.v, &st.mem_v)?;

            log(Step::H);
            let h = m.hnet.forward(&st.h, l, &u.image, &v.image, &st.mem_h)?;

            st = StageState {
                u: u.image,
                v: v.image,
                h: h.image,
                n,
                mem_u: u.memory,
                mem_v: v.memory,
                mem_h: h.memory,
            };
            states.push(st.clone());
        }
        Ok(ForwardOutput {
            output: st.h,
            initial,
            states,
            trace,
        })
    }
}
