use std::ops::Range;

use gisr_tensor::init::seeded_rng;
use gisr_tensor::{no_grad, Element, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{
    load_model_params, model_from_container, model_to_container, PARAM_PREFIX,
};
use super::mae_loss;
use super::optim::{adam_step, clip_global_norm, collect_grads, AdamConfig, AdamState};
use crate::degradation::GuidedPair;
use crate::error::{arg, CoreError, Result};
use crate::io::container::TensorContainer;
use crate::madunet::MadUNet;
use crate::metrics::psnr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Epochs after which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 8e-4,
            lr_decay_epochs: vec![200],
            lr_decay_factor: 0.5,
            epochs: 150,
            batch_size: 4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return bad("Adam betas must lie in [0, 1) and eps must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let n = self.lr_decay_epochs.iter().filter(|&&d| epoch > d).count();
        self.lr * self.lr_decay_factor.powi(n as i32)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Contiguous train / validation / test index ranges in proportion 7:2:1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn split_dataset(n: usize) -> DatasetSplit {
    let n_train = ((n as f64) * 0.7).round() as usize;
    let n_val = (((n as f64) * 0.2).round() as usize).min(n - n_train);
    DatasetSplit {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..n,
    }
}

/// Stacks pairs into `(L, P, H)` batches of shape `[B, bands, h, w]`.
pub fn make_batch<T: Element>(pairs: &[&GuidedPair]) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let Some(first) = pairs.first() else {
        return arg("cannot batch zero pairs");
    };
    let stack = |get: &dyn Fn(&GuidedPair) -> &Tensor<f64>| -> Result<Tensor<T>> {
        let dims = get(first).shape().to_vec();
        let mut data = Vec::with_capacity(pairs.len() * get(first).numel());
        for p in pairs {
            let t = get(p);
            if t.shape() != dims.as_slice() {
                return Err(CoreError::Shape(format!(
                    "batch mixes dims {:?} and {:?}",
                    dims,
                    t.shape()
                )));
            }
            data.extend(t.data().iter().map(|&v| T::from_f64_lossy(v)));
        }
        let mut shape = vec![pairs.len()];
        shape.extend(dims);
        Ok(Tensor::from_vec(&shape, data)?)
    };
    Ok((
        stack(&|p| &p.lr)?,
        stack(&|p| &p.guide)?,
        stack(&|p| &p.gt)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_psnr: f64,
    pub lr: f64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_psnr,lr";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.9},{:.6},{:e}",
            self.epoch, self.train_loss, self.val_psnr, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct BestSnapshot<T: Element> {
    pub epoch: usize,
    pub val_psnr: f64,
    pub params: Vec<Vec<T>>,
}

/// Training state: model, optimizer moments, epoch counter, log and the
/// best-validation parameters seen so far.
#[derive(Debug, Clone)]
pub struct Trainer<T: Element> {
    pub model: MadUNet<T>,
    pub cfg: TrainConfig,
    pub adam: AdamState<T>,
    /// Last completed epoch; 0 before training.
    pub epoch: usize,
    pub log: Vec<LogRow>,
    pub best: Option<BestSnapshot<T>>,
}

const META_EPOCH: &str = "meta.epoch";
const META_STEP: &str = "meta.step";
const META_LOG: &str = "meta.log";
const META_BEST: &str = "meta.best";
const BEST_PREFIX: &str = "best.";

impl<T: Element> Trainer<T> {
    pub fn new(model: MadUNet<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(&model.params);
        Ok(Self {
            model,
            cfg,
            adam,
            epoch: 0,
            log: Vec::new(),
            best: None,
        })
    }

    /// Mean L1 loss and mean per-image PSNR on `pairs`, without recording
    /// gradients.
    pub fn evaluate(&self, pairs: &[GuidedPair]) -> Result<(f64, f64)> {
        if pairs.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        no_grad(|| {
            let (mut loss_sum, mut psnr_sum) = (0.0, 0.0);
            for chunk in pairs.chunks(self.cfg.batch_size) {
                let refs: Vec<&GuidedPair> = chunk.iter().collect();
                let (l, p, h) = make_batch::<T>(&refs)?;
                let out = self.model.forward(&l, &p)?.output;
                loss_sum += mae_loss(&out, &h)?.item().to_f64_lossy() * chunk.len() as f64;
                let per = out.numel() / chunk.len();
                let (od, hd) = (out.to_f64_vec(), h.to_f64_vec());
                for i in 0..chunk.len() {
                    let dims = &h.shape()[1..];
                    let a = Tensor::from_vec(dims, od[i * per..(i + 1) * per].to_vec())?;
                    let b = Tensor::from_vec(dims, hd[i * per..(i + 1) * per].to_vec())?;
                    psnr_sum += psnr(&a, &b, 1.0)?;
                }
            }
            Ok((loss_sum / pairs.len() as f64, psnr_sum / pairs.len() as f64))
        })
    }

    fn step(&mut self, l: &Tensor<T>, p: &Tensor<T>, h: &Tensor<T>, lr: f64) -> Result<f64> {
        self.model.params.zero_grad();
        let out = self.model.forward(l, p)?.output;
        let loss = mae_loss(&out, h)?;
        let value = loss.item().to_f64_lossy();
        if !value.is_finite() {
            return Err(CoreError::Numeric(format!(
                "non-finite training loss {value} at epoch {} step {}",
                self.epoch + 1,
                self.adam.t + 1
            )));
        }
        loss.backward()?;
        let mut grads = collect_grads(&self.model.params);
        let norm = match self.cfg.clip_norm {
            Some(c) => clip_global_norm(&mut grads, c),
            None => super::optim::global_norm(&grads),
        };
        if !norm.is_finite() {
            return Err(CoreError::Numeric(format!(
                "non-finite gradient norm at epoch {} step {}",
                self.epoch + 1,
                self.adam.t + 1
            )));
        }
        adam_step(
            &self.model.params,
            &grads,
            &mut self.adam,
            lr,
            &self.cfg.adam(),
        )?;
        self.model.params.zero_grad();
        Ok(value)
    }

    /// Trains one epoch over `train` in a seeded shuffled order; returns the
    /// mean batch loss and the number of optimizer steps taken.
    pub fn train_epoch(&mut self, train: &[GuidedPair]) -> Result<(f64, usize)> {
        if train.is_empty() {
            return arg("training set is empty");
        }
        let epoch = self.epoch + 1;
        let lr = self.cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng =
            seeded_rng(self.cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let (mut sum, mut steps) = (0.0, 0);
        for idx in order.chunks(self.cfg.batch_size) {
            let refs: Vec<&GuidedPair> = idx.iter().map(|&i| &train[i]).collect();
            let (l, p, h) = make_batch::<T>(&refs)?;
            sum += self.step(&l, &p, &h, lr)?;
            steps += 1;
        }
        Ok((sum / steps as f64, steps))
    }

    /// Runs epochs until `self.epoch == until`, appending one log row per
    /// epoch. Before the first epoch an epoch-0 row records the loss and
    /// validation PSNR of the initial parameters. `on_epoch` is called after
    /// every row is appended.
    pub fn fit(
        &mut self,
        train: &[GuidedPair],
        val: &[GuidedPair],
        until: usize,
        mut on_epoch: impl FnMut(&Trainer<T>, &LogRow) -> Result<()>,
    ) -> Result<()> {
        if self.log.is_empty() {
            let (loss, vp) = self.evaluate(train)?;
            let row = LogRow {
                epoch: 0,
                train_loss: loss,
                val_psnr: vp,
                lr: self.cfg.lr_at(1),
            };
            self.log.push(row);
            on_epoch(self, &row)?;
        }
        while self.epoch < until {
            let lr = self.cfg.lr_at(self.epoch + 1);
            let (loss, _) = self.train_epoch(train)?;
            self.epoch += 1;
            let (_, vp) = self.evaluate(val)?;
            let improved = match &self.best {
                None => vp.is_finite() || val.is_empty(),
                Some(b) => vp > b.val_psnr,
            };
            if improved {
                self.best = Some(BestSnapshot {
                    epoch: self.epoch,
                    val_psnr: vp,
                    params: self
                        .model
                        .params
                        .iter()
                        .map(|p| p.tensor.to_vec())
                        .collect(),
                });
            }
            let row = LogRow {
                epoch: self.epoch,
                train_loss: loss,
                val_psnr: vp,
                lr,
            };
            self.log.push(row);
            on_epoch(self, &row)?;
        }
        Ok(())
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from(LogRow::CSV_HEADER);
        s.push('\n');
        for r in &self.log {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    /// Full resumable state.
    pub fn checkpoint(&self) -> Result<TensorContainer> {
        let mut c = model_to_container(&self.model)?;
        for (i, p) in self.model.params.iter().enumerate() {
            c.insert_slice(
                format!("adam.m.{}", p.name),
                p.tensor.shape(),
                &self.adam.m[i],
            )?;
            c.insert_slice(
                format!("adam.v.{}", p.name),
                p.tensor.shape(),
                &self.adam.v[i],
            )?;
        }
        c.insert_slice(META_EPOCH, &[1], &[self.epoch as f64])?;
        c.insert_slice(META_STEP, &[1], &[self.adam.t as f64])?;
        let log: Vec<f64> = self
            .log
            .iter()
            .flat_map(|r| [r.epoch as f64, r.train_loss, r.val_psnr, r.lr])
            .collect();
        c.insert_slice(META_LOG, &[self.log.len(), 4], &log)?;
        if let Some(b) = &self.best {
            c.insert_slice(META_BEST, &[2], &[b.epoch as f64, b.val_psnr])?;
            for (p, v) in self.model.params.iter().zip(&b.params) {
                c.insert_slice(format!("{BEST_PREFIX}{}", p.name), p.tensor.shape(), v)?;
            }
        }
        Ok(c)
    }

    /// Model-only container holding the best-validation parameters (or the
    /// current ones if no epoch has run).
    pub fn best_model_container(&self) -> Result<TensorContainer> {
        let Some(b) = &self.best else {
            return model_to_container(&self.model);
        };
        let mut c = TensorContainer::new();
        c.insert_slice(
            super::checkpoint::MODEL_CONFIG_KEY,
            &[15],
            &self.model.config.to_meta(),
        )?;
        for (p, v) in self.model.params.iter().zip(&b.params) {
            c.insert_slice(format!("{PARAM_PREFIX}{}", p.name), p.tensor.shape(), v)?;
        }
        c.insert_slice(META_BEST, &[2], &[b.epoch as f64, b.val_psnr])?;
        Ok(c)
    }

    /// Restores a trainer from [`checkpoint`](Self::checkpoint) output.
    pub fn restore(c: &TensorContainer, cfg: TrainConfig) -> Result<Self> {
        let model = model_from_container::<T>(c)?;
        let mut t = Self::new(model, cfg)?;
        let names: Vec<(String, Vec<usize>)> = t
            .model
            .params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec()))
            .collect();
        for (i, (name, dims)) in names.iter().enumerate() {
            for (key, buf) in [("adam.m.", &mut t.adam.m[i]), ("adam.v.", &mut t.adam.v[i])] {
                let e = c.require(&format!("{key}{name}"))?;
                if &e.dims != dims {
                    return Err(CoreError::Shape(format!(
                        "{key}{name}: dims {:?}, expected {dims:?}",
                        e.dims
                    )));
                }
                *buf = e.values();
            }
        }
        let scalar = |k: &str| -> Result<f64> {
            c.require(k)?
                .values::<f64>()
                .first()
                .copied()
                .ok_or_else(|| CoreError::Format(format!("{k} is empty")))
        };
        t.epoch = scalar(META_EPOCH)? as usize;
        t.adam.t = scalar(META_STEP)? as u64;
        let log = c.require(META_LOG)?.values::<f64>();
        t.log = log
            .chunks_exact(4)
            .map(|r| LogRow {
                epoch: r[0] as usize,
                train_loss: r[1],
                val_psnr: r[2],
                lr: r[3],
            })
            .collect();
        if let Some(e) = c.get(META_BEST) {
            let b = e.values::<f64>();
            let params = names
                .iter()
                .map(|(n, _)| Ok(c.require(&format!("{BEST_PREFIX}{n}"))?.values::<T>()))
                .collect::<Result<_>>()?;
            t.best = Some(BestSnapshot {
                epoch: b[0] as usize,
                val_psnr: b[1],
                params,
            });
        }
        Ok(t)
    }

    /// Loads model-only parameters (e.g. a best checkpoint) into this
    /// trainer's model.
    pub fn load_params(&self, c: &TensorContainer) -> Result<()> {
        load_model_params(&self.model, c)
    }
}
