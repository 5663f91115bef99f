use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Architecture hyperparameters and ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of unfolded stages `K`.
    pub stages: usize,
    /// Feature channels `C`; must be even.
    pub channels: usize,
    pub ratio: usize,
    pub target_bands: usize,
    pub guide_bands: usize,
    /// Residual blocks per CRB.
    pub n_resblocks: usize,
    pub share_params: bool,
    pub use_memory: bool,
    pub use_cnl: bool,
    /// Feed the stage's intermediate features into the memory cell, not just
    /// its output.
    pub multi_location_memory: bool,
    /// Train the step size and penalty weights of the H update.
    pub learnable_scalars: bool,
    pub init_delta3: f64,
    pub init_eta1: f64,
    pub init_lambda1: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stages: 4,
            channels: 32,
            ratio: 4,
            target_bands: 4,
            guide_bands: 1,
            n_resblocks: 1,
            share_params: true,
            use_memory: true,
            use_cnl: true,
            multi_location_memory: true,
            learnable_scalars: true,
            init_delta3: 0.1,
            init_eta1: 0.5,
            init_lambda1: 0.5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by tests and the synthetic experiment.
    pub fn desk(target_bands: usize, guide_bands: usize, ratio: usize) -> Self {
        Self {
            stages: 2,
            channels: 16,
            ratio,
            target_bands,
            guide_bands,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if self.stages == 0 {
            return bad("stages must be at least 1".into());
        }
        if self.channels == 0 || !self.channels.is_multiple_of(2) {
            return bad(format!(
                "channels must be positive and even, got {}",
                self.channels
            ));
        }
        if ![2, 4, 8, 16].contains(&self.ratio) {
            return bad(format!(
                "ratio must be one of 2, 4, 8, 16, got {}",
                self.ratio
            ));
        }
        if self.target_bands == 0 || self.guide_bands == 0 {
            return bad("band counts must be positive".into());
        }
        for (name, v) in [
            ("init_delta3", self.init_delta3),
            ("init_eta1", self.init_eta1),
            ("init_lambda1", self.init_lambda1),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    /// Numeric encoding stored alongside checkpoints so a model can be
    /// rebuilt without the original config file.
    pub fn to_meta(&self) -> Vec<f64> {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        vec![
            self.stages as f64,
            self.channels as f64,
            self.ratio as f64,
            self.target_bands as f64,
            self.guide_bands as f64,
            self.n_resblocks as f64,
            b(self.share_params),
            b(self.use_memory),
            b(self.use_cnl),
            b(self.multi_location_memory),
            b(self.learnable_scalars),
            self.init_delta3,
            self.init_eta1,
            self.init_lambda1,
            self.seed as f64,
        ]
    }

    pub fn from_meta(m: &[f64]) -> Result<Self> {
        if m.len() != 15 {
            return Err(CoreError::Format(format!(
                "model config record has {} fields, expected 15",
                m.len()
            )));
        }
        let u = |v: f64| v as usize;
        let cfg = Self {
            stages: u(m[0]),
            channels: u(m[1]),
            ratio: u(m[2]),
            target_bands: u(m[3]),
            guide_bands: u(m[4]),
            n_resblocks: u(m[5]),
            share_params: m[6] != 0.0,
            use_memory: m[7] != 0.0,
            use_cnl: m[8] != 0.0,
            multi_location_memory: m[9] != 0.0,
            learnable_scalars: m[10] != 0.0,
            init_delta3: m[11],
            init_eta1: m[12],
            init_lambda1: m[13],
            seed: m[14] as u64,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
