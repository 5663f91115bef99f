use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degradation::{make_gaussian_kernel, DegradationSpec};
use crate::error::{CoreError, Result};
use crate::madunet::ModelConfig;
use crate::training::TrainConfig;

/// Blur and noise used when synthesizing data. Kernel size and sigma default
/// to `2 ceil(1.5 r) + 1` and `r / 2` for the model ratio.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationConfig {
    pub kernel_size: Option<usize>,
    pub kernel_sigma: Option<f64>,
    pub noise_sigma: f64,
}

impl DegradationConfig {
    pub fn spec(&self, ratio: usize) -> Result<DegradationSpec> {
        let base = DegradationSpec::gaussian(ratio)?;
        let size = self.kernel_size.unwrap_or(base.kernel_size());
        let sigma = self.kernel_sigma.unwrap_or(ratio as f64 / 2.0);
        DegradationSpec::new(make_gaussian_kernel(size, sigma)?, ratio, self.noise_sigma)
    }
}

/// Synthetic dataset shape. `size` is the ground-truth side length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub pairs: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            pairs: 64,
            size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset.gisr"),
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Complete run configuration as read from JSON. Unknown keys at any level
/// are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub degradation: DegradationConfig,
    pub data: DataConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks cross-section consistency.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !self.data.size.is_multiple_of(self.model.ratio) {
            return Err(CoreError::Argument(format!(
                "data size {} is not divisible by ratio {}",
                self.data.size, self.model.ratio
            )));
        }
        self.degradation.spec(self.model.ratio)?;
        Ok(())
    }
}
