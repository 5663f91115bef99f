//! Persistence: the binary tensor container, datasets and run configs.

pub mod config;
pub mod container;
pub mod dataset;

pub use config::{DataConfig, DegradationConfig, PathsConfig, RunConfig};
pub use container::{Entry, TensorContainer};
pub use dataset::{dataset_from_container, dataset_to_container, load_dataset, save_dataset};
