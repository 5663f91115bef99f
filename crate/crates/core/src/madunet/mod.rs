//! Memory-augmented unfolded network for guided super-resolution.
//!
//! Each stage updates the auxiliary estimates `U` and `V` with learned
//! proximal networks, refines `H` into `N` with cross-modality attention, and
//! takes a learned gradient step on `H`. Each branch carries a ConvLSTM memory
//! across stages.

mod cnl;
mod config;
mod layers;
mod model;
mod stages;

pub use cnl::{Cnl, CnlOutput};
pub use config::ModelConfig;
pub use layers::{Builder, Conv, ConvLstm, ConvT, Crb, Head, ResBlock};
pub use model::{ForwardOutput, MadUNet, Refiner, StageModules, StageState, Step, TraceEvent};
pub use stages::{BranchOutput, HNet, HNetOutput, Memory, MemoryPath, ProxNet};
