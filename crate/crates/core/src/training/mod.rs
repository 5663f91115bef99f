//! Supervised training of the unfolded network with an L1 loss.

mod checkpoint;
mod optim;
mod trainer;

pub use checkpoint::{load_model_params, model_from_container, model_to_container};
pub use optim::{adam_step, clip_global_norm, collect_grads, global_norm, AdamConfig, AdamState};
pub use trainer::{make_batch, split_dataset, DatasetSplit, LogRow, TrainConfig, Trainer};

use gisr_tensor::{Element, Tensor};

use crate::error::{shape, Result};

/// Mean absolute error over all elements. The subgradient of `|x|` at 0 is 0.
pub fn mae_loss<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != gt.shape() {
        return shape(format!(
            "mae_loss: prediction {:?} vs ground truth {:?}",
            pred.shape(),
            gt.shape()
        ));
    }
    Ok(pred.sub(gt)?.abs().mean())
}
