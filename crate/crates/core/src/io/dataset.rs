use std::path::Path;

use crate::degradation::GuidedPair;
use crate::error::{CoreError, Result};
use crate::io::container::TensorContainer;

/// Packs pairs as `pair{i}.L`, `pair{i}.P`, `pair{i}.H` in f64.
pub fn dataset_to_container(pairs: &[GuidedPair]) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    for (i, p) in pairs.iter().enumerate() {
        c.insert(format!("pair{i}.L"), &p.lr)?;
        c.insert(format!("pair{i}.P"), &p.guide)?;
        c.insert(format!("pair{i}.H"), &p.gt)?;
    }
    Ok(c)
}

/// Inverse of [`dataset_to_container`]; the ratio is recovered from the
/// ground-truth and target sizes.
pub fn dataset_from_container(c: &TensorContainer) -> Result<Vec<GuidedPair>> {
    if !c.len().is_multiple_of(3) {
        return Err(CoreError::Format(format!(
            "dataset has {} entries, not a multiple of 3",
            c.len()
        )));
    }
    (0..c.len() / 3)
        .map(|i| {
            let lr = c.tensor::<f64>(&format!("pair{i}.L"))?;
            let guide = c.tensor::<f64>(&format!("pair{i}.P"))?;
            let gt = c.tensor::<f64>(&format!("pair{i}.H"))?;
            if lr.ndim() != 3 || gt.ndim() != 3 || lr.dim(1) == 0 || gt.dim(1) % lr.dim(1) != 0 {
                return Err(CoreError::Format(format!(
                    "pair{i}: cannot infer ratio from L {:?} and H {:?}",
                    lr.shape(),
                    gt.shape()
                )));
            }
            let r = gt.dim(1) / lr.dim(1);
            GuidedPair::new(lr, guide, gt, r)
        })
        .collect()
}

pub fn save_dataset(pairs: &[GuidedPair], path: impl AsRef<Path>) -> Result<()> {
    dataset_to_container(pairs)?.write(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<GuidedPair>> {
    dataset_from_container(&TensorContainer::read(path)?)
}
