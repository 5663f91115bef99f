use gisr_tensor::Element;

use crate::error::{CoreError, Result};
use crate::io::container::TensorContainer;
use crate::madunet::{MadUNet, ModelConfig};

pub(crate) const PARAM_PREFIX: &str = "param.";
pub(crate) const MODEL_CONFIG_KEY: &str = "meta.model_config";

/// Parameters under `param.<name>` plus the numeric model config record.
pub fn model_to_container<T: Element>(model: &MadUNet<T>) -> Result<TensorContainer> {
    let mut c = TensorContainer::new();
    c.insert_slice(MODEL_CONFIG_KEY, &[15], &model.config.to_meta())?;
    for p in model.params.iter() {
        c.insert(format!("{PARAM_PREFIX}{}", p.name), &p.tensor)?;
    }
    Ok(c)
}

/// Copies `param.<name>` entries into `model`. Every key and shape is
/// checked before anything is written, and the first mismatch is reported
/// by name.
pub fn load_model_params<T: Element>(model: &MadUNet<T>, c: &TensorContainer) -> Result<()> {
    let mut staged = Vec::with_capacity(model.params.len());
    for p in model.params.iter() {
        let key = format!("{PARAM_PREFIX}{}", p.name);
        let e = c
            .get(&key)
            .ok_or_else(|| CoreError::Shape(format!("checkpoint is missing {key}")))?;
        if e.dims != p.tensor.shape() {
            return Err(CoreError::Shape(format!(
                "{key}: checkpoint has dims {:?}, model expects {:?}",
                e.dims,
                p.tensor.shape()
            )));
        }
        staged.push(e.values::<T>());
    }
    let extra = c
        .entries()
        .iter()
        .filter_map(|e| e.name.strip_prefix(PARAM_PREFIX))
        .find(|n| model.params.get(n).is_none());
    if let Some(name) = extra {
        return Err(CoreError::Shape(format!(
            "{PARAM_PREFIX}{name}: checkpoint parameter does not exist in the model"
        )));
    }
    for (p, v) in model.params.iter().zip(staged) {
        p.tensor.set_data(&v)?;
    }
    Ok(())
}

/// Rebuilds a model from its stored config record and loads its parameters.
pub fn model_from_container<T: Element>(c: &TensorContainer) -> Result<MadUNet<T>> {
    let cfg = ModelConfig::from_meta(&c.require(MODEL_CONFIG_KEY)?.values::<f64>())?;
    let model = MadUNet::new(cfg)?;
    load_model_params(&model, c)?;
    Ok(model)
}
