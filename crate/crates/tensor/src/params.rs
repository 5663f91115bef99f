use std::collections::HashMap;

use crate::element::Element;
use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// A trainable tensor with its unique dotted path, e.g.
/// `stage0.unet.crb_p.conv.weight`. The name is the checkpoint key.
#[derive(Debug, Clone)]
pub struct Parameter<T: Element> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Ordered registry of named parameters. Registration order is stable and
/// fixes iteration order everywhere (optimizer, checkpoints, gradient norms).
#[derive(Debug, Clone)]
pub struct ParamStore<T: Element> {
    entries: Vec<Parameter<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `tensor` as a gradient-tracking leaf under `name`.
    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<Tensor<T>> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return arg_err(format!("duplicate parameter name {name:?}"));
        }
        let tensor = if tensor.is_leaf() && tensor.requires_grad() {
            tensor
        } else {
            tensor.into_leaf(true)
        };
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Parameter {
            name,
            tensor: tensor.clone(),
        });
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.entries.iter()
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        self.entries.iter().map(|p| p.tensor.clone()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|p| p.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.entries.iter().for_each(|p| p.tensor.zero_grad());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::<f32>::new();
        store.register("a.weight", Tensor::zeros(&[2])).unwrap();
        assert!(store.register("a.weight", Tensor::zeros(&[3])).is_err());
        assert_eq!(store.len(), 1);
        assert!(store.get("a.weight").unwrap().requires_grad());
        assert_eq!(store.num_scalars(), 2);
    }
}
