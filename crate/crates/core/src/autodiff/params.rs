use std::collections::HashMap;

use crate::scalar::Scalar;

use super::{Tensor, TensorError};

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds or replaces a parameter, returning its slot.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> usize {
        let name = name.into();
        if let Some(&slot) = self.index.get(&name) {
            self.tensors[slot] = value;
            return slot;
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn slot(&self, name: &str) -> Result<usize, TensorError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_owned()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, TensorError> {
        Ok(&self.tensors[self.slot(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, TensorError> {
        let slot = self.slot(name)?;
        Ok(&mut self.tensors[slot])
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn tensor(&self, slot: usize) -> &Tensor<T> {
        &self.tensors[slot]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor<T> {
        &mut self.tensors[slot]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}
