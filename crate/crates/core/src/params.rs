use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// A named learnable tensor with its gradient and momentum buffers.
#[derive(Clone, Debug)]
pub struct Param<F: Real> {
    pub name: String,
    /// Logical dimensions used for serialization (weights are rank 4,
    /// biases and PReLU slopes rank 1).
    pub dims: Vec<usize>,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub momentum: Tensor<F>,
}

impl<F: Real> Param<F> {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, value: Tensor<F>) -> Self {
        let shape = value.shape();
        Param {
            name: name.into(),
            dims,
            value,
            grad: Tensor::zeros(shape),
            momentum: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }
}

/// Ordered registry of parameters; names are unique.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F: Real> {
    params: Vec<Param<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, param: Param<F>) -> Result<()> {
        if self.index.contains_key(&param.name) {
            return Err(Error::invalid(format!("duplicate parameter name {}", param.name)));
        }
        self.index.insert(param.name.clone(), self.params.len());
        self.params.push(param);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<F>> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<F>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.params[i]),
            None => Err(Error::invalid(format!("no parameter named {name}"))),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<F>> {
        Ok(&self.get(name)?.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(F::ZERO);
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
