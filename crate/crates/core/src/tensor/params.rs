use crate::error::{GlamError, Result};

use super::{Gradients, Scalar, Tape, Tensor, Var};

/// One named trainable (or buffer) tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    /// Appends a tensor and returns its index. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(GlamError::Invalid(format!("duplicate parameter {name}")));
        }
        self.params.push(Param { name, value });
        Ok(self.params.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, idx: usize) -> &Tensor<T> {
        &self.params[idx].value
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.params[idx].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.rows() * p.value.cols()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.value.grad = None;
        }
    }

    /// Adds the gradient of each bound variable into its parameter's buffer.
    pub fn accumulate(&mut self, bindings: &ParamBindings, grads: &Gradients<T>) {
        for &(idx, var) in &bindings.vars {
            if let Some(g) = grads.wrt(var) {
                let t = &mut self.params[idx].value;
                let buf = t.grad.get_or_insert_with(|| vec![T::zero(); g.len()]);
                for (d, &s) in buf.iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
    }
}

/// Parameter-index to tape-variable map built during one forward pass.
#[derive(Debug, Default, Clone)]
pub struct ParamBindings {
    vars: Vec<(usize, Var)>,
}

impl ParamBindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records parameter `idx` on the tape (once) and returns its variable.
    pub fn bind<'a, T: Scalar>(&mut self, tape: &mut Tape<'a, T>, store: &'a ParamStore<T>, idx: usize) -> Var {
        if let Some(&(_, v)) = self.vars.iter().find(|(i, _)| *i == idx) {
            return v;
        }
        let v = tape.leaf(store.get(idx));
        self.vars.push((idx, v));
        v
    }

    pub fn var(&self, idx: usize) -> Option<Var> {
        self.vars.iter().find(|(i, _)| *i == idx).map(|&(_, v)| v)
    }
}
