//! Named parameter storage shared by the model, optimizer, and checkpoints.

use std::collections::HashMap;

use ndarray::Array2;

use super::Scalar;

/// Ordered, uniquely named 2-D tensors. Registration order is fixed at model
/// construction time; the optimizer and checkpoint writer both iterate in
/// that order, which keeps training and serialization deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore<F: Scalar> {
    names: Vec<String>,
    values: Vec<Array2<F>>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<F>) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "parameter registered twice: {name}"
        );
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: usize) -> &Array2<F> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Array2<F> {
        &mut self.values[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<F>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}
