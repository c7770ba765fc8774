use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
    pub adam_m: Vec<T>,
    pub adam_v: Vec<T>,
    pub trainable: bool,
    pub(crate) has_grad: bool,
}

impl<T: Real> ParamEntry<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_grad(&self) -> bool {
        self.has_grad
    }
}

/// Ordered, uniquely named arrays: trainable weights with their gradients
/// and Adam moments, plus non-trainable batch-norm running statistics.
/// Iteration order is construction order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<T>,
        trainable: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::InvalidTensor(format!(
                "parameter `{name}`: shape {shape:?} does not match {} values",
                values.len()
            )));
        }
        let len = values.len();
        let (grad, adam_m, adam_v) = if trainable {
            (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len])
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id.0);
        self.entries.push(ParamEntry {
            name,
            shape,
            values,
            grad,
            adam_m,
            adam_v,
            trainable,
            has_grad: false,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn values(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.entries[id.0].values
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.id(name).map(|id| self.entry(id))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<T>> {
        let i = *self.by_name.get(name)?;
        Some(&mut self.entries[i])
    }

    /// Replaces the gradient of a trainable entry.
    pub fn set_grad(&mut self, id: ParamId, grad: Vec<T>) -> Result<()> {
        let e = &mut self.entries[id.0];
        if !e.trainable || grad.len() != e.values.len() {
            return Err(Error::InvalidTensor(format!(
                "gradient for `{}` has wrong length or entry is not trainable",
                e.name
            )));
        }
        e.grad = grad;
        e.has_grad = true;
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for e in self.entries.iter_mut().filter(|e| e.trainable) {
            e.grad.iter_mut().for_each(|g| *g = T::zero());
            e.has_grad = false;
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.len()).sum()
    }

    pub fn non_trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.trainable).map(|e| e.len()).sum()
    }

    /// Converts values and running statistics; gradients and moments reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            out.push(
                e.name.clone(),
                e.shape.clone(),
                e.values.iter().map(|v| U::of(v.as_f64())).collect(),
                e.trainable,
            )
            .expect("names are unique in the source store");
        }
        out
    }

    /// Bitwise equality of names, shapes and values.
    pub fn same_values(&self, other: &ParamStore<T>) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name
                    && a.shape == b.shape
                    && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits_u64() == y.to_bits_u64())
            })
    }
}

trait Bits {
    fn to_bits_u64(self) -> u64;
}

impl<T: Real> Bits for T {
    fn to_bits_u64(self) -> u64 {
        self.as_f64().to_bits()
    }
}
