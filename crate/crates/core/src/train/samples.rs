use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Indexed labelled samples, each a `(1, h, w, c)` tensor.
pub trait Samples: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> usize;

    fn sample_shape(&self) -> Shape;

    fn load(&self, i: usize) -> Result<Tensor<f32>>;

    /// Loads `indices` (in parallel) and stacks them in the given order.
    fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let items = indices
            .par_iter()
            .map(|&i| self.load(i))
            .collect::<Result<Vec<_>>>()?;
        let labels = indices.iter().map(|&i| self.label(i)).collect();
        Ok((Tensor::stack(&items)?, labels))
    }
}

#[derive(Debug, Clone)]
pub struct InMemoryDataset {
    items: Vec<Tensor<f32>>,
    labels: Vec<usize>,
}

impl InMemoryDataset {
    pub fn new(items: Vec<Tensor<f32>>, labels: Vec<usize>) -> Result<Self> {
        if items.len() != labels.len() {
            return Err(Error::Mismatch(format!("{} samples but {} labels", items.len(), labels.len())));
        }
        if let Some(first) = items.first() {
            let shape = first.shape();
            if shape.n != 1 {
                return Err(Error::InvalidTensor(format!("samples must have batch 1, got {shape}")));
            }
            for t in &items {
                t.shape().expect_eq(&shape, "dataset sample")?;
            }
        }
        Ok(InMemoryDataset { items, labels })
    }

    pub fn subset(&self, indices: &[usize]) -> InMemoryDataset {
        InMemoryDataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

impl Samples for InMemoryDataset {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn sample_shape(&self) -> Shape {
        self.items.first().map(|t| t.shape()).unwrap_or(Shape::new(1, 0, 0, 0))
    }

    fn load(&self, i: usize) -> Result<Tensor<f32>> {
        Ok(self.items[i].clone())
    }
}

/// Consecutive batches of `batch_size`; the last partial batch is kept, and
/// a trailing batch of one is folded into its predecessor.
pub fn batch_plan(n: usize, batch_size: usize) -> Vec<Range<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut out: Vec<Range<usize>> = (0..n)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if out.len() > 1 && out.last().map(|r| r.len()) == Some(1) {
        out.pop();
        out.last_mut().expect("at least one batch").end = n;
    }
    out
}

/// Optimizer steps in one epoch over `n` samples.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    batch_plan(n, batch_size).len()
}
