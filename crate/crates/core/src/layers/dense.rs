use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Affine map `x·W + b` on flattened batch items; `W` is `(in, out)` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl Dense {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_count(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }

    fn check<T: Real>(&self, x: &Tensor<T>, weights: usize) -> Result<()> {
        let len = x.shape().item_len();
        if len != self.inputs {
            return Err(Error::ShapeMismatch {
                op: "dense",
                axis: "flattened item",
                left: len,
                right: self.inputs,
            });
        }
        if weights != self.weight_len() {
            return Err(Error::InvalidTensor("dense: weight length mismatch".into()));
        }
        Ok(())
    }

    /// Output shape `(n, 1, 1, outputs)`.
    pub fn forward<T: Real>(&self, x: &Tensor<T>, weights: &[T], bias: &[T]) -> Result<Tensor<T>> {
        self.check(x, weights.len())?;
        let n = x.shape().n;
        let mut out = Vec::with_capacity(n * self.outputs);
        for b in 0..n {
            let mut row = bias.to_vec();
            for (&xv, wrow) in x.item(b).iter().zip(weights.chunks_exact(self.outputs)) {
                for (acc, &wv) in row.iter_mut().zip(wrow) {
                    *acc += xv * wv;
                }
            }
            out.extend(row);
        }
        Tensor::from_vec(Shape::new(n, 1, 1, self.outputs), out)
    }

    pub fn backward<T: Real>(
        &self,
        x: &Tensor<T>,
        weights: &[T],
        grad_out: &Tensor<T>,
    ) -> Result<DenseGrads<T>> {
        self.check(x, weights.len())?;
        let n = x.shape().n;
        grad_out
            .shape()
            .expect_eq(&Shape::new(n, 1, 1, self.outputs), "dense backward")?;
        let mut gw = vec![T::zero(); self.weight_len()];
        let mut gb = vec![T::zero(); self.outputs];
        let mut gx = Vec::with_capacity(x.shape().len());
        for b in 0..n {
            let g = grad_out.item(b);
            for (acc, &v) in gb.iter_mut().zip(g) {
                *acc += v;
            }
            for (&xv, (gwrow, wrow)) in x
                .item(b)
                .iter()
                .zip(gw.chunks_exact_mut(self.outputs).zip(weights.chunks_exact(self.outputs)))
            {
                let mut dot = T::zero();
                for ((acc, &gv), &wv) in gwrow.iter_mut().zip(g).zip(wrow) {
                    *acc += xv * gv;
                    dot += wv * gv;
                }
                gx.push(dot);
            }
        }
        Ok(DenseGrads {
            input: Tensor::from_vec(x.shape(), gx)?,
            weights: gw,
            bias: gb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let d = Dense { inputs: 3, outputs: 3 };
        let mut w = vec![0.0f64; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(Shape::new(2, 1, 1, 3), vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        assert_eq!(d.forward(&x, &w, &[0.0; 3]).unwrap(), x);
    }

    #[test]
    fn classifier_head_count() {
        assert_eq!(Dense { inputs: 377, outputs: 44 }.param_count(), 16632);
    }

    #[test]
    fn rejects_wrong_input_length() {
        let d = Dense { inputs: 4, outputs: 2 };
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 3));
        assert!(d.forward(&x, &[0.0; 8], &[0.0; 2]).is_err());
    }
}
