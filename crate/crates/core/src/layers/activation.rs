use crate::error::Result;
use crate::real::Real;
use crate::tensor::Tensor;

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient passes only where the pre-activation was strictly positive;
/// the subgradient at exactly zero is 0.
pub fn relu_backward<T: Real>(pre: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    pre.zip_map(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
}
