//! Dense rank-4 tensors in `(n, h, w, c)` row-major layout, plus the
//! "same"-padding geometry shared by convolution and pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Shape of a rank-4 tensor: batch, rows, columns, channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(n: usize, h: usize, w: usize, c: usize) -> Self {
        Shape { n, h, w, c }
    }

    pub const fn len(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values in one batch item.
    pub const fn item_len(&self) -> usize {
        self.h * self.w * self.c
    }

    #[inline]
    pub const fn index(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c + c
    }

    pub fn with_c(self, c: usize) -> Self {
        Shape { c, ..self }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    pub(crate) fn expect_eq(&self, other: &Shape, op: &'static str) -> Result<()> {
        let axes = [
            ("n", self.n, other.n),
            ("h", self.h, other.h),
            ("w", self.w, other.w),
            ("c", self.c, other.c),
        ];
        for (axis, left, right) in axes {
            if left != right {
                return Err(Error::ShapeMismatch {
                    op,
                    axis,
                    left,
                    right,
                });
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.h, self.w, self.c)
    }
}

/// Dense rank-4 array. Immutable once produced by an operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        debug_assert!(!shape.is_empty(), "tensor dimensions must be >= 1");
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidTensor(format!(
                "all dimensions must be >= 1, got {shape}"
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for y in 0..shape.h {
                for x in 0..shape.w {
                    for c in 0..shape.c {
                        data.push(f(n, y, x, c));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Single-image tensor from a row-major `h × w` grid with one channel.
    pub fn from_grid(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::InvalidTensor("ragged grid".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| T::of(v))).collect();
        Self::from_vec(Shape::new(1, h, w, 1), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, y: usize, x: usize, c: usize) -> T {
        self.data[self.shape.index(n, y, x, c)]
    }

    /// Values of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    /// Copies batch item `n` into a tensor of batch size one.
    pub fn item_tensor(&self, n: usize) -> Tensor<T> {
        Tensor {
            shape: Shape { n: 1, ..self.shape },
            data: self.item(n).to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.shape.expect_eq(&other.shape, "zip_map")?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.shape.expect_eq(&other.shape, "add")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Concatenates batches along `n`. All tensors must agree on `(h, w, c)`.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidTensor("cannot stack zero tensors".into()))?;
        let mut shape = first.shape;
        shape.n = 0;
        let mut data = Vec::new();
        for t in items {
            t.shape.expect_eq(&Shape { n: t.shape.n, ..shape }, "stack")?;
            shape.n += t.shape.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor { shape, data })
    }

    /// Copies channels `[start, end)` into a new tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor<T>> {
        if start >= end || end > self.shape.c {
            return Err(Error::InvalidTensor(format!(
                "channel range {start}..{end} invalid for {} channels",
                self.shape.c
            )));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.shape.n * self.shape.h * self.shape.w * width);
        for px in self.data.chunks_exact(self.shape.c) {
            data.extend_from_slice(&px[start..end]);
        }
        Ok(Tensor {
            shape: self.shape.with_c(width),
            data,
        })
    }

    pub(crate) fn debug_check_finite(&self, op: &str) {
        debug_assert!(self.is_finite(), "{op} produced non-finite values");
    }
}

/// Joins `a` and `b` along the channel axis: `a`'s channels first.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape, b.shape);
    for (axis, left, right) in [("n", sa.n, sb.n), ("h", sa.h, sb.h), ("w", sa.w, sb.w)] {
        if left != right {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                axis,
                left,
                right,
            });
        }
    }
    let c = sa.c + sb.c;
    let mut data = Vec::with_capacity(sa.n * sa.h * sa.w * c);
    for (pa, pb) in a.data.chunks_exact(sa.c).zip(b.data.chunks_exact(sb.c)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Ok(Tensor {
        shape: sa.with_c(c),
        data,
    })
}

/// Splits a channel-concatenated gradient back into its two parts.
pub(crate) fn split_channels<T: Real>(t: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let s = t.shape;
    let second = s.c - first;
    let mut a = Vec::with_capacity(s.n * s.h * s.w * first);
    let mut b = Vec::with_capacity(s.n * s.h * s.w * second);
    for px in t.data.chunks_exact(s.c) {
        a.extend_from_slice(&px[..first]);
        b.extend_from_slice(&px[first..]);
    }
    (
        Tensor {
            shape: s.with_c(first),
            data: a,
        },
        Tensor {
            shape: s.with_c(second),
            data: b,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Window placement along one spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaddingGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub input: usize,
    pub output: usize,
    /// Padding before the first element (top or left).
    pub pad_before: usize,
    /// Padding after the last element (bottom or right).
    pub pad_after: usize,
}

impl PaddingGeometry {
    pub fn total_pad(&self) -> usize {
        self.pad_before + self.pad_after
    }

    /// Input coordinate of the first window tap for output index `o`
    /// (may be negative inside the padding).
    #[inline]
    pub fn window_start(&self, o: usize) -> isize {
        (o * self.stride) as isize - self.pad_before as isize
    }

    /// In-bounds input range `[lo, hi)` covered by the window at output `o`.
    #[inline]
    pub fn window_range(&self, o: usize) -> (usize, usize) {
        let start = self.window_start(o);
        let lo = start.max(0) as usize;
        let hi = ((start + self.kernel as isize).max(0) as usize).min(self.input);
        (lo, hi)
    }
}

/// "Same" padding: output side is `ceil(in / stride)`; the odd extra pad
/// element goes after (bottom/right).
pub fn same_pad_geometry(in_side: usize, kernel: usize, stride: usize) -> PaddingGeometry {
    assert!(
        in_side >= 1 && kernel >= 1 && stride >= 1,
        "same_pad_geometry requires positive arguments"
    );
    let output = in_side.div_ceil(stride);
    let total = ((output - 1) * stride + kernel).saturating_sub(in_side);
    PaddingGeometry {
        kernel,
        stride,
        input: in_side,
        output,
        pad_before: total / 2,
        pad_after: total - total / 2,
    }
}

/// "Valid" padding: only full windows.
pub fn valid_geometry(in_side: usize, kernel: usize, stride: usize) -> Result<PaddingGeometry> {
    if in_side < kernel {
        return Err(Error::InvalidTensor(format!(
            "valid window {kernel} larger than input side {in_side}"
        )));
    }
    Ok(PaddingGeometry {
        kernel,
        stride,
        input: in_side,
        output: (in_side - kernel) / stride + 1,
        pad_before: 0,
        pad_after: 0,
    })
}

pub fn geometry(
    in_side: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<PaddingGeometry> {
    match padding {
        Padding::Same => Ok(same_pad_geometry(in_side, kernel, stride)),
        Padding::Valid => valid_geometry(in_side, kernel, stride),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(shape: Shape, offset: f32) -> Tensor<f32> {
        let data = (0..shape.len()).map(|i| i as f32 + offset).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn concat_widens_channel_axis() {
        let a = ramp(Shape::new(1, 14, 14, 89), 0.0);
        let b = ramp(Shape::new(1, 14, 14, 24), 0.5);
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.shape(), Shape::new(1, 14, 14, 113));
        assert_eq!(ab.at(0, 3, 5, 88), a.at(0, 3, 5, 88));
        assert_eq!(ab.at(0, 3, 5, 89), b.at(0, 3, 5, 0));

        let a = Tensor::<f32>::zeros(Shape::new(1, 28, 28, 55));
        let b = Tensor::<f32>::zeros(Shape::new(1, 28, 28, 34));
        assert_eq!(concat_channels(&a, &b).unwrap().shape().c, 89);
    }

    #[test]
    fn concat_of_zeros_is_zeros() {
        let z = Tensor::<f32>::zeros(Shape::new(1, 2, 2, 1));
        let zz = concat_channels(&z, &z).unwrap();
        assert_eq!(zz.shape(), Shape::new(1, 2, 2, 2));
        assert!(zz.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concat_names_the_mismatched_axis() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 4, 4, 2));
        let b = Tensor::<f32>::zeros(Shape::new(1, 4, 5, 2));
        match concat_channels(&a, &b) {
            Err(Error::ShapeMismatch { axis, .. }) => assert_eq!(axis, "w"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn from_vec_rejects_bad_lengths() {
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 2, 2, 1), vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::from_vec(Shape::new(0, 2, 2, 1), vec![]).is_err());
    }

    #[test]
    fn same_padding_examples() {
        let g = same_pad_geometry(224, 3, 1);
        assert_eq!((g.output, g.pad_before, g.pad_after), (224, 1, 1));
        let g = same_pad_geometry(224, 3, 2);
        assert_eq!((g.output, g.pad_before, g.pad_after), (112, 0, 1));
        let g = same_pad_geometry(3, 3, 2);
        assert_eq!((g.output, g.pad_before, g.pad_after), (2, 1, 1));
    }

    proptest! {
        #[test]
        fn concat_then_slice_recovers_inputs(
            h in 1usize..5, w in 1usize..5, ca in 1usize..4, cb in 1usize..4, seed in 0u32..1000,
        ) {
            let a = ramp(Shape::new(2, h, w, ca), seed as f32 * 0.37);
            let b = ramp(Shape::new(2, h, w, cb), -(seed as f32));
            let ab = concat_channels(&a, &b).unwrap();
            let back_a = ab.slice_channels(0, ca).unwrap();
            let back_b = ab.slice_channels(ca, ca + cb).unwrap();
            prop_assert!(back_a.data().iter().zip(a.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(back_b, b);
        }

        #[test]
        fn same_padding_output_is_ceil(inp in 1usize..=64, kernel in prop::sample::select(vec![1usize, 3]), stride in 1usize..=2) {
            let g = same_pad_geometry(inp, kernel, stride);
            prop_assert_eq!(g.output, inp.div_ceil(stride));
            let expect_total = ((g.output - 1) * stride + kernel).saturating_sub(inp);
            prop_assert_eq!(g.total_pad(), expect_total);
            prop_assert!(g.pad_before <= g.pad_after && g.pad_after - g.pad_before <= 1);
        }
    }
}
