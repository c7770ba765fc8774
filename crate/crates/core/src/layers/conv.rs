//! Standard and depthwise-separable 2-D convolution on NHWC tensors.
//!
//! Weights use `(kh, kw, in_c, out_c)` layout so the innermost loop of both
//! passes runs over contiguous output channels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{geometry, Padding, PaddingGeometry, Shape, Tensor};

/// Fixed partition count for weight-gradient reductions. Partial sums are
/// always combined in partition order, so results do not depend on the
/// number of worker threads.
const REDUCE_PARTS: usize = 16;

/// Owned convolution weights, mostly for tests and hand-built models.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(layer: &Conv2d) -> Self {
        ConvParams {
            weights: vec![T::zero(); layer.weight_len()],
            bias: vec![T::zero(); layer.out_c],
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Square-kernel 2-D convolution with per-output-channel bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub kernel: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    /// 3×3, stride 1, "same" padding.
    pub fn same3x3(in_c: usize, out_c: usize) -> Self {
        Conv2d {
            kernel: 3,
            in_c,
            out_c,
            stride: 1,
            padding: Padding::Same,
        }
    }

    pub fn pointwise(in_c: usize, out_c: usize) -> Self {
        Conv2d {
            kernel: 1,
            in_c,
            out_c,
            stride: 1,
            padding: Padding::Same,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.kernel, self.kernel, self.in_c, self.out_c]
    }

    pub fn weight_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c * self.out_c
    }

    /// `(k·k·in_c + 1)·out_c`
    pub fn param_count(&self) -> usize {
        (self.kernel * self.kernel * self.in_c + 1) * self.out_c
    }

    fn geometries(&self, s: Shape) -> Result<(PaddingGeometry, PaddingGeometry)> {
        Ok((
            geometry(s.h, self.kernel, self.stride, self.padding)?,
            geometry(s.w, self.kernel, self.stride, self.padding)?,
        ))
    }

    pub fn output_shape(&self, s: Shape) -> Result<Shape> {
        let (gy, gx) = self.geometries(s)?;
        Ok(Shape::new(s.n, gy.output, gx.output, self.out_c))
    }

    fn check(&self, x: &Tensor<impl Real>, weights: usize, bias: usize) -> Result<()> {
        if x.shape().c != self.in_c {
            return Err(Error::ChannelMismatch {
                op: "conv2d",
                expected: self.in_c,
                got: x.shape().c,
            });
        }
        if weights != self.weight_len() || bias != self.out_c {
            return Err(Error::InvalidTensor(format!(
                "conv2d: expected {} weights and {} biases, got {weights} and {bias}",
                self.weight_len(),
                self.out_c
            )));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>, weights: &[T], bias: &[T]) -> Result<Tensor<T>> {
        self.check(x, weights.len(), bias.len())?;
        let s = x.shape();
        let (gy, gx) = self.geometries(s)?;
        let out_shape = Shape::new(s.n, gy.output, gx.output, self.out_c);
        let (k, ic, oc) = (self.kernel, self.in_c, self.out_c);
        let xd = x.data();
        let mut out = Tensor::zeros(out_shape);

        out.data_mut()
            .par_chunks_mut(gx.output * oc)
            .enumerate()
            .for_each(|(row, orow)| {
                let (b, oy) = (row / gy.output, row % gy.output);
                let y0 = gy.window_start(oy);
                for (ox, o) in orow.chunks_exact_mut(oc).enumerate() {
                    o.copy_from_slice(bias);
                    let x0 = gx.window_start(ox);
                    for ky in 0..k {
                        let iy = y0 + ky as isize;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = x0 + kx as isize;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            let base = s.index(b, iy as usize, ix as usize, 0);
                            let xin = &xd[base..base + ic];
                            let wk = &weights[(ky * k + kx) * ic * oc..(ky * k + kx + 1) * ic * oc];
                            for (&xv, wrow) in xin.iter().zip(wk.chunks_exact(oc)) {
                                for (acc, &wv) in o.iter_mut().zip(wrow) {
                                    *acc += xv * wv;
                                }
                            }
                        }
                    }
                }
            });
        out.debug_check_finite("conv2d forward");
        Ok(out)
    }

    pub fn backward<T: Real>(
        &self,
        x: &Tensor<T>,
        weights: &[T],
        grad_out: &Tensor<T>,
    ) -> Result<ConvGrads<T>> {
        self.check(x, weights.len(), self.out_c)?;
        let s = x.shape();
        let (gy, gx) = self.geometries(s)?;
        grad_out
            .shape()
            .expect_eq(&Shape::new(s.n, gy.output, gx.output, self.out_c), "conv2d backward")?;
        let (k, ic, oc) = (self.kernel, self.in_c, self.out_c);
        let (xd, gd) = (x.data(), grad_out.data());

        let mut bias = vec![T::zero(); oc];
        for g in gd.chunks_exact(oc) {
            for (acc, &v) in bias.iter_mut().zip(g) {
                *acc += v;
            }
        }

        let rows = s.n * gy.output;
        let per_part = rows.div_ceil(REDUCE_PARTS).max(1);
        let partials: Vec<Vec<T>> = (0..rows.div_ceil(per_part))
            .into_par_iter()
            .map(|part| {
                let mut gw = vec![T::zero(); self.weight_len()];
                for row in part * per_part..((part + 1) * per_part).min(rows) {
                    let (b, oy) = (row / gy.output, row % gy.output);
                    let y0 = gy.window_start(oy);
                    for ox in 0..gx.output {
                        let g = &gd[Shape::new(s.n, gy.output, gx.output, oc).index(b, oy, ox, 0)..][..oc];
                        let x0 = gx.window_start(ox);
                        for ky in 0..k {
                            let iy = y0 + ky as isize;
                            if iy < 0 || iy >= s.h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = x0 + kx as isize;
                                if ix < 0 || ix >= s.w as isize {
                                    continue;
                                }
                                let base = s.index(b, iy as usize, ix as usize, 0);
                                let xin = &xd[base..base + ic];
                                let wk = &mut gw[(ky * k + kx) * ic * oc..(ky * k + kx + 1) * ic * oc];
                                for (&xv, wrow) in xin.iter().zip(wk.chunks_exact_mut(oc)) {
                                    for (acc, &gv) in wrow.iter_mut().zip(g) {
                                        *acc += xv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                gw
            })
            .collect();
        let mut grad_w = vec![T::zero(); self.weight_len()];
        for p in &partials {
            for (acc, &v) in grad_w.iter_mut().zip(p) {
                *acc += v;
            }
        }

        let out_s = grad_out.shape();
        let mut grad_x = Tensor::zeros(s);
        grad_x
            .data_mut()
            .par_chunks_mut(s.w * ic)
            .enumerate()
            .for_each(|(row, xrow)| {
                let (b, iy) = (row / s.h, row % s.h);
                for (ix, gxv) in xrow.chunks_exact_mut(ic).enumerate() {
                    for ky in 0..k {
                        let Some(oy) = source_index(iy, ky, &gy) else { continue };
                        for kx in 0..k {
                            let Some(ox) = source_index(ix, kx, &gx) else { continue };
                            let g = &gd[out_s.index(b, oy, ox, 0)..][..oc];
                            let wk = &weights[(ky * k + kx) * ic * oc..(ky * k + kx + 1) * ic * oc];
                            for (acc, wrow) in gxv.iter_mut().zip(wk.chunks_exact(oc)) {
                                let mut dot = T::zero();
                                for (&wv, &gv) in wrow.iter().zip(g) {
                                    dot += wv * gv;
                                }
                                *acc += dot;
                            }
                        }
                    }
                }
            });

        Ok(ConvGrads {
            input: grad_x,
            weights: grad_w,
            bias,
        })
    }
}

/// Output index whose window places tap `tap` on input coordinate `i`.
#[inline]
fn source_index(i: usize, tap: usize, g: &PaddingGeometry) -> Option<usize> {
    let num = i as isize + g.pad_before as isize - tap as isize;
    if num < 0 || num % g.stride as isize != 0 {
        return None;
    }
    let o = (num / g.stride as isize) as usize;
    (o < g.output).then_some(o)
}

/// Per-channel 3×3 filtering with per-channel bias (stride 1, "same").
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Depthwise3x3 {
    pub channels: usize,
}

impl Depthwise3x3 {
    const K: usize = 3;

    pub fn weight_shape(&self) -> [usize; 4] {
        [3, 3, self.channels, 1]
    }

    pub fn weight_len(&self) -> usize {
        9 * self.channels
    }

    /// `(3·3·1 + 1)·channels`
    pub fn param_count(&self) -> usize {
        10 * self.channels
    }

    fn check(&self, x: &Tensor<impl Real>, weights: usize, bias: usize) -> Result<()> {
        if x.shape().c != self.channels {
            return Err(Error::ChannelMismatch {
                op: "depthwise conv",
                expected: self.channels,
                got: x.shape().c,
            });
        }
        if weights != self.weight_len() || bias != self.channels {
            return Err(Error::InvalidTensor("depthwise conv: parameter length mismatch".into()));
        }
        Ok(())
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>, weights: &[T], bias: &[T]) -> Result<Tensor<T>> {
        self.check(x, weights.len(), bias.len())?;
        let s = x.shape();
        let c = self.channels;
        let xd = x.data();
        let mut out = Tensor::zeros(s);
        out.data_mut()
            .par_chunks_mut(s.w * c)
            .enumerate()
            .for_each(|(row, orow)| {
                let (b, y) = (row / s.h, row % s.h);
                for (x0, o) in orow.chunks_exact_mut(c).enumerate() {
                    o.copy_from_slice(bias);
                    for ky in 0..Self::K {
                        let Some(iy) = tap(y, ky, s.h) else { continue };
                        for kx in 0..Self::K {
                            let Some(ix) = tap(x0, kx, s.w) else { continue };
                            let xin = &xd[s.index(b, iy, ix, 0)..][..c];
                            let wk = &weights[(ky * Self::K + kx) * c..][..c];
                            for ((acc, &xv), &wv) in o.iter_mut().zip(xin).zip(wk) {
                                *acc += xv * wv;
                            }
                        }
                    }
                }
            });
        out.debug_check_finite("depthwise forward");
        Ok(out)
    }

    pub fn backward<T: Real>(
        &self,
        x: &Tensor<T>,
        weights: &[T],
        grad_out: &Tensor<T>,
    ) -> Result<ConvGrads<T>> {
        self.check(x, weights.len(), self.channels)?;
        let s = x.shape();
        grad_out.shape().expect_eq(&s, "depthwise backward")?;
        let c = self.channels;
        let (xd, gd) = (x.data(), grad_out.data());

        let mut bias = vec![T::zero(); c];
        let mut grad_w = vec![T::zero(); self.weight_len()];
        for b in 0..s.n {
            for y in 0..s.h {
                for x0 in 0..s.w {
                    let g = &gd[s.index(b, y, x0, 0)..][..c];
                    for (acc, &v) in bias.iter_mut().zip(g) {
                        *acc += v;
                    }
                    for ky in 0..Self::K {
                        let Some(iy) = tap(y, ky, s.h) else { continue };
                        for kx in 0..Self::K {
                            let Some(ix) = tap(x0, kx, s.w) else { continue };
                            let xin = &xd[s.index(b, iy, ix, 0)..][..c];
                            let wk = &mut grad_w[(ky * Self::K + kx) * c..][..c];
                            for ((acc, &xv), &gv) in wk.iter_mut().zip(xin).zip(g) {
                                *acc += xv * gv;
                            }
                        }
                    }
                }
            }
        }

        let mut grad_x = Tensor::zeros(s);
        grad_x
            .data_mut()
            .par_chunks_mut(s.w * c)
            .enumerate()
            .for_each(|(row, xrow)| {
                let (b, iy) = (row / s.h, row % s.h);
                for (ix, gxv) in xrow.chunks_exact_mut(c).enumerate() {
                    // input (iy, ix) feeds output (iy + 1 - ky, ix + 1 - kx)
                    for ky in 0..Self::K {
                        let Some(oy) = tap(iy, 2 - ky, s.h) else { continue };
                        for kx in 0..Self::K {
                            let Some(ox) = tap(ix, 2 - kx, s.w) else { continue };
                            let g = &gd[s.index(b, oy, ox, 0)..][..c];
                            let wk = &weights[(ky * Self::K + kx) * c..][..c];
                            for ((acc, &wv), &gv) in gxv.iter_mut().zip(wk).zip(g) {
                                *acc += wv * gv;
                            }
                        }
                    }
                }
            });

        Ok(ConvGrads {
            input: grad_x,
            weights: grad_w,
            bias,
        })
    }
}

/// Coordinate `i - 1 + k` if inside `[0, len)`.
#[inline]
fn tap(i: usize, k: usize, len: usize) -> Option<usize> {
    let j = (i + k).checked_sub(1)?;
    (j < len).then_some(j)
}

/// Owned depthwise-separable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DwscParams<T> {
    pub depthwise: Vec<T>,
    pub depthwise_bias: Vec<T>,
    pub pointwise: Vec<T>,
    pub pointwise_bias: Vec<T>,
}

impl<T: Real> DwscParams<T> {
    pub fn zeros(layer: &Dwsc) -> Self {
        DwscParams {
            depthwise: vec![T::zero(); layer.depthwise().weight_len()],
            depthwise_bias: vec![T::zero(); layer.in_c],
            pointwise: vec![T::zero(); layer.pointwise().weight_len()],
            pointwise_bias: vec![T::zero(); layer.out_c],
        }
    }

    pub fn depthwise_count(&self) -> usize {
        self.depthwise.len() + self.depthwise_bias.len()
    }

    pub fn pointwise_count(&self) -> usize {
        self.pointwise.len() + self.pointwise_bias.len()
    }
}

#[derive(Debug, Clone)]
pub struct DwscGrads<T> {
    pub input: Tensor<T>,
    pub depthwise: Vec<T>,
    pub depthwise_bias: Vec<T>,
    pub pointwise: Vec<T>,
    pub pointwise_bias: Vec<T>,
}

/// Depthwise 3×3 followed by a 1×1 pointwise projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dwsc {
    pub in_c: usize,
    pub out_c: usize,
}

impl Dwsc {
    pub fn depthwise(&self) -> Depthwise3x3 {
        Depthwise3x3 { channels: self.in_c }
    }

    pub fn pointwise(&self) -> Conv2d {
        Conv2d::pointwise(self.in_c, self.out_c)
    }

    pub fn param_count(&self) -> usize {
        self.depthwise().param_count() + self.pointwise().param_count()
    }

    /// Returns the output and the depthwise intermediate needed by backward.
    pub fn forward<T: Real>(&self, x: &Tensor<T>, p: &DwscParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mid = self.depthwise().forward(x, &p.depthwise, &p.depthwise_bias)?;
        let out = self.pointwise().forward(&mid, &p.pointwise, &p.pointwise_bias)?;
        Ok((out, mid))
    }

    pub fn backward<T: Real>(
        &self,
        x: &Tensor<T>,
        mid: &Tensor<T>,
        p: &DwscParams<T>,
        grad_out: &Tensor<T>,
    ) -> Result<DwscGrads<T>> {
        let pw = self.pointwise().backward(mid, &p.pointwise, grad_out)?;
        let dw = self.depthwise().backward(x, &p.depthwise, &pw.input)?;
        Ok(DwscGrads {
            input: dw.input,
            depthwise: dw.weights,
            depthwise_bias: dw.bias,
            pointwise: pw.weights,
            pointwise_bias: pw.bias,
        })
    }
}
