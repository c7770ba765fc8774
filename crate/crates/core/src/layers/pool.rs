//! Max, average, Avg-2Max and global average pooling.
//!
//! Windows only ever visit in-bounds cells: padding never wins a max and is
//! never counted in an average's denominator.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{geometry, Padding, PaddingGeometry, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub pool: usize,
    pub stride: usize,
    pub padding: Padding,
}

/// Flat input index of each output's maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgMax(pub Vec<usize>);

impl Pool2d {
    pub const fn new(pool: usize, stride: usize, padding: Padding) -> Self {
        Pool2d {
            pool,
            stride,
            padding,
        }
    }

    /// 3×3, stride 2, "same": the window of both Avg-2Max terms.
    pub const fn avg2max_window() -> Self {
        Pool2d::new(3, 2, Padding::Same)
    }

    /// 2×2, stride 2, "same": block downsampling.
    pub const fn downsample() -> Self {
        Pool2d::new(2, 2, Padding::Same)
    }

    fn geometries(&self, s: Shape) -> Result<(PaddingGeometry, PaddingGeometry)> {
        if !(2..=3).contains(&self.pool) {
            return Err(Error::OutOfRange {
                what: "pool size",
                value: self.pool,
                min: 2,
                max: 3,
            });
        }
        Ok((
            geometry(s.h, self.pool, self.stride, self.padding)?,
            geometry(s.w, self.pool, self.stride, self.padding)?,
        ))
    }

    pub fn output_shape(&self, s: Shape) -> Result<Shape> {
        let (gy, gx) = self.geometries(s)?;
        Ok(Shape::new(s.n, gy.output, gx.output, s.c))
    }

    /// Visits every output cell with its in-bounds window bounds.
    fn each_window(
        &self,
        s: Shape,
        mut f: impl FnMut(usize, usize, usize, (usize, usize), (usize, usize)),
    ) -> Result<Shape> {
        let (gy, gx) = self.geometries(s)?;
        for n in 0..s.n {
            for oy in 0..gy.output {
                let ry = gy.window_range(oy);
                for ox in 0..gx.output {
                    f(n, oy, ox, ry, gx.window_range(ox));
                }
            }
        }
        Ok(Shape::new(s.n, gy.output, gx.output, s.c))
    }

    pub fn max_forward<T: Real>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ArgMax)> {
        let s = x.shape();
        let out_shape = self.output_shape(s)?;
        let mut out = Vec::with_capacity(out_shape.len());
        let mut arg = Vec::with_capacity(out_shape.len());
        let xd = x.data();
        self.each_window(s, |n, _, _, (y0, y1), (x0, x1)| {
            for c in 0..s.c {
                let mut best = s.index(n, y0, x0, c);
                // strict comparison: the first maximum in row-major window order wins
                for y in y0..y1 {
                    for xx in x0..x1 {
                        let i = s.index(n, y, xx, c);
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        })?;
        Ok((Tensor::from_vec(out_shape, out)?, ArgMax(arg)))
    }

    pub fn max_backward<T: Real>(
        &self,
        input_shape: Shape,
        arg: &ArgMax,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        grad_out
            .shape()
            .expect_eq(&self.output_shape(input_shape)?, "maxpool backward")?;
        let mut gx = Tensor::zeros(input_shape);
        let d = gx.data_mut();
        for (&i, &g) in arg.0.iter().zip(grad_out.data()) {
            d[i] += g;
        }
        Ok(gx)
    }

    pub fn avg_forward<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        let out_shape = self.output_shape(s)?;
        let mut out = Vec::with_capacity(out_shape.len());
        let xd = x.data();
        self.each_window(s, |n, _, _, (y0, y1), (x0, x1)| {
            let count = T::of(((y1 - y0) * (x1 - x0)) as f64);
            for c in 0..s.c {
                let mut sum = T::zero();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        sum += xd[s.index(n, y, xx, c)];
                    }
                }
                out.push(sum / count);
            }
        })?;
        Tensor::from_vec(out_shape, out)
    }

    pub fn avg_backward<T: Real>(&self, input_shape: Shape, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(input_shape)?;
        grad_out.shape().expect_eq(&out_shape, "avgpool backward")?;
        let mut gx = Tensor::zeros(input_shape);
        let d = gx.data_mut();
        let s = input_shape;
        self.each_window(s, |n, oy, ox, (y0, y1), (x0, x1)| {
            let count = T::of(((y1 - y0) * (x1 - x0)) as f64);
            for c in 0..s.c {
                let share = grad_out.at(n, oy, ox, c) / count;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        d[s.index(n, y, xx, c)] += share;
                    }
                }
            }
        })?;
        Ok(gx)
    }
}

/// Avg-2Max pooling: `avgpool(x) − 2·maxpool(x)` with 3×3 windows and
/// stride 2 ("same" padding). Returns the max-term argmax for backward.
pub fn avg2max_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, ArgMax)> {
    let pool = Pool2d::avg2max_window();
    let avg = pool.avg_forward(x)?;
    let (max, arg) = pool.max_forward(x)?;
    let two = T::of(2.0);
    Ok((avg.zip_map(&max, |a, m| a - two * m)?, arg))
}

pub fn avg2max_backward<T: Real>(
    input_shape: Shape,
    arg: &ArgMax,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let pool = Pool2d::avg2max_window();
    let mut gx = pool.avg_backward(input_shape, grad_out)?;
    let minus_two = T::of(-2.0);
    let gmax = pool.max_backward(input_shape, arg, &grad_out.map(|g| minus_two * g))?;
    gx.add_assign(&gmax)?;
    Ok(gx)
}

/// Per-channel spatial mean, shape `(n, 1, 1, c)`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let area = T::of((s.h * s.w) as f64);
    let mut out = vec![T::zero(); s.n * s.c];
    for n in 0..s.n {
        let acc = &mut out[n * s.c..(n + 1) * s.c];
        for px in x.item(n).chunks_exact(s.c) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= area);
    }
    Tensor::from_vec(Shape::new(s.n, 1, 1, s.c), out).expect("GAP shape")
}

pub fn global_avg_pool_backward<T: Real>(input_shape: Shape, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out
        .shape()
        .expect_eq(&Shape::new(input_shape.n, 1, 1, input_shape.c), "GAP backward")?;
    let area = T::of((input_shape.h * input_shape.w) as f64);
    Ok(Tensor::from_fn(input_shape, |n, _, _, c| grad_out.at(n, 0, 0, c) / area))
}
