//! Direct-from-definition reference implementations. They share no code
//! with the library beyond the `Tensor` container.

use fibnet::{Shape, Tensor};

/// Output length and leading pad of "same" padding: `ceil(n / s)` outputs,
/// total pad split with the odd pixel after.
pub fn same_pad(n: usize, k: usize, s: usize) -> (usize, usize) {
    let out = n.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(n);
    (out, total / 2)
}

/// Naive zero-padded cross-correlation with weights laid out
/// `(kh, kw, in, out)`.
pub fn conv_same(x: &Tensor<f64>, w: &[f64], b: &[f64], k: usize, stride: usize, out_c: usize) -> Tensor<f64> {
    let s = x.shape();
    let (oh, pt) = same_pad(s.h, k, stride);
    let (ow, pl) = same_pad(s.w, k, stride);
    Tensor::from_fn(Shape::new(s.n, oh, ow, out_c), |n, oy, ox, o| {
        let mut acc = b[o];
        for ky in 0..k {
            for kx in 0..k {
                let iy = (oy * stride + ky) as isize - pt as isize;
                let ix = (ox * stride + kx) as isize - pl as isize;
                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                    continue;
                }
                for i in 0..s.c {
                    acc += x.at(n, iy as usize, ix as usize, i) * w[((ky * k + kx) * s.c + i) * out_c + o];
                }
            }
        }
        acc
    })
}

/// Window values of a "same"-padded pool, padding excluded.
fn windows(x: &Tensor<f64>, k: usize, stride: usize) -> (Shape, Vec<Vec<f64>>) {
    let s = x.shape();
    let (oh, pt) = same_pad(s.h, k, stride);
    let (ow, pl) = same_pad(s.w, k, stride);
    let shape = Shape::new(s.n, oh, ow, s.c);
    let mut out = Vec::with_capacity(shape.len());
    for n in 0..s.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..s.c {
                    let mut vals = Vec::new();
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pt as isize;
                            let ix = (ox * stride + kx) as isize - pl as isize;
                            if iy >= 0 && ix >= 0 && iy < s.h as isize && ix < s.w as isize {
                                vals.push(x.at(n, iy as usize, ix as usize, c));
                            }
                        }
                    }
                    out.push(vals);
                }
            }
        }
    }
    (shape, out)
}

pub fn max_pool(x: &Tensor<f64>, k: usize, stride: usize) -> Tensor<f64> {
    let (shape, w) = windows(x, k, stride);
    let data = w.iter().map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn avg_pool(x: &Tensor<f64>, k: usize, stride: usize) -> Tensor<f64> {
    let (shape, w) = windows(x, k, stride);
    let data = w.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn avg2max(x: &Tensor<f64>) -> Tensor<f64> {
    let a = avg_pool(x, 3, 2);
    let m = max_pool(x, 3, 2);
    Tensor::from_vec(
        a.shape(),
        a.data().iter().zip(m.data()).map(|(a, m)| a - 2.0 * m).collect(),
    )
    .unwrap()
}
