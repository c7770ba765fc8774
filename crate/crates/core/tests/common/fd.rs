//! Central finite differences, independent of every backward pass.

pub const STEP: f64 = 1e-5;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for each requested index.
pub fn central_diff(
    x: &[f64],
    indices: &[usize],
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + STEP;
            let plus = f(&probe);
            probe[i] = orig - STEP;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

pub fn all_indices(len: usize) -> Vec<usize> {
    (0..len).collect()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = norm(analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Largest `|a − b|`.
pub fn abs_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Sum-weighted scalar loss `Σ out ⊙ r` used to probe a layer's vector-Jacobian product.
pub fn weighted_sum(out: &[f64], r: &[f64]) -> f64 {
    out.iter().zip(r).map(|(a, b)| a * b).sum()
}
