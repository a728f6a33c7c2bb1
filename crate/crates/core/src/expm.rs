//! Matrix exponential by scaling and squaring with a truncated Taylor series.
//!
//! The matrix is scaled by `2^-k` until its infinity norm is at most 0.5, the
//! series is summed until the next term is negligible against the partial
//! sum, and the result is squared `k` times.

use nalgebra::{DMatrix, DVector};

/// Largest row sum of absolute values.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const SCALED_NORM: f64 = 0.5;
const TRUNCATION: f64 = 1e-16;
const MAX_TERMS: usize = 64;

/// Number of halvings needed to bring `norm` down to [`SCALED_NORM`].
pub fn squaring_depth(norm: f64) -> u32 {
    if norm <= SCALED_NORM {
        0
    } else {
        (norm / SCALED_NORM).log2().ceil() as u32
    }
}

/// Taylor series of `exp(b)` for `‖b‖∞ <= 0.5`.
fn taylor(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for j in 1..MAX_TERMS {
        term = &term * b / j as f64;
        if inf_norm(&term) < TRUNCATION * inf_norm(&sum) {
            break;
        }
        sum += &term;
    }
    sum
}

/// `exp(a)`.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm requires a square matrix");
    let k = squaring_depth(inf_norm(a));
    let scaled = a / 2f64.powi(k as i32);
    let mut e = taylor(&scaled);
    for _ in 0..k {
        e = &e * &e;
    }
    e
}

/// `exp(t a) x`.
pub fn expm_apply(a: &DMatrix<f64>, t: f64, x: &[f64]) -> Vec<f64> {
    let e = expm(&(a * t));
    let y = e * DVector::from_column_slice(x);
    y.iter().copied().collect()
}
