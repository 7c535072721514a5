use nalgebra::{DMatrix, DVector};

use crate::error::FitError;

pub const SINGULAR_THRESHOLD: f64 = 1e12;

/// 2-norm condition number; infinite for singular or non-finite input.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 1.0;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` with full pivoting, refusing systems with condition number above `threshold`.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>, threshold: f64) -> Result<(DVector<f64>, f64), FitError> {
    let cond = condition_number(a);
    if !(cond <= threshold) {
        return Err(FitError::SingularSystem(cond));
    }
    let x = a
        .clone()
        .full_piv_lu()
        .solve(b)
        .ok_or(FitError::SingularSystem(cond))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FitError::SingularSystem(cond));
    }
    Ok((x, cond))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
