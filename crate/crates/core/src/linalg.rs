//! Small dense complex linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const SCHUR_MAX_ITER: usize = 10_000;

/// Maximum absolute row sum.
pub fn norm_inf(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn norm_one(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// All eigenvalues of a square complex matrix via the Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let snapshot = || Error::EigenNoConvergence {
        snapshot: format!("{m:.6e}"),
    };
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(snapshot());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(snapshot)?;
    let (_, t) = schur.unpack();
    let vals: Vec<Complex64> = (0..t.nrows()).map(|k| t[(k, k)]).collect();
    if vals.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(snapshot());
    }
    Ok(vals)
}

/// Inverse and 1-norm condition number, or `None` when LU breaks down.
pub fn inverse_with_condition(m: &CMatrix) -> Option<(CMatrix, f64)> {
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    let cond = norm_one(m) * norm_one(&inv);
    Some((inv, cond))
}

/// Relative eigen-residual `‖M v − λ v‖ / (‖M‖ ‖v‖)`.
pub fn eigen_residual(m: &CMatrix, lambda: Complex64, v: &CVector) -> f64 {
    let r = m * v - v * lambda;
    r.norm() / (norm_inf(m).max(f64::MIN_POSITIVE) * v.norm().max(f64::MIN_POSITIVE))
}

/// Inverse iteration for the eigenvector of `lambda`, starting at `start`.
/// After each solve `project` may map the iterate back onto an invariant
/// subspace, which keeps rounding from leaking out of it.
pub fn inverse_iteration(
    m: &CMatrix,
    lambda: Complex64,
    start: CVector,
    project: impl Fn(&mut CVector),
) -> Option<CVector> {
    let n = m.nrows();
    let scale = norm_inf(m).max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let shifted = m - CMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = start;
    project(&mut v);
    let nv = v.norm();
    if nv == 0.0 {
        return None;
    }
    v /= Complex64::from(nv);
    for _ in 0..4 {
        let mut w = lu.solve(&v)?;
        project(&mut w);
        let nw = w.norm();
        if !nw.is_finite() || nw == 0.0 {
            return None;
        }
        v = w / Complex64::from(nw);
    }
    Some(v)
}
