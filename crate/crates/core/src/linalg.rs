//! Dense double-precision linear algebra shared by every module.
//!
//! Matrices are [`faer::Mat<f64>`]; vectors are plain `Vec<f64>` viewed as
//! faer columns when a kernel needs them. All kernels run sequentially so that
//! results are bit-reproducible on a given machine.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub type Matrix = Mat<f64>;
pub type Vector = Vec<f64>;

/// Draws a `rows x cols` matrix of i.i.d. `N(0, scale^2)` entries.
///
/// Entries are drawn in row-major order, so the first `cols` draws of the
/// stream form the first row.
pub fn sample_standard_normal_matrix(rng: &RngStream, rows: usize, cols: usize, scale: f64) -> Matrix {
    let mut sampler = rng.sampler();
    let mut out = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = scale * sampler.standard_normal();
        }
    }
    out
}

/// `A x`.
pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vector {
    assert_eq!(a.ncols(), x.len());
    let mut out = vec![0.0; a.nrows()];
    matmul(
        ColMut::from_slice_mut(&mut out).as_mat_mut(),
        Accum::Replace,
        a,
        ColRef::from_slice(x).as_mat(),
        1.0,
        Par::Seq,
    );
    out
}

/// `A^T x`.
pub fn matvec_t(a: MatRef<'_, f64>, x: &[f64]) -> Vector {
    matvec(a.transpose(), x)
}

/// `A B`.
pub fn matmul_nn(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Matrix {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// Lower triangle (diagonal included) of `A^T A`; the strict upper part is zero.
pub fn gram_lower_tn(a: MatRef<'_, f64>) -> Matrix {
    let k = a.ncols();
    let mut out = Mat::zeros(k, k);
    triangular::matmul(
        out.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        a.transpose(),
        BlockStructure::Rectangular,
        a,
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    out
}

/// Lower triangle (diagonal included) of `A A^T`.
pub fn gram_lower_nt(a: MatRef<'_, f64>) -> Matrix {
    gram_lower_tn(a.transpose())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn is_finite_matrix(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

/// Solves `K x = rhs` for symmetric positive definite `K`, reading only the
/// lower triangle of `K`.
///
/// Fails when a Cholesky pivot is below `dim * eps` times the largest
/// diagonal entry, i.e. when `K` is singular to working precision.
pub fn solve_spd_lower(k: MatRef<'_, f64>, rhs: &[f64], lambda_eff: f64) -> Result<Vector> {
    let fail = || Error::FactorizationFailure { lambda_eff };
    let llt = k.llt(Side::Lower).map_err(|_| fail())?;
    let dim = k.nrows();
    let max_diag = (0..dim).fold(0.0f64, |acc, i| acc.max(k[(i, i)].abs()));
    let l = llt.L();
    let min_pivot = (0..dim).fold(f64::INFINITY, |acc, i| acc.min(l[(i, i)] * l[(i, i)]));
    if !(min_pivot > dim as f64 * f64::EPSILON * max_diag) {
        return Err(fail());
    }
    let mut x = rhs.to_vec();
    llt.solve_in_place(ColMut::from_slice_mut(&mut x).as_mat_mut());
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(fail())
    }
}

fn add_to_diagonal(k: &mut Matrix, value: f64) {
    for i in 0..k.nrows() {
        k[(i, i)] += value;
    }
}

fn check_ridge_inputs(a: MatRef<'_, f64>, r: &[f64], lambda_eff: f64) -> Result<()> {
    if !(lambda_eff > 0.0 && lambda_eff.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda_eff must be positive and finite, got {lambda_eff}"
        )));
    }
    if a.nrows() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but target has length {}",
            a.nrows(),
            r.len()
        )));
    }
    Ok(())
}

/// Minimizer of `|A w - r|^2 / 2 + lambda_eff |w|^2 / 2`.
///
/// Uses the `k x k` normal equations when `A` has at most as many columns as
/// rows and the `m x m` dual system `A^T (A A^T + lambda_eff I)^{-1} r`
/// otherwise, so the factorized matrix is always the smaller of the two.
pub fn ridge_solve(a: MatRef<'_, f64>, r: &[f64], lambda_eff: f64) -> Result<Vector> {
    if a.ncols() <= a.nrows() {
        ridge_solve_primal(a, r, lambda_eff)
    } else {
        ridge_solve_dual(a, r, lambda_eff)
    }
}

/// Ridge solution via `(A^T A + lambda_eff I) w = A^T r`.
pub fn ridge_solve_primal(a: MatRef<'_, f64>, r: &[f64], lambda_eff: f64) -> Result<Vector> {
    check_ridge_inputs(a, r, lambda_eff)?;
    let mut gram = gram_lower_tn(a);
    add_to_diagonal(&mut gram, lambda_eff);
    solve_spd_lower(gram.as_ref(), &matvec_t(a, r), lambda_eff)
}

/// Ridge solution via `w = A^T (A A^T + lambda_eff I)^{-1} r`.
pub fn ridge_solve_dual(a: MatRef<'_, f64>, r: &[f64], lambda_eff: f64) -> Result<Vector> {
    check_ridge_inputs(a, r, lambda_eff)?;
    let mut gram = gram_lower_nt(a);
    add_to_diagonal(&mut gram, lambda_eff);
    let alpha = solve_spd_lower(gram.as_ref(), r, lambda_eff)?;
    Ok(matvec_t(a, &alpha))
}

/// `A^T (A w - r) + lambda_eff w`, the gradient of the ridge objective.
pub fn ridge_gradient(a: MatRef<'_, f64>, r: &[f64], lambda_eff: f64, w: &[f64]) -> Vector {
    let mut residual = matvec(a, w);
    for (res, target) in residual.iter_mut().zip(r) {
        *res -= target;
    }
    let mut grad = matvec_t(a, &residual);
    for (g, wi) in grad.iter_mut().zip(w) {
        *g += lambda_eff * wi;
    }
    grad
}
