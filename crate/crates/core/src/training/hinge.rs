//! Hinge-loss training with the bias held fixed.
//!
//! Minimizes `P(w) = (1/m) sum_i max(0, 1 - y_i (a_i^T w + b)) + (lambda/2) |w|^2`
//! by dual coordinate descent. Writing `c_i = 1 - y_i b` and `C = 1/(lambda m)`,
//! `P / lambda = |w|^2/2 + C sum_i max(0, c_i - y_i a_i^T w)` has the box-constrained
//! dual `max_{0 <= beta <= C} sum_i c_i beta_i - |w(beta)|^2 / 2` with
//! `w(beta) = sum_i beta_i y_i a_i`. Each epoch sweeps the coordinates in a
//! random order; the duality gap certifies the stopping point.

use faer::MatRef;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HingeOptions {
    /// Stop once `gap <= tol * primal` (both in the `P / lambda` scale).
    pub tol: f64,
    pub max_epochs: usize,
    /// Seed for the coordinate order.
    pub seed: u64,
}

impl Default for HingeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_epochs: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HingeSolution {
    pub omega: Vec<f64>,
    /// `P(omega)`.
    pub objective: f64,
    /// `P(0)`, the objective at the starting point.
    pub start_objective: f64,
    /// Best primal objective after each epoch; non-increasing.
    pub history: Vec<f64>,
    /// Final relative duality gap.
    pub gap: f64,
    pub epochs: usize,
}

/// `P(w)` for the fixed bias `b`.
pub fn hinge_objective(a: MatRef<'_, f64>, y: &[f64], bias: f64, lambda: f64, omega: &[f64]) -> f64 {
    let m = a.nrows();
    let scores = crate::linalg::matvec(a, omega);
    let loss: f64 = scores
        .iter()
        .zip(y)
        .map(|(s, yi)| (1.0 - yi * (s + bias)).max(0.0))
        .sum();
    loss / m as f64 + 0.5 * lambda * crate::linalg::dot(omega, omega)
}

pub fn solve_hinge(
    a: MatRef<'_, f64>,
    y: &[f64],
    bias: f64,
    lambda: f64,
    options: &HingeOptions,
) -> Result<HingeSolution> {
    let (m, k) = (a.nrows(), a.ncols());
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!("{m} rows but {} labels", y.len())));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let cap = 1.0 / (lambda * m as f64);
    let targets: Vec<f64> = y.iter().map(|yi| 1.0 - yi * bias).collect();
    // Row-major copy of y_i a_i for cache-friendly coordinate sweeps.
    let rows: Vec<f64> = (0..m).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| y[i] * a[(i, j)]).collect();
    let row = |i: usize| &rows[i * k..(i + 1) * k];
    let diag: Vec<f64> = (0..m).map(|i| row(i).iter().map(|v| v * v).sum()).collect();

    let mut beta = vec![0.0; m];
    let mut omega = vec![0.0; k];
    let mut order: Vec<usize> = (0..m).collect();
    let mut sampler = RngStream::new(options.seed, 0).sampler();

    // Primal and dual values in the P / lambda scale.
    let primal_scaled = |omega: &[f64]| -> f64 {
        let loss: f64 = (0..m)
            .map(|i| (targets[i] - crate::linalg::dot(row(i), omega)).max(0.0))
            .sum();
        0.5 * crate::linalg::dot(omega, omega) + cap * loss
    };
    let start_scaled = primal_scaled(&omega);
    let mut best_scaled = start_scaled;
    let mut best_omega = omega.clone();
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;

    for epoch in 1..=options.max_epochs {
        sampler.shuffle(&mut order);
        for &i in &order {
            let old = beta[i];
            let new = if diag[i] > 0.0 {
                let grad = crate::linalg::dot(row(i), &omega) - targets[i];
                (old - grad / diag[i]).clamp(0.0, cap)
            } else if targets[i] > 0.0 {
                cap
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                for (w, v) in omega.iter_mut().zip(row(i)) {
                    *w += delta * v;
                }
                beta[i] = new;
            }
        }
        let primal = primal_scaled(&omega);
        let dual = crate::linalg::dot(&targets, &beta) - 0.5 * crate::linalg::dot(&omega, &omega);
        if primal < best_scaled {
            best_scaled = primal;
            best_omega.copy_from_slice(&omega);
        }
        history.push(lambda * best_scaled);
        gap = (best_scaled - dual) / best_scaled.abs().max(f64::MIN_POSITIVE);
        if gap <= options.tol {
            return Ok(HingeSolution {
                objective: hinge_objective(a, y, bias, lambda, &best_omega),
                omega: best_omega,
                start_objective: lambda * start_scaled,
                history,
                gap,
                epochs: epoch,
            });
        }
    }
    Err(Error::SolverDivergence {
        epochs: options.max_epochs,
        gap,
        tolerance: options.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_standard_normal_matrix;

    fn instance(seed: u64, m: usize, k: usize) -> (faer::Mat<f64>, Vec<f64>) {
        let a = sample_standard_normal_matrix(&RngStream::new(seed, 0), m, k, 1.0);
        let mut s = RngStream::new(seed, 1).sampler();
        let y = (0..m).map(|_| if s.uniform() < 0.5 { -1.0 } else { 1.0 }).collect();
        (a, y)
    }

    #[test]
    fn history_is_monotone_and_below_start() {
        let (a, y) = instance(1, 40, 8);
        let sol = solve_hinge(a.as_ref(), &y, 0.1, 0.05, &HingeOptions::default()).unwrap();
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.objective <= sol.start_objective);
        assert!(sol.gap <= 1e-9);
        let recomputed = hinge_objective(a.as_ref(), &y, 0.1, 0.05, &sol.omega);
        assert_eq!(recomputed, sol.objective);
    }

    #[test]
    fn perturbations_do_not_improve() {
        let (a, y) = instance(2, 30, 5);
        let sol = solve_hinge(a.as_ref(), &y, 0.0, 0.1, &HingeOptions::default()).unwrap();
        let mut s = RngStream::new(3, 3).sampler();
        for _ in 0..200 {
            let w: Vec<f64> = sol.omega.iter().map(|v| v + 1e-3 * s.standard_normal()).collect();
            assert!(hinge_objective(a.as_ref(), &y, 0.0, 0.1, &w) >= sol.objective * (1.0 - 1e-9));
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let (a, y) = instance(4, 50, 10);
        let options = HingeOptions {
            tol: 1e-15,
            max_epochs: 2,
            ..Default::default()
        };
        assert!(matches!(
            solve_hinge(a.as_ref(), &y, 0.0, 1e-3, &options),
            Err(Error::SolverDivergence { epochs: 2, .. })
        ));
    }
}
