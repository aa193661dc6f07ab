//! Grid search for the mapping parameters that minimize the evaluation error
//! of the Gaussian equivalent model.
//!
//! For every grid point `(mu1, mu2)` the readout is trained on the features
//! `mu1 F^T x_i + mu2 z_i` with the bias fixed to the label mean, and scored
//! on either a fresh teacher sample or a validation set. The winner also
//! yields `mu0 = b / (omega^T 1)`, so that `omega^T (mu0 1)` reproduces the bias.
//!
//! By default one training noise matrix and one set of evaluation draws are
//! shared by all grid points. Under the squared loss this lets the search
//! precompute the Gram blocks of `G = X F` and `Z` once, after which each point
//! costs one Cholesky factorization of the smaller of the `k x k` and `m x m`
//! systems and an `O(n^2)` evaluation.

use faer::{Mat, MatRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate, Dataset, FeatureMatrix, Role, TeacherSpec};
use crate::error::{Error, Result};
use crate::linalg::{dot, gram_lower_nt, gram_lower_tn, matmul_nn, matvec, matvec_t, solve_spd_lower, Matrix, Vector};
use crate::nonlinearity::MappingParams;
use crate::rng::RngStream;
use crate::training::{
    fit_readout_with_bias, gaussian_readout, HingeOptions, LossKind, ModelFamily, NoiseMatrix, TrainedModel,
};

/// Smallest `|omega^T 1|` for which `mu0` is reported.
pub const MU0_DENOMINATOR_FLOOR: f64 = 1e-12;

const TAG_TRAIN_NOISE: u64 = 1;
const TAG_EVAL_DATA: u64 = 2;
const TAG_EVAL_NOISE: u64 = 3;

/// Candidate `mu1` and `mu2` values, searched with `mu1` in the outer loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct SearchGrid {
    mu1: Vec<f64>,
    mu2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    mu1_values: Vec<f64>,
    mu2_values: Vec<f64>,
}

impl TryFrom<GridRepr> for SearchGrid {
    type Error = Error;

    fn try_from(repr: GridRepr) -> Result<Self> {
        SearchGrid::new(repr.mu1_values, repr.mu2_values)
    }
}

impl From<SearchGrid> for GridRepr {
    fn from(grid: SearchGrid) -> Self {
        GridRepr {
            mu1_values: grid.mu1,
            mu2_values: grid.mu2,
        }
    }
}

fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

impl SearchGrid {
    pub fn new(mu1: Vec<f64>, mu2: Vec<f64>) -> Result<Self> {
        if mu1.is_empty() || mu2.is_empty() {
            return Err(Error::InvalidArgument("search grid must have at least one mu1 and one mu2 value".into()));
        }
        if !mu1.iter().chain(&mu2).all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("search grid values must be finite".into()));
        }
        if !strictly_increasing(&mu1) || !strictly_increasing(&mu2) {
            return Err(Error::InvalidArgument("search grid values must be strictly increasing".into()));
        }
        if mu1[0] <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mu1 must be > 0 (the linear coefficient E[z sigma(z)] of an admissible nonlinearity is positive), got {}",
                mu1[0]
            )));
        }
        if mu2[0] < 0.0 {
            return Err(Error::InvalidArgument(format!("mu2 values must be >= 0, got {}", mu2[0])));
        }
        Ok(Self { mu1, mu2 })
    }

    pub fn mu1_values(&self) -> &[f64] {
        &self.mu1
    }

    pub fn mu2_values(&self) -> &[f64] {
        &self.mu2
    }

    pub fn len(&self) -> usize {
        self.mu1.len() * self.mu2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in search order (`mu1` outer, `mu2` inner).
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.mu1.iter().flat_map(|&a| self.mu2.iter().map(move |&b| (a, b))).collect()
    }
}

fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo * ratio.powf(i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

fn scaled_grid(scale_hint: f64, mu1_count: usize) -> SearchGrid {
    assert!(scale_hint > 0.0 && scale_hint.is_finite(), "scale_hint must be positive");
    let (lo, hi) = (0.05 * scale_hint, 4.0 * scale_hint);
    let mut mu2 = vec![0.0];
    mu2.extend(logspace(lo, hi, mu1_count - 1));
    SearchGrid {
        mu1: logspace(lo, hi, mu1_count),
        mu2,
    }
}

/// 24 log-spaced `mu1` values in `[0.05, 4] * scale_hint`, and `mu2` in
/// `{0}` plus 23 log-spaced values over the same range.
pub fn default_grid(scale_hint: f64) -> SearchGrid {
    scaled_grid(scale_hint, 24)
}

/// The 10 x 10 version of [`default_grid`].
pub fn reduced_grid(scale_hint: f64) -> SearchGrid {
    scaled_grid(scale_hint, 10)
}

/// [`reduced_grid`] for the hinge loss, which has no closed-form training,
/// and [`default_grid`] otherwise.
pub fn default_grid_for(loss: LossKind, scale_hint: f64) -> SearchGrid {
    match loss {
        LossKind::Squared => default_grid(scale_hint),
        LossKind::Hinge => reduced_grid(scale_hint),
    }
}

/// What the search minimizes.
#[derive(Clone, Copy, Debug)]
pub enum EvalSource<'a> {
    /// A fresh teacher sample of `samples` rows, by default `max(10^4, 5 m)`.
    Teacher {
        teacher: &'a TeacherSpec,
        samples: Option<usize>,
    },
    /// A held-out validation set.
    Validation(&'a Dataset),
}

/// Whether grid points share their random draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One training noise matrix and one set of evaluation draws for all points.
    #[default]
    Shared,
    /// Fresh training noise and evaluation draws at every point.
    PerPoint,
}

#[derive(Clone, Debug, Default)]
pub struct SearchOptions {
    pub noise: NoiseMode,
    pub hinge: HingeOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub mu1: f64,
    pub mu2: f64,
    pub train_error: f64,
    pub eval_error: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// `(mu0, mu1, mu2)` with `mu0 = bias / (omega^T 1)`.
    pub mu_opt: MappingParams,
    pub omega_best: Vector,
    pub bias: f64,
    pub best_error: f64,
    pub best_train_error: f64,
    /// Index of the winner in [`SearchGrid::points`] order.
    pub best_index: usize,
    pub surface: Vec<SurfacePoint>,
    pub lambda: f64,
    pub loss: LossKind,
    pub train_size: usize,
    /// Stream of the winner's training noise.
    pub train_noise: RngStream,
    /// Stream of the winner's evaluation noise; passing it to
    /// [`TrainedModel::predict`] reproduces the evaluation predictions.
    pub eval_noise: RngStream,
    pub eval_samples: usize,
}

impl SearchResult {
    /// The winning model: features `mu1 F^T x + mu2 z` with the label-mean bias.
    pub fn model(&self, features: FeatureMatrix) -> TrainedModel {
        let z_train = NoiseMatrix::sample(self.train_size, features.k(), &self.train_noise);
        TrainedModel {
            family: ModelFamily::Gaussian {
                mu: MappingParams::new(0.0, self.mu_opt.mu1, self.mu_opt.mu2),
                features,
                z_train,
            },
            omega: self.omega_best.clone(),
            bias: self.bias,
            lambda: self.lambda,
            loss: self.loss,
        }
    }

    /// The error surface as CSV with columns `mu1, mu2, train_error, eval_error, failed`.
    pub fn write_surface_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mu1", "mu2", "train_error", "eval_error", "failed"])?;
        for p in &self.surface {
            w.write_record([
                p.mu1.to_string(),
                p.mu2.to_string(),
                p.train_error.to_string(),
                p.eval_error.to_string(),
                p.failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Grid search with default options.
pub fn optimize_mapping_params(
    train: &Dataset,
    eval: EvalSource<'_>,
    features: &FeatureMatrix,
    loss: LossKind,
    lambda: f64,
    grid: &SearchGrid,
    rng: &RngStream,
) -> Result<SearchResult> {
    optimize_mapping_params_with(train, eval, features, loss, lambda, grid, rng, &SearchOptions::default())
}

struct EvalSet<'a> {
    x: MatRef<'a, f64>,
    y: &'a [f64],
}

/// Precomputed pieces of the squared evaluation error
/// `|e - mu1 X v - s zeta|^2 / (2N)` with `e = y - b`, `v = F omega`, `s = mu2 |omega|`.
struct SquaredEvalForm {
    xtx: Matrix,
    xte: Vector,
    xtz: Vector,
    ee: f64,
    ez: f64,
    zz: f64,
    count: f64,
}

impl SquaredEvalForm {
    fn new(eval: &EvalSet<'_>, bias: f64, zeta: &[f64]) -> Self {
        let e: Vec<f64> = eval.y.iter().map(|v| v - bias).collect();
        Self {
            xtx: matmul_nn(eval.x.transpose(), eval.x),
            xte: matvec_t(eval.x, &e),
            xtz: matvec_t(eval.x, zeta),
            ee: dot(&e, &e),
            ez: dot(&e, zeta),
            zz: dot(zeta, zeta),
            count: eval.y.len() as f64,
        }
    }

    fn error(&self, mu1: f64, noise_scale: f64, v: &[f64]) -> f64 {
        let sv = matvec(self.xtx.as_ref(), v);
        let total = self.ee - 2.0 * mu1 * dot(&self.xte, v) - 2.0 * noise_scale * self.ez
            + mu1 * mu1 * dot(v, &sv)
            + 2.0 * mu1 * noise_scale * dot(&self.xtz, v)
            + noise_scale * noise_scale * self.zz;
        (total / (2.0 * self.count)).max(0.0)
    }
}

/// Gram blocks of `G = X F` and `Z` for the shared-noise squared-loss path.
/// Primal (`k <= m`): `G^T G`, `G^T Z`, `Z^T Z` and `G^T r`, `Z^T r`.
/// Dual: `G G^T`, `G Z^T`, `Z Z^T`.
struct GramBlocks {
    primal: bool,
    gg: Matrix,
    gz: Matrix,
    zz: Matrix,
    gr: Vector,
    zr: Vector,
}

impl GramBlocks {
    fn new(g: &Matrix, z: &Matrix, r: &[f64]) -> Self {
        let primal = g.ncols() <= g.nrows();
        if primal {
            Self {
                primal,
                gg: gram_lower_tn(g.as_ref()),
                gz: matmul_nn(g.transpose(), z.as_ref()),
                zz: gram_lower_tn(z.as_ref()),
                gr: matvec_t(g.as_ref(), r),
                zr: matvec_t(z.as_ref(), r),
            }
        } else {
            Self {
                primal,
                gg: gram_lower_nt(g.as_ref()),
                gz: matmul_nn(g.as_ref(), z.transpose()),
                zz: gram_lower_nt(z.as_ref()),
                gr: Vec::new(),
                zr: Vec::new(),
            }
        }
    }

    /// Lower triangle of `mu1^2 GG + mu1 mu2 (GZ + GZ^T) + mu2^2 ZZ + lambda_eff I`.
    fn system(&self, mu1: f64, mu2: f64, lambda_eff: f64) -> Matrix {
        let d = self.gg.nrows();
        let (a, b, c) = (mu1 * mu1, mu1 * mu2, mu2 * mu2);
        let mut k = Mat::zeros(d, d);
        for j in 0..d {
            for i in j..d {
                k[(i, j)] = a * self.gg[(i, j)] + b * (self.gz[(i, j)] + self.gz[(j, i)]) + c * self.zz[(i, j)];
            }
            k[(j, j)] += lambda_eff;
        }
        k
    }
}

struct PointFit {
    omega: Vector,
    train_error: f64,
    eval_error: f64,
}

fn is_point_failure(err: &Error) -> bool {
    matches!(err, Error::FactorizationFailure { .. } | Error::SolverDivergence { .. })
}

/// Grid search over `(mu1, mu2)`. Returns the first point, in search order,
/// with the smallest evaluation error; failed points are skipped.
#[allow(clippy::too_many_arguments)]
pub fn optimize_mapping_params_with(
    train: &Dataset,
    eval: EvalSource<'_>,
    features: &FeatureMatrix,
    loss: LossKind,
    lambda: f64,
    grid: &SearchGrid,
    rng: &RngStream,
    options: &SearchOptions,
) -> Result<SearchResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive and finite, got {lambda}")));
    }
    let (m, n, k) = (train.len(), features.n(), features.k());
    if train.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "training inputs have {} columns but the feature matrix expects {n}",
            train.dim()
        )));
    }

    let owned_eval;
    let eval_set = match eval {
        EvalSource::Teacher { teacher, samples } => {
            if teacher.n() != n {
                return Err(Error::DimensionMismatch(format!(
                    "teacher dimension {} differs from input dimension {n}",
                    teacher.n()
                )));
            }
            let count = samples.unwrap_or_else(|| (5 * m).max(10_000));
            owned_eval = generate(teacher, count, Role::Test, &rng.child(TAG_EVAL_DATA))?;
            EvalSet {
                x: owned_eval.x.as_ref(),
                y: &owned_eval.y,
            }
        }
        EvalSource::Validation(data) => {
            if data.dim() != n {
                return Err(Error::DimensionMismatch(format!(
                    "validation inputs have {} columns but the feature matrix expects {n}",
                    data.dim()
                )));
            }
            EvalSet {
                x: data.x.as_ref(),
                y: &data.y,
            }
        }
    };
    let eval_count = eval_set.y.len();

    let bias = train.label_mean();
    let r: Vec<f64> = train.y.iter().map(|v| v - bias).collect();
    let g = matmul_nn(train.x.as_ref(), features.f.as_ref());
    let lambda_eff = m as f64 * lambda;
    let points = grid.points();
    let train_noise_root = rng.child(TAG_TRAIN_NOISE);
    let eval_noise_root = rng.child(TAG_EVAL_NOISE);
    let streams_for = |p: usize| match options.noise {
        NoiseMode::Shared => (train_noise_root, eval_noise_root),
        NoiseMode::PerPoint => (train_noise_root.child(p as u64), eval_noise_root.child(p as u64)),
    };
    let draw_zeta = |stream: &RngStream| {
        let mut zeta = vec![0.0; eval_count];
        stream.sampler().fill_normal(&mut zeta, 1.0);
        zeta
    };

    // Explicit per-point fit: used for the hinge loss and for per-point noise.
    let explicit = |p: usize, z: &Matrix, zeta: &[f64]| -> Result<PointFit> {
        let (mu1, mu2) = points[p];
        let a = Mat::from_fn(m, k, |i, j| mu1 * g[(i, j)] + mu2 * z[(i, j)]);
        let omega = fit_readout_with_bias(a.as_ref(), &train.y, bias, loss, lambda, &options.hinge)?;
        let fitted: Vec<f64> = matvec(a.as_ref(), &omega).iter().map(|v| v + bias).collect();
        let mu = MappingParams::new(0.0, mu1, mu2);
        let predicted = gaussian_readout(&mu, features.f.as_ref(), &omega, bias, eval_set.x, Some(zeta));
        Ok(PointFit {
            train_error: loss.mean_loss(&train.y, &fitted),
            eval_error: loss.mean_loss(eval_set.y, &predicted),
            omega,
        })
    };

    let fits: Vec<Result<PointFit>> = match (options.noise, loss) {
        (NoiseMode::Shared, LossKind::Squared) => {
            let z = NoiseMatrix::sample(m, k, &train_noise_root).z;
            let zeta = draw_zeta(&eval_noise_root);
            let blocks = GramBlocks::new(&g, &z, &r);
            let form = SquaredEvalForm::new(&eval_set, bias, &zeta);
            (0..points.len())
                .into_par_iter()
                .map(|p| {
                    let (mu1, mu2) = points[p];
                    let system = blocks.system(mu1, mu2, lambda_eff);
                    let (omega, residual) = if blocks.primal {
                        let rhs: Vec<f64> = blocks.gr.iter().zip(&blocks.zr).map(|(a, b)| mu1 * a + mu2 * b).collect();
                        let omega = solve_spd_lower(system.as_ref(), &rhs, lambda_eff)?;
                        let gw = matvec(g.as_ref(), &omega);
                        let zw = matvec(z.as_ref(), &omega);
                        let residual: Vec<f64> = (0..m).map(|i| r[i] - mu1 * gw[i] - mu2 * zw[i]).collect();
                        (omega, residual)
                    } else {
                        let alpha = solve_spd_lower(system.as_ref(), &r, lambda_eff)?;
                        let gt = matvec_t(g.as_ref(), &alpha);
                        let zt = matvec_t(z.as_ref(), &alpha);
                        let omega: Vec<f64> = gt.iter().zip(&zt).map(|(a, b)| mu1 * a + mu2 * b).collect();
                        (omega, alpha.iter().map(|a| lambda_eff * a).collect())
                    };
                    let v = matvec(features.f.as_ref(), &omega);
                    let noise_scale = mu2 * dot(&omega, &omega).sqrt();
                    Ok(PointFit {
                        train_error: 0.5 * dot(&residual, &residual) / m as f64,
                        eval_error: form.error(mu1, noise_scale, &v),
                        omega,
                    })
                })
                .collect()
        }
        (NoiseMode::Shared, LossKind::Hinge) => {
            let z = NoiseMatrix::sample(m, k, &train_noise_root).z;
            let zeta = draw_zeta(&eval_noise_root);
            (0..points.len()).into_par_iter().map(|p| explicit(p, &z, &zeta)).collect()
        }
        (NoiseMode::PerPoint, _) => (0..points.len())
            .into_par_iter()
            .map(|p| {
                let (train_stream, eval_stream) = streams_for(p);
                let z = NoiseMatrix::sample(m, k, &train_stream).z;
                explicit(p, &z, &draw_zeta(&eval_stream))
            })
            .collect(),
    };

    let mut surface = Vec::with_capacity(points.len());
    let mut best: Option<(usize, PointFit)> = None;
    for (p, fit) in fits.into_iter().enumerate() {
        let (mu1, mu2) = points[p];
        let fit = match fit {
            Ok(fit) if fit.eval_error.is_finite() && fit.train_error.is_finite() => fit,
            Ok(_) => {
                log::debug!("grid point ({mu1}, {mu2}) produced a non-finite error");
                surface.push(failed_point(mu1, mu2));
                continue;
            }
            Err(err) if is_point_failure(&err) => {
                log::debug!("grid point ({mu1}, {mu2}) failed: {err}");
                surface.push(failed_point(mu1, mu2));
                continue;
            }
            Err(err) => return Err(err),
        };
        surface.push(SurfacePoint {
            mu1,
            mu2,
            train_error: fit.train_error,
            eval_error: fit.eval_error,
            failed: false,
        });
        if best.as_ref().is_none_or(|(_, b)| fit.eval_error < b.eval_error) {
            best = Some((p, fit));
        }
    }

    let (best_index, fit) = best.ok_or(Error::AllPointsFailed { points: points.len() })?;
    let sum: f64 = fit.omega.iter().sum();
    if sum.abs() < MU0_DENOMINATOR_FLOOR {
        return Err(Error::DegenerateMu0 { sum });
    }
    let (mu1, mu2) = points[best_index];
    let (train_noise, eval_noise) = streams_for(best_index);
    Ok(SearchResult {
        mu_opt: MappingParams::new(bias / sum, mu1, mu2),
        omega_best: fit.omega,
        bias,
        best_error: fit.eval_error,
        best_train_error: fit.train_error,
        best_index,
        surface,
        lambda,
        loss,
        train_size: m,
        train_noise,
        eval_noise,
        eval_samples: eval_count,
    })
}

fn failed_point(mu1: f64, mu2: f64) -> SurfacePoint {
    SurfacePoint {
        mu1,
        mu2,
        train_error: f64::NAN,
        eval_error: f64::NAN,
        failed: true,
    }
}

#[cfg(test)]
mod tests;
