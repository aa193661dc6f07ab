//! Monte Carlo sweeps over the model complexity `k/m`.
//!
//! A sweep trains, for every ratio and trial, each baseline activation as an
//! RFM and as its Gaussian equivalent, and optionally the grid-search optimum
//! together with the two activations synthesized from it. Results are
//! aggregated into a mean and a standard error per `(ratio, model, metric)`.
//!
//! Random streams are derived from the sweep seed as follows:
//!
//! * `child(0)`: the teacher direction, fixed for the whole sweep;
//! * `child(1).child(t)`: the training and test data of trial `t`, shared by
//!   all ratios of that trial;
//! * `child(2).child2(t, r)`: everything specific to trial `t` and ratio `r`
//!   (feature matrix, Gaussian noise, search streams).
//!
//! Trials run in parallel; aggregation walks them in index order, so the
//! output does not depend on the number of worker threads.

mod output;
mod report;

pub use output::{write_results_csv, write_surface_csv, RESULTS_COLUMNS, SURFACE_COLUMNS};
pub use report::{
    equivalence_report, model_curve, monotonicity_check, relative_gap, EquivalenceReport, EquivalenceRow,
    DEFAULT_EQUIVALENCE_TOLERANCE,
};

use faer::MatRef;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate, make_teacher, sample_features, Dataset, FeatureMatrix, Role, TeacherKind, TeacherSpec};
use crate::error::{Error, Result};
use crate::gridsearch::{optimize_mapping_params_with, EvalSource, NoiseMode, SearchGrid, SearchOptions, SearchResult};
use crate::linalg::{matmul_nn, matvec, Matrix, Vector};
use crate::nonlinearity::{moments, synthesize_piecewise, synthesize_polynomial, MappingParams, Nonlinearity};
use crate::rng::RngStream;
use crate::training::{accuracy, fit_readout, gaussian_readout, HingeOptions, LossKind, NoiseMatrix, TrainOptions};

/// Test rows featurized at a time when scoring RFMs.
const EVAL_BLOCK: usize = 1024;

const TAG_TEACHER: u64 = 0;
const TAG_TRIAL_DATA: u64 = 1;
const TAG_CELL: u64 = 2;

const CELL_FEATURES: u64 = 0;
const CELL_TRAIN_NOISE: u64 = 1;
const CELL_TEST_NOISE: u64 = 2;
const CELL_SEARCH: u64 = 3;

pub const OPTIMAL_GAUSSIAN_ID: &str = "gauss:optimal";
pub const POLYNOMIAL_RFM_ID: &str = "rfm:polynomial";
pub const PIECEWISE_RFM_ID: &str = "rfm:piecewise";

pub fn rfm_id(sigma: &Nonlinearity) -> String {
    format!("rfm:{sigma}")
}

pub fn gaussian_id(sigma: &Nonlinearity) -> String {
    format!("gauss:{sigma}")
}

/// Where the data of a sweep comes from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// Fresh teacher-student data every trial.
    Teacher {
        n: usize,
        m: usize,
        psi: TeacherKind,
        delta: f64,
        /// Size of the per-trial test set.
        test_samples: usize,
        /// Evaluation draws inside the grid search; `None` uses the search default.
        search_samples: Option<usize>,
    },
    /// A fixed dataset; only the model randomness changes between trials.
    Fixed {
        train: Dataset,
        /// Required when the sweep optimizes the mapping parameters.
        validation: Option<Dataset>,
        test: Dataset,
    },
}

impl DataSource {
    pub fn input_dim(&self) -> usize {
        match self {
            DataSource::Teacher { n, .. } => *n,
            DataSource::Fixed { train, .. } => train.dim(),
        }
    }

    pub fn train_size(&self) -> usize {
        match self {
            DataSource::Teacher { m, .. } => *m,
            DataSource::Fixed { train, .. } => train.len(),
        }
    }

    fn is_binary(&self) -> bool {
        match self {
            DataSource::Teacher { psi, delta, .. } => *psi == TeacherKind::Sign && *delta == 0.0,
            DataSource::Fixed { train, test, .. } => train.is_binary() && test.is_binary(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub data: DataSource,
    /// Values of `k/m`; each gives `k = round(ratio m)`.
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub loss: LossKind,
    pub lambda: f64,
    pub baselines: Vec<Nonlinearity>,
    pub optimize: bool,
    pub grid: SearchGrid,
    pub search_noise: NoiseMode,
    pub hinge: HingeOptions,
    pub seed: u64,
}

impl SweepConfig {
    pub fn feature_counts(&self) -> Vec<usize> {
        let m = self.data.train_size() as f64;
        self.ratios.iter().map(|r| (r * m).round() as usize).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidArgument(msg));
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.ratios.is_empty() {
            return invalid("at least one ratio is required".into());
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return invalid(format!("ratios must be positive and finite, got {r}"));
        }
        if let Some(i) = self.feature_counts().iter().position(|&k| k == 0) {
            return invalid(format!("ratio {} gives zero features", self.ratios[i]));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be positive and finite, got {}", self.lambda));
        }
        if self.baselines.is_empty() && !self.optimize {
            return invalid("nothing to run: no baselines and optimize is off".into());
        }
        match &self.data {
            DataSource::Teacher {
                n,
                m,
                delta,
                test_samples,
                search_samples,
                ..
            } => {
                if *n == 0 || *m == 0 || *test_samples == 0 || *search_samples == Some(0) {
                    return invalid("n, m and sample counts must be at least 1".into());
                }
                if !(*delta >= 0.0 && delta.is_finite()) {
                    return invalid(format!("delta must be non-negative, got {delta}"));
                }
            }
            DataSource::Fixed { train, validation, test } => {
                let n = train.dim();
                if test.dim() != n || validation.as_ref().is_some_and(|v| v.dim() != n) {
                    return Err(Error::DimensionMismatch("datasets have different input dimensions".into()));
                }
                if self.optimize && validation.is_none() {
                    return invalid("optimizing on a fixed dataset needs a validation set".into());
                }
            }
        }
        if self.loss == LossKind::Hinge && !self.data.is_binary() {
            return invalid("the hinge loss needs +-1 labels".into());
        }
        Ok(())
    }

    /// Model ids in output order.
    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .baselines
            .iter()
            .flat_map(|s| [rfm_id(s), gaussian_id(s)])
            .collect();
        if self.optimize {
            ids.extend([OPTIMAL_GAUSSIAN_ID, POLYNOMIAL_RFM_ID, PIECEWISE_RFM_ID].map(String::from));
        }
        ids
    }
}

/// Mean and standard error over the successful trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(trials)`; zero for one trial.
    pub stderr: f64,
    pub trials: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                trials: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            stderr,
            trials: count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub train_error: Summary,
    pub gen_error: Summary,
    /// Present for `+-1` labels.
    pub train_acc: Option<Summary>,
    pub gen_acc: Option<Summary>,
    /// The optimized `(mu0, mu1, mu2)`, for the optimal Gaussian model only.
    pub mu_opt: Option<[Summary; 3]>,
    /// Trials in which this model failed.
    pub failures: usize,
}

/// Trial-averaged error surface of the grid search at one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub mu1: f64,
    pub mu2: f64,
    pub train_error: f64,
    pub eval_error: f64,
    /// Trials in which this point failed.
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub ratio: f64,
    pub k: usize,
    pub models: Vec<ModelRecord>,
    pub surface: Option<Vec<SurfaceSummary>>,
}

impl SweepRecord {
    pub fn model(&self, id: &str) -> Option<&ModelRecord> {
        self.models.iter().find(|r| r.model_id == id)
    }
}

/// Per-trial outcome of one model.
#[derive(Clone, Debug)]
struct Metrics {
    train_error: f64,
    gen_error: f64,
    train_acc: Option<f64>,
    gen_acc: Option<f64>,
    mu: Option<MappingParams>,
}

struct CellOutcome {
    /// `None` for models that failed in this cell.
    models: Vec<Option<Metrics>>,
    surface: Option<Vec<crate::gridsearch::SurfacePoint>>,
}

struct TrialData<'a> {
    train: std::borrow::Cow<'a, Dataset>,
    test: std::borrow::Cow<'a, Dataset>,
    validation: Option<&'a Dataset>,
}

pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let root = RngStream::new(config.seed, 0);
    let teacher = match &config.data {
        DataSource::Teacher { n, psi, delta, .. } => Some(make_teacher(*n, *psi, *delta, &root.child(TAG_TEACHER))?),
        DataSource::Fixed { .. } => None,
    };
    let baseline_mu = config
        .baselines
        .iter()
        .map(moments)
        .collect::<Result<Vec<MappingParams>>>()?;
    let ks = config.feature_counts();

    let outcomes: Vec<Vec<CellOutcome>> = (0..config.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<CellOutcome>> {
            let data = trial_data(config, teacher.as_ref(), &root.child(TAG_TRIAL_DATA).child(t as u64))?;
            let cells = ks
                .iter()
                .enumerate()
                .map(|(r, &k)| {
                    let rng = root.child(TAG_CELL).child2(t as u64, r as u64);
                    run_cell(config, teacher.as_ref(), &baseline_mu, &data, k, &rng)
                })
                .collect::<Result<Vec<_>>>()?;
            log::info!("trial {}/{} done", t + 1, config.trials);
            Ok(cells)
        })
        .collect::<Result<_>>()?;

    let ids = config.model_ids();
    let binary = config.data.is_binary();
    let mut records = Vec::with_capacity(ks.len());
    for (r, (&ratio, &k)) in config.ratios.iter().zip(&ks).enumerate() {
        let cells: Vec<&CellOutcome> = outcomes.iter().map(|trial| &trial[r]).collect();
        let models = ids
            .iter()
            .enumerate()
            .map(|(i, id)| aggregate_model(id, cells.iter().map(|c| &c.models[i]), binary))
            .collect();
        let surface = config.optimize.then(|| aggregate_surface(&config.grid, &cells));
        records.push(SweepRecord { ratio, k, models, surface });
    }
    Ok(records)
}

/// True when no model produced a result in any cell.
pub fn is_total_failure(records: &[SweepRecord]) -> bool {
    records
        .iter()
        .all(|rec| rec.models.iter().all(|m| m.train_error.trials == 0))
}

fn trial_data<'a>(config: &'a SweepConfig, teacher: Option<&TeacherSpec>, rng: &RngStream) -> Result<TrialData<'a>> {
    use std::borrow::Cow;
    Ok(match &config.data {
        DataSource::Teacher { m, test_samples, .. } => {
            let teacher = teacher.expect("teacher source has a teacher");
            TrialData {
                train: Cow::Owned(generate(teacher, *m, Role::Train, &rng.child(0))?),
                test: Cow::Owned(generate(teacher, *test_samples, Role::Test, &rng.child(1))?),
                validation: None,
            }
        }
        DataSource::Fixed { train, validation, test } => TrialData {
            train: Cow::Borrowed(train),
            test: Cow::Borrowed(test),
            validation: validation.as_ref(),
        },
    })
}

/// A trained readout on a nonlinearity's features.
struct RfmFit {
    sigma: Nonlinearity,
    omega: Vector,
    bias: f64,
    train_pred: Vector,
}

fn run_cell(
    config: &SweepConfig,
    teacher: Option<&TeacherSpec>,
    baseline_mu: &[MappingParams],
    data: &TrialData<'_>,
    k: usize,
    rng: &RngStream,
) -> Result<CellOutcome> {
    let (train, test) = (data.train.as_ref(), data.test.as_ref());
    let n = train.dim();
    let features = sample_features(n, k, &rng.child(CELL_FEATURES))?;
    let g_train = matmul_nn(train.x.as_ref(), features.f.as_ref());
    let options = TrainOptions {
        joint_bias: false,
        hinge: config.hinge,
    };
    let fit_rfm = |sigma: &Nonlinearity| -> Result<RfmFit> {
        let a = Matrix::from_fn(g_train.nrows(), k, |i, j| sigma.evaluate(g_train[(i, j)]));
        let (omega, bias) = fit_readout(a.as_ref(), &train.y, config.loss, config.lambda, &options)?;
        let train_pred = readout(a.as_ref(), &omega, bias);
        Ok(RfmFit {
            sigma: *sigma,
            omega,
            bias,
            train_pred,
        })
    };

    let binary = config.data.is_binary();
    let score = |train_pred: &[f64], test_pred: &[f64], mu: Option<MappingParams>| Metrics {
        train_error: config.loss.mean_loss(&train.y, train_pred),
        gen_error: config.loss.mean_loss(&test.y, test_pred),
        train_acc: binary.then(|| accuracy(&train.y, train_pred)),
        gen_acc: binary.then(|| accuracy(&test.y, test_pred)),
        mu,
    };

    // Common random numbers: all Gaussian models of a cell share Ztrain and
    // the test draws.
    let z_train = (!baseline_mu.is_empty()).then(|| NoiseMatrix::sample(train.len(), k, &rng.child(CELL_TRAIN_NOISE)));
    let mut zeta = vec![0.0; test.len()];
    rng.child(CELL_TEST_NOISE).sampler().fill_normal(&mut zeta, 1.0);
    let gaussian_test = |mu: &MappingParams, omega: &[f64], bias: f64| {
        let noisy = mu.mu2 != 0.0 && omega.iter().any(|&w| w != 0.0);
        gaussian_readout(mu, features.f.as_ref(), omega, bias, test.x.as_ref(), noisy.then_some(&zeta[..]))
    };

    let mut rfm_fits: Vec<Result<RfmFit>> = Vec::new();
    let mut gaussian_metrics: Vec<Result<Metrics>> = Vec::new();
    for (sigma, mu) in config.baselines.iter().zip(baseline_mu) {
        rfm_fits.push(fit_rfm(sigma));
        let z = &z_train.as_ref().expect("noise sampled for baselines").z;
        gaussian_metrics.push((|| {
            mu.check_trainable()?;
            let a = Matrix::from_fn(train.len(), k, |i, j| mu.mu0 + mu.mu1 * g_train[(i, j)] + mu.mu2 * z[(i, j)]);
            let (omega, bias) = fit_readout(a.as_ref(), &train.y, config.loss, config.lambda, &options)?;
            let train_pred = readout(a.as_ref(), &omega, bias);
            Ok(score(&train_pred, &gaussian_test(mu, &omega, bias), Some(*mu)))
        })());
    }

    let mut optimal: Option<Option<Metrics>> = None;
    let mut surface = None;
    if config.optimize {
        match search_cell(config, teacher, data, &features, &rng.child(CELL_SEARCH)) {
            Ok(result) => {
                surface = Some(result.surface.clone());
                let mu = result.mu_opt;
                let model_mu = MappingParams::new(0.0, mu.mu1, mu.mu2);
                let model = result.model(features.clone());
                let train_pred = model.predict_dataset(train, &rng.child(CELL_TEST_NOISE))?;
                let test_pred = gaussian_test(&model_mu, &result.omega_best, result.bias);
                optimal = Some(Some(score(&train_pred, &test_pred, Some(mu))));
                rfm_fits.push(fit_rfm(&synthesize_polynomial(&mu)));
                rfm_fits.push(fit_rfm(&synthesize_piecewise(&mu)));
            }
            Err(err) => {
                log::warn!("grid search failed at k = {k}: {err}");
                optimal = Some(None);
                rfm_fits.push(Err(err));
                rfm_fits.push(Err(Error::InvalidArgument("no optimized parameters".into())));
            }
        }
    }

    let rfm_fits: Vec<Option<RfmFit>> = rfm_fits.into_iter().map(|fit| logged(fit, k)).collect();
    let ok_fits: Vec<&RfmFit> = rfm_fits.iter().flatten().collect();
    let mut test_preds = rfm_test_predictions(&ok_fits, test.x.as_ref(), &features).into_iter();
    let mut rfm_metrics = rfm_fits.iter().map(|fit| {
        fit.as_ref().map(|fit| {
            let test_pred = test_preds.next().expect("one prediction per fitted model");
            score(&fit.train_pred, &test_pred, None)
        })
    });

    let mut models = Vec::with_capacity(config.model_ids().len());
    for g in gaussian_metrics {
        models.push(rfm_metrics.next().expect("baseline RFM"));
        models.push(logged(g, k));
    }
    if let Some(optimal) = optimal {
        models.push(optimal);
        models.extend(rfm_metrics);
    }
    Ok(CellOutcome { models, surface })
}

fn logged<T>(result: Result<T>, k: usize) -> Option<T> {
    result.map_err(|err| log::warn!("model failed at k = {k}: {err}")).ok()
}

fn search_cell(
    config: &SweepConfig,
    teacher: Option<&TeacherSpec>,
    data: &TrialData<'_>,
    features: &FeatureMatrix,
    rng: &RngStream,
) -> Result<SearchResult> {
    let eval = match (&config.data, teacher, data.validation) {
        (DataSource::Teacher { search_samples, .. }, Some(teacher), _) => EvalSource::Teacher {
            teacher,
            samples: *search_samples,
        },
        (_, _, Some(validation)) => EvalSource::Validation(validation),
        _ => return Err(Error::InvalidArgument("no evaluation source for the grid search".into())),
    };
    let options = SearchOptions {
        noise: config.search_noise,
        hinge: config.hinge,
    };
    optimize_mapping_params_with(
        &data.train,
        eval,
        features,
        config.loss,
        config.lambda,
        &config.grid,
        rng,
        &options,
    )
}

fn readout(a: MatRef<'_, f64>, omega: &[f64], bias: f64) -> Vector {
    matvec(a, omega).into_iter().map(|v| v + bias).collect()
}

/// Test predictions of several RFMs sharing one feature matrix, computing
/// `X F` once per block of rows.
fn rfm_test_predictions(fits: &[&RfmFit], x: MatRef<'_, f64>, features: &FeatureMatrix) -> Vec<Vector> {
    let mut out: Vec<Vector> = fits.iter().map(|_| Vec::with_capacity(x.nrows())).collect();
    if fits.is_empty() {
        return out;
    }
    let mut start = 0;
    while start < x.nrows() {
        let rows = EVAL_BLOCK.min(x.nrows() - start);
        let g = matmul_nn(x.subrows(start, rows), features.f.as_ref());
        for (fit, preds) in fits.iter().zip(out.iter_mut()) {
            let a = Matrix::from_fn(rows, g.ncols(), |i, j| fit.sigma.evaluate(g[(i, j)]));
            preds.extend(readout(a.as_ref(), &fit.omega, fit.bias));
        }
        start += rows;
    }
    out
}

fn aggregate_model<'a>(id: &str, cells: impl Iterator<Item = &'a Option<Metrics>>, binary: bool) -> ModelRecord {
    let mut ok: Vec<&Metrics> = Vec::new();
    let mut failures = 0;
    for cell in cells {
        match cell {
            Some(m) => ok.push(m),
            None => failures += 1,
        }
    }
    let collect = |f: &dyn Fn(&Metrics) -> f64| Summary::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let is_optimal = id == OPTIMAL_GAUSSIAN_ID;
    ModelRecord {
        model_id: id.to_string(),
        train_error: collect(&|m| m.train_error),
        gen_error: collect(&|m| m.gen_error),
        train_acc: binary.then(|| collect(&|m| m.train_acc.unwrap_or(f64::NAN))),
        gen_acc: binary.then(|| collect(&|m| m.gen_acc.unwrap_or(f64::NAN))),
        mu_opt: is_optimal.then(|| {
            [0, 1, 2].map(|c| collect(&|m| m.mu.map_or(f64::NAN, |mu| mu.as_array()[c])))
        }),
        failures,
    }
}

fn aggregate_surface(grid: &SearchGrid, cells: &[&CellOutcome]) -> Vec<SurfaceSummary> {
    grid.points()
        .iter()
        .enumerate()
        .map(|(p, &(mu1, mu2))| {
            let (mut train, mut eval, mut used, mut failed) = (0.0, 0.0, 0usize, 0usize);
            for cell in cells {
                match cell.surface.as_ref().map(|s| &s[p]) {
                    Some(point) if !point.failed => {
                        train += point.train_error;
                        eval += point.eval_error;
                        used += 1;
                    }
                    _ => failed += 1,
                }
            }
            let mean = |sum: f64| if used > 0 { sum / used as f64 } else { f64::NAN };
            SurfaceSummary {
                mu1,
                mu2,
                train_error: mean(train),
                eval_error: mean(eval),
                failed,
            }
        })
        .collect()
}
