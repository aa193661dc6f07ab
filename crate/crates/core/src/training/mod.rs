//! Training and evaluation of random feature models and their Gaussian
//! equivalents.
//!
//! Both families learn only the readout `omega` on top of fixed features:
//!
//! * RFM: `sigma(F^T x)`;
//! * Gaussian equivalent: `mu0 1 + mu1 F^T x + mu2 z` with `z ~ N(0, I_k)`.
//!
//! The training objective is `(1/m) sum_i l(y_i, a_i^T omega + b) + (lambda/2) |omega|^2`
//! with the bias fixed to the label mean before `omega` is fitted.

mod hinge;

pub use hinge::{hinge_objective, solve_hinge, HingeOptions, HingeSolution};

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMatrix, Role};
use crate::error::{Error, Result};
use crate::linalg::{dot, matmul_nn, matvec, ridge_solve, sample_standard_normal_matrix, Matrix, Vector};
use crate::nonlinearity::{MappingParams, Nonlinearity};
use crate::rng::RngStream;

/// Rows per block when featurizing large evaluation sets.
const PREDICT_BLOCK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `(y - yhat)^2 / 2`
    Squared,
    /// `max(1 - y yhat, 0)`
    Hinge,
}

impl LossKind {
    pub fn loss(&self, y: f64, yhat: f64) -> f64 {
        match self {
            LossKind::Squared => 0.5 * (y - yhat) * (y - yhat),
            LossKind::Hinge => (1.0 - y * yhat).max(0.0),
        }
    }

    pub fn mean_loss(&self, y: &[f64], yhat: &[f64]) -> f64 {
        y.iter().zip(yhat).map(|(a, b)| self.loss(*a, *b)).sum::<f64>() / y.len() as f64
    }
}

/// The frozen per-sample training noise `Z` (m x k) of a Gaussian model.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMatrix {
    pub z: Matrix,
    source: Option<RngStream>,
}

impl NoiseMatrix {
    pub fn sample(rows: usize, cols: usize, rng: &RngStream) -> Self {
        Self {
            z: sample_standard_normal_matrix(rng, rows, cols, 1.0),
            source: Some(*rng),
        }
    }

    pub fn from_matrix(z: Matrix) -> Self {
        Self { z, source: None }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NoiseRepr {
    Sampled { rows: usize, cols: usize, seed: u64, stream: u64 },
    Explicit { rows: usize, cols: usize, entries: Vec<f64> },
}

impl Serialize for NoiseMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (rows, cols) = (self.z.nrows(), self.z.ncols());
        match self.source {
            Some(rng) => NoiseRepr::Sampled {
                rows,
                cols,
                seed: rng.seed,
                stream: rng.stream,
            },
            None => NoiseRepr::Explicit {
                rows,
                cols,
                entries: (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| self.z[(i, j)]).collect(),
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NoiseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        Ok(match NoiseRepr::deserialize(deserializer)? {
            NoiseRepr::Sampled { rows, cols, seed, stream } => {
                NoiseMatrix::sample(rows, cols, &RngStream::new(seed, stream))
            }
            NoiseRepr::Explicit { rows, cols, entries } => {
                if entries.len() != rows * cols {
                    return Err(D::Error::custom("noise entry count does not match its shape"));
                }
                NoiseMatrix::from_matrix(Matrix::from_fn(rows, cols, |i, j| entries[i * cols + j]))
            }
        })
    }
}

/// Which features a model is trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFamily {
    Rfm {
        sigma: Nonlinearity,
        features: FeatureMatrix,
    },
    Gaussian {
        mu: MappingParams,
        features: FeatureMatrix,
        z_train: NoiseMatrix,
    },
}

impl ModelFamily {
    pub fn rfm(sigma: Nonlinearity, features: FeatureMatrix) -> Self {
        ModelFamily::Rfm { sigma, features }
    }

    /// Gaussian equivalent with training noise for `m` samples drawn from `rng`.
    pub fn gaussian(mu: MappingParams, features: FeatureMatrix, m: usize, rng: &RngStream) -> Self {
        let z_train = NoiseMatrix::sample(m, features.k(), rng);
        ModelFamily::Gaussian { mu, features, z_train }
    }

    pub fn features(&self) -> &FeatureMatrix {
        match self {
            ModelFamily::Rfm { features, .. } | ModelFamily::Gaussian { features, .. } => features,
        }
    }
}

/// Where Gaussian-model noise comes from when featurizing.
#[derive(Clone, Copy, Debug)]
pub enum Noise {
    /// The frozen training noise; the inputs must be the training set.
    Stored,
    /// Fresh `N(0, I_k)` rows from this stream.
    Fresh(RngStream),
}

fn check_inputs(family: &ModelFamily, x: MatRef<'_, f64>) -> Result<()> {
    let n = family.features().n();
    if x.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} columns but the feature matrix expects {n}",
            x.ncols()
        )));
    }
    Ok(())
}

/// The `m x k` feature matrix of `x` under `family`.
pub fn featurize(family: &ModelFamily, x: MatRef<'_, f64>, noise: Noise) -> Result<Matrix> {
    check_inputs(family, x)?;
    let mut a = matmul_nn(x, family.features().f.as_ref());
    match family {
        ModelFamily::Rfm { sigma, .. } => {
            for j in 0..a.ncols() {
                for v in a.col_mut(j).iter_mut() {
                    *v = sigma.evaluate(*v);
                }
            }
        }
        ModelFamily::Gaussian { mu, z_train, .. } => {
            let fresh;
            let z = match noise {
                Noise::Stored => {
                    if z_train.z.nrows() != x.nrows() {
                        return Err(Error::DimensionMismatch(format!(
                            "stored training noise has {} rows but {} inputs were given",
                            z_train.z.nrows(),
                            x.nrows()
                        )));
                    }
                    &z_train.z
                }
                Noise::Fresh(rng) => {
                    fresh = sample_standard_normal_matrix(&rng, x.nrows(), a.ncols(), 1.0);
                    &fresh
                }
            };
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    a[(i, j)] = mu.mu0 + mu.mu1 * a[(i, j)] + mu.mu2 * z[(i, j)];
                }
            }
        }
    }
    Ok(a)
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Fit the bias jointly with `omega` instead of fixing it to the label
    /// mean. Squared loss only.
    pub joint_bias: bool,
    pub hinge: HingeOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: ModelFamily,
    pub omega: Vector,
    pub bias: f64,
    pub lambda: f64,
    pub loss: LossKind,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda must be positive and finite, got {lambda}")))
    }
}

pub fn train(family: ModelFamily, data: &Dataset, loss: LossKind, lambda: f64) -> Result<TrainedModel> {
    train_with(family, data, loss, lambda, &TrainOptions::default())
}

pub fn train_with(
    family: ModelFamily,
    data: &Dataset,
    loss: LossKind,
    lambda: f64,
    options: &TrainOptions,
) -> Result<TrainedModel> {
    check_lambda(lambda)?;
    if let ModelFamily::Gaussian { mu, .. } = &family {
        mu.check_trainable()?;
    }
    let a = featurize(&family, data.x.as_ref(), Noise::Stored)?;
    let (omega, bias) = fit_readout(a.as_ref(), &data.y, loss, lambda, options)?;
    Ok(TrainedModel {
        family,
        omega,
        bias,
        lambda,
        loss,
    })
}

/// Fits `(omega, b)` on precomputed features `a`.
pub fn fit_readout(
    a: MatRef<'_, f64>,
    y: &[f64],
    loss: LossKind,
    lambda: f64,
    options: &TrainOptions,
) -> Result<(Vector, f64)> {
    let m = a.nrows();
    if y.len() != m || m == 0 {
        return Err(Error::DimensionMismatch(format!("{m} feature rows but {} labels", y.len())));
    }
    let label_mean = y.iter().sum::<f64>() / m as f64;
    if !options.joint_bias {
        let omega = fit_readout_with_bias(a, y, label_mean, loss, lambda, &options.hinge)?;
        return Ok((omega, label_mean));
    }
    if loss != LossKind::Squared {
        return Err(Error::InvalidArgument(
            "joint bias fitting is only available for the squared loss".into(),
        ));
    }
    check_lambda(lambda)?;
    // The optimal bias is mean(y) - mean(a)^T omega, which centres the problem.
    let col_mean: Vec<f64> = (0..a.ncols()).map(|j| a.col(j).iter().sum::<f64>() / m as f64).collect();
    let centred = Matrix::from_fn(m, a.ncols(), |i, j| a[(i, j)] - col_mean[j]);
    let r: Vec<f64> = y.iter().map(|v| v - label_mean).collect();
    let omega = ridge_solve(centred.as_ref(), &r, m as f64 * lambda)?;
    let bias = label_mean - dot(&col_mean, &omega);
    Ok((omega, bias))
}

/// Fits `omega` for a given bias. The squared loss uses a ridge solve with
/// `lambda_eff = m lambda`; the hinge loss uses [`solve_hinge`].
pub fn fit_readout_with_bias(
    a: MatRef<'_, f64>,
    y: &[f64],
    bias: f64,
    loss: LossKind,
    lambda: f64,
    hinge: &HingeOptions,
) -> Result<Vector> {
    check_lambda(lambda)?;
    let m = a.nrows();
    if y.len() != m || m == 0 {
        return Err(Error::DimensionMismatch(format!("{m} feature rows but {} labels", y.len())));
    }
    match loss {
        LossKind::Squared => {
            let r: Vec<f64> = y.iter().map(|v| v - bias).collect();
            ridge_solve(a, &r, m as f64 * lambda)
        }
        LossKind::Hinge => Ok(solve_hinge(a, y, bias, lambda, hinge)?.omega),
    }
}

impl TrainedModel {
    pub fn features(&self) -> &FeatureMatrix {
        self.family.features()
    }

    /// Predictions with explicit control over the Gaussian noise.
    ///
    /// With fresh noise the term `mu2 z^T omega` is drawn as `mu2 |omega| zeta`
    /// with one standard normal `zeta` per row, which has the same
    /// distribution and avoids materializing an `m x k` noise matrix.
    pub fn predict_with(&self, x: MatRef<'_, f64>, noise: Noise) -> Result<Vector> {
        check_inputs(&self.family, x)?;
        match (&self.family, noise) {
            (ModelFamily::Gaussian { mu, features, .. }, Noise::Fresh(rng)) => {
                let zeta = if mu.mu2 != 0.0 && self.omega.iter().any(|&w| w != 0.0) {
                    let mut zeta = vec![0.0; x.nrows()];
                    rng.sampler().fill_normal(&mut zeta, 1.0);
                    Some(zeta)
                } else {
                    None
                };
                Ok(gaussian_readout(mu, features.f.as_ref(), &self.omega, self.bias, x, zeta.as_deref()))
            }
            (ModelFamily::Gaussian { .. }, Noise::Stored) => {
                let a = featurize(&self.family, x, Noise::Stored)?;
                Ok(self.readout(a.as_ref()))
            }
            (ModelFamily::Rfm { .. }, _) => {
                let mut out = Vec::with_capacity(x.nrows());
                let mut start = 0;
                while start < x.nrows() {
                    let rows = PREDICT_BLOCK.min(x.nrows() - start);
                    let a = featurize(&self.family, x.subrows(start, rows), Noise::Stored)?;
                    out.extend(self.readout(a.as_ref()));
                    start += rows;
                }
                Ok(out)
            }
        }
    }

    fn readout(&self, a: MatRef<'_, f64>) -> Vector {
        matvec(a, &self.omega).into_iter().map(|v| v + self.bias).collect()
    }

    /// Predictions for new inputs; Gaussian noise is drawn fresh from `rng`.
    pub fn predict(&self, x: MatRef<'_, f64>, rng: &RngStream) -> Result<Vector> {
        self.predict_with(x, Noise::Fresh(*rng))
    }

    /// Predictions on `data`, reusing the frozen noise when `data` is the
    /// training set of a Gaussian model.
    pub fn predict_dataset(&self, data: &Dataset, rng: &RngStream) -> Result<Vector> {
        let noise = match &self.family {
            ModelFamily::Gaussian { z_train, .. } if data.role == Role::Train && z_train.z.nrows() == data.len() => {
                Noise::Stored
            }
            _ => Noise::Fresh(*rng),
        };
        self.predict_with(data.x.as_ref(), noise)
    }
}

/// `bias + omega^T (mu0 1 + mu1 F^T x + mu2 z)` per row of `x`, with the noise
/// term realized as `mu2 |omega| zeta_i` (omitted when `zeta` is `None`).
pub(crate) fn gaussian_readout(
    mu: &MappingParams,
    f: MatRef<'_, f64>,
    omega: &[f64],
    bias: f64,
    x: MatRef<'_, f64>,
    zeta: Option<&[f64]>,
) -> Vector {
    let f_omega = matvec(f, omega);
    let linear = matvec(x, &f_omega);
    let offset = bias + mu.mu0 * omega.iter().sum::<f64>();
    let noise_scale = mu.mu2 * dot(omega, omega).sqrt();
    match zeta {
        Some(zeta) => linear
            .iter()
            .zip(zeta)
            .map(|(t, z)| offset + mu.mu1 * t + noise_scale * z)
            .collect(),
        None => linear.iter().map(|t| offset + mu.mu1 * t).collect(),
    }
}

/// Fraction of rows with `sign(yhat) == y`, taking `sign(0) = +1`.
pub fn accuracy(y: &[f64], yhat: &[f64]) -> f64 {
    let hits = y
        .iter()
        .zip(yhat)
        .filter(|(t, p)| (if **p >= 0.0 { 1.0 } else { -1.0 }) == **t)
        .count();
    hits as f64 / y.len() as f64
}

/// Mean loss of `model` on `data`.
pub fn evaluate_error(model: &TrainedModel, data: &Dataset, loss: LossKind, rng: &RngStream) -> Result<f64> {
    let yhat = model.predict_dataset(data, rng)?;
    Ok(loss.mean_loss(&data.y, &yhat))
}

/// Fraction of samples whose predicted sign matches the `+-1` label.
pub fn evaluate_accuracy(model: &TrainedModel, data: &Dataset, rng: &RngStream) -> Result<f64> {
    data.check_binary()?;
    let yhat = model.predict_dataset(data, rng)?;
    Ok(accuracy(&data.y, &yhat))
}
