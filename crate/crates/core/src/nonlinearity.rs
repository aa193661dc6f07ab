//! Scalar nonlinearities, their mapping parameters, and synthesis of
//! nonlinearities with prescribed mapping parameters.
//!
//! For `z ~ N(0, 1)` the mapping parameters of `sigma` are
//!
//! ```text
//! mu0 = E[sigma(z)],  mu1 = E[z sigma(z)],  mu2 = sqrt(E[sigma(z)^2] - mu0^2 - mu1^2).
//! ```

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::normal_expectation;
use crate::rng::RngStream;

pub const DEFAULT_QUADRATURE_NODES: usize = 200;
pub const DEFAULT_RELU_TOL: f64 = 1e-3;

/// Radicands of `mu2^2` in `[-RADICAND_CLAMP, 0)` are rounded up to zero.
const RADICAND_CLAMP: f64 = 1e-10;

/// An element-wise activation `sigma: R -> R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NonlinearitySpec", into = "NonlinearitySpec")]
pub enum Nonlinearity {
    Relu,
    Softplus,
    Identity,
    /// `c0 + c1 z + c2 (z^2 - 1) / sqrt(2)`: orthonormal Hermite coefficients,
    /// which are exactly its mapping parameters.
    Polynomial { c0: f64, c1: f64, c2: f64 },
    /// `a z + c` for `z >= 0` and `b z + c` for `z < 0`.
    Piecewise { a: f64, b: f64, c: f64 },
}

/// The `(mu0, mu1, mu2)` triple parameterizing the Gaussian equivalent model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingParams {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl MappingParams {
    pub fn new(mu0: f64, mu1: f64, mu2: f64) -> Self {
        Self { mu0, mu1, mu2 }
    }

    pub fn is_finite(&self) -> bool {
        self.mu0.is_finite() && self.mu1.is_finite() && self.mu2.is_finite()
    }

    /// Checks the conditions required to train the equivalent model:
    /// finite entries, `mu1 > 0` and `mu2 >= 0`.
    pub fn check_trainable(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument(format!("mapping parameters must be finite, got {self}")));
        }
        if !(self.mu1 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mu1 must be > 0 (the linear coefficient E[z sigma(z)] of an admissible nonlinearity is positive), got {}",
                self.mu1
            )));
        }
        if self.mu2 < 0.0 {
            return Err(Error::InvalidArgument(format!("mu2 must be >= 0, got {}", self.mu2)));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mu0, self.mu1, self.mu2]
    }
}

impl fmt::Display for MappingParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.mu0, self.mu1, self.mu2)
    }
}

impl FromStr for MappingParams {
    type Err = Error;

    /// Parses `"mu0,mu1,mu2"`.
    fn from_str(s: &str) -> Result<Self> {
        let values = parse_reals(s)?;
        match values.as_slice() {
            [mu0, mu1, mu2] => Ok(Self::new(*mu0, *mu1, *mu2)),
            _ => Err(Error::InvalidArgument(format!(
                "expected three comma-separated values mu0,mu1,mu2, got {s:?}"
            ))),
        }
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("not a finite number: {t:?}")))
        })
        .collect()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl Nonlinearity {
    pub fn evaluate(&self, z: f64) -> f64 {
        match *self {
            Nonlinearity::Relu => z.max(0.0),
            Nonlinearity::Softplus => softplus(z),
            Nonlinearity::Identity => z,
            Nonlinearity::Polynomial { c0, c1, c2 } => c0 + c1 * z + c2 * (z * z - 1.0) / SQRT_2,
            Nonlinearity::Piecewise { a, b, c } => {
                if z >= 0.0 {
                    a * z + c
                } else {
                    b * z + c
                }
            }
        }
    }

    /// Short lowercase name used in model ids and specs.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Nonlinearity::Relu => "relu",
            Nonlinearity::Softplus => "softplus",
            Nonlinearity::Identity => "identity",
            Nonlinearity::Polynomial { .. } => "polynomial",
            Nonlinearity::Piecewise { .. } => "piecewise",
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        match *self {
            Nonlinearity::Polynomial { c0, c1, c2 } => vec![c0, c1, c2],
            Nonlinearity::Piecewise { a, b, c } => vec![a, b, c],
            _ => Vec::new(),
        }
    }

    /// Whether `sigma` has a derivative jump at the origin.
    fn kinked(&self) -> bool {
        matches!(self, Nonlinearity::Relu | Nonlinearity::Piecewise { .. })
    }

    fn validate(&self) -> Result<()> {
        if self.coefficients().iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{self} has non-finite coefficients")))
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coefficients = self.coefficients();
        if coefficients.is_empty() {
            f.write_str(self.kind_name())
        } else {
            let list: Vec<String> = coefficients.iter().map(|c| c.to_string()).collect();
            write!(f, "{}:{}", self.kind_name(), list.join(","))
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    /// Parses `relu`, `softplus`, `identity`, `polynomial:c0,c1,c2` or
    /// `piecewise:a,b,c`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = match s.trim().split_once(':') {
            Some((kind, rest)) => (kind.trim(), Some(rest)),
            None => (s.trim(), None),
        };
        let coefficients = match rest {
            Some(rest) => parse_reals(rest)?,
            None => Vec::new(),
        };
        NonlinearitySpec {
            kind: kind.to_ascii_lowercase(),
            coefficients,
        }
        .try_into()
    }
}

/// Serialized form: `{"kind": "...", "coefficients": [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct NonlinearitySpec {
    kind: String,
    #[serde(default)]
    coefficients: Vec<f64>,
}

impl TryFrom<NonlinearitySpec> for Nonlinearity {
    type Error = Error;

    fn try_from(spec: NonlinearitySpec) -> Result<Self> {
        let coefficients = &spec.coefficients;
        let expect = |count: usize| -> Result<()> {
            if coefficients.len() == count {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "nonlinearity {:?} takes {count} coefficients, got {}",
                    spec.kind,
                    coefficients.len()
                )))
            }
        };
        let sigma = match spec.kind.as_str() {
            "relu" => {
                expect(0)?;
                Nonlinearity::Relu
            }
            "softplus" => {
                expect(0)?;
                Nonlinearity::Softplus
            }
            "identity" => {
                expect(0)?;
                Nonlinearity::Identity
            }
            "polynomial" => {
                expect(3)?;
                Nonlinearity::Polynomial {
                    c0: coefficients[0],
                    c1: coefficients[1],
                    c2: coefficients[2],
                }
            }
            "piecewise" => {
                expect(3)?;
                Nonlinearity::Piecewise {
                    a: coefficients[0],
                    b: coefficients[1],
                    c: coefficients[2],
                }
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown nonlinearity {other:?}; expected relu, softplus, identity, polynomial or piecewise"
                )))
            }
        };
        sigma.validate()?;
        Ok(sigma)
    }
}

impl From<Nonlinearity> for NonlinearitySpec {
    fn from(sigma: Nonlinearity) -> Self {
        NonlinearitySpec {
            kind: sigma.kind_name().to_string(),
            coefficients: sigma.coefficients(),
        }
    }
}

/// `sqrt(radicand)`, where `radicand = E[sigma^2] - mu0^2 - mu1^2` and
/// `second = E[sigma^2]`. Values within rounding of `second` count as zero.
fn mu2_from_radicand(radicand: f64, second: f64) -> Result<f64> {
    if radicand.abs() <= 64.0 * f64::EPSILON * second.abs() {
        Ok(0.0)
    } else if radicand >= 0.0 {
        Ok(radicand.sqrt())
    } else if radicand >= -RADICAND_CLAMP {
        log::warn!("mu2 radicand {radicand:e} clamped to zero");
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance { radicand })
    }
}

/// Mapping parameters by Gaussian quadrature with `nodes` nodes.
///
/// Smooth activations use probabilists' Gauss–Hermite. ReLU and piecewise
/// maps are integrated separately on each half-line, which is exact for
/// piecewise polynomials.
pub fn estimate_moments_quadrature(sigma: &Nonlinearity, nodes: usize) -> Result<MappingParams> {
    if nodes < 32 {
        return Err(Error::InvalidArgument(format!("quadrature needs at least 32 nodes, got {nodes}")));
    }
    sigma.validate()?;
    let split = sigma.kinked();
    let mu0 = normal_expectation(|z| sigma.evaluate(z), nodes, split);
    let mu1 = normal_expectation(|z| z * sigma.evaluate(z), nodes, split);
    let second = normal_expectation(|z| sigma.evaluate(z).powi(2), nodes, split);
    let mu2 = mu2_from_radicand(second - mu0 * mu0 - mu1 * mu1, second)?;
    Ok(MappingParams { mu0, mu1, mu2 })
}

/// Mapping parameters of `sigma` with the default quadrature.
pub fn moments(sigma: &Nonlinearity) -> Result<MappingParams> {
    estimate_moments_quadrature(sigma, DEFAULT_QUADRATURE_NODES)
}

/// Monte Carlo moment estimates together with their standard errors.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarloMoments {
    pub params: MappingParams,
    /// Standard errors of `(mu0, mu1, mu2)`; the `mu2` entry uses the delta method.
    pub stderr: [f64; 3],
}

/// Mapping parameters from `draws` i.i.d. standard-normal samples.
pub fn estimate_moments_montecarlo(sigma: &Nonlinearity, draws: usize, rng: &RngStream) -> Result<MappingParams> {
    Ok(montecarlo_moments(sigma, draws, rng)?.params)
}

/// As [`estimate_moments_montecarlo`], also reporting standard errors.
pub fn montecarlo_moments(sigma: &Nonlinearity, draws: usize, rng: &RngStream) -> Result<MonteCarloMoments> {
    if draws < 1000 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs at least 1000 draws, got {draws}")));
    }
    sigma.validate()?;
    let n = draws as f64;

    // First pass: sample means and the least-squares fit of sigma(z) on (1, z).
    let mut sampler = rng.sampler();
    let (mut sz, mut szz, mut ss, mut sss, mut szs, mut szszs) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let z = sampler.standard_normal();
        let s = sigma.evaluate(z);
        sz += z;
        szz += z * z;
        ss += s;
        sss += s * s;
        szs += z * s;
        szszs += z * s * z * s;
    }
    let mu0 = ss / n;
    let mu1 = szs / n;
    let det = n * szz - sz * sz;
    let beta = (n * szs - sz * ss) / det;
    let alpha = (ss - beta * sz) / n;

    // Second pass: mu2^2 is the mean squared residual of that fit, which is
    // zero for affine sigma on every sample.
    let mut sampler = rng.sampler();
    let (mut sr2, mut sr4) = (0.0, 0.0);
    for _ in 0..draws {
        let z = sampler.standard_normal();
        let r = sigma.evaluate(z) - alpha - beta * z;
        sr2 += r * r;
        sr4 += r * r * r * r;
    }
    let mean_r2 = sr2 / n;
    let mu2 = mean_r2.sqrt();

    let stderr_of = |sum: f64, sum_sq: f64| {
        let mean = sum / n;
        ((sum_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    let r2_stderr = stderr_of(sr2, sr4);
    let mu2_stderr = if mu2 > 0.0 { r2_stderr / (2.0 * mu2) } else { 0.0 };
    Ok(MonteCarloMoments {
        params: MappingParams { mu0, mu1, mu2 },
        stderr: [stderr_of(ss, sss), stderr_of(szs, szszs), mu2_stderr],
    })
}

/// The degree-two Hermite polynomial whose mapping parameters are `mu`.
pub fn synthesize_polynomial(mu: &MappingParams) -> Nonlinearity {
    Nonlinearity::Polynomial {
        c0: mu.mu0,
        c1: mu.mu1,
        c2: mu.mu2,
    }
}

/// The piecewise-linear map `a z + c` / `b z + c` whose mapping parameters are `mu`.
///
/// Inverts `mu0 = c + (a - b) / sqrt(2 pi)`, `mu1 = (a + b) / 2` and
/// `mu2^2 = (a - b)^2 (pi - 2) / (4 pi)` on the branch `a >= b`.
pub fn synthesize_piecewise(mu: &MappingParams) -> Nonlinearity {
    let slope = (PI / (PI - 2.0)).sqrt() * mu.mu2;
    Nonlinearity::Piecewise {
        a: mu.mu1 + slope,
        b: mu.mu1 - slope,
        c: mu.mu0 - (2.0 / (PI - 2.0)).sqrt() * mu.mu2,
    }
}

/// Whether `sigma` is `scale * max(z, 0)` up to `tol`, and that scale.
///
/// A piecewise map qualifies when `|b|` and `|c|` are at most `tol * max(1, |a|)`;
/// the reported scale is `a`. ReLU itself has scale 1; other kinds never qualify.
pub fn is_scaled_relu(sigma: &Nonlinearity, tol: f64) -> (bool, f64) {
    match *sigma {
        Nonlinearity::Relu => (true, 1.0),
        Nonlinearity::Piecewise { a, b, c } => {
            let bound = tol * a.abs().max(1.0);
            (b.abs() <= bound && c.abs() <= bound, a)
        }
        _ => (false, 0.0),
    }
}
