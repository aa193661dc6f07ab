//! JSON run configurations for the `sweep` and `optimize` commands.
//!
//! Relative paths inside a configuration are resolved against the directory
//! of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_latent_dataset, split, Dataset, Role, TeacherKind};
use crate::error::{Error, Result};
use crate::experiments::{DataSource, SweepConfig, DEFAULT_EQUIVALENCE_TOLERANCE};
use crate::gridsearch::{default_grid_for, reduced_grid, NoiseMode, SearchGrid};
use crate::nonlinearity::Nonlinearity;
use crate::rng::RngStream;
use crate::training::{HingeOptions, LossKind};

fn default_scale_hint() -> f64 {
    1.0
}

fn default_slack() -> f64 {
    0.05
}

fn default_tolerance() -> f64 {
    DEFAULT_EQUIVALENCE_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub n: usize,
    pub m: usize,
    pub psi: TeacherKind,
    #[serde(default)]
    pub delta: f64,
    /// Test set size per trial; `max(10^4, 5m)` when absent.
    #[serde(default)]
    pub test_samples: Option<usize>,
    /// Evaluation draws inside the grid search; `max(10^4, 5m)` when absent.
    #[serde(default)]
    pub search_samples: Option<usize>,
}

/// Latent datasets, either as separate files or as one file split at random.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// `(train, validation)` fractions for `file`; the rest is the test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Teacher(TeacherConfig),
    Latent(LatentConfig),
}

/// Loaded latent data.
pub struct LatentData {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Option<Dataset>,
}

impl LatentConfig {
    fn resolve(&mut self, base: &Path) -> Result<()> {
        for path in [&mut self.train, &mut self.validation, &mut self.test, &mut self.file]
            .into_iter()
            .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            if !path.is_file() {
                return Err(Error::InvalidArgument(format!("dataset {} does not exist", path.display())));
            }
        }
        match (&self.file, &self.train) {
            (Some(_), None) if self.split.is_some() && self.validation.is_none() && self.test.is_none() => Ok(()),
            (None, Some(_)) if self.split.is_none() => Ok(()),
            _ => Err(Error::InvalidArgument(
                "latent data needs either `file` with `split`, or `train` with optional `validation` and `test`".into(),
            )),
        }
    }

    /// Loads the datasets; `rng` drives the split of a single file.
    pub fn load(&self, rng: &RngStream) -> Result<LatentData> {
        if let (Some(file), Some(fractions)) = (&self.file, self.split) {
            let all = load_latent_dataset(file, Role::Train)?;
            let (train, validation, test) = split(&all, fractions, rng)?;
            return Ok(LatentData {
                train,
                validation: Some(validation),
                test: Some(test),
            });
        }
        let train = self.train.as_ref().expect("checked when resolving");
        Ok(LatentData {
            train: load_latent_dataset(train, Role::Train)?,
            validation: self
                .validation
                .as_ref()
                .map(|p| load_latent_dataset(p, Role::Validation))
                .transpose()?,
            test: self.test.as_ref().map(|p| load_latent_dataset(p, Role::Test)).transpose()?,
        })
    }
}

fn parse_baselines(names: &[String]) -> Result<Vec<Nonlinearity>> {
    names.iter().map(|s| s.parse()).collect()
}

fn grid_or_default(grid: &Option<SearchGrid>, reduced: bool, loss: LossKind, scale_hint: f64) -> Result<SearchGrid> {
    if !(scale_hint > 0.0 && scale_hint.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale_hint must be positive, got {scale_hint}")));
    }
    Ok(match grid {
        Some(grid) => grid.clone(),
        None if reduced => reduced_grid(scale_hint),
        None => default_grid_for(loss, scale_hint),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Configuration of the `sweep` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Prefix of the output files.
    pub name: String,
    pub data: DataConfig,
    pub ratios: Vec<f64>,
    /// 50 by default, 20 for the hinge loss.
    #[serde(default)]
    pub trials: Option<usize>,
    pub loss: LossKind,
    pub lambda: f64,
    /// Activation specs such as `relu` or `piecewise:1,0,0`.
    #[serde(default)]
    pub baselines: Vec<String>,
    #[serde(default)]
    pub optimize: bool,
    /// Explicit grid; the loss-dependent default grid when absent.
    #[serde(default)]
    pub grid: Option<SearchGrid>,
    /// Use the 10 x 10 grid instead of the loss-dependent default.
    #[serde(default)]
    pub reduced_grid: bool,
    #[serde(default = "default_scale_hint")]
    pub scale_hint: f64,
    #[serde(default)]
    pub search_noise: NoiseMode,
    #[serde(default)]
    pub hinge: HingeOptions,
    pub seed: u64,
    /// Logarithmic error axis in the plots.
    #[serde(default)]
    pub log_y: bool,
    #[serde(default = "default_tolerance")]
    pub equivalence_tolerance: f64,
    #[serde(default = "default_slack")]
    pub monotonicity_slack: f64,
}

impl RunConfig {
    /// Parses and validates `path`, resolving dataset paths.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataConfig::Latent(latent) = &mut config.data {
            latent.resolve(base)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        check_name(&self.name)?;
        parse_baselines(&self.baselines)?;
        grid_or_default(&self.grid, self.reduced_grid, self.loss, self.scale_hint)?;
        if !(self.monotonicity_slack >= 0.0 && self.equivalence_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("slack and tolerance must be non-negative".into()));
        }
        if let DataConfig::Latent(latent) = &self.data {
            if latent.test.is_none() && latent.file.is_none() {
                return Err(Error::InvalidArgument("a latent sweep needs a test set".into()));
            }
        }
        Ok(())
    }

    /// Loads the data and builds the sweep.
    pub fn to_sweep(&self) -> Result<SweepConfig> {
        let data = match &self.data {
            DataConfig::Teacher(t) => DataSource::Teacher {
                n: t.n,
                m: t.m,
                psi: t.psi,
                delta: t.delta,
                test_samples: t.test_samples.unwrap_or(t.m.saturating_mul(5).max(10_000)),
                search_samples: t.search_samples,
            },
            DataConfig::Latent(latent) => {
                let loaded = latent.load(&RngStream::new(self.seed, 0).child(TAG_SPLIT))?;
                DataSource::Fixed {
                    train: loaded.train,
                    validation: loaded.validation,
                    test: loaded
                        .test
                        .ok_or_else(|| Error::InvalidArgument("a latent sweep needs a test set".into()))?,
                }
            }
        };
        let sweep = SweepConfig {
            data,
            ratios: self.ratios.clone(),
            trials: self.trials.unwrap_or(match self.loss {
                LossKind::Squared => 50,
                LossKind::Hinge => 20,
            }),
            loss: self.loss,
            lambda: self.lambda,
            baselines: parse_baselines(&self.baselines)?,
            optimize: self.optimize,
            grid: grid_or_default(&self.grid, self.reduced_grid, self.loss, self.scale_hint)?,
            search_noise: self.search_noise,
            hinge: self.hinge,
            seed: self.seed,
        };
        sweep.validate()?;
        Ok(sweep)
    }
}

/// Stream tag for splitting a single latent file. Sweeps use tags 0 to 2.
const TAG_SPLIT: u64 = 7;

/// Configuration of the `optimize` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub name: String,
    pub data: DataConfig,
    /// Number of features; give either `k` or `ratio` (`k = round(ratio m)`).
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub ratio: Option<f64>,
    pub loss: LossKind,
    pub lambda: f64,
    #[serde(default)]
    pub grid: Option<SearchGrid>,
    /// Use the 10 x 10 grid instead of the loss-dependent default.
    #[serde(default)]
    pub reduced_grid: bool,
    #[serde(default = "default_scale_hint")]
    pub scale_hint: f64,
    #[serde(default)]
    pub search_noise: NoiseMode,
    #[serde(default)]
    pub hinge: HingeOptions,
    pub seed: u64,
}

impl OptimizeConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config: OptimizeConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DataConfig::Latent(latent) = &mut config.data {
            latent.resolve(base)?;
            if latent.validation.is_none() && latent.file.is_none() {
                return Err(Error::InvalidArgument(
                    "optimizing on latent data needs a validation set".into(),
                ));
            }
        }
        check_name(&config.name)?;
        config.grid()?;
        if config.k.is_some() == config.ratio.is_some() {
            return Err(Error::InvalidArgument("give exactly one of `k` and `ratio`".into()));
        }
        Ok(config)
    }

    pub fn grid(&self) -> Result<SearchGrid> {
        grid_or_default(&self.grid, self.reduced_grid, self.loss, self.scale_hint)
    }

    /// Feature count for `m` training samples.
    pub fn features_for(&self, m: usize) -> Result<usize> {
        let k = match (self.k, self.ratio) {
            (Some(k), _) => k,
            (None, Some(r)) if r > 0.0 && r.is_finite() => (r * m as f64).round() as usize,
            _ => 0,
        };
        if k == 0 {
            return Err(Error::InvalidArgument("the feature count must be at least 1".into()));
        }
        Ok(k)
    }

    pub(crate) fn split_stream(&self) -> RngStream {
        RngStream::new(self.seed, 0).child(TAG_SPLIT)
    }
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "name must be non-empty and use only letters, digits, '_' and '-', got {name:?}"
        )))
    }
}
