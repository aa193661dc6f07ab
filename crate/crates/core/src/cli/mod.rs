//! The `rfm` command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on invalid input.

pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{generate, load_latent_dataset, make_teacher, sample_features, save_latent_dataset, split, Role, TeacherKind};
use crate::error::{Error, Result};
use crate::experiments::{
    equivalence_report, is_total_failure, model_curve, monotonicity_check, run_sweep, write_results_csv,
    write_surface_csv, EquivalenceReport, SweepRecord,
};
use crate::gridsearch::{optimize_mapping_params_with, EvalSource, SearchOptions};
use crate::nonlinearity::{
    estimate_moments_quadrature, montecarlo_moments, synthesize_piecewise, synthesize_polynomial, MappingParams,
    Nonlinearity, DEFAULT_QUADRATURE_NODES,
};
use crate::rng::RngStream;
use crate::training::{accuracy, TrainedModel};

use config::{DataConfig, OptimizeConfig, RunConfig};

/// Version of the CSV column sets and manifest layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const OUTPUT_DIR_ENV: &str = "RFM_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rfm", version, about = "Random feature models and optimized nonlinearities")]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, default_value = "rfm-output")]
    output_dir: PathBuf,

    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Quadrature,
    Montecarlo,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Family {
    Polynomial,
    Piecewise,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mapping parameters (mu0, mu1, mu2) of an activation.
    Moments {
        /// `relu`, `softplus`, `identity`, `polynomial:c0,c1,c2` or `piecewise:a,b,c`.
        #[arg(long)]
        sigma: Nonlinearity,
        #[arg(long, value_enum, default_value = "quadrature")]
        method: Method,
        /// Quadrature nodes.
        #[arg(long, default_value_t = DEFAULT_QUADRATURE_NODES)]
        nodes: usize,
        /// Monte Carlo draws.
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON output path (default: `<output-dir>/moments.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Activation with prescribed mapping parameters.
    Synthesize {
        /// `mu0,mu1,mu2`.
        #[arg(long, allow_hyphen_values = true)]
        mu: MappingParams,
        #[arg(long, value_enum)]
        family: Family,
        /// JSON output path (default: `<output-dir>/synthesize.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid search for the mapping parameters.
    Optimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo sweep over k/m.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// Sign-teacher data in the latent CSV format.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (default: `<output-dir>/latent.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// `train,validation` fractions; writes `<stem>_{train,validation,test}.csv`.
        #[arg(long)]
        split: Option<String>,
    },
    /// Score a saved model on a latent dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Role of the dataset; a Gaussian model reuses its stored training
        /// noise on its own training set.
        #[arg(long, value_enum, default_value = "test")]
        role: RoleArg,
        /// Stream for fresh Gaussian-model noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return err.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        pool = pool.num_threads(threads);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| dispatch(&cli)),
        Err(err) => Err(Error::InvalidArgument(format!("cannot start worker threads: {err}"))),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let out_dir = &cli.output_dir;
    match &cli.command {
        Command::Moments {
            sigma,
            method,
            nodes,
            draws,
            seed,
            out,
        } => cmd_moments(sigma, *method, *nodes, *draws, *seed, &resolve_out(out, out_dir, "moments.json")),
        Command::Synthesize { mu, family, out } => cmd_synthesize(mu, *family, &resolve_out(out, out_dir, "synthesize.json")),
        Command::Optimize { config } => cmd_optimize(config, out_dir),
        Command::Sweep { config, no_plots } => cmd_sweep(config, out_dir, !no_plots),
        Command::GenData { n, m, seed, out, split } => {
            cmd_gen_data(*n, *m, *seed, &resolve_out(out, out_dir, "latent.csv"), split.as_deref())
        }
        Command::Eval {
            model,
            data,
            role,
            seed,
            stream,
        } => {
            let role = match role {
                RoleArg::Train => Role::Train,
                RoleArg::Validation => Role::Validation,
                RoleArg::Test => Role::Test,
            };
            cmd_eval(model, data, role, &RngStream::new(*seed, *stream))
        }
    }
}

fn resolve_out(out: &Option<PathBuf>, dir: &Path, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| dir.join(default))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct MomentsOutput<'a> {
    sigma: &'a Nonlinearity,
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    mu: MappingParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<[f64; 3]>,
}

fn cmd_moments(sigma: &Nonlinearity, method: Method, nodes: usize, draws: usize, seed: u64, out: &Path) -> Result<i32> {
    let output = match method {
        Method::Quadrature => MomentsOutput {
            sigma,
            method: "quadrature",
            nodes: Some(nodes),
            draws: None,
            seed: None,
            mu: estimate_moments_quadrature(sigma, nodes)?,
            stderr: None,
        },
        Method::Montecarlo => {
            let mc = montecarlo_moments(sigma, draws, &RngStream::new(seed, 0))?;
            MomentsOutput {
                sigma,
                method: "montecarlo",
                nodes: None,
                draws: Some(draws),
                seed: Some(seed),
                mu: mc.params,
                stderr: Some(mc.stderr),
            }
        }
    };
    let mu = output.mu;
    println!("sigma = {sigma}");
    println!("mu0 = {}", mu.mu0);
    println!("mu1 = {}", mu.mu1);
    println!("mu2 = {}", mu.mu2);
    write_json(out, &output)?;
    println!("wrote {}", out.display());
    Ok(0)
}

#[derive(Serialize)]
struct SynthesizeOutput {
    mu: MappingParams,
    family: Family,
    sigma: Nonlinearity,
    /// Quadrature moments of the synthesized activation.
    check: MappingParams,
}

fn cmd_synthesize(mu: &MappingParams, family: Family, out: &Path) -> Result<i32> {
    mu.check_trainable()?;
    let sigma = match family {
        Family::Polynomial => synthesize_polynomial(mu),
        Family::Piecewise => synthesize_piecewise(mu),
    };
    let check = estimate_moments_quadrature(&sigma, DEFAULT_QUADRATURE_NODES)?;
    println!("sigma = {sigma}");
    let names: &[&str] = match family {
        Family::Polynomial => &["c0", "c1", "c2"],
        Family::Piecewise => &["a", "b", "c"],
    };
    for (name, value) in names.iter().zip(sigma.coefficients()) {
        println!("{name} = {value}");
    }
    println!("moments of sigma = {check}");
    write_json(
        out,
        &SynthesizeOutput {
            mu: *mu,
            family,
            sigma,
            check,
        },
    )?;
    println!("wrote {}", out.display());
    Ok(0)
}

#[derive(Serialize)]
struct InputFile {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct MonotonicityRow {
    model_id: String,
    slack: f64,
    monotone: bool,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    schema_version: u32,
    software_version: &'static str,
    command: &'static str,
    seed: u64,
    config_path: PathBuf,
    config_sha256: String,
    config: &'a C,
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalence: Option<EquivalenceReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    monotonicity: Vec<MonotonicityRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_failure: Option<bool>,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    fn new(command: &'static str, seed: u64, config_path: &Path, config: &'a C, data: &DataConfig) -> Result<Self> {
        let raw = fs::read(config_path)?;
        let mut inputs = Vec::new();
        if let DataConfig::Latent(latent) = data {
            for path in [&latent.train, &latent.validation, &latent.test, &latent.file]
                .into_iter()
                .flatten()
            {
                inputs.push(InputFile {
                    path: path.clone(),
                    sha256: sha256_hex(&fs::read(path)?),
                });
            }
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            software_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_path: config_path.to_path_buf(),
            config_sha256: sha256_hex(&raw),
            config,
            inputs,
            outputs: Vec::new(),
            equivalence: None,
            monotonicity: Vec::new(),
            total_failure: None,
        })
    }
}

/// Stream tags of the `optimize` command.
const OPT_TEACHER: u64 = 0;
const OPT_TRAIN: u64 = 1;
const OPT_FEATURES: u64 = 2;
const OPT_SEARCH: u64 = 3;

fn cmd_optimize(config_path: &Path, out_dir: &Path) -> Result<i32> {
    let cfg = OptimizeConfig::from_file(config_path)?;
    let grid = cfg.grid()?;
    let root = RngStream::new(cfg.seed, 0);
    let mut outputs = Vec::new();

    let mut teacher = None;
    let (train, validation, eval_samples) = match &cfg.data {
        DataConfig::Teacher(t) => {
            let spec = teacher.insert(make_teacher(t.n, t.psi, t.delta, &root.child(OPT_TEACHER))?);
            let train = generate(spec, t.m, Role::Train, &root.child(OPT_TRAIN))?;
            (train, None, t.search_samples)
        }
        DataConfig::Latent(latent) => {
            let loaded = latent.load(&cfg.split_stream())?;
            let validation = loaded
                .validation
                .ok_or_else(|| Error::InvalidArgument("optimizing on latent data needs a validation set".into()))?;
            if latent.file.is_some() {
                // Keep the split on disk so the saved model can be rescored.
                for (role, data) in [("train", Some(&loaded.train)), ("validation", Some(&validation)), ("test", loaded.test.as_ref())] {
                    if let Some(data) = data {
                        let name = format!("{}_{role}.csv", cfg.name);
                        fs::create_dir_all(out_dir)?;
                        save_latent_dataset(data, &out_dir.join(&name))?;
                        outputs.push(name);
                    }
                }
            }
            (loaded.train, Some(validation), None)
        }
    };
    let eval = match &validation {
        Some(v) => EvalSource::Validation(v),
        None => EvalSource::Teacher {
            teacher: teacher.as_ref().expect("teacher data without a validation set"),
            samples: eval_samples,
        },
    };
    let k = cfg.features_for(train.len())?;
    let features = sample_features(train.dim(), k, &root.child(OPT_FEATURES))?;
    let options = SearchOptions {
        noise: cfg.search_noise,
        hinge: cfg.hinge,
    };
    let result = optimize_mapping_params_with(
        &train,
        eval,
        &features,
        cfg.loss,
        cfg.lambda,
        &grid,
        &root.child(OPT_SEARCH),
        &options,
    )?;

    let search_name = format!("{}_search.json", cfg.name);
    let surface_name = format!("{}_surface.csv", cfg.name);
    let model_name = format!("{}_model.json", cfg.name);
    write_json(&out_dir.join(&search_name), &result)?;
    let mut surface = Vec::new();
    result.write_surface_csv(&mut surface)?;
    write_file(&out_dir.join(&surface_name), &surface)?;
    write_json(&out_dir.join(&model_name), &result.model(features))?;
    outputs.extend([search_name, surface_name, model_name.clone()]);

    let manifest_name = format!("{}_manifest.json", cfg.name);
    outputs.push(manifest_name.clone());
    let mut manifest = Manifest::new("optimize", cfg.seed, config_path, &cfg, &cfg.data)?;
    manifest.outputs = outputs;
    write_json(&out_dir.join(&manifest_name), &manifest)?;

    println!("mu_opt = {}", result.mu_opt);
    println!("best eval error = {}", result.best_error);
    println!("best train error = {}", result.best_train_error);
    println!(
        "evaluation noise stream: --seed {} --stream {}",
        result.eval_noise.seed, result.eval_noise.stream
    );
    println!("wrote {}", out_dir.join(&model_name).display());
    Ok(0)
}

fn cmd_sweep(config_path: &Path, out_dir: &Path, plots: bool) -> Result<i32> {
    let cfg = RunConfig::from_file(config_path)?;
    let sweep = cfg.to_sweep()?;
    let records = run_sweep(&sweep)?;
    let mut outputs = Vec::new();

    let results_name = format!("{}_results.csv", cfg.name);
    let mut csv = Vec::new();
    write_results_csv(&records, &mut csv)?;
    write_file(&out_dir.join(&results_name), &csv)?;
    outputs.push(results_name);
    if sweep.optimize {
        let surface_name = format!("{}_surface.csv", cfg.name);
        let mut csv = Vec::new();
        write_surface_csv(&records, &mut csv)?;
        write_file(&out_dir.join(&surface_name), &csv)?;
        outputs.push(surface_name);
    }
    if plots {
        outputs.extend(write_plots(&cfg, &records, out_dir)?);
    }

    let mut manifest = Manifest::new("sweep", cfg.seed, config_path, &cfg, &cfg.data)?;
    manifest.equivalence = match equivalence_report(&records, cfg.equivalence_tolerance) {
        Ok(report) => Some(report),
        Err(Error::MissingPair(id)) => {
            log::warn!("no equivalence report: {id} has no Gaussian twin");
            None
        }
        Err(err) => return Err(err),
    };
    manifest.monotonicity = sweep
        .model_ids()
        .into_iter()
        .map(|id| MonotonicityRow {
            monotone: monotonicity_check(&model_curve(&records, &id), cfg.monotonicity_slack),
            model_id: id,
            slack: cfg.monotonicity_slack,
        })
        .collect();
    let total_failure = is_total_failure(&records);
    manifest.total_failure = Some(total_failure);
    let manifest_name = format!("{}_manifest.json", cfg.name);
    outputs.push(manifest_name.clone());
    manifest.outputs = outputs;
    write_json(&out_dir.join(&manifest_name), &manifest)?;

    print_sweep(&records);
    if let Some(report) = &manifest.equivalence {
        println!("equivalence within {}: {}", report.tolerance, report.pass);
    }
    for row in &manifest.monotonicity {
        println!("{:>20} monotone: {}", row.model_id, row.monotone);
    }
    println!("wrote {}", out_dir.join(&manifest_name).display());
    if total_failure {
        eprintln!("error: every model failed in every trial");
        return Ok(1);
    }
    Ok(0)
}

fn write_plots(cfg: &RunConfig, records: &[SweepRecord], out_dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let errors = plot::sweep_series(records, |m| Some((m.train_error, m.gen_error)));
    let svg = plot::line_chart(
        &format!("{}: training (solid) and generalization (dashed) error", cfg.name),
        "k/m",
        "error",
        &errors,
        cfg.log_y,
    );
    let name = format!("plots/{}.svg", cfg.name);
    write_file(&out_dir.join(&name), svg.as_bytes())?;
    written.push(name);
    let acc = plot::sweep_series(records, |m| m.train_acc.zip(m.gen_acc));
    if !acc.is_empty() {
        let svg = plot::line_chart(
            &format!("{}: training (solid) and test (dashed) accuracy", cfg.name),
            "k/m",
            "accuracy",
            &acc,
            false,
        );
        let name = format!("plots/{}_accuracy.svg", cfg.name);
        write_file(&out_dir.join(&name), svg.as_bytes())?;
        written.push(name);
    }
    Ok(written)
}

fn print_sweep(records: &[SweepRecord]) {
    println!("{:>6} {:>22} {:>12} {:>12} {:>9}", "k/m", "model", "train", "gen", "failures");
    for r in records {
        for m in &r.models {
            println!(
                "{:>6} {:>22} {:>12.6} {:>12.6} {:>9}",
                r.ratio, m.model_id, m.train_error.mean, m.gen_error.mean, m.failures
            );
        }
    }
}

fn cmd_gen_data(n: usize, m: usize, seed: u64, out: &Path, fractions: Option<&str>) -> Result<i32> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument("n and m must be at least 1".into()));
    }
    let root = RngStream::new(seed, 0);
    let teacher = make_teacher(n, TeacherKind::Sign, 0.0, &root.child(0))?;
    let data = generate(&teacher, m, Role::Train, &root.child(1))?;
    let Some(fractions) = fractions else {
        save_latent_dataset(&data, out)?;
        println!("wrote {} ({m} rows, n = {n})", out.display());
        return Ok(0);
    };
    let parts: Vec<f64> = fractions
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("--split expects two fractions, got {fractions:?}")))?;
    let [ft, fv] = parts[..] else {
        return Err(Error::InvalidArgument(format!("--split expects two fractions, got {fractions:?}")));
    };
    let (train, validation, test) = split(&data, (ft, fv), &root.child(2))?;
    let stem = out.with_extension("");
    for (role, part) in [("train", &train), ("validation", &validation), ("test", &test)] {
        let path = PathBuf::from(format!("{}_{role}.csv", stem.display()));
        save_latent_dataset(part, &path)?;
        println!("wrote {} ({} rows, n = {n})", path.display(), part.len());
    }
    Ok(0)
}

#[derive(Serialize)]
struct EvalOutput {
    loss: crate::training::LossKind,
    error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    samples: usize,
}

fn cmd_eval(model_path: &Path, data_path: &Path, role: Role, rng: &RngStream) -> Result<i32> {
    let text = fs::read_to_string(model_path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", model_path.display())))?;
    let model: TrainedModel = serde_json::from_str(&text)?;
    let data = load_latent_dataset(data_path, role)?;
    let yhat = model.predict_dataset(&data, rng)?;
    let output = EvalOutput {
        loss: model.loss,
        error: model.loss.mean_loss(&data.y, &yhat),
        accuracy: data.is_binary().then(|| accuracy(&data.y, &yhat)),
        samples: data.len(),
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(0)
}
