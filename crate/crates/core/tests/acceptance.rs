//! Acceptance checks. Each test prints a single `criterion N: PASS|FAIL` line
//! to stderr (bypassing output capture) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use faer::Mat;
use rfm_nonlin::data::{generate, load_latent_dataset, make_teacher, sample_features, Dataset, Role, TeacherKind};
use rfm_nonlin::experiments::{
    equivalence_report, model_curve, monotonicity_check, relative_gap, run_sweep, DataSource, SweepConfig,
    SweepRecord, OPTIMAL_GAUSSIAN_ID, PIECEWISE_RFM_ID, POLYNOMIAL_RFM_ID,
};
use rfm_nonlin::gridsearch::{default_grid, reduced_grid, NoiseMode};
use rfm_nonlin::linalg::{ridge_solve, ridge_solve_dual, ridge_solve_primal, Matrix};
use rfm_nonlin::nonlinearity::{
    estimate_moments_quadrature, synthesize_piecewise, synthesize_polynomial, MappingParams, Nonlinearity,
    DEFAULT_QUADRATURE_NODES,
};
use rfm_nonlin::rng::RngStream;
use rfm_nonlin::training::{
    hinge_objective, solve_hinge, train, HingeOptions, LossKind, ModelFamily, Noise, NoiseMatrix, TrainedModel,
};

fn verdict(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {status} ({detail})");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn random_matrix(rows: usize, cols: usize, rng: &RngStream) -> Matrix {
    let mut s = rng.sampler();
    let mut a = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            a[(i, j)] = s.standard_normal();
        }
    }
    a
}

fn quadrature(sigma: &Nonlinearity) -> MappingParams {
    estimate_moments_quadrature(sigma, DEFAULT_QUADRATURE_NODES).unwrap()
}

fn max_abs_diff(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_01_moment_exactness() {
    let start = Instant::now();
    let pi = std::f64::consts::PI;
    let relu_exact = [1.0 / (2.0 * pi).sqrt(), 0.5, (0.25 - 1.0 / (2.0 * pi)).sqrt()];
    let relu = max_abs_diff(quadrature(&Nonlinearity::Relu).as_array(), relu_exact);
    let softplus = (quadrature(&Nonlinearity::Softplus).mu1 - 0.5).abs();
    let identity = max_abs_diff(quadrature(&Nonlinearity::Identity).as_array(), [0.0, 1.0, 0.0]);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        relu < 1e-6 && softplus < 1e-6 && identity < 1e-12 && elapsed < 1.0,
        &format!("relu err {relu:.2e}, softplus mu1 err {softplus:.2e}, identity err {identity:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_02_synthesis_round_trip() {
    let start = Instant::now();
    let mut s = RngStream::new(2, 0).sampler();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = MappingParams::new(
            6.0 * s.uniform() - 3.0,
            3.0 * (1.0 - s.uniform()),
            3.0 * s.uniform(),
        );
        for sigma in [synthesize_polynomial(&mu), synthesize_piecewise(&mu)] {
            worst = worst.max(max_abs_diff(quadrature(&sigma).as_array(), mu.as_array()));
        }
    }
    let relu = synthesize_piecewise(&quadrature(&Nonlinearity::Relu));
    let Nonlinearity::Piecewise { a, b, c } = relu else {
        panic!("piecewise synthesis returned {relu:?}");
    };
    let relu_ok = (a - 1.0).abs() < 1e-4 && b.abs() < 1e-4 && c.abs() < 1e-4;
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        worst < 1e-6 && relu_ok && elapsed < 5.0,
        &format!("worst round-trip err {worst:.2e}, relu -> (a, b, c) = ({a:.2e}, {b:.2e}, {c:.2e}), {elapsed:.2}s"),
    );
}

/// Plain gradient descent on `|A w - r|^2 / 2 + lambda |w|^2 / 2` from zero.
fn ridge_by_gradient_descent(a: &Matrix, r: &[f64], lambda: f64) -> Vec<f64> {
    let (m, k) = (a.nrows(), a.ncols());
    let frobenius: f64 = (0..m).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
    let step = 1.0 / (frobenius + lambda);
    let mut w = vec![0.0; k];
    for _ in 0..200_000 {
        let residual: Vec<f64> = (0..m).map(|i| (0..k).map(|j| a[(i, j)] * w[j]).sum::<f64>() - r[i]).collect();
        let mut largest: f64 = 0.0;
        for j in 0..k {
            let g = (0..m).map(|i| a[(i, j)] * residual[i]).sum::<f64>() + lambda * w[j];
            w[j] -= step * g;
            largest = largest.max(g.abs());
        }
        if largest < 1e-13 {
            break;
        }
    }
    w
}

#[test]
fn criterion_03_ridge_optimality() {
    let start = Instant::now();
    let root = RngStream::new(3, 0);
    let mut worst_residual: f64 = 0.0;
    let mut worst_forms: f64 = 0.0;
    for t in 0..200 {
        let mut s = root.child2(0, t).sampler();
        let m = 1 + s.below(25);
        let k = 1 + s.below(25);
        let lambda = 10f64.powf(-3.0 + 3.0 * s.uniform());
        let a = random_matrix(m, k, &root.child2(1, t));
        let r: Vec<f64> = (0..m).map(|_| s.standard_normal()).collect();
        let w = ridge_solve(a.as_ref(), &r, lambda).unwrap();
        // A^T (A w - r) + lambda w, computed independently of the library.
        for j in 0..k {
            let g: f64 = (0..m)
                .map(|i| a[(i, j)] * ((0..k).map(|l| a[(i, l)] * w[l]).sum::<f64>() - r[i]))
                .sum::<f64>()
                + lambda * w[j];
            worst_residual = worst_residual.max(g.abs());
        }
        let p = ridge_solve_primal(a.as_ref(), &r, lambda).unwrap();
        let d = ridge_solve_dual(a.as_ref(), &r, lambda).unwrap();
        worst_forms = worst_forms.max(p.iter().zip(&d).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let mut worst_gd: f64 = 0.0;
    for t in 0..20 {
        let mut s = root.child2(2, t).sampler();
        let m = 5 + s.below(10);
        let k = 2 + s.below(10);
        let lambda = 0.5 + s.uniform();
        let a = random_matrix(m, k, &root.child2(3, t));
        let r: Vec<f64> = (0..m).map(|_| s.standard_normal()).collect();
        let w = ridge_solve(a.as_ref(), &r, lambda).unwrap();
        let oracle = ridge_by_gradient_descent(&a, &r, lambda);
        worst_gd = worst_gd.max(w.iter().zip(&oracle).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        3,
        worst_residual < 1e-8 && worst_forms < 1e-8 && worst_gd < 1e-6 && elapsed < 10.0,
        &format!(
            "normal-equation residual {worst_residual:.2e}, primal/dual {worst_forms:.2e}, gradient descent {worst_gd:.2e}, {elapsed:.2}s"
        ),
    );
}

/// Projected subgradient descent with step `1 / (lambda t)`, returning the best
/// objective seen in `iterations` steps.
fn hinge_subgradient_oracle(a: &Matrix, y: &[f64], bias: f64, lambda: f64, iterations: usize) -> f64 {
    let (m, k) = (a.nrows(), a.ncols());
    let rows: Vec<Vec<f64>> = (0..m).map(|i| (0..k).map(|j| a[(i, j)]).collect()).collect();
    let start_objective = y.iter().map(|yi| (1.0 - yi * bias).max(0.0)).sum::<f64>() / m as f64;
    // The minimizer satisfies lambda |w|^2 / 2 <= P(0).
    let radius = (2.0 * start_objective / lambda).sqrt();
    let mut w = vec![0.0; k];
    let mut best = start_objective;
    let mut g = vec![0.0; k];
    for t in 1..=iterations {
        g.iter_mut().zip(&w).for_each(|(gj, wj)| *gj = lambda * wj);
        let mut loss = 0.0;
        for (row, yi) in rows.iter().zip(y) {
            let score: f64 = row.iter().zip(&w).map(|(x, wj)| x * wj).sum::<f64>() + bias;
            let margin = 1.0 - yi * score;
            if margin > 0.0 {
                loss += margin;
                for (gj, x) in g.iter_mut().zip(row) {
                    *gj -= yi * x / m as f64;
                }
            }
        }
        let norm2: f64 = w.iter().map(|v| v * v).sum();
        best = best.min(loss / m as f64 + 0.5 * lambda * norm2);
        let step = 1.0 / (lambda * t as f64);
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= step * gj);
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
    }
    best
}

#[test]
fn criterion_04_hinge_solver() {
    let start = Instant::now();
    let root = RngStream::new(4, 0);
    let mut worst_gap: f64 = 0.0;
    for t in 0..20 {
        let mut s = root.child2(0, t).sampler();
        let m = 10 + s.below(41);
        let k = 2 + s.below(9);
        let lambda = 10f64.powf(-2.0 + 2.0 * s.uniform());
        let a = random_matrix(m, k, &root.child2(1, t));
        let y: Vec<f64> = (0..m).map(|_| if s.uniform() < 0.5 { -1.0 } else { 1.0 }).collect();
        let bias = y.iter().sum::<f64>() / m as f64;
        let sol = solve_hinge(a.as_ref(), &y, bias, lambda, &HingeOptions::default()).unwrap();
        let objective = hinge_objective(a.as_ref(), &y, bias, lambda, &sol.omega);
        let oracle = hinge_subgradient_oracle(&a, &y, bias, lambda, 1_000_000);
        worst_gap = worst_gap.max(((objective - oracle) / oracle).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        4,
        worst_gap <= 1e-6 && elapsed < 120.0,
        &format!("worst relative gap to the subgradient oracle {worst_gap:.2e}, {elapsed:.1}s"),
    );
}

fn regression_sweep(n: usize, m: usize, trials: usize) -> SweepConfig {
    SweepConfig {
        data: DataSource::Teacher {
            n,
            m,
            psi: TeacherKind::Relu,
            delta: 0.05,
            test_samples: 10_000,
            search_samples: None,
        },
        ratios: vec![0.25, 0.5, 1.0, 2.0],
        trials,
        loss: LossKind::Squared,
        lambda: 1e-2,
        baselines: vec![Nonlinearity::Relu, Nonlinearity::Softplus],
        optimize: false,
        grid: default_grid(1.0),
        search_noise: NoiseMode::Shared,
        hinge: HingeOptions::default(),
        seed: 2024,
    }
}

fn equivalence_holds(records: &[SweepRecord], tolerance: f64) -> bool {
    let report = equivalence_report(records, tolerance).unwrap();
    let worst = report
        .rows
        .iter()
        .map(|r| r.train_gap.max(r.gen_gap))
        .fold(0.0, f64::max);
    for row in &report.rows {
        let _ = writeln!(
            std::io::stderr(),
            "  k/m = {:<5} {:>14} vs {:<15} train gap {:6.2}%  gen gap {:6.2}%",
            row.ratio,
            row.rfm_id,
            row.gaussian_id,
            100.0 * row.train_gap,
            100.0 * row.gen_gap
        );
    }
    report.pass && worst <= tolerance
}

#[test]
fn criterion_05_gaussian_equivalence_smoke() {
    let start = Instant::now();
    let records = run_sweep(&regression_sweep(100, 300, 10)).unwrap();
    let pass = equivalence_holds(&records, 0.10);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        5,
        pass && elapsed < 30.0,
        &format!("smoke variant n=100 m=300, 10 trials, within 10%, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_05_gaussian_equivalence() {
    let start = Instant::now();
    let records = run_sweep(&regression_sweep(400, 1200, 50)).unwrap();
    let pass = equivalence_holds(&records, 0.05);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(5, pass, &format!("n=400 m=1200, 50 trials, within 5%, {elapsed:.0}s"));
}

#[test]
fn criterion_06_optimized_nonlinearity_dominance() {
    let start = Instant::now();
    let config = SweepConfig {
        data: DataSource::Teacher {
            n: 200,
            m: 600,
            psi: TeacherKind::Sign,
            delta: 0.0,
            test_samples: 10_000,
            search_samples: None,
        },
        ratios: vec![0.25, 0.5, 1.0, 2.0],
        trials: 50,
        loss: LossKind::Squared,
        lambda: 1e-1,
        baselines: vec![Nonlinearity::Relu],
        optimize: true,
        grid: default_grid(1.0),
        search_noise: NoiseMode::Shared,
        hinge: HingeOptions::default(),
        seed: 6,
    };
    let records = run_sweep(&config).unwrap();
    let mut dominance = true;
    let mut worst_family_gap: f64 = 0.0;
    for r in &records {
        let optimal = r.model(OPTIMAL_GAUSSIAN_ID).unwrap();
        let relu = r.model("rfm:relu").unwrap();
        let poly = r.model(POLYNOMIAL_RFM_ID).unwrap();
        let piecewise = r.model(PIECEWISE_RFM_ID).unwrap();
        dominance &= optimal.gen_error.mean <= relu.gen_error.mean;
        worst_family_gap = worst_family_gap
            .max(relative_gap(poly.gen_error.mean, piecewise.gen_error.mean))
            .max(relative_gap(poly.train_error.mean, piecewise.train_error.mean));
        let _ = writeln!(
            std::io::stderr(),
            "  k/m = {:<5} optimal gen {:.5}  relu gen {:.5}  polynomial gen {:.5}  piecewise gen {:.5}",
            r.ratio,
            optimal.gen_error.mean,
            relu.gen_error.mean,
            poly.gen_error.mean,
            piecewise.gen_error.mean
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        6,
        dominance && worst_family_gap <= 0.05,
        &format!(
            "optimum <= relu at every ratio: {dominance}, polynomial vs piecewise gap {:.2}%, {elapsed:.0}s",
            100.0 * worst_family_gap
        ),
    );
}

#[test]
fn criterion_07_double_descent_mitigation() {
    let start = Instant::now();
    let config = SweepConfig {
        data: DataSource::Teacher {
            n: 400,
            m: 1200,
            psi: TeacherKind::Sign,
            delta: 0.0,
            test_samples: 10_000,
            search_samples: None,
        },
        ratios: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0],
        trials: 50,
        loss: LossKind::Squared,
        lambda: 1e-4,
        baselines: vec![Nonlinearity::Relu],
        optimize: true,
        grid: reduced_grid(1.0),
        search_noise: NoiseMode::Shared,
        hinge: HingeOptions::default(),
        seed: 7,
    };
    let records = run_sweep(&config).unwrap();
    let relu = model_curve(&records, "rfm:relu");
    let optimal = model_curve(&records, OPTIMAL_GAUSSIAN_ID);
    let at = |curve: &[(f64, f64)], ratio: f64| curve.iter().find(|p| p.0 == ratio).unwrap().1;
    let peak = at(&relu, 1.0);
    let peaked = peak > at(&relu, 0.5) && peak > at(&relu, 2.0);
    let relu_monotone = monotonicity_check(&relu, 0.05);
    let optimal_monotone = monotonicity_check(&optimal, 0.05);
    for ((ratio, r), (_, o)) in relu.iter().zip(&optimal) {
        let _ = writeln!(std::io::stderr(), "  k/m = {ratio:<5} relu gen {r:.5}  optimal gen {o:.5}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        7,
        peaked && !relu_monotone && optimal_monotone,
        &format!(
            "relu peaks at 1: {peaked}, relu monotone: {relu_monotone}, optimal monotone: {optimal_monotone}, {elapsed:.0}s"
        ),
    );
}

fn gaussian_model(mu: MappingParams, features: &rfm_nonlin::data::FeatureMatrix, z: &Matrix) -> ModelFamily {
    ModelFamily::Gaussian {
        mu,
        features: features.clone(),
        z_train: NoiseMatrix::from_matrix(z.clone()),
    }
}

fn train_predictions(model: &TrainedModel, data: &Dataset) -> Vec<f64> {
    model.predict_with(data.x.as_ref(), Noise::Stored).unwrap()
}

#[test]
fn criterion_08_scale_covariance() {
    let start = Instant::now();
    let root = RngStream::new(8, 0);
    let teacher = make_teacher(10, TeacherKind::Relu, 0.1, &root.child(0)).unwrap();
    let data = generate(&teacher, 30, Role::Train, &root.child(1)).unwrap();
    let (mu1, mu2, lambda) = (0.7, 0.4, 0.05);
    let mut worst: f64 = 0.0;
    for k in [12, 45] {
        let features = sample_features(10, k, &root.child2(2, k as u64)).unwrap();
        let z = random_matrix(30, k, &root.child2(3, k as u64));
        for c in [0.5, 2.0] {
            let scaled = train(
                gaussian_model(MappingParams::new(0.0, c * mu1, c * mu2), &features, &z),
                &data,
                LossKind::Squared,
                lambda,
            )
            .unwrap();
            let reference = train(
                gaussian_model(MappingParams::new(0.0, mu1, mu2), &features, &z),
                &data,
                LossKind::Squared,
                lambda / (c * c),
            )
            .unwrap();
            let a = train_predictions(&scaled, &data);
            let b = train_predictions(&reference, &data);
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        8,
        worst < 1e-8 && elapsed < 5.0,
        &format!("largest training-prediction difference {worst:.2e}, {elapsed:.2}s"),
    );
}

fn rfm(args: &[&str], out_dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rfm"))
        .args(args)
        .arg("--output-dir")
        .arg(out_dir)
        .output()
        .expect("failed to launch rfm")
}

fn write_config(dir: &Path, name: &str, json: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn criterion_09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "det.json",
        r#"{
            "name": "det",
            "data": { "teacher": { "n": 12, "m": 60, "psi": "sign", "test_samples": 500, "search_samples": 500 } },
            "ratios": [0.5, 1.0, 2.0],
            "trials": 4,
            "loss": "squared",
            "lambda": 0.01,
            "baselines": ["relu", "softplus"],
            "optimize": true,
            "reduced_grid": true,
            "seed": 9
        }"#,
    );
    let config = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = rfm(&["--threads", threads, "sweep", "--config", config, "--no-plots"], &out);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let results = std::fs::read(out.join("det_results.csv")).unwrap();
        let surface = std::fs::read(out.join("det_surface.csv")).unwrap();
        outputs.push((results, surface));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        9,
        identical,
        &format!("results and surface CSVs byte-identical over {} reruns", outputs.len()),
    );
}

#[test]
fn criterion_10_latent_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let latent = dir.path().join("latent.csv");
    let status = rfm(
        &["gen-data", "--n", "16", "--m", "500", "--seed", "10", "--out", latent.to_str().unwrap()],
        &out,
    );
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let optimize = write_config(
        dir.path(),
        "opt.json",
        r#"{
            "name": "latent_opt",
            "data": { "latent": { "file": "latent.csv", "split": [0.6, 0.2] } },
            "ratio": 1.0,
            "loss": "squared",
            "lambda": 0.01,
            "reduced_grid": true,
            "seed": 10
        }"#,
    );
    let status = rfm(&["optimize", "--config", optimize.to_str().unwrap()], &out);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    // Offline recomputation from the saved artifacts only.
    let search: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("latent_opt_search.json")).unwrap()).unwrap();
    let best = search["best_error"].as_f64().unwrap();
    let noise = RngStream::new(
        search["eval_noise"]["seed"].as_u64().unwrap(),
        search["eval_noise"]["stream"].as_u64().unwrap(),
    );
    let model: TrainedModel =
        serde_json::from_str(&std::fs::read_to_string(out.join("latent_opt_model.json")).unwrap()).unwrap();
    let validation = load_latent_dataset(&out.join("latent_opt_validation.csv"), Role::Validation).unwrap();
    let yhat = model.predict(validation.x.as_ref(), &noise).unwrap();
    let recomputed =
        validation.y.iter().zip(&yhat).map(|(y, p)| 0.5 * (y - p) * (y - p)).sum::<f64>() / validation.len() as f64;
    let error_match = (recomputed - best).abs();

    let sweep = write_config(
        dir.path(),
        "sweep.json",
        r#"{
            "name": "latent_sweep",
            "data": { "latent": { "file": "latent.csv", "split": [0.6, 0.2] } },
            "ratios": [0.5, 1.0],
            "trials": 3,
            "loss": "squared",
            "lambda": 0.01,
            "baselines": ["relu"],
            "optimize": true,
            "reduced_grid": true,
            "seed": 10
        }"#,
    );
    let status = rfm(&["sweep", "--config", sweep.to_str().unwrap(), "--no-plots"], &out);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let mut reader = csv::Reader::from_path(out.join("latent_sweep_results.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let mut accuracy_rows = 0;
    let mut well_formed = header == ["ratio", "model_id", "metric", "mean", "stderr", "trials"];
    for row in reader.records() {
        let row = row.unwrap();
        if row[2].ends_with("_acc") {
            accuracy_rows += 1;
            let mean: f64 = row[3].parse().unwrap();
            let stderr: f64 = row[4].parse().unwrap();
            well_formed &= (0.0..=1.0).contains(&mean) && stderr >= 0.0 && &row[5] == "3";
        }
    }
    // 2 ratios x 5 models x (train_acc, gen_acc).
    well_formed &= accuracy_rows == 20;
    verdict(
        10,
        error_match <= 1e-10 && well_formed,
        &format!("offline recomputation differs by {error_match:.2e}, {accuracy_rows} well-formed accuracy rows: {well_formed}"),
    );
}
