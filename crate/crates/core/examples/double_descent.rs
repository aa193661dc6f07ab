//! Double descent of ReLU features versus the optimized nonlinearities on a
//! sign-teacher classification task with the squared loss.
//!
//! Run with `cargo run --release --example double_descent [n m trials lambda]`.
//! Defaults are a small, fast configuration.

use rfm_nonlin::data::TeacherKind;
use rfm_nonlin::experiments::{
    model_curve, monotonicity_check, run_sweep, DataSource, SweepConfig, OPTIMAL_GAUSSIAN_ID, PIECEWISE_RFM_ID,
    POLYNOMIAL_RFM_ID,
};
use rfm_nonlin::gridsearch::{reduced_grid, NoiseMode};
use rfm_nonlin::nonlinearity::Nonlinearity;
use rfm_nonlin::training::{HingeOptions, LossKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (n, m, trials, lambda) = match &args[..] {
        [n, m, t, l] => (n.parse()?, m.parse()?, t.parse()?, l.parse()?),
        _ => (100, 300, 5, 1e-4),
    };
    let config = SweepConfig {
        data: DataSource::Teacher {
            n,
            m,
            psi: TeacherKind::Sign,
            delta: 0.0,
            test_samples: 10_000,
            search_samples: None,
        },
        ratios: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0],
        trials,
        loss: LossKind::Squared,
        lambda,
        baselines: vec![Nonlinearity::Relu],
        optimize: true,
        grid: reduced_grid(1.0),
        search_noise: NoiseMode::Shared,
        hinge: HingeOptions::default(),
        seed: 7,
    };
    let start = std::time::Instant::now();
    let records = run_sweep(&config)?;
    println!("sweep took {:.1?}", start.elapsed());
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}   mu_opt", "k/m", "rfm:relu", "optimal", "polynomial", "piecewise");
    for r in &records {
        let gen = |id: &str| r.model(id).map_or(f64::NAN, |m| m.gen_error.mean);
        let mu = r.model(OPTIMAL_GAUSSIAN_ID).and_then(|m| m.mu_opt).unwrap();
        println!(
            "{:>6} {:>12.5} {:>12.5} {:>12.5} {:>12.5}   ({:.3}, {:.3}, {:.3})",
            r.ratio,
            gen("rfm:relu"),
            gen(OPTIMAL_GAUSSIAN_ID),
            gen(POLYNOMIAL_RFM_ID),
            gen(PIECEWISE_RFM_ID),
            mu[0].mean,
            mu[1].mean,
            mu[2].mean
        );
    }
    for id in ["rfm:relu", OPTIMAL_GAUSSIAN_ID, POLYNOMIAL_RFM_ID, PIECEWISE_RFM_ID] {
        let monotone = monotonicity_check(&model_curve(&records, id), 0.05);
        println!("{id:>16}: monotone within slack 0.05: {monotone}");
    }
    Ok(())
}
