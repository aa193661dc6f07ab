//! Paired RFM and Gaussian-equivalent errors on a ReLU regression task.
//!
//! Run with `cargo run --release --example gaussian_equivalence [n m trials]`.

use rfm_nonlin::data::TeacherKind;
use rfm_nonlin::experiments::{equivalence_report, run_sweep, DataSource, SweepConfig};
use rfm_nonlin::gridsearch::{default_grid, NoiseMode};
use rfm_nonlin::nonlinearity::Nonlinearity;
use rfm_nonlin::training::{HingeOptions, LossKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (n, m, trials) = match args[..] {
        [n, m, t] => (n, m, t),
        _ => (100, 300, 10),
    };
    let config = SweepConfig {
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
    };
    let start = std::time::Instant::now();
    let records = run_sweep(&config)?;
    println!("sweep took {:.1?}", start.elapsed());
    println!("{:>6} {:>16} {:>12} {:>12}", "k/m", "model", "train", "gen");
    for r in &records {
        for model in &r.models {
            println!(
                "{:>6} {:>16} {:>12.6} {:>12.6}",
                r.ratio, model.model_id, model.train_error.mean, model.gen_error.mean
            );
        }
    }
    let report = equivalence_report(&records, 0.05)?;
    for row in &report.rows {
        println!(
            "k/m = {:<5} {:>14} vs {:<15} train gap {:6.2}%  gen gap {:6.2}%",
            row.ratio,
            row.rfm_id,
            row.gaussian_id,
            100.0 * row.train_gap,
            100.0 * row.gen_gap
        );
    }
    println!("equivalent within 5%: {}", report.pass);
    Ok(())
}
