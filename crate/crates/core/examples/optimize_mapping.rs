//! Grid search for the Gaussian-model mapping parameters on a sign teacher,
//! then random feature models built from the optimum.
//!
//! Run with `cargo run --release --example optimize_mapping [ratio]`.

use rfm_nonlin::data::{generate, make_teacher, sample_features, Role, TeacherKind};
use rfm_nonlin::gridsearch::{default_grid, optimize_mapping_params, EvalSource};
use rfm_nonlin::nonlinearity::{moments, synthesize_piecewise, synthesize_polynomial, Nonlinearity};
use rfm_nonlin::rng::RngStream;
use rfm_nonlin::training::{evaluate_error, train, LossKind, ModelFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ratio: f64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(1.0);
    let (n, m, lambda) = (100, 300, 1e-2);
    let k = (ratio * m as f64).round() as usize;
    let root = RngStream::new(11, 0);
    let teacher = make_teacher(n, TeacherKind::Sign, 0.0, &root.child(0))?;
    let train_set = generate(&teacher, m, Role::Train, &root.child(1))?;
    let test_set = generate(&teacher, 10_000, Role::Test, &root.child(2))?;
    let features = sample_features(n, k, &root.child(3))?;

    let start = std::time::Instant::now();
    let result = optimize_mapping_params(
        &train_set,
        EvalSource::Teacher { teacher: &teacher, samples: None },
        &features,
        LossKind::Squared,
        lambda,
        &default_grid(1.0),
        &root.child(4),
    )?;
    println!("searched {} points in {:.1?}", result.surface.len(), start.elapsed());
    println!("optimum {} (relu: {})", result.mu_opt, moments(&Nonlinearity::Relu)?);
    println!("best eval error {:.5}, train error {:.5}", result.best_error, result.best_train_error);

    let candidates = [
        Nonlinearity::Relu,
        synthesize_polynomial(&result.mu_opt),
        synthesize_piecewise(&result.mu_opt),
    ];
    for sigma in candidates {
        let model = train(ModelFamily::rfm(sigma, features.clone()), &train_set, LossKind::Squared, lambda)?;
        let err = evaluate_error(&model, &test_set, LossKind::Squared, &root.child(5))?;
        println!("{:>40}: test error {err:.5}", sigma.to_string());
    }
    Ok(())
}
