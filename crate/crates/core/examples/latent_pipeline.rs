//! The latent-data workflow: write a dataset in the CSV format, reload and
//! split it, optimize on the validation set and report test accuracy.
//!
//! Run with `cargo run --release --example latent_pipeline [dir]`.

use std::path::PathBuf;

use rfm_nonlin::data::{
    generate, load_latent_dataset, make_teacher, sample_features, save_latent_dataset, split, Role, TeacherKind,
};
use rfm_nonlin::gridsearch::{optimize_mapping_params, reduced_grid, EvalSource};
use rfm_nonlin::nonlinearity::{synthesize_piecewise, Nonlinearity};
use rfm_nonlin::rng::RngStream;
use rfm_nonlin::training::{evaluate_accuracy, train, LossKind, ModelFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let path = dir.join("latent_example.csv");
    let root = RngStream::new(5, 0);

    // Stand-in for encoder latents: Gaussian inputs with +-1 labels.
    let teacher = make_teacher(32, TeacherKind::Sign, 0.0, &root.child(0))?;
    save_latent_dataset(&generate(&teacher, 1000, Role::Train, &root.child(1))?, &path)?;
    println!("wrote {}", path.display());

    let all = load_latent_dataset(&path, Role::Train)?;
    let (train_set, validation, test) = split(&all, (0.6, 0.2), &root.child(2))?;
    println!("split sizes {} / {} / {}", train_set.len(), validation.len(), test.len());

    let features = sample_features(all.dim(), train_set.len(), &root.child(3))?;
    let lambda = 1e-2;
    let result = optimize_mapping_params(
        &train_set,
        EvalSource::Validation(&validation),
        &features,
        LossKind::Squared,
        lambda,
        &reduced_grid(1.0),
        &root.child(4),
    )?;
    println!("optimum {} with validation error {:.5}", result.mu_opt, result.best_error);

    for sigma in [Nonlinearity::Relu, synthesize_piecewise(&result.mu_opt)] {
        let model = train(ModelFamily::rfm(sigma, features.clone()), &train_set, LossKind::Squared, lambda)?;
        let acc = evaluate_accuracy(&model, &test, &root.child(5))?;
        println!("{:>40}: test accuracy {acc:.3}", sigma.to_string());
    }
    Ok(())
}
