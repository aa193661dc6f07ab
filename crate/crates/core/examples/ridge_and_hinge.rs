//! Squared and hinge losses on the same sign-teacher classification task.
//!
//! Run with `cargo run --release --example ridge_and_hinge`.

use rfm_nonlin::data::{generate, make_teacher, sample_features, Role, TeacherKind};
use rfm_nonlin::nonlinearity::Nonlinearity;
use rfm_nonlin::rng::RngStream;
use rfm_nonlin::training::{
    evaluate_accuracy, evaluate_error, featurize, solve_hinge, train, HingeOptions, LossKind, ModelFamily, Noise,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, m, k) = (50, 400, 200);
    let root = RngStream::new(3, 0);
    let teacher = make_teacher(n, TeacherKind::Sign, 0.0, &root.child(0))?;
    let train_set = generate(&teacher, m, Role::Train, &root.child(1))?;
    let test_set = generate(&teacher, 10_000, Role::Test, &root.child(2))?;
    let features = sample_features(n, k, &root.child(3))?;
    let family = ModelFamily::rfm(Nonlinearity::Relu, features);

    for (loss, lambda) in [(LossKind::Squared, 1e-2), (LossKind::Hinge, 1e-2)] {
        let model = train(family.clone(), &train_set, loss, lambda)?;
        let rng = root.child(4);
        println!(
            "{loss:?}: train loss {:.4}, test loss {:.4}, train acc {:.3}, test acc {:.3}",
            evaluate_error(&model, &train_set, loss, &rng)?,
            evaluate_error(&model, &test_set, loss, &rng)?,
            evaluate_accuracy(&model, &train_set, &rng)?,
            evaluate_accuracy(&model, &test_set, &rng)?,
        );
    }

    // The hinge solver directly, with its convergence certificate.
    let a = featurize(&family, train_set.x.as_ref(), Noise::Stored)?;
    let bias = train_set.label_mean();
    let sol = solve_hinge(a.as_ref(), &train_set.y, bias, 1e-2, &HingeOptions::default())?;
    println!(
        "hinge solver: objective {:.6} (from {:.6}) after {} epochs, relative duality gap {:.1e}",
        sol.objective, sol.start_objective, sol.epochs, sol.gap
    );
    Ok(())
}
