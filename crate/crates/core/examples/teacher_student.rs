//! One teacher-student instance: a ReLU random feature model next to its
//! Gaussian equivalent, trained on the same data and features.
//!
//! Run with `cargo run --release --example teacher_student [n m k]`.

use rfm_nonlin::data::{generate, make_teacher, sample_features, Role, TeacherKind};
use rfm_nonlin::nonlinearity::{moments, Nonlinearity};
use rfm_nonlin::rng::RngStream;
use rfm_nonlin::training::{evaluate_error, train, LossKind, ModelFamily};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (n, m, k) = match args[..] {
        [n, m, k] => (n, m, k),
        _ => (200, 600, 300),
    };
    let root = RngStream::new(42, 0);
    let teacher = make_teacher(n, TeacherKind::Relu, 0.05, &root.child(0))?;
    let train_set = generate(&teacher, m, Role::Train, &root.child(1))?;
    let test_set = generate(&teacher, 10_000, Role::Test, &root.child(2))?;
    let features = sample_features(n, k, &root.child(3))?;
    let lambda = 1e-2;

    let mu = moments(&Nonlinearity::Relu)?;
    println!("n = {n}, m = {m}, k = {k}, relu moments {mu}");
    let families = [
        ("random features", ModelFamily::rfm(Nonlinearity::Relu, features.clone())),
        ("gaussian equivalent", ModelFamily::gaussian(mu, features, m, &root.child(4))),
    ];
    for (name, family) in families {
        let model = train(family, &train_set, LossKind::Squared, lambda)?;
        let train_error = evaluate_error(&model, &train_set, LossKind::Squared, &root.child(5))?;
        let test_error = evaluate_error(&model, &test_set, LossKind::Squared, &root.child(6))?;
        println!("{name:>20}: train {train_error:.5}  test {test_error:.5}");
    }
    Ok(())
}
