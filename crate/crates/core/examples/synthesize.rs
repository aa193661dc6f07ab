//! Builds the polynomial and piecewise-linear activations matching a target
//! `(mu0, mu1, mu2)` and checks their moments.
//!
//! Run with `cargo run --release --example synthesize [mu0,mu1,mu2]`.
//! Without an argument the ReLU moments are used, which the piecewise family
//! maps back to ReLU itself.

use rfm_nonlin::nonlinearity::{moments, synthesize_piecewise, synthesize_polynomial, MappingParams, Nonlinearity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target: MappingParams = match std::env::args().nth(1) {
        Some(spec) => spec.parse()?,
        None => moments(&Nonlinearity::Relu)?,
    };
    target.check_trainable()?;
    println!("target moments {target}");
    for sigma in [synthesize_polynomial(&target), synthesize_piecewise(&target)] {
        let check = moments(&sigma)?;
        let err = check
            .as_array()
            .iter()
            .zip(target.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{sigma}");
        println!("  sigma(-1), sigma(0), sigma(1) = {:.4}, {:.4}, {:.4}", sigma.evaluate(-1.0), sigma.evaluate(0.0), sigma.evaluate(1.0));
        println!("  moments {check}, max error {err:.1e}");
    }
    Ok(())
}
