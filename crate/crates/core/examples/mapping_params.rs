//! Mapping parameters of the built-in activations, by quadrature and by
//! Monte Carlo.
//!
//! Run with `cargo run --release --example mapping_params`.

use rfm_nonlin::nonlinearity::{moments, montecarlo_moments, Nonlinearity};
use rfm_nonlin::rng::RngStream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let activations: Vec<Nonlinearity> = ["relu", "softplus", "identity", "piecewise:1,0.1,0", "polynomial:0,1,0.5"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    println!("{:>20} {:>10} {:>10} {:>10}   Monte Carlo (1e6 draws)", "sigma", "mu0", "mu1", "mu2");
    for sigma in &activations {
        let exact = moments(sigma)?;
        let mc = montecarlo_moments(sigma, 1_000_000, &RngStream::new(1, 0))?;
        println!(
            "{:>20} {:>10.6} {:>10.6} {:>10.6}   {:.4} +- {:.4}, {:.4} +- {:.4}, {:.4} +- {:.4}",
            sigma.to_string(),
            exact.mu0,
            exact.mu1,
            exact.mu2,
            mc.params.mu0,
            mc.stderr[0],
            mc.params.mu1,
            mc.stderr[1],
            mc.params.mu2,
            mc.stderr[2],
        );
    }
    Ok(())
}
