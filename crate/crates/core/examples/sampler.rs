//! Exponential perturbations by inverse CDF: empirical mean and survival
//! function against 1/η and exp(−ηs).

use ftpl::{sample_perturbation, Stream};

fn main() -> ftpl::Result<()> {
    let n = 1_000_000u64;
    let stream = Stream::new(42);
    for eta in [0.5, 1.0, 2.0] {
        let draws: Vec<f64> = (0..n)
            .map(|pos| sample_perturbation(eta, 1, stream, pos).map(|p| p.sigma[0]))
            .collect::<ftpl::Result<_>>()?;
        let mean = draws.iter().sum::<f64>() / n as f64;
        print!("η = {eta}: mean {mean:.4} (1/η = {:.4})", 1.0 / eta);
        for s in [0.5, 1.0, 2.0].map(|q| q / eta) {
            let survival = draws.iter().filter(|&&z| z >= s).count() as f64 / n as f64;
            print!("  P(σ≥{s:.2}) {survival:.4} vs {:.4}", (-eta * s).exp());
        }
        println!();
    }
    Ok(())
}
