//! The grid oracle's answer is within α + β‖σ‖₁ of the exact minimum, and
//! the exact oracle agrees with a fine brute-force scan.

use ftpl::adversary::oblivious_hinge_sequence;
use ftpl::{contract_check, BoxDomain, Oracle, OracleQuery, Stream};

fn main() -> ftpl::Result<()> {
    let domain = BoxDomain::cube(1, -5.0, 5.0)?;
    let losses = oblivious_hinge_sequence(&domain, 12, Stream::new(2));
    let sigma = [1.3];
    let q = OracleQuery::new(&losses, None, &sigma, &domain)?;
    let exact = Oracle::Pwl1d.minimize(&q, Stream::new(0))?;
    println!("exact      x = {:+.5}  value {:.6}", exact.minimizer[0], exact.value);
    for h in [0.5, 0.1, 0.01] {
        let a = Oracle::grid(h).minimize(&q, Stream::new(0))?;
        println!(
            "grid h={h:<4} x = {:+.5}  value {:.6}  γ(σ) = {:.4}  contract {}",
            a.minimizer[0],
            a.value,
            a.gamma(&sigma).unwrap_or(f64::NAN),
            contract_check(&a, &q, exact.value)
        );
    }
    let brute = (0..=100_000)
        .map(|k| q.objective(&[-5.0 + k as f64 * 1e-4]))
        .fold(f64::INFINITY, f64::min);
    println!("brute force (step 1e-4) value {brute:.6}");
    Ok(())
}
