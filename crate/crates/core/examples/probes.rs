//! Monotonicity of the perturbed leader in its own perturbation, probed on a
//! random history with the exact and the grid oracle.

use ftpl::adversary::oblivious_hinge_sequence;
use ftpl::harness::{probe_monotone1, probe_monotone2, probe_monotone_oftpl, Shift};
use ftpl::{BoxDomain, GuessStrategy, LearnerConfig, LearnerState, Oracle, Stream};

fn main() -> ftpl::Result<()> {
    let domain = BoxDomain::cube(1, -5.0, 5.0)?;
    let losses = oblivious_hinge_sequence(&domain, 21, Stream::new(4));
    let (history, next) = losses.split_at(20);
    let sigma = [0.7];
    for oracle in [Oracle::Pwl1d, Oracle::grid(0.01)] {
        let mut ftpl = LearnerState::new(LearnerConfig::ftpl(1.0, oracle.clone()), &domain, Stream::new(0))?;
        let mut oftpl = LearnerState::new(
            LearnerConfig::oftpl(1.0, oracle.clone(), GuessStrategy::LastLoss),
            &domain,
            Stream::new(0),
        )?;
        for f in history {
            ftpl.observe(f.clone())?;
            oftpl.observe(f.clone())?;
        }
        println!("{} oracle", oracle.name());
        for c in [0.1, 1.0, 10.0] {
            let r = probe_monotone1(&ftpl, 0, c, &sigma)?;
            println!("  shift {c:>4}: x(σ+c) = {:.4} ≥ {:.4}  {:?}", r.lhs, r.rhs, r.outcome);
        }
        let r = probe_monotone2(&ftpl, &next[0], 0, &sigma)?;
        println!("  one more loss: {:.4} ≥ {:.4}  {:?}", r.lhs, r.rhs, r.outcome);
        let o = probe_monotone_oftpl(&oftpl, &next[0], 0, Shift::Lipschitz, &sigma, &Oracle::Pwl1d)?;
        println!("  optimistic: {:?}", o.results().map(|r| r.outcome));
    }
    Ok(())
}
