//! When losses repeat for stretches of 10 rounds, guessing the last loss
//! lowers regret. Both learners see the same sequences and perturbations.

use ftpl::adversary::AdversarySpec;
use ftpl::harness::{game_streams, play, regret, replicate, Summary};
use ftpl::{default_eta, BoxDomain, GuessStrategy, LearnerConfig, Oracle, Stream};

fn main() -> ftpl::Result<()> {
    let domain = BoxDomain::cube(1, -5.0, 5.0)?;
    let horizon = 2048;
    let eta = default_eta(1.0, 1, horizon)?;
    let adversary = AdversarySpec::SlowlyVarying { block: 10 };
    let run = |learner: LearnerConfig| {
        replicate(50, 1, |r| {
            let (ls, adv) = game_streams(Stream::new(5), r);
            let trace = play(&learner, adversary.build(&domain, horizon, adv)?, &domain, horizon, ls)?;
            Ok(regret(&trace, &Oracle::Pwl1d)?.avg_regret)
        })
    };
    let ftpl = run(LearnerConfig::ftpl(eta, Oracle::Pwl1d))?;
    let oftpl = run(LearnerConfig::oftpl(eta, Oracle::Pwl1d, GuessStrategy::LastLoss))?;
    let diff: Vec<f64> = oftpl.iter().zip(&ftpl).map(|(a, b)| a - b).collect();
    let (f, o, d) = (Summary::of(&ftpl), Summary::of(&oftpl), Summary::of(&diff));
    println!("FTPL  {:.4} ± {:.4}", f.mean, f.ci_half_width);
    println!("OFTPL {:.4} ± {:.4}", o.mean, o.ci_half_width);
    println!("paired difference {:.4}, 95% interval [{:.4}, {:.4}]", d.mean, d.lower(), d.upper());
    Ok(())
}
