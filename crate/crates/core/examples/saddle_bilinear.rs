//! Two FTPL players on min_x max_y x·y over [-1, 1]². The averaged play
//! approaches the equilibrium at the origin.

use ftpl::saddle::{saddle_report, solve_saddle, PayoffFunction};
use ftpl::{default_eta, LearnerConfig, Oracle, Stream};

fn main() -> ftpl::Result<()> {
    let payoff = PayoffFunction::xy();
    for horizon in [256, 1024, 4096, 8192] {
        let learner = LearnerConfig::ftpl(default_eta(1.0, 1, horizon)?, Oracle::Pwl1d);
        let run = solve_saddle(&payoff, horizon, &learner, &learner, Stream::new(9))?;
        let r = saddle_report(&payoff, &run, &Oracle::Pwl1d)?;
        println!(
            "T = {horizon:>5}  gap {:.4}  regret_x {:+.4}  regret_y {:+.4}  mean x {:+.3}  mean y {:+.3}",
            r.gap.gap,
            r.regret_x,
            r.regret_y,
            run.mix_x.mean()[0],
            run.mix_y.mean()[0]
        );
    }
    Ok(())
}
