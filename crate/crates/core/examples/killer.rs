//! Follow-the-leader against the adversary that always puts a hinge on the
//! learner's current point. Every deterministic learner loses `D/2` per round.

use ftpl::adversary::AdversaryProtocol;
use ftpl::harness::{play, regret};
use ftpl::{BoxDomain, LearnerConfig, Oracle, Stream};

fn main() -> ftpl::Result<()> {
    let diameter = 10.0;
    let horizon = 1000;
    let domain = BoxDomain::cube(1, -diameter, diameter)?;
    let trace = play(
        &LearnerConfig::ftl(Oracle::Pwl1d),
        AdversaryProtocol::Killer { diameter },
        &domain,
        horizon,
        Stream::new(0),
    )?;
    let report = regret(&trace, &Oracle::Pwl1d)?;
    println!("first points: {:?}", &trace.records[..4].iter().map(|r| r.x[0]).collect::<Vec<_>>());
    println!("learner loss   {:>8.1}  (DT/2 = {})", report.learner_cum_loss, diameter * horizon as f64 / 2.0);
    println!("best in hindsight {:>5.1}  (at most DT/4 = {})", report.best_value, diameter * horizon as f64 / 4.0);
    println!("average regret {:>8.3}", report.avg_regret);
    Ok(())
}
