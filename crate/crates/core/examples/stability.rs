//! Frozen-perturbation FTPL moves little between rounds: the Monte Carlo
//! mean of ‖x_t − x_{t+1}‖₁ sits far below 125·η·L·d²·D.

use ftpl::adversary::AdversarySpec;
use ftpl::harness::{game_streams, play, replicate, stability_check};
use ftpl::{BoxDomain, LearnerConfig, Oracle, OracleGuarantee, Stream};

fn main() -> ftpl::Result<()> {
    let domain = BoxDomain::cube(1, -5.0, 5.0)?;
    let horizon = 200;
    for eta in [0.01, 0.05, 0.2, 1.0] {
        let learner = LearnerConfig::ftpl(eta, Oracle::Pwl1d).frozen();
        let traces = replicate(100, 1, |r| {
            let (ls, adv) = game_streams(Stream::new(11), r);
            play(&learner, AdversarySpec::ObliviousHinge.build(&domain, horizon, adv)?, &domain, horizon, ls)
        })?;
        let check = stability_check(&traces, eta, 1.0, 1, domain.linf_diameter(), OracleGuarantee::EXACT)?;
        println!(
            "η = {eta:<5} mean step {:.4} (CI upper {:.4})  bound {:>7.2}  {}",
            check.summary.mean,
            check.summary.upper(),
            check.bound,
            if check.pass { "ok" } else { "VIOLATED" }
        );
    }
    Ok(())
}
