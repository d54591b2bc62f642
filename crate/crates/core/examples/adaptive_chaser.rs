//! FTPL against an adversary that centers each hinge on the learner's last
//! point. The same adversary run against an independent shadow learner and
//! replayed as a fixed sequence yields the same expected regret; i.i.d.
//! hinges are shown for scale.

use ftpl::adversary::{AdversaryProtocol, AdversarySpec};
use ftpl::harness::{game_streams, play, regret, replicate, shadow_sequence, Summary};
use ftpl::{default_eta, BoxDomain, LearnerConfig, Oracle, Stream};

#[derive(Clone, Copy)]
enum Mode {
    Adaptive,
    Replayed,
    Iid,
}

fn main() -> ftpl::Result<()> {
    let domain = BoxDomain::cube(1, -5.0, 5.0)?;
    let chaser = AdversarySpec::Chaser { diameter: None };
    for horizon in [128, 512, 2048] {
        let learner = LearnerConfig::ftpl(default_eta(1.0, 1, horizon)?, Oracle::Pwl1d);
        let mean = |mode: Mode| -> ftpl::Result<Summary> {
            let regrets = replicate(60, 1, |r| {
                let (ls, adv) = game_streams(Stream::new(17).child(horizon as u64), r);
                let adversary = match mode {
                    Mode::Adaptive => chaser.build(&domain, horizon, adv)?,
                    Mode::Replayed => AdversaryProtocol::Oblivious(shadow_sequence(
                        &learner,
                        chaser.build(&domain, horizon, adv)?,
                        &domain,
                        horizon,
                        adv,
                    )?),
                    Mode::Iid => AdversarySpec::ObliviousHinge.build(&domain, horizon, adv)?,
                };
                Ok(regret(&play(&learner, adversary, &domain, horizon, ls)?, &Oracle::Pwl1d)?.avg_regret)
            })?;
            Ok(Summary::of(&regrets))
        };
        let [a, r, i] = [Mode::Adaptive, Mode::Replayed, Mode::Iid].map(mean);
        let (a, r, i) = (a?, r?, i?);
        println!(
            "T = {horizon:>4}  adaptive {:.4} ± {:.4}  replayed {:.4} ± {:.4}  iid {:.4} ± {:.4}",
            a.mean, a.ci_half_width, r.mean, r.ci_half_width, i.mean, i.ci_half_width
        );
    }
    Ok(())
}
