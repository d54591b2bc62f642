//! Average regret of FTPL against oblivious hinges for growing horizons, with
//! a log-log fit of the decay. The full 100-replication version lives in
//! `presets/regret-sweep.toml`.

use ftpl::adversary::AdversarySpec;
use ftpl::harness::{game_streams, play, rate_fit, regret, replicate, RatePoint, Summary};
use ftpl::{default_eta, BoxDomain, LearnerConfig, Oracle, Stream};

fn main() -> ftpl::Result<()> {
    let domain = BoxDomain::cube(1, -5.0, 5.0)?;
    let replications = 100;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut points = Vec::new();
    for horizon in [128, 256, 512, 1024, 2048, 4096] {
        let learner = LearnerConfig::ftpl(default_eta(1.0, 1, horizon)?, Oracle::Pwl1d);
        let regrets = replicate(replications, workers, |r| {
            let (ls, adv) = game_streams(Stream::new(1).child(horizon as u64), r);
            let adversary = AdversarySpec::ObliviousHinge.build(&domain, horizon, adv)?;
            Ok(regret(&play(&learner, adversary, &domain, horizon, ls)?, &Oracle::Pwl1d)?.avg_regret)
        })?;
        let s = Summary::of(&regrets);
        println!("T = {horizon:>5}  regret {:.4} ± {:.4}", s.mean, s.ci_half_width);
        points.push(RatePoint {
            horizon,
            mean_regret: s.mean,
            ci_half_width: s.ci_half_width,
        });
    }
    let fit = rate_fit(points)?;
    println!("slope {:.3}  r² {:.3}  (T^-1/2 has slope -0.5)", fit.slope, fit.r2);
    Ok(())
}
