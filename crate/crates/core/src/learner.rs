//! FTPL, optimistic FTPL and the follow-the-leader baseline.
//!
//! All three variants predict with one oracle call per round:
//!
//! ```text
//! FTPL   x_t = O(Σ_{i<t} f_i − σ_t)
//! OFTPL  x_t = O(Σ_{i<t} f_i + g_t − σ_t)
//! FTL    x_t = O(Σ_{i<t} f_i)
//! ```
//!
//! where σ_t has i.i.d. `Exp(η)` coordinates and `g_t` is a guess of the
//! upcoming loss built from the history.

use serde::{Deserialize, Serialize};

use crate::domain::{BoxDomain, Point};
use crate::error::{Error, Result};
use crate::loss::LossFunction;
use crate::oracle::{CumulativeObjective, Oracle, OracleAnswer};
use crate::perturbation::{sample_perturbation, Stream};

const PERTURBATION_TAG: u64 = 0x7065_7274;
const ORACLE_TAG: u64 = 0x6f72_636c;

/// How the guess `g_t` of OFTPL is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessStrategy {
    Zero,
    LastLoss,
    RunningAverage,
}

/// Fresh draws σ_t every round, or one σ reused for the whole game.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    #[default]
    Fresh,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Ftpl,
    Oftpl(GuessStrategy),
    Ftl,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Ftpl => "ftpl",
            Variant::Oftpl(_) => "oftpl",
            Variant::Ftl => "ftl",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    /// Rate of the exponential perturbation. `+∞` turns FTPL into a
    /// deterministic learner.
    pub eta: f64,
    pub oracle: Oracle,
    pub mode: PerturbationMode,
    pub variant: Variant,
}

impl LearnerConfig {
    pub fn ftpl(eta: f64, oracle: Oracle) -> Self {
        LearnerConfig {
            eta,
            oracle,
            mode: PerturbationMode::Fresh,
            variant: Variant::Ftpl,
        }
    }

    pub fn oftpl(eta: f64, oracle: Oracle, guess: GuessStrategy) -> Self {
        LearnerConfig {
            variant: Variant::Oftpl(guess),
            ..Self::ftpl(eta, oracle)
        }
    }

    pub fn ftl(oracle: Oracle) -> Self {
        LearnerConfig {
            eta: f64::INFINITY,
            oracle,
            mode: PerturbationMode::Fresh,
            variant: Variant::Ftl,
        }
    }

    pub fn frozen(self) -> Self {
        LearnerConfig {
            mode: PerturbationMode::Frozen,
            ..self
        }
    }

    /// Predictions are a function of the past losses alone.
    pub fn is_deterministic(&self) -> bool {
        matches!(self.variant, Variant::Ftl) || self.eta.is_infinite()
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.variant, Variant::Ftl) {
            return Ok(());
        }
        if !(self.eta > 0.0) {
            return Err(Error::param("eta", format!("must be positive, got {}", self.eta)));
        }
        Ok(())
    }
}

/// `η = 1/(L·√(d·T))`, which balances the `ηd²DL²` and `dD/(ηT)` terms of
/// the regret bound up to the factor `D`.
pub fn default_eta(lipschitz: f64, d: usize, horizon: usize) -> Result<f64> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::param("lipschitz", "must be positive"));
    }
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    if horizon == 0 {
        return Err(Error::param("T", "must be at least 1"));
    }
    Ok(1.0 / (lipschitz * ((d * horizon) as f64).sqrt()))
}

/// Build `g_t` from `f_1 … f_{t−1}`. The returned Lipschitz constant is
/// `0`, `L(f_{t−1})` or `max_i L(f_i)` respectively.
pub fn make_guess(strategy: GuessStrategy, history: &[LossFunction], dim: usize) -> LossFunction {
    match (strategy, history.last()) {
        (GuessStrategy::Zero, _) | (_, None) => LossFunction::zero(dim),
        (GuessStrategy::LastLoss, Some(last)) => last.clone(),
        (GuessStrategy::RunningAverage, Some(_)) => {
            let n = history.len() as f64;
            let max_l = history.iter().map(LossFunction::lipschitz).fold(0.0, f64::max);
            let sum = LossFunction::sum(dim, history.to_vec())
                .expect("history shares the learner's dimension");
            LossFunction::scaled(1.0 / n, sum).with_lipschitz(max_l)
        }
    }
}

/// Lipschitz constant used for `f_t − g_t`: zero when the guess is the loss
/// itself, `L(f_t)` without a guess, and the over-approximation
/// `L(f_t) + L(g_t)` otherwise.
pub fn guess_error_lipschitz(loss: &LossFunction, guess: Option<&LossFunction>) -> f64 {
    match guess {
        None => loss.lipschitz(),
        Some(g) if g.same_function(loss) => 0.0,
        Some(g) => loss.lipschitz() + g.lipschitz(),
    }
}

/// A round's prediction with everything needed to audit it.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub round: usize,
    pub point: Point,
    pub sigma: Vec<f64>,
    pub guess: Option<LossFunction>,
    pub answer: OracleAnswer,
}

/// History `f_1 … f_{t−1}` plus the randomness of one learner.
#[derive(Clone, Debug)]
pub struct LearnerState {
    config: LearnerConfig,
    objective: CumulativeObjective,
    frozen_sigma: Option<Vec<f64>>,
    stream: Stream,
}

impl LearnerState {
    pub fn new(config: LearnerConfig, domain: &BoxDomain, stream: Stream) -> Result<Self> {
        config.validate()?;
        let objective = CumulativeObjective::new(&config.oracle, domain)?;
        let frozen_sigma = match config.mode {
            PerturbationMode::Frozen => Some(Self::draw(&config, domain.dim(), stream, 0)?),
            PerturbationMode::Fresh => None,
        };
        Ok(LearnerState {
            config,
            objective,
            frozen_sigma,
            stream,
        })
    }

    fn draw(config: &LearnerConfig, d: usize, stream: Stream, position: u64) -> Result<Vec<f64>> {
        if matches!(config.variant, Variant::Ftl) {
            return Ok(vec![0.0; d]);
        }
        Ok(sample_perturbation(config.eta, d, stream.child(PERTURBATION_TAG), position)?.sigma)
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn domain(&self) -> &BoxDomain {
        self.objective.domain()
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    /// The round `t` about to be predicted.
    pub fn round(&self) -> usize {
        self.objective.len() + 1
    }

    pub fn history(&self) -> &[LossFunction] {
        self.objective.history()
    }

    pub fn objective(&self) -> &CumulativeObjective {
        &self.objective
    }

    pub fn frozen_sigma(&self) -> Option<&[f64]> {
        self.frozen_sigma.as_deref()
    }

    /// σ_t for the current round.
    pub fn current_sigma(&self) -> Result<Vec<f64>> {
        match &self.frozen_sigma {
            Some(s) => Ok(s.clone()),
            None => Self::draw(
                &self.config,
                self.domain().dim(),
                self.stream,
                self.round() as u64,
            ),
        }
    }

    /// `g_t` for OFTPL, `None` otherwise.
    pub fn current_guess(&self) -> Option<LossFunction> {
        match self.config.variant {
            Variant::Oftpl(strategy) => Some(make_guess(
                strategy,
                self.history(),
                self.domain().dim(),
            )),
            _ => None,
        }
    }

    /// The prediction the learner would make this round under perturbation
    /// `sigma`, i.e. `x_t(σ)`.
    pub fn predict_with_sigma(&self, sigma: &[f64]) -> Result<OracleAnswer> {
        let guess = self.current_guess();
        self.objective.minimize(
            guess.as_ref(),
            sigma,
            self.stream.child(ORACLE_TAG).child(self.round() as u64),
        )
    }

    fn predict_as(&self, expected: fn(&Variant) -> bool) -> Result<Prediction> {
        if !expected(&self.config.variant) {
            return Err(Error::param(
                "variant",
                format!("learner is configured as {}", self.config.variant.name()),
            ));
        }
        self.predict()
    }

    pub fn ftpl_predict(&self) -> Result<Prediction> {
        self.predict_as(|v| matches!(v, Variant::Ftpl))
    }

    pub fn oftpl_predict(&self) -> Result<Prediction> {
        self.predict_as(|v| matches!(v, Variant::Oftpl(_)))
    }

    pub fn ftl_predict(&self) -> Result<Prediction> {
        self.predict_as(|v| matches!(v, Variant::Ftl))
    }

    /// Predict `x_t` for the current round.
    pub fn predict(&self) -> Result<Prediction> {
        let round = self.round();
        if matches!(self.config.variant, Variant::Ftl) && round == 1 {
            let point = self.domain().lower_corner();
            let value = 0.0;
            return Ok(Prediction {
                round,
                sigma: vec![0.0; point.dim()],
                guess: None,
                answer: OracleAnswer {
                    minimizer: point.clone(),
                    value,
                    guarantee: Some(crate::oracle::OracleGuarantee::EXACT),
                },
                point,
            });
        }
        let sigma = self.current_sigma()?;
        let guess = self.current_guess();
        let answer = self.objective.minimize(
            guess.as_ref(),
            &sigma,
            self.stream.child(ORACLE_TAG).child(round as u64),
        )?;
        Ok(Prediction {
            round,
            point: answer.minimizer.clone(),
            sigma,
            guess,
            answer,
        })
    }

    /// Record `f_t` and advance to round `t + 1`.
    pub fn observe(&mut self, loss: LossFunction) -> Result<()> {
        self.objective.push(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hinge(a: f64) -> LossFunction {
        LossFunction::hinge(Point::new(vec![a]), 10.0).unwrap()
    }

    fn dom() -> BoxDomain {
        BoxDomain::cube(1, -10.0, 10.0).unwrap()
    }

    #[test]
    fn first_round_ftpl_plays_upper_corner() {
        let d3 = BoxDomain::new(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 4.0]).unwrap();
        let s = LearnerState::new(LearnerConfig::ftpl(0.5, Oracle::grid(0.5)), &d3, Stream::new(1))
            .unwrap();
        let p = s.ftpl_predict().unwrap();
        assert!(p.sigma.iter().all(|&v| v > 0.0));
        assert_eq!(p.point, d3.upper_corner());

        let s1 = LearnerState::new(LearnerConfig::ftpl(0.5, Oracle::Pwl1d), &dom(), Stream::new(1))
            .unwrap();
        assert_eq!(s1.predict().unwrap().point[0], 10.0);
    }

    #[test]
    fn ftpl_with_hinge_history_and_fixed_sigma() {
        let mut s = LearnerState::new(LearnerConfig::ftpl(1.0, Oracle::Pwl1d), &dom(), Stream::new(2))
            .unwrap();
        s.observe(hinge(0.0)).unwrap();
        assert_eq!(s.predict_with_sigma(&[0.1]).unwrap().minimizer[0], 10.0);
    }

    #[test]
    fn frozen_mode_repeats_itself() {
        let cfg = LearnerConfig::ftpl(0.3, Oracle::Pwl1d).frozen();
        let mut s = LearnerState::new(cfg, &dom(), Stream::new(3)).unwrap();
        s.observe(hinge(2.0)).unwrap();
        let a = s.predict().unwrap();
        let b = s.predict().unwrap();
        assert_eq!(a.point, b.point);
        assert_eq!(a.sigma, s.frozen_sigma().unwrap());
        s.observe(hinge(-1.0)).unwrap();
        assert_eq!(s.predict().unwrap().sigma, a.sigma);
    }

    #[test]
    fn fresh_mode_redraws_each_round() {
        let mut s = LearnerState::new(LearnerConfig::ftpl(0.3, Oracle::Pwl1d), &dom(), Stream::new(3))
            .unwrap();
        let a = s.predict().unwrap();
        assert_eq!(a.sigma, s.predict().unwrap().sigma);
        s.observe(hinge(0.0)).unwrap();
        assert_ne!(a.sigma, s.predict().unwrap().sigma);
    }

    #[test]
    fn oftpl_first_round_equals_ftpl() {
        let st = Stream::new(4);
        let f = LearnerState::new(LearnerConfig::ftpl(0.2, Oracle::Pwl1d), &dom(), st).unwrap();
        for g in [GuessStrategy::Zero, GuessStrategy::LastLoss, GuessStrategy::RunningAverage] {
            let o = LearnerState::new(LearnerConfig::oftpl(0.2, Oracle::Pwl1d, g), &dom(), st).unwrap();
            assert_eq!(o.oftpl_predict().unwrap().point, f.ftpl_predict().unwrap().point);
        }
    }

    #[test]
    fn oftpl_last_loss_on_constant_sequence_looks_one_round_ahead() {
        // OFTPL at round 2 sees f + f; FTPL at round 3 sees f + f too.
        let st = Stream::new(5);
        let f = hinge(1.5);
        let mut o = LearnerState::new(
            LearnerConfig::oftpl(0.2, Oracle::Pwl1d, GuessStrategy::LastLoss),
            &dom(),
            st,
        )
        .unwrap();
        o.observe(f.clone()).unwrap();
        let mut p = LearnerState::new(LearnerConfig::ftpl(0.2, Oracle::Pwl1d), &dom(), st).unwrap();
        p.observe(f.clone()).unwrap();
        p.observe(f.clone()).unwrap();
        for sigma in [0.0, 0.05, 0.4, 3.0] {
            let a = o.predict_with_sigma(&[sigma]).unwrap();
            let b = p.predict_with_sigma(&[sigma]).unwrap();
            assert_eq!(a.minimizer, b.minimizer);
            assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn guesses() {
        let hist = [hinge(2.0), hinge(7.0)];
        assert_eq!(make_guess(GuessStrategy::Zero, &hist, 1).eval(&[7.0]), 0.0);
        let last = make_guess(GuessStrategy::LastLoss, &hist, 1);
        assert_eq!(last.eval(&[7.0]), 5.0);
        assert_eq!(last.lipschitz(), 1.0);
        assert_eq!(make_guess(GuessStrategy::LastLoss, &[], 1).eval(&[0.0]), 0.0);

        let avg = make_guess(GuessStrategy::RunningAverage, &[hinge(0.0), hinge(4.0)], 1);
        assert_eq!(avg.eval(&[0.0]), 3.0);
        assert_eq!(avg.lipschitz(), 1.0);

        let same = make_guess(GuessStrategy::RunningAverage, &[hinge(1.0), hinge(1.0)], 1);
        for x in [-3.0, 0.0, 1.0, 2.5] {
            assert!((same.eval(&[x]) - hinge(1.0).eval(&[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn ftl_baseline() {
        let mut s = LearnerState::new(LearnerConfig::ftl(Oracle::Pwl1d), &dom(), Stream::new(6)).unwrap();
        assert_eq!(s.ftl_predict().unwrap().point[0], -10.0);
        s.observe(hinge(0.0)).unwrap();
        assert_eq!(s.ftl_predict().unwrap().point[0], -10.0);
        let x = s.predict().unwrap().point;
        s.observe(hinge(0.0)).unwrap();
        assert_eq!(s.predict().unwrap().point, x);
        assert!(s.config().is_deterministic());
        assert!(s.ftpl_predict().is_err());
    }

    #[test]
    fn zero_guess_oftpl_matches_ftpl() {
        let st = Stream::new(7);
        let mut a = LearnerState::new(LearnerConfig::ftpl(0.1, Oracle::Pwl1d), &dom(), st).unwrap();
        let mut b = LearnerState::new(
            LearnerConfig::oftpl(0.1, Oracle::Pwl1d, GuessStrategy::Zero),
            &dom(),
            st,
        )
        .unwrap();
        for k in 0..30 {
            assert_eq!(a.predict().unwrap().point, b.predict().unwrap().point);
            let f = hinge(-9.0 + 0.61 * k as f64);
            a.observe(f.clone()).unwrap();
            b.observe(f).unwrap();
        }
    }

    #[test]
    fn default_eta_examples() {
        assert!((default_eta(1.0, 1, 10_000).unwrap() - 0.01).abs() < 1e-15);
        assert!((default_eta(2.0, 4, 100).unwrap() - 0.025).abs() < 1e-15);
        let a = default_eta(1.7, 3, 250).unwrap();
        let b = default_eta(1.7, 3, 1000).unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
        assert!(default_eta(0.0, 1, 1).is_err());
        assert!(default_eta(1.0, 0, 1).is_err());
        assert!(default_eta(1.0, 1, 0).is_err());
    }

    #[test]
    fn large_eta_behaves_like_ftl() {
        // With η = 10^6 the perturbation is ~1e-6; the prediction should be
        // an exact minimizer of the unperturbed sum in almost every round.
        let d = BoxDomain::cube(1, -5.0, 5.0).unwrap();
        let mut agree = 0;
        let rounds = 1000;
        let mut s = LearnerState::new(LearnerConfig::ftpl(1e6, Oracle::Pwl1d), &d, Stream::new(8)).unwrap();
        let centers = crate::perturbation::Stream::new(9);
        use rand::Rng;
        let mut rng = centers.rng_at(0);
        for _ in 0..rounds {
            let p = s.predict().unwrap();
            let unperturbed_min = s.objective().minimize(None, &[0.0], Stream::new(0)).unwrap().value;
            if s.objective().eval(&p.point) <= unperturbed_min + 1e-9 {
                agree += 1;
            }
            let a = rng.gen_range(-5.0..=5.0);
            s.observe(LossFunction::hinge(Point::new(vec![a]), 10.0).unwrap()).unwrap();
        }
        assert!(agree >= 990, "agreement {agree}/{rounds}");
    }
}
