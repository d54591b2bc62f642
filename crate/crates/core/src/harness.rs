//! Game loop, regret accounting, structural probes and replication.

use rayon::prelude::*;

use crate::adversary::{killer_next_loss, AdversaryProtocol};
use crate::domain::{dot, l1_unchecked, BoxDomain, Point};
use crate::error::{Error, Result};
use crate::learner::{guess_error_lipschitz, LearnerConfig, LearnerState, PerturbationMode, Variant};
use crate::loss::LossFunction;
use crate::oracle::{CumulativeObjective, Oracle, OracleAnswer, OracleGuarantee};
use crate::perturbation::Stream;

/// Absolute slack allowed when checking a probe inequality.
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// Smallest `L_t` used to scale the OFTPL probe shift.
pub const LIPSCHITZ_FLOOR: f64 = 1e-6;

const LEARNER_TAG: u64 = 1;
const ADVERSARY_TAG: u64 = 2;

/// Independent learner and adversary streams for one replication.
pub fn game_streams(master: Stream, replication: u64) -> (Stream, Stream) {
    let rep = master.replication(replication);
    (rep.child(LEARNER_TAG), rep.child(ADVERSARY_TAG))
}

#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub t: usize,
    pub sigma: Vec<f64>,
    pub x: Point,
    pub loss: LossFunction,
    /// `f_t(x_t)`.
    pub value: f64,
    pub guess: Option<LossFunction>,
    /// `γ(σ_t)` of the oracle call that produced `x_t`.
    pub gamma: Option<f64>,
}

impl RoundRecord {
    pub fn sigma_l1(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

/// One learner-vs-adversary run.
#[derive(Clone, Debug)]
pub struct GameTrace {
    pub learner: LearnerConfig,
    pub domain: BoxDomain,
    pub stream: Stream,
    pub records: Vec<RoundRecord>,
    /// `x_{T+1}`, what the learner would play after the last loss.
    pub next_point: Point,
    pub next_gamma: Option<f64>,
}

impl GameTrace {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn losses(&self) -> Vec<LossFunction> {
        self.records.iter().map(|r| r.loss.clone()).collect()
    }

    pub fn learner_cum_loss(&self) -> f64 {
        self.records.iter().map(|r| r.value).sum()
    }

    /// `x_{t+1}` for `t = 1 … T`.
    pub fn successor(&self, t: usize) -> &Point {
        self.records.get(t).map_or(&self.next_point, |r| &r.x)
    }

    /// `‖x_t − x_{t+1}‖₁` for `t = 1 … T`.
    pub fn stability_increments(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| l1_unchecked(&r.x, self.successor(r.t)))
            .collect()
    }

    pub fn stability_mean(&self) -> f64 {
        let inc = self.stability_increments();
        inc.iter().sum::<f64>() / inc.len() as f64
    }

    /// Worst `γ(σ)` over the oracle calls that produced `x_2 … x_{T+1}`.
    fn gamma_after_first(&self) -> Option<f64> {
        self.records[1..]
            .iter()
            .map(|r| r.gamma)
            .chain([self.next_gamma])
            .try_fold(0.0f64, |m, g| g.map(|g| m.max(g)))
    }
}

/// Play `horizon` rounds. `x_t` only depends on `f_1 … f_{t−1}`; an adaptive
/// adversary only sees `x_1 … x_{t−1}` when it picks `f_t`.
pub fn play(
    config: &LearnerConfig,
    mut adversary: AdversaryProtocol,
    domain: &BoxDomain,
    horizon: usize,
    stream: Stream,
) -> Result<GameTrace> {
    if horizon == 0 {
        return Err(Error::param("T", "must be at least 1"));
    }
    match &adversary {
        AdversaryProtocol::Killer { .. } if !config.is_deterministic() => {
            return Err(Error::Protocol(
                "the killer adversary reads x_t, which is only legal against a deterministic learner".into(),
            ))
        }
        AdversaryProtocol::Oblivious(seq) if seq.len() < horizon => {
            return Err(Error::Protocol(format!(
                "oblivious sequence has {} losses, the game needs {horizon}",
                seq.len()
            )))
        }
        _ => {}
    }
    let mut learner = LearnerState::new(config.clone(), domain, stream)?;
    let mut records = Vec::with_capacity(horizon);
    let mut past: Vec<Point> = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut step = || -> Result<RoundRecord> {
            let pred = learner.predict()?;
            let loss = match &mut adversary {
                AdversaryProtocol::Oblivious(seq) => seq[t - 1].clone(),
                AdversaryProtocol::Adaptive(a) => a.next_loss(&past)?,
                AdversaryProtocol::Killer { diameter } => killer_next_loss(&pred.point, *diameter)?,
            };
            domain.check_dim(loss.dim())?;
            Ok(RoundRecord {
                t,
                value: loss.eval(&pred.point),
                gamma: pred.answer.gamma(&pred.sigma),
                sigma: pred.sigma,
                x: pred.point,
                loss,
                guess: pred.guess,
            })
        };
        let record = step().map_err(|e| e.at_round(t))?;
        learner
            .observe(record.loss.clone())
            .map_err(|e| e.at_round(t))?;
        past.push(record.x.clone());
        records.push(record);
    }
    let next = learner.predict().map_err(|e| e.at_round(horizon + 1))?;
    Ok(GameTrace {
        learner: config.clone(),
        domain: domain.clone(),
        stream,
        records,
        next_gamma: next.answer.gamma(&next.sigma),
        next_point: next.point,
    })
}

/// The losses an adaptive adversary produces against an independent copy of
/// the learner driven by `shadow`. Replayed as an oblivious sequence, they
/// give a fresh-σ learner the same expected regret as the adaptive game.
pub fn shadow_sequence(
    config: &LearnerConfig,
    adversary: AdversaryProtocol,
    domain: &BoxDomain,
    horizon: usize,
    shadow: Stream,
) -> Result<Vec<LossFunction>> {
    Ok(play(config, adversary, domain, horizon, shadow)?.losses())
}

/// A certified lower bound on `inf_x Σ f_t(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BestInHindsight {
    pub point: Point,
    /// Oracle value minus its `α`.
    pub value: f64,
    pub alpha: f64,
}

pub fn best_in_hindsight(
    losses: &[LossFunction],
    domain: &BoxDomain,
    reference: &Oracle,
) -> Result<BestInHindsight> {
    let objective = CumulativeObjective::with_losses(reference, domain, losses)?;
    let answer = objective.minimize(None, &vec![0.0; domain.dim()], Stream::new(0))?;
    certified(answer, reference)
}

fn certified(answer: OracleAnswer, reference: &Oracle) -> Result<BestInHindsight> {
    let g = answer.guarantee.ok_or_else(|| {
        Error::NotExact(format!(
            "{} gives no guarantee and cannot certify best-in-hindsight",
            reference.name()
        ))
    })?;
    Ok(BestInHindsight {
        value: answer.value - g.alpha,
        point: answer.minimizer,
        alpha: g.alpha,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretReport {
    pub horizon: usize,
    pub avg_regret: f64,
    pub best_point: Point,
    pub best_value: f64,
    pub learner_cum_loss: f64,
    pub stability_mean: f64,
    /// `None` when some round came from an oracle without a guarantee.
    pub gamma_worst: Option<f64>,
    /// Width of the uncertainty band on `avg_regret` (`α/T`, zero when the
    /// reference is exact).
    pub alpha_band: f64,
}

pub fn regret(trace: &GameTrace, reference: &Oracle) -> Result<RegretReport> {
    let best = best_in_hindsight(&trace.losses(), &trace.domain, reference)?;
    let horizon = trace.horizon();
    let learner_cum_loss = trace.learner_cum_loss();
    let gamma_worst = trace
        .records
        .iter()
        .try_fold(0.0f64, |m, r| r.gamma.map(|g| m.max(g)));
    Ok(RegretReport {
        horizon,
        avg_regret: (learner_cum_loss - best.value) / horizon as f64,
        best_point: best.point,
        best_value: best.value,
        learner_cum_loss,
        stability_mean: trace.stability_mean(),
        gamma_worst,
        alpha_band: best.alpha / horizon as f64,
    })
}

/// `Σ_{s≤t} f_s(x_s) − inf_x Σ_{s≤t} f_s(x)` for every prefix `t`.
pub fn cumulative_regret(trace: &GameTrace, reference: &Oracle) -> Result<Vec<f64>> {
    let mut objective = CumulativeObjective::new(reference, &trace.domain)?;
    let zero = vec![0.0; trace.domain.dim()];
    let mut learner_loss = 0.0;
    let mut out = Vec::with_capacity(trace.horizon());
    for r in &trace.records {
        objective.push(r.loss.clone())?;
        learner_loss += r.value;
        let best = certified(objective.minimize(None, &zero, Stream::new(0))?, reference)?;
        out.push(learner_loss - best.value);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeOutcome {
    Pass,
    Fail,
    NotApplicable,
}

/// One checked inequality. `lhs ≥ rhs` or `lhs ≤ rhs` depending on the
/// probe; `slack` is positive when the inequality holds strictly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub outcome: ProbeOutcome,
}

impl ProbeResult {
    pub fn at_least(lhs: f64, rhs: f64) -> Self {
        Self::with_slack(lhs, rhs, lhs - rhs)
    }

    pub fn at_most(lhs: f64, rhs: f64) -> Self {
        Self::with_slack(lhs, rhs, rhs - lhs)
    }

    fn with_slack(lhs: f64, rhs: f64, slack: f64) -> Self {
        let outcome = if slack >= -PROBE_TOLERANCE {
            ProbeOutcome::Pass
        } else {
            ProbeOutcome::Fail
        };
        ProbeResult {
            lhs,
            rhs,
            slack,
            outcome,
        }
    }

    pub fn not_applicable(lhs: f64, rhs: f64) -> Self {
        ProbeResult {
            lhs,
            rhs,
            slack: f64::NAN,
            outcome: ProbeOutcome::NotApplicable,
        }
    }

    pub fn failed(&self) -> bool {
        self.outcome == ProbeOutcome::Fail
    }

    pub fn applicable(&self) -> bool {
        self.outcome != ProbeOutcome::NotApplicable
    }
}

fn guarantee(answer: &OracleAnswer) -> Result<OracleGuarantee> {
    answer
        .guarantee
        .ok_or_else(|| Error::NotExact("probes need an oracle with a known (α, β) guarantee".into()))
}

fn shifted(sigma: &[f64], i: usize, c: f64) -> Vec<f64> {
    let mut s = sigma.to_vec();
    s[i] += c;
    s
}

fn check_probe_args(state: &LearnerState, i: usize, sigma: &[f64]) -> Result<()> {
    state.domain().check_dim(sigma.len())?;
    if i >= sigma.len() {
        return Err(Error::param("i", format!("coordinate {i} out of range")));
    }
    Ok(())
}

/// `x_{t,i}(σ + c·e_i) ≥ x_{t,i}(σ) − 2γ(σ)/c − β` at the state's round.
pub fn probe_monotone1(state: &LearnerState, i: usize, c: f64, sigma: &[f64]) -> Result<ProbeResult> {
    check_probe_args(state, i, sigma)?;
    if !(c > 0.0) {
        return Err(Error::param("c", "must be positive"));
    }
    let base = state.predict_with_sigma(sigma)?;
    let up = state.predict_with_sigma(&shifted(sigma, i, c))?;
    let g = guarantee(&base)?;
    let rhs = base.minimizer[i] - 2.0 * g.gamma(sigma) / c - g.beta;
    Ok(ProbeResult::at_least(up.minimizer[i], rhs))
}

/// For `σ' = σ + 100·L·d·e_i` with `L = L(f_t)`:
/// `min(x_{t,i}(σ'), x_{t+1,i}(σ')) ≥ max(x_{t,i}(σ), x_{t+1,i}(σ))
///  − |x_{t,i}(σ) − x_{t+1,i}(σ)|/10 − 3γ(σ)/(100Ld) − β`.
///
/// Not applicable when `‖x_t(σ) − x_{t+1}(σ)‖₁ > 10d·|x_{t,i}(σ) − x_{t+1,i}(σ)|`.
pub fn probe_monotone2(
    state: &LearnerState,
    next_loss: &LossFunction,
    i: usize,
    sigma: &[f64],
) -> Result<ProbeResult> {
    check_probe_args(state, i, sigma)?;
    let d = sigma.len() as f64;
    let lip = next_loss.lipschitz().max(LIPSCHITZ_FLOOR);
    let c = 100.0 * lip * d;
    let mut after = state.clone();
    after.observe(next_loss.clone())?;
    let sigma2 = shifted(sigma, i, c);
    let xt = state.predict_with_sigma(sigma)?;
    let xt1 = after.predict_with_sigma(sigma)?;
    let xt_s = state.predict_with_sigma(&sigma2)?;
    let xt1_s = after.predict_with_sigma(&sigma2)?;
    let (gt, gt1) = (guarantee(&xt)?, guarantee(&xt1)?);
    let gamma = gt.gamma(sigma).max(gt1.gamma(sigma));
    let beta = gt.beta.max(gt1.beta);
    let gap_i = (xt.minimizer[i] - xt1.minimizer[i]).abs();
    let lhs = xt_s.minimizer[i].min(xt1_s.minimizer[i]);
    let rhs = xt.minimizer[i].max(xt1.minimizer[i]) - gap_i / 10.0 - 3.0 * gamma / c - beta;
    if l1_unchecked(&xt.minimizer, &xt1.minimizer) > 10.0 * d * gap_i {
        return Ok(ProbeResult::not_applicable(lhs, rhs));
    }
    Ok(ProbeResult::at_least(lhs, rhs))
}

/// How far to move `σ_i` in the OFTPL probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shift {
    By(f64),
    /// `100·L_t·d`.
    Lipschitz,
}

/// The OFTPL monotonicity relations around `x_t(σ)` and the exact leader
/// `x̄_{t+1}(σ) = argmin f_{1:t} − ⟨σ, ·⟩`, for `σ' = σ + c·e_i`:
///
/// ```text
/// prediction_monotone  x_{t,i}(σ')   ≥ x_{t,i}(σ) − 2γ/c − β
/// leader_monotone      x̄_{t+1,i}(σ') ≥ x̄_{t+1,i}(σ)
/// toward_leader        x̄_{t+1,i}(σ') ≥ x_{t,i}(σ) − r·|Δ| − γ/c
/// toward_prediction    x_{t,i}(σ')   ≥ x̄_{t+1,i}(σ) − r·|Δ| − 2γ/c − β
/// combined             min(x_{t,i}(σ'), x̄_{t+1,i}(σ'))
///                        ≥ max(x_{t,i}(σ), x̄_{t+1,i}(σ)) − r·|Δ| − 3γ/c − β
/// ```
///
/// with `Δ = x_{t,i}(σ) − x̄_{t+1,i}(σ)`, `r = 10·L_t·d/c` (`1/10` for the
/// Lipschitz shift) and `γ = γ(σ)` of the learner's oracle. The last three
/// need `‖x_t − x̄_{t+1}‖₁ ≤ 10d·|Δ|` and are not applicable otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OftplProbe {
    pub prediction_monotone: ProbeResult,
    pub leader_monotone: ProbeResult,
    pub toward_leader: ProbeResult,
    pub toward_prediction: ProbeResult,
    pub combined: ProbeResult,
}

impl OftplProbe {
    pub fn results(&self) -> [ProbeResult; 5] {
        [
            self.prediction_monotone,
            self.leader_monotone,
            self.toward_leader,
            self.toward_prediction,
            self.combined,
        ]
    }

    pub fn failed(&self) -> bool {
        self.results().iter().any(ProbeResult::failed)
    }
}

pub fn probe_monotone_oftpl(
    state: &LearnerState,
    next_loss: &LossFunction,
    i: usize,
    shift: Shift,
    sigma: &[f64],
    leader_oracle: &Oracle,
) -> Result<OftplProbe> {
    check_probe_args(state, i, sigma)?;
    if !matches!(state.config().variant, Variant::Oftpl(_)) {
        return Err(Error::param("variant", "the OFTPL probe needs an OFTPL learner"));
    }
    if !leader_oracle.is_exact() {
        return Err(Error::NotExact(format!(
            "the leader x̄ must come from an exact oracle, not {}",
            leader_oracle.name()
        )));
    }
    let d = sigma.len() as f64;
    let guess = state.current_guess();
    let lt = guess_error_lipschitz(next_loss, guess.as_ref()).max(LIPSCHITZ_FLOOR);
    let c = match shift {
        Shift::By(c) if c > 0.0 => c,
        Shift::By(_) => return Err(Error::param("c", "must be positive")),
        Shift::Lipschitz => 100.0 * lt * d,
    };
    let ratio = 10.0 * lt * d / c;

    let mut history = state.history().to_vec();
    history.push(next_loss.clone());
    let leader = CumulativeObjective::with_losses(leader_oracle, state.domain(), &history)?;
    let sigma2 = shifted(sigma, i, c);
    let xt = state.predict_with_sigma(sigma)?;
    let xt_s = state.predict_with_sigma(&sigma2)?;
    let lead = leader.minimize(None, sigma, Stream::new(0))?;
    let lead_s = leader.minimize(None, &sigma2, Stream::new(0))?;
    let g = guarantee(&xt)?;
    let gamma = g.gamma(sigma);

    let (a, b) = (xt.minimizer[i], lead.minimizer[i]);
    let (a_s, b_s) = (xt_s.minimizer[i], lead_s.minimizer[i]);
    let gap = (a - b).abs();
    let applicable = l1_unchecked(&xt.minimizer, &lead.minimizer) <= 10.0 * d * gap;
    let guarded = |lhs: f64, rhs: f64| {
        if applicable {
            ProbeResult::at_least(lhs, rhs)
        } else {
            ProbeResult::not_applicable(lhs, rhs)
        }
    };
    Ok(OftplProbe {
        prediction_monotone: ProbeResult::at_least(a_s, a - 2.0 * gamma / c - g.beta),
        leader_monotone: ProbeResult::at_least(b_s, b),
        toward_leader: guarded(b_s, a - ratio * gap - gamma / c),
        toward_prediction: guarded(a_s, b - ratio * gap - 2.0 * gamma / c - g.beta),
        combined: guarded(a_s.min(b_s), a.max(b) - ratio * gap - 3.0 * gamma / c - g.beta),
    })
}

/// Evenly spaced comparators, `per_axis` per coordinate, lexicographic.
pub fn comparator_grid(domain: &BoxDomain, per_axis: usize) -> Vec<Point> {
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|i| {
            let (lo, hi) = (domain.lo()[i], domain.hi()[i]);
            if per_axis <= 1 {
                return vec![lo];
            }
            let n = (per_axis - 1) as f64;
            (0..per_axis)
                .map(|k| if k + 1 == per_axis { hi } else { lo + (hi - lo) * k as f64 / n })
                .collect()
        })
        .collect();
    let mut out = vec![Vec::with_capacity(domain.dim())];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(Point::new).collect()
}

/// Be-the-leader check on a frozen-σ trace, against every comparator `x*`.
///
/// FTPL: `Σ_t f_t(x_{t+1}) − f_t(x*) ≤ γ(σ)·T + ⟨σ, x_2 − x*⟩`.
///
/// OFTPL: `Σ_t [g_t(x_t) − g_t(x̄_{t+1})] + Σ_t [f_t(x̄_{t+1}) − f_t(x*)]
/// ≤ ⟨σ, x̄_2 − x*⟩ + γ(σ)·(T − 1)`, where the leaders `x̄` are recomputed
/// with the trace's oracle, which must be exact.
///
/// Returns the comparator with the least slack.
pub fn probe_btl(trace: &GameTrace, comparators: &[Point]) -> Result<ProbeResult> {
    if trace.learner.mode != PerturbationMode::Frozen && !matches!(trace.learner.variant, Variant::Ftl) {
        return Err(Error::param("trace", "be-the-leader needs a frozen-σ trace"));
    }
    if comparators.is_empty() {
        return Err(Error::param("comparators", "need at least one"));
    }
    let sigma = &trace.records[0].sigma;
    let horizon = trace.horizon() as f64;
    let losses = trace.losses();
    let (played, anchor, budget): (f64, &Point, f64);
    let leaders: Vec<Point>;
    match trace.learner.variant {
        Variant::Ftpl | Variant::Ftl => {
            let gamma = trace.gamma_after_first().ok_or_else(|| {
                Error::NotExact("be-the-leader needs an oracle with a known guarantee".into())
            })?;
            played = trace
                .records
                .iter()
                .map(|r| r.loss.eval(trace.successor(r.t)))
                .sum();
            anchor = trace.successor(1);
            budget = gamma * horizon;
        }
        Variant::Oftpl(_) => {
            if !trace.learner.oracle.is_exact() {
                return Err(Error::NotExact(
                    "OFTPL be-the-leader recomputes the leaders x̄ and needs an exact oracle".into(),
                ));
            }
            let gamma = trace
                .records
                .iter()
                .try_fold(0.0f64, |m, r| r.gamma.map(|g| m.max(g)))
                .unwrap_or(0.0);
            let mut objective = CumulativeObjective::new(&trace.learner.oracle, &trace.domain)?;
            let mut xs = Vec::with_capacity(trace.horizon());
            for r in &trace.records {
                objective.push(r.loss.clone())?;
                xs.push(objective.minimize(None, sigma, Stream::new(0))?.minimizer);
            }
            leaders = xs;
            played = trace
                .records
                .iter()
                .zip(&leaders)
                .map(|(r, lead)| {
                    let g = r.guess.as_ref().map_or(0.0, |g| g.eval(&r.x) - g.eval(lead));
                    g + r.loss.eval(lead)
                })
                .sum();
            anchor = &leaders[0];
            budget = gamma * (horizon - 1.0);
        }
    }
    let mut worst: Option<ProbeResult> = None;
    for x in comparators {
        trace.domain.check_dim(x.dim())?;
        let lhs = played - losses.iter().map(|f| f.eval(x)).sum::<f64>();
        let rhs = dot(sigma, anchor) - dot(sigma, x) + budget;
        let tol = PROBE_TOLERANCE * lhs.abs().max(rhs.abs()).max(1.0);
        let mut r = ProbeResult::at_most(lhs, rhs);
        if r.slack >= -tol {
            r.outcome = crate::harness::ProbeOutcome::Pass;
        }
        if worst.map_or(true, |w| r.slack < w.slack) {
            worst = Some(r);
        }
    }
    Ok(worst.expect("comparators is non-empty"))
}

/// `125ηLd²D + βd/(20ηL) + 2βd + α/(20L)`.
pub fn stability_bound(eta: f64, lipschitz: f64, d: usize, diameter: f64, g: OracleGuarantee) -> f64 {
    let d = d as f64;
    125.0 * eta * lipschitz * d * d * diameter
        + g.beta * d / (20.0 * eta * lipschitz)
        + 2.0 * g.beta * d
        + g.alpha / (20.0 * lipschitz)
}

/// Mean, standard deviation and 95% normal half-width of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// `None` for a single observation.
    pub sd: Option<f64>,
    pub ci_half_width: f64,
}

impl Summary {
    /// Sums run in index order, so the result does not depend on how the
    /// values were produced.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Summary {
                n,
                mean,
                sd: None,
                ci_half_width: 0.0,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        Summary {
            n,
            mean,
            sd: Some(sd),
            ci_half_width: 1.96 * sd / (n as f64).sqrt(),
        }
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_half_width
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_half_width
    }
}

pub const MIN_STABILITY_REPLICATIONS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityCheck {
    pub summary: Summary,
    pub bound: f64,
    pub pass: bool,
}

/// Compare the Monte Carlo mean of `‖x_t − x_{t+1}‖₁` (over rounds, then
/// over traces) against [`stability_bound`]; pass iff the upper CI edge is
/// below the bound.
pub fn stability_check(
    traces: &[GameTrace],
    eta: f64,
    lipschitz: f64,
    d: usize,
    diameter: f64,
    g: OracleGuarantee,
) -> Result<StabilityCheck> {
    if traces.len() < MIN_STABILITY_REPLICATIONS {
        return Err(Error::TooFewReplications {
            need: MIN_STABILITY_REPLICATIONS,
            got: traces.len(),
        });
    }
    if let Some(t) = traces.iter().find(|t| t.learner.mode != PerturbationMode::Frozen) {
        return Err(Error::param(
            "traces",
            format!("stability needs frozen-σ traces, got {:?}", t.learner.mode),
        ));
    }
    let per_trace: Vec<f64> = traces.iter().map(GameTrace::stability_mean).collect();
    let summary = Summary::of(&per_trace);
    let bound = stability_bound(eta, lipschitz, d, diameter, g);
    Ok(StabilityCheck {
        summary,
        bound,
        pass: summary.upper() <= bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint {
    pub horizon: usize,
    pub mean_regret: f64,
    pub ci_half_width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares of `ln mean_regret` on `ln T`.
pub fn rate_fit(points: Vec<RatePoint>) -> Result<RateFit> {
    let mut horizons: Vec<usize> = points.iter().map(|p| p.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons.len() < 4 {
        return Err(Error::RateFit(format!(
            "need at least 4 distinct horizons, got {}",
            horizons.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.mean_regret > 0.0)) {
        return Err(Error::RateFit(format!(
            "mean regret {} at T={} is not positive; add replications",
            p.mean_regret, p.horizon
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.horizon as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_regret.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        points,
        slope,
        intercept,
        r2,
    })
}

/// Run `job(r)` for `r = 0 … n−1` on at most `workers` threads. Results
/// come back in replication order; the first failing replication (by
/// index) is reported.
pub fn replicate<R, F>(n: usize, workers: usize, job: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    if n == 0 {
        return Err(Error::param("replications", "must be at least 1"));
    }
    let run = |r: usize| {
        job(r as u64).map_err(|e| Error::Replication {
            replication: r as u64,
            source: Box::new(e),
        })
    };
    let results: Vec<Result<R>> = if workers <= 1 {
        (0..n).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?;
        pool.install(|| (0..n).into_par_iter().map(run).collect())
    };
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{oblivious_hinge_sequence, AdversarySpec, Chaser};
    use crate::learner::GuessStrategy;

    fn line(lo: f64, hi: f64) -> BoxDomain {
        BoxDomain::cube(1, lo, hi).unwrap()
    }

    fn hinge(a: f64) -> LossFunction {
        LossFunction::hinge(Point::new(vec![a]), 10.0).unwrap()
    }

    #[test]
    fn single_round_prediction_ignores_its_loss() {
        let dom = line(-5.0, 5.0);
        let cfg = LearnerConfig::ftpl(0.5, Oracle::Pwl1d);
        let a = play(&cfg, AdversaryProtocol::Oblivious(vec![hinge(4.0)]), &dom, 1, Stream::new(1)).unwrap();
        let b = play(&cfg, AdversaryProtocol::Oblivious(vec![hinge(-4.0)]), &dom, 1, Stream::new(1)).unwrap();
        assert_eq!(a.records.len(), 1);
        assert_eq!(a.records[0].x, b.records[0].x);
        let rep = regret(&a, &Oracle::Pwl1d).unwrap();
        let min_f1 = 0.0;
        assert_eq!(rep.avg_regret, a.records[0].value - min_f1);
    }

    #[test]
    fn replay_is_identical() {
        let dom = line(-5.0, 5.0);
        let cfg = LearnerConfig::ftpl(0.1, Oracle::Pwl1d);
        let run = || {
            let seq = oblivious_hinge_sequence(&dom, 40, Stream::new(9));
            play(&cfg, AdversaryProtocol::Oblivious(seq), &dom, 40, Stream::new(3)).unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.x, y.x);
            assert_eq!(x.sigma, y.sigma);
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }

    #[test]
    fn ftl_against_killer() {
        let dom = line(-10.0, 10.0);
        let trace = play(
            &LearnerConfig::ftl(Oracle::Pwl1d),
            AdversaryProtocol::Killer { diameter: 10.0 },
            &dom,
            100,
            Stream::new(0),
        )
        .unwrap();
        assert_eq!(trace.learner_cum_loss(), 500.0);
        let rep = regret(&trace, &Oracle::Pwl1d).unwrap();
        assert!(rep.best_value <= 250.0);
        assert!(rep.avg_regret >= 2.5);
    }

    #[test]
    fn killer_refuses_randomized_learners() {
        let err = play(
            &LearnerConfig::ftpl(1.0, Oracle::Pwl1d),
            AdversaryProtocol::Killer { diameter: 10.0 },
            &line(-10.0, 10.0),
            5,
            Stream::new(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        let infinite = LearnerConfig::ftpl(f64::INFINITY, Oracle::Pwl1d);
        let t = play(&infinite, AdversaryProtocol::Killer { diameter: 10.0 }, &line(-10.0, 10.0), 10, Stream::new(0))
            .unwrap();
        assert_eq!(t.learner_cum_loss(), 50.0);
    }

    #[test]
    fn zero_losses_have_zero_regret() {
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let seq = vec![LossFunction::zero(2); 5];
        let t = play(&LearnerConfig::ftpl(1.0, Oracle::grid(0.25)), AdversaryProtocol::Oblivious(seq), &dom, 5, Stream::new(2))
            .unwrap();
        let rep = regret(&t, &Oracle::grid(0.25)).unwrap();
        assert_eq!(rep.avg_regret, 0.0);
        assert_eq!(rep.alpha_band, 0.0);
    }

    #[test]
    fn grid_reference_lowers_best_value_by_alpha() {
        let dom = line(-5.0, 5.0);
        let seq = oblivious_hinge_sequence(&dom, 20, Stream::new(4));
        let t = play(&LearnerConfig::ftpl(0.3, Oracle::Pwl1d), AdversaryProtocol::Oblivious(seq), &dom, 20, Stream::new(5))
            .unwrap();
        let exact = regret(&t, &Oracle::Pwl1d).unwrap();
        let grid = regret(&t, &Oracle::grid(0.1)).unwrap();
        assert!(grid.best_value <= exact.best_value + 1e-12);
        assert!(grid.avg_regret >= exact.avg_regret - 1e-12);
        assert!((grid.alpha_band - 20.0 * 0.05 / 20.0).abs() < 1e-12);
        assert!(regret(&t, &Oracle::LocalSearch { restarts: 2, steps: 10 }).is_err());
    }

    #[test]
    fn cumulative_regret_ends_at_total() {
        let dom = line(-5.0, 5.0);
        let seq = oblivious_hinge_sequence(&dom, 30, Stream::new(4));
        let t = play(&LearnerConfig::ftpl(0.3, Oracle::Pwl1d), AdversaryProtocol::Oblivious(seq), &dom, 30, Stream::new(5))
            .unwrap();
        let cum = cumulative_regret(&t, &Oracle::Pwl1d).unwrap();
        let rep = regret(&t, &Oracle::Pwl1d).unwrap();
        assert!((cum[29] / 30.0 - rep.avg_regret).abs() < 1e-9);
    }

    #[test]
    fn adaptive_adversary_sees_only_the_past() {
        struct Spy(Vec<usize>);
        impl crate::adversary::AdaptiveAdversary for Spy {
            fn next_loss(&mut self, past: &[Point]) -> Result<LossFunction> {
                self.0.push(past.len());
                assert!(self.0.len() == past.len() + 1);
                Ok(LossFunction::zero(1))
            }
        }
        let dom = line(-1.0, 1.0);
        play(&LearnerConfig::ftpl(1.0, Oracle::Pwl1d), AdversaryProtocol::Adaptive(Box::new(Spy(vec![]))), &dom, 6, Stream::new(0))
            .unwrap();
        let chaser = AdversaryProtocol::Adaptive(Box::new(Chaser::new(&dom, 2.0)));
        let t = play(&LearnerConfig::ftpl(1.0, Oracle::Pwl1d), chaser, &dom, 6, Stream::new(0)).unwrap();
        for w in t.records.windows(2) {
            assert_eq!(w[1].loss.as_hinge().unwrap().center, w[0].x);
        }
    }

    #[test]
    fn monotone1_first_round_is_tight() {
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let s = LearnerState::new(LearnerConfig::ftpl(1.0, Oracle::grid(0.5)), &dom, Stream::new(0)).unwrap();
        let r = probe_monotone1(&s, 1, 0.7, &[0.2, 0.3]).unwrap();
        assert_eq!(r.outcome, ProbeOutcome::Pass);
        assert_eq!(r.lhs, 1.0);
    }

    #[test]
    fn monotone1_hinge_history() {
        let mut s = LearnerState::new(LearnerConfig::ftpl(1.0, Oracle::Pwl1d), &line(-10.0, 10.0), Stream::new(0)).unwrap();
        s.observe(hinge(0.0)).unwrap();
        let r = probe_monotone1(&s, 0, 1.0, &[0.05]).unwrap();
        assert_eq!(r.outcome, ProbeOutcome::Pass);
        assert_eq!((r.lhs, r.rhs), (10.0, 10.0));
    }

    #[test]
    fn monotone2_two_lipschitz_example() {
        // D = 10, L = 2 hinge-like losses on [−5, 5].
        let dom = line(-5.0, 5.0);
        let steep = |a: f64| LossFunction::scaled(2.0, hinge(a));
        let mut s = LearnerState::new(LearnerConfig::ftpl(0.1, Oracle::Pwl1d), &dom, Stream::new(0)).unwrap();
        for a in [-3.0, 1.0, 4.0] {
            s.observe(steep(a)).unwrap();
        }
        for sigma in [0.0, 0.5, 3.0, 9.0] {
            let r = probe_monotone2(&s, &steep(-1.0), 0, &[sigma]).unwrap();
            assert_eq!(r.outcome, ProbeOutcome::Pass, "σ={sigma}: {r:?}");
        }
    }

    #[test]
    fn monotone2_guard() {
        // In d = 3 a move along other coordinates makes the probe vacuous.
        let dom = BoxDomain::cube(3, 0.0, 1.0).unwrap();
        let s = LearnerState::new(LearnerConfig::ftpl(1.0, Oracle::grid(0.5)), &dom, Stream::new(0)).unwrap();
        let pull = LossFunction::linear(vec![0.0, 1.0, 1.0], 0.0);
        let r = probe_monotone2(&s, &pull, 0, &[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(r.outcome, ProbeOutcome::NotApplicable);
    }

    #[test]
    fn oftpl_probe_perfect_guess() {
        let dom = line(-5.0, 5.0);
        let f = hinge(1.0);
        let mut s = LearnerState::new(
            LearnerConfig::oftpl(0.2, Oracle::Pwl1d, GuessStrategy::LastLoss),
            &dom,
            Stream::new(0),
        )
        .unwrap();
        s.observe(f.clone()).unwrap();
        s.observe(f.clone()).unwrap();
        let p = probe_monotone_oftpl(&s, &f, 0, Shift::Lipschitz, &[0.3], &Oracle::Pwl1d).unwrap();
        assert!(!p.failed(), "{p:?}");
        // x_t and x̄_{t+1} minimize the same objective, so Δ = 0.
        assert_eq!(p.toward_leader.outcome, ProbeOutcome::Pass);
        assert_eq!(p.prediction_monotone.lhs, p.leader_monotone.lhs);
        assert_eq!(p.leader_monotone.rhs, p.toward_leader.rhs);
        assert!(probe_monotone_oftpl(&s, &f, 0, Shift::Lipschitz, &[0.3], &Oracle::grid(0.1)).is_err());
    }

    #[test]
    fn leader_monotone_under_large_shift() {
        let dom = line(-5.0, 5.0);
        let mut s = LearnerState::new(
            LearnerConfig::oftpl(0.2, Oracle::Pwl1d, GuessStrategy::RunningAverage),
            &dom,
            Stream::new(0),
        )
        .unwrap();
        for a in [-4.0, 2.5, 0.5, -1.0] {
            s.observe(hinge(a)).unwrap();
        }
        let p = probe_monotone_oftpl(&s, &hinge(3.3), 0, Shift::By(5.0), &[0.01], &Oracle::Pwl1d).unwrap();
        assert!(!p.failed(), "{p:?}");
        assert!(p.leader_monotone.lhs >= p.leader_monotone.rhs);
    }

    fn frozen_trace(variant: LearnerConfig, horizon: usize, seed: u64) -> GameTrace {
        let dom = line(-5.0, 5.0);
        let seq = oblivious_hinge_sequence(&dom, horizon, Stream::new(seed));
        play(&variant.frozen(), AdversaryProtocol::Oblivious(seq), &dom, horizon, Stream::new(seed + 1)).unwrap()
    }

    #[test]
    fn btl_base_case_and_hinge_game() {
        let grid = comparator_grid(&line(-5.0, 5.0), 201);
        assert_eq!(grid.len(), 201);
        for horizon in [1, 50] {
            let t = frozen_trace(LearnerConfig::ftpl(0.3, Oracle::Pwl1d), horizon, 11);
            let r = probe_btl(&t, &grid).unwrap();
            assert_eq!(r.outcome, ProbeOutcome::Pass, "T={horizon}: {r:?}");
            let o = frozen_trace(LearnerConfig::oftpl(0.3, Oracle::Pwl1d, GuessStrategy::LastLoss), horizon, 11);
            let r = probe_btl(&o, &grid).unwrap();
            assert_eq!(r.outcome, ProbeOutcome::Pass, "OFTPL T={horizon}: {r:?}");
        }
    }

    #[test]
    fn btl_without_perturbation_is_be_the_leader() {
        let dom = line(-5.0, 5.0);
        let seq = oblivious_hinge_sequence(&dom, 30, Stream::new(2));
        let t = play(&LearnerConfig::ftl(Oracle::Pwl1d), AdversaryProtocol::Oblivious(seq), &dom, 30, Stream::new(0)).unwrap();
        let r = probe_btl(&t, &comparator_grid(&dom, 101)).unwrap();
        assert_eq!(r.outcome, ProbeOutcome::Pass);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn btl_requires_frozen_sigma() {
        let dom = line(-5.0, 5.0);
        let seq = oblivious_hinge_sequence(&dom, 5, Stream::new(2));
        let t = play(&LearnerConfig::ftpl(1.0, Oracle::Pwl1d), AdversaryProtocol::Oblivious(seq), &dom, 5, Stream::new(0)).unwrap();
        assert!(probe_btl(&t, &comparator_grid(&dom, 3)).is_err());
    }

    #[test]
    fn stability_bound_values() {
        assert!((stability_bound(0.01, 1.0, 1, 10.0, OracleGuarantee::EXACT) - 12.5).abs() < 1e-12);
        assert!((stability_bound(0.05, 1.0, 1, 10.0, OracleGuarantee::EXACT) - 62.5).abs() < 1e-12);
        let g = OracleGuarantee { alpha: 0.2, beta: 0.01 };
        let expected = 125.0 * 0.1 * 2.0 * 4.0 * 3.0 + 0.01 * 2.0 / (20.0 * 0.1 * 2.0) + 2.0 * 0.01 * 2.0 + 0.2 / 40.0;
        assert!((stability_bound(0.1, 2.0, 2, 3.0, g) - expected).abs() < 1e-12);
    }

    #[test]
    fn stability_constant_losses_and_too_few() {
        let dom = line(-5.0, 5.0);
        let traces: Vec<GameTrace> = (0..30)
            .map(|r| {
                play(
                    &LearnerConfig::ftpl(0.5, Oracle::Pwl1d).frozen(),
                    AdversaryProtocol::Oblivious(vec![hinge(1.0); 10]),
                    &dom,
                    10,
                    Stream::new(r),
                )
                .unwrap()
            })
            .collect();
        let c = stability_check(&traces, 0.5, 1.0, 1, 10.0, OracleGuarantee::EXACT).unwrap();
        assert!(c.pass);
        assert!(c.summary.mean <= 10.0 / 10.0 + 1e-12);
        assert!(matches!(
            stability_check(&traces[..29], 0.5, 1.0, 1, 10.0, OracleGuarantee::EXACT),
            Err(Error::TooFewReplications { need: 30, got: 29 })
        ));
    }

    #[test]
    fn rate_fit_examples() {
        let pts = |f: &dyn Fn(f64) -> f64| {
            [128usize, 256, 512, 1024, 2048]
                .iter()
                .map(|&t| RatePoint {
                    horizon: t,
                    mean_regret: f(t as f64),
                    ci_half_width: 0.0,
                })
                .collect::<Vec<_>>()
        };
        let fit = rate_fit(pts(&|t| 3.0 * t.powf(-0.5))).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
        let flat = rate_fit(pts(&|_| 0.7)).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(matches!(rate_fit(pts(&|t| if t > 500.0 { 0.0 } else { 1.0 })), Err(Error::RateFit(_))));
        assert!(rate_fit(pts(&|t| t)[..3].to_vec()).is_err());
    }

    #[test]
    fn summary_and_replicate() {
        let one = Summary::of(&[3.0]);
        assert_eq!((one.sd, one.ci_half_width), (None, 0.0));
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let job = |r: u64| -> Result<f64> { Ok((r as f64).sqrt()) };
        assert_eq!(replicate(16, 1, job).unwrap(), replicate(16, 3, job).unwrap());
        let err = replicate(8, 2, |r| if r == 5 || r == 6 { Err(Error::param("x", "boom")) } else { Ok(r) }).unwrap_err();
        assert!(matches!(err, Error::Replication { replication: 5, .. }));
    }

    #[test]
    fn killer_replications_have_no_variance() {
        let dom = line(-10.0, 10.0);
        let regrets = replicate(4, 2, |r| {
            let (ls, advs) = game_streams(Stream::new(7), r);
            let adv = AdversarySpec::Killer { diameter: Some(10.0) }.build(&dom, 50, advs)?;
            let t = play(&LearnerConfig::ftl(Oracle::Pwl1d), adv, &dom, 50, ls)?;
            Ok(regret(&t, &Oracle::Pwl1d)?.avg_regret)
        })
        .unwrap();
        assert_eq!(Summary::of(&regrets).sd, Some(0.0));
    }
}
