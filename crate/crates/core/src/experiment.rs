//! Declarative experiments: a TOML config in, CSV files and a manifest out.
//!
//! All randomness derives from the config's `seed`; the worker count never
//! changes any output byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adversary::{AdversaryProtocol, AdversarySpec};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::harness::{
    comparator_grid, cumulative_regret, game_streams, play, probe_btl, probe_monotone1,
    probe_monotone2, probe_monotone_oftpl, rate_fit, regret, replicate, stability_bound, GameTrace, ProbeOutcome,
    ProbeResult, RatePoint, RegretReport, Shift, Summary, MIN_STABILITY_REPLICATIONS,
};
use crate::learner::{default_eta, GuessStrategy, LearnerConfig, LearnerState, PerturbationMode};
use crate::loss::lipschitz_audit;
use crate::oracle::{contract_check, grid_size, suggest_grid_h, Grid, Oracle, OracleGuarantee, OracleQuery};
use crate::output::{
    write_csv_file, CheckRow, RoundRow, SaddleRoundRow, SaddleSummaryRow, SummaryRow,
};
use crate::perturbation::{sample_perturbation, Stream};
use crate::saddle::{saddle_report, solve_saddle, PayoffSpec};

const PROBE_TAG: u64 = 0x7072_6f62;
const BTL_TAG: u64 = 0x6274_6c00;
const AUDIT_TAG: u64 = 0x6175_6474;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RegretSweep,
    ProbeSuite,
    Stability,
    Killer,
    Saddle,
    OracleAudit,
}

/// A learning rate, or `"default"` for `1/(L·√(dT))` at each horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Eta {
    Fixed(f64),
    Default,
}

impl Eta {
    pub fn resolve(self, lipschitz: f64, d: usize, horizon: usize) -> Result<f64> {
        match self {
            Eta::Fixed(v) => Ok(v),
            Eta::Default => default_eta(lipschitz, d, horizon),
        }
    }
}

impl Serialize for Eta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Eta::Fixed(v) => s.serialize_f64(*v),
            Eta::Default => s.serialize_str("default"),
        }
    }
}

impl<'de> Deserialize<'de> for Eta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EtaVisitor;

        impl Visitor<'_> for EtaVisitor {
            type Value = Eta;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(r#"a positive number or "default""#)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Eta, E> {
                Ok(Eta::Fixed(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Eta, E> {
                Ok(Eta::Fixed(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Eta, E> {
                Ok(Eta::Fixed(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Eta, E> {
                match v {
                    "default" => Ok(Eta::Default),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        d.deserialize_any(EtaVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LearnerSpec {
    Ftpl {
        eta: Eta,
        #[serde(default)]
        mode: PerturbationMode,
    },
    Oftpl {
        eta: Eta,
        guess: GuessStrategy,
        #[serde(default)]
        mode: PerturbationMode,
    },
    Ftl,
}

impl LearnerSpec {
    pub fn eta(&self) -> Option<Eta> {
        match self {
            LearnerSpec::Ftpl { eta, .. } | LearnerSpec::Oftpl { eta, .. } => Some(*eta),
            LearnerSpec::Ftl => None,
        }
    }

    pub fn resolve(&self, oracle: &Oracle, lipschitz: f64, d: usize, horizon: usize) -> Result<LearnerConfig> {
        let cfg = match *self {
            LearnerSpec::Ftpl { eta, mode } => LearnerConfig {
                mode,
                ..LearnerConfig::ftpl(eta.resolve(lipschitz, d, horizon)?, oracle.clone())
            },
            LearnerSpec::Oftpl { eta, guess, mode } => LearnerConfig {
                mode,
                ..LearnerConfig::oftpl(eta.resolve(lipschitz, d, horizon)?, oracle.clone(), guess)
            },
            LearnerSpec::Ftl => LearnerConfig::ftl(oracle.clone()),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optional pass criteria of a regret sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepSpec {
    pub slope_window: Option<[f64; 2]>,
    pub min_r2: Option<f64>,
    /// Learner run on the same seeds for a paired comparison.
    pub baseline: Option<LearnerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "ProbeSpec::default_count")]
    pub count: usize,
    #[serde(default = "ProbeSpec::default_history")]
    pub max_history: usize,
    #[serde(default = "ProbeSpec::default_guess")]
    pub guess: GuessStrategy,
    #[serde(default)]
    pub btl_traces: usize,
    #[serde(default = "ProbeSpec::default_btl_horizon")]
    pub btl_horizon: usize,
    #[serde(default = "ProbeSpec::default_comparators")]
    pub comparators: usize,
}

impl ProbeSpec {
    fn default_count() -> usize {
        1000
    }

    fn default_history() -> usize {
        30
    }

    fn default_guess() -> GuessStrategy {
        GuessStrategy::LastLoss
    }

    fn default_btl_horizon() -> usize {
        50
    }

    fn default_comparators() -> usize {
        201
    }
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            count: Self::default_count(),
            max_history: Self::default_history(),
            guess: Self::default_guess(),
            btl_traces: 0,
            btl_horizon: Self::default_btl_horizon(),
            comparators: Self::default_comparators(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StabilitySpec {
    pub etas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SaddleSpec {
    pub payoff: PayoffSpec,
    pub box_x: BoxDomain,
    pub box_y: BoxDomain,
    /// Defaults to the top-level learner.
    pub learner_y: Option<LearnerSpec>,
    pub max_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default = "AuditSpec::default_queries")]
    pub queries: usize,
    #[serde(default = "AuditSpec::default_history")]
    pub max_history: usize,
    /// Rate of the perturbation drawn for each query.
    #[serde(default = "AuditSpec::default_eta")]
    pub eta: f64,
    #[serde(default = "AuditSpec::default_pairs")]
    pub lipschitz_pairs: usize,
}

impl AuditSpec {
    fn default_queries() -> usize {
        1000
    }

    fn default_history() -> usize {
        20
    }

    fn default_eta() -> f64 {
        1.0
    }

    fn default_pairs() -> usize {
        100
    }
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            queries: Self::default_queries(),
            max_history: Self::default_history(),
            eta: Self::default_eta(),
            lipschitz_pairs: Self::default_pairs(),
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    pub horizon: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    /// Also write one CSV row per round.
    #[serde(default)]
    pub per_round: bool,
    #[serde(rename = "box")]
    pub domain: Option<BoxDomain>,
    pub learner: Option<LearnerSpec>,
    pub oracle: Option<Oracle>,
    /// Oracle used for best-in-hindsight and other certificates.
    pub reference: Option<Oracle>,
    pub adversary: Option<AdversarySpec>,
    pub sweep: Option<SweepSpec>,
    pub probes: Option<ProbeSpec>,
    pub stability: Option<StabilitySpec>,
    pub saddle: Option<SaddleSpec>,
    pub audit: Option<AuditSpec>,
}

/// Parse a TOML config. Errors carry the dotted path of the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("", e.to_string().trim()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().trim().to_string();
        if let Some(field) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        Error::config(path, message)
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// A finding of [`validate`]. Any warning makes [`run`] refuse the config.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigWarning {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.path, self.message)
    }
}

fn require<'a, T>(v: &'a Option<T>, path: &str, kind: ExperimentKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::config(path, format!("required for kind {kind:?}")))
}

fn field<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::config(path, e.to_string()))
}

impl ExperimentConfig {
    pub fn horizons(&self) -> Result<Vec<usize>> {
        match (&self.horizon, &self.horizons) {
            (Some(t), None) => Ok(vec![*t]),
            (None, Some(ts)) => Ok(ts.clone()),
            (Some(_), Some(_)) => Err(Error::config("horizons", "give either `horizon` or `horizons`, not both")),
            (None, None) => Err(Error::config("horizon", "missing")),
        }
    }

    pub fn domain(&self) -> Result<&BoxDomain> {
        require(&self.domain, "box", self.kind)
    }

    pub fn learner(&self) -> Result<&LearnerSpec> {
        require(&self.learner, "learner", self.kind)
    }

    pub fn oracle(&self) -> Result<&Oracle> {
        require(&self.oracle, "oracle", self.kind)
    }

    pub fn adversary(&self) -> AdversarySpec {
        self.adversary.clone().unwrap_or(match self.kind {
            ExperimentKind::Killer => AdversarySpec::Killer { diameter: None },
            _ => AdversarySpec::ObliviousHinge,
        })
    }

    /// The configured reference, else the exact oracle in 1-d, else the
    /// learner's oracle when it is a grid.
    pub fn reference(&self, domain: &BoxDomain) -> Result<Oracle> {
        if let Some(r) = &self.reference {
            return Ok(r.clone());
        }
        if domain.dim() == 1 {
            return Ok(Oracle::Pwl1d);
        }
        match &self.oracle {
            Some(g @ Oracle::Grid { .. }) => Ok(g.clone()),
            _ => Err(Error::config("reference", "required when d ≥ 2 and the oracle is not a grid")),
        }
    }

    fn master(&self) -> Stream {
        Stream::new(self.seed)
    }
}

fn check_oracle(path: &str, oracle: &Oracle, domain: &BoxDomain, warnings: &mut Vec<ConfigWarning>) -> Result<()> {
    match oracle {
        Oracle::Grid { h, budget } if *h > 0.0 && grid_size(domain, *h) > *budget as f64 => {
            warnings.push(ConfigWarning {
                path: format!("{path}.h"),
                message: format!(
                    "grid of {:.3e} points exceeds the budget of {budget}; suggested h = {:.6}",
                    grid_size(domain, *h),
                    suggest_grid_h(domain, *budget)
                ),
            });
            Ok(())
        }
        _ => field(path, oracle.validate(domain)),
    }
}

fn check_learner(path: &str, spec: &LearnerSpec) -> Result<()> {
    if let Some(Eta::Fixed(v)) = spec.eta() {
        if !(v > 0.0) {
            return Err(Error::config(format!("{path}.eta"), format!("must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Schema and semantic checks that need no experiment to run.
pub fn validate(cfg: &ExperimentConfig) -> Result<Vec<ConfigWarning>> {
    let mut warnings = Vec::new();
    if cfg.id.is_empty() || cfg.id.contains(['/', '\\', ',']) {
        return Err(Error::config("id", "must be non-empty without `/`, `\\` or `,`"));
    }
    if cfg.replications == 0 {
        return Err(Error::config("replications", "must be at least 1"));
    }
    let horizons = cfg.horizons()?;
    let key = if cfg.horizons.is_some() { "horizons" } else { "horizon" };
    if horizons.is_empty() {
        return Err(Error::config(key, "must not be empty"));
    }
    if horizons[0] == 0 {
        return Err(Error::config(key, "must be at least 1"));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(key, "must be strictly increasing"));
    }
    let learner = cfg.learner()?;
    check_learner("learner", learner)?;
    let oracle = cfg.oracle()?;

    if cfg.kind == ExperimentKind::Saddle {
        let spec = require(&cfg.saddle, "saddle", cfg.kind)?;
        if let Some(ly) = &spec.learner_y {
            check_learner("saddle.learner-y", ly)?;
        }
        for (path, l) in [("learner", Some(learner)), ("saddle.learner-y", spec.learner_y.as_ref())] {
            if matches!(l, Some(LearnerSpec::Ftl)) {
                return Err(Error::config(path, "self-play needs ftpl or oftpl"));
            }
        }
        let payoff = field("saddle.payoff", spec.payoff.build(spec.box_x.clone(), spec.box_y.clone()))?;
        check_oracle("oracle", oracle, &payoff.box_x, &mut warnings)?;
        check_oracle("oracle", oracle, &payoff.box_y, &mut warnings)?;
        for b in [&payoff.box_x, &payoff.box_y] {
            let reference = cfg.reference(b)?;
            check_oracle("reference", &reference, b, &mut warnings)?;
        }
        return Ok(warnings);
    }

    let domain = cfg.domain()?;
    check_oracle("oracle", oracle, domain, &mut warnings)?;
    let reference = cfg.reference(domain)?;
    check_oracle("reference", &reference, domain, &mut warnings)?;
    let adversary = cfg.adversary();
    field("adversary", adversary.validate())?;
    let deterministic = matches!(learner, LearnerSpec::Ftl);
    if matches!(adversary, AdversarySpec::Killer { .. }) && !deterministic {
        return Err(Error::config("adversary", "the killer adversary needs a deterministic learner (ftl)"));
    }

    match cfg.kind {
        ExperimentKind::RegretSweep => {
            if let Some(SweepSpec {
                baseline: Some(b), ..
            }) = &cfg.sweep
            {
                check_learner("sweep.baseline", b)?;
            }
        }
        ExperimentKind::Killer => {
            if !matches!(adversary, AdversarySpec::Killer { .. }) {
                return Err(Error::config("adversary", "kind killer needs the killer adversary"));
            }
        }
        ExperimentKind::Stability => {
            if cfg.replications < MIN_STABILITY_REPLICATIONS {
                return Err(Error::config(
                    "replications",
                    format!("stability needs at least {MIN_STABILITY_REPLICATIONS}"),
                ));
            }
            if matches!(learner, LearnerSpec::Ftl) {
                return Err(Error::config("learner", "stability needs ftpl or oftpl"));
            }
            if let Some(s) = &cfg.stability {
                if s.etas.is_empty() || s.etas.iter().any(|e| !(*e > 0.0)) {
                    return Err(Error::config("stability.etas", "must be a non-empty list of positive rates"));
                }
            }
            if !adversary_is_oblivious(&adversary) {
                return Err(Error::config("adversary", "stability needs an oblivious adversary"));
            }
        }
        ExperimentKind::ProbeSuite => {
            let spec = cfg.probes.clone().unwrap_or_default();
            if matches!(oracle, Oracle::LocalSearch { .. }) {
                return Err(Error::config("oracle", "probes need an oracle with an (α, β) guarantee"));
            }
            if !reference.is_exact() {
                return Err(Error::config("reference", "the OFTPL probe needs an exact leader oracle"));
            }
            if spec.comparators < 2 {
                return Err(Error::config("probes.comparators", "must be at least 2"));
            }
            if spec.btl_traces > 0 && spec.btl_horizon == 0 {
                return Err(Error::config("probes.btl-horizon", "must be at least 1"));
            }
            if !adversary_is_oblivious(&adversary) {
                return Err(Error::config("adversary", "probes need an oblivious adversary"));
            }
        }
        ExperimentKind::OracleAudit => {
            let spec = cfg.audit.clone().unwrap_or_default();
            if spec.max_history == 0 {
                return Err(Error::config("audit.max-history", "must be at least 1"));
            }
            if !(spec.eta > 0.0) {
                return Err(Error::config("audit.eta", "must be positive"));
            }
            if !adversary_is_oblivious(&adversary) {
                return Err(Error::config("adversary", "the audit needs an oblivious adversary"));
            }
        }
        ExperimentKind::Saddle => unreachable!(),
    }
    Ok(warnings)
}

fn adversary_is_oblivious(spec: &AdversarySpec) -> bool {
    !matches!(spec, AdversarySpec::Killer { .. } | AdversarySpec::Chaser { .. })
}

/// Everything an experiment produces, before it touches the disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outputs {
    pub rounds: Vec<RoundRow>,
    pub summary: Vec<SummaryRow>,
    pub checks: Vec<CheckRow>,
    pub saddle_rounds: Vec<Vec<SaddleRoundRow>>,
    pub saddle_summary: Vec<SaddleSummaryRow>,
    /// `(T, η)` actually used, for the manifest.
    pub resolved_etas: Vec<(usize, f64)>,
}

impl Outputs {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed_checks(&self) -> Vec<&CheckRow> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Pass/fail tally of one probe family.
#[derive(Clone, Debug, Default)]
struct Tally {
    passed: usize,
    failed: usize,
    not_applicable: usize,
    worst_slack: Option<f64>,
}

impl Tally {
    fn add(&mut self, r: &ProbeResult) {
        match r.outcome {
            ProbeOutcome::Pass => self.passed += 1,
            ProbeOutcome::Fail => self.failed += 1,
            ProbeOutcome::NotApplicable => {
                self.not_applicable += 1;
                return;
            }
        }
        self.worst_slack = Some(self.worst_slack.map_or(r.slack, |w| w.min(r.slack)));
    }

    fn add_bool(&mut self, ok: bool) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }

    fn row(self, experiment_id: &str, check: &str) -> CheckRow {
        CheckRow {
            experiment_id: experiment_id.to_string(),
            check: check.to_string(),
            passed: self.passed,
            failed: self.failed,
            not_applicable: self.not_applicable,
            worst_slack: self.worst_slack,
            pass: self.failed == 0,
        }
    }
}

fn single_check(experiment_id: &str, check: &str, pass: bool, slack: Option<f64>) -> CheckRow {
    let mut t = Tally::default();
    t.add_bool(pass);
    t.worst_slack = slack;
    t.row(experiment_id, check)
}

/// Run the experiment in memory. The config must have passed [`validate`].
pub fn execute(cfg: &ExperimentConfig, workers: usize) -> Result<Outputs> {
    match cfg.kind {
        ExperimentKind::RegretSweep | ExperimentKind::Killer => run_games(cfg, workers),
        ExperimentKind::Stability => run_stability(cfg, workers),
        ExperimentKind::ProbeSuite => run_probes(cfg, workers),
        ExperimentKind::OracleAudit => run_audit(cfg, workers),
        ExperimentKind::Saddle => run_saddle(cfg, workers),
    }
}

struct Replicate {
    report: RegretReport,
    rounds: Vec<RoundRow>,
}

fn one_game(
    cfg: &ExperimentConfig,
    learner: &LearnerConfig,
    horizon: usize,
    replication: u64,
    experiment_id: &str,
) -> Result<Replicate> {
    let domain = cfg.domain()?;
    let reference = cfg.reference(domain)?;
    let (ls, adv) = game_streams(cfg.master().child(horizon as u64), replication);
    let adversary = cfg.adversary().build(domain, horizon, adv)?;
    let trace = play(learner, adversary, domain, horizon, ls)?;
    let report = regret(&trace, &reference)?;
    let rounds = if cfg.per_round {
        round_rows(&trace, &reference, experiment_id, replication)?
    } else {
        Vec::new()
    };
    Ok(Replicate { report, rounds })
}

fn round_rows(trace: &GameTrace, reference: &Oracle, experiment_id: &str, replication: u64) -> Result<Vec<RoundRow>> {
    let regrets = cumulative_regret(trace, reference)?;
    let increments = trace.stability_increments();
    Ok(trace
        .records
        .iter()
        .zip(regrets)
        .zip(increments)
        .map(|((r, regret_so_far), stability_increment)| RoundRow {
            experiment_id: experiment_id.to_string(),
            replication,
            t: r.t,
            regret_so_far,
            stability_increment,
            sigma_l1: r.sigma_l1(),
        })
        .collect())
}

fn guarantee_for(oracle: &Oracle, domain: &BoxDomain, lipschitz: f64, horizon: usize) -> Result<Option<OracleGuarantee>> {
    Ok(match oracle {
        Oracle::Pwl1d => Some(OracleGuarantee::EXACT),
        Oracle::Grid { h, budget } => Some(Grid::new(domain, *h, *budget)?.guarantee(lipschitz * horizon as f64)),
        Oracle::LocalSearch { .. } => None,
    })
}

fn summarize(experiment_id: &str, horizon: usize, reports: &[RegretReport]) -> SummaryRow {
    let mean = |f: fn(&RegretReport) -> f64| Summary::of(&reports.iter().map(f).collect::<Vec<_>>()).mean;
    let regrets = Summary::of(&reports.iter().map(|r| r.avg_regret).collect::<Vec<_>>());
    SummaryRow {
        experiment_id: experiment_id.to_string(),
        horizon,
        mean_regret: regrets.mean,
        ci: regrets.ci_half_width,
        stability_mean: mean(|r| r.stability_mean),
        learner_cum_loss: mean(|r| r.learner_cum_loss),
        best_value: mean(|r| r.best_value),
        ..Default::default()
    }
}

fn run_games(cfg: &ExperimentConfig, workers: usize) -> Result<Outputs> {
    let domain = cfg.domain()?;
    let oracle = cfg.oracle()?;
    let adversary = cfg.adversary();
    let lipschitz = adversary.lipschitz();
    let d = domain.dim();
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let baseline_id = format!("{}:baseline", cfg.id);
    let mut out = Outputs::default();
    let mut points = Vec::new();
    let mut rows = Vec::new();
    let mut baseline_rows = Vec::new();
    let mut paired = Tally::default();
    let mut zero_variance = Tally::default();

    for horizon in cfg.horizons()? {
        let learner = cfg.learner()?.resolve(oracle, lipschitz, d, horizon)?;
        out.resolved_etas.push((horizon, learner.eta));
        let reps = replicate(cfg.replications, workers, |r| one_game(cfg, &learner, horizon, r, &cfg.id))?;
        let reports: Vec<RegretReport> = reps.iter().map(|r| r.report.clone()).collect();
        out.rounds.extend(reps.into_iter().flat_map(|r| r.rounds));
        let mut row = summarize(&cfg.id, horizon, &reports);
        if learner.mode == PerturbationMode::Frozen {
            row.bound = guarantee_for(oracle, domain, lipschitz, horizon)?
                .map(|g| stability_bound(learner.eta, lipschitz, d, domain.linf_diameter(), g));
        }
        if cfg.kind == ExperimentKind::Killer {
            let s = Summary::of(&reports.iter().map(|r| r.avg_regret).collect::<Vec<_>>());
            zero_variance.add_bool(s.sd.unwrap_or(0.0) == 0.0);
        }
        points.push(RatePoint {
            horizon,
            mean_regret: row.mean_regret,
            ci_half_width: row.ci,
        });
        rows.push(row);

        if let Some(b) = &sweep.baseline {
            let base = b.resolve(oracle, lipschitz, d, horizon)?;
            let base_reps = replicate(cfg.replications, workers, |r| one_game(cfg, &base, horizon, r, &baseline_id))?;
            let base_reports: Vec<RegretReport> = base_reps.iter().map(|r| r.report.clone()).collect();
            out.rounds.extend(base_reps.into_iter().flat_map(|r| r.rounds));
            let diffs: Vec<f64> = reports
                .iter()
                .zip(&base_reports)
                .map(|(a, b)| a.avg_regret - b.avg_regret)
                .collect();
            let s = Summary::of(&diffs);
            paired.add_bool(s.upper() <= 0.0);
            paired.worst_slack = Some(paired.worst_slack.map_or(-s.upper(), |w: f64| w.min(-s.upper())));
            baseline_rows.push(summarize(&baseline_id, horizon, &base_reports));
        }
    }

    let fit = if points.len() >= 4 && points.iter().all(|p| p.mean_regret > 0.0) {
        Some(rate_fit(points.clone())?)
    } else {
        None
    };
    if let Some(f) = &fit {
        for row in &mut rows {
            row.slope = Some(f.slope);
            row.intercept = Some(f.intercept);
            row.r2 = Some(f.r2);
        }
    }
    if cfg.kind == ExperimentKind::RegretSweep && points.len() >= 2 {
        let mut t = Tally::default();
        for w in points.windows(2) {
            t.add_bool(w[1].mean_regret - w[1].ci_half_width <= w[0].mean_regret + w[0].ci_half_width);
        }
        out.checks.push(t.row(&cfg.id, "regret-nonincreasing"));
    }
    if let Some([lo, hi]) = sweep.slope_window {
        let ok = fit.as_ref().is_some_and(|f| (lo..=hi).contains(&f.slope));
        out.checks.push(single_check(&cfg.id, "slope-window", ok, fit.as_ref().map(|f| (f.slope - lo).min(hi - f.slope))));
    }
    if let Some(min_r2) = sweep.min_r2 {
        let ok = fit.as_ref().is_some_and(|f| f.r2 >= min_r2);
        out.checks.push(single_check(&cfg.id, "min-r2", ok, fit.as_ref().map(|f| f.r2 - min_r2)));
    }
    if sweep.baseline.is_some() {
        out.checks.push(paired.row(&cfg.id, "paired-advantage"));
    }
    if cfg.kind == ExperimentKind::Killer {
        out.checks.push(zero_variance.row(&cfg.id, "zero-variance"));
    }
    out.summary = rows;
    out.summary.extend(baseline_rows);
    Ok(out)
}

fn run_stability(cfg: &ExperimentConfig, workers: usize) -> Result<Outputs> {
    let domain = cfg.domain()?;
    let oracle = cfg.oracle()?;
    let adversary = cfg.adversary();
    let lipschitz = adversary.lipschitz();
    let d = domain.dim();
    let mut out = Outputs::default();
    for horizon in cfg.horizons()? {
        let base = cfg.learner()?.resolve(oracle, lipschitz, d, horizon)?.frozen();
        let etas = cfg.stability.as_ref().map_or(vec![base.eta], |s| s.etas.clone());
        let g = guarantee_for(oracle, domain, lipschitz, horizon)?;
        for eta in etas {
            let learner = LearnerConfig { eta, ..base.clone() };
            learner.validate()?;
            out.resolved_etas.push((horizon, eta));
            let id = format!("{}:eta={eta}", cfg.id);
            let reps = replicate(cfg.replications, workers, |r| one_game(cfg, &learner, horizon, r, &id))?;
            let reports: Vec<RegretReport> = reps.iter().map(|r| r.report.clone()).collect();
            out.rounds.extend(reps.into_iter().flat_map(|r| r.rounds));
            let mut row = summarize(&id, horizon, &reports);
            let stab = Summary::of(&reports.iter().map(|r| r.stability_mean).collect::<Vec<_>>());
            let bound = g.map(|g| stability_bound(eta, lipschitz, d, domain.linf_diameter(), g));
            row.bound = bound;
            out.checks.push(match bound {
                Some(b) => single_check(&id, "stability-bound", stab.upper() <= b, Some(b - stab.upper())),
                None => Tally {
                    not_applicable: 1,
                    ..Default::default()
                }
                .row(&id, "stability-bound"),
            });
            out.summary.push(row);
        }
    }
    Ok(out)
}

/// Results of one randomized probe: Monotone1, Monotone2 and the five
/// OFTPL relations.
type ProbeBatch = [ProbeResult; 7];

const PROBE_NAMES: [&str; 7] = [
    "monotone1",
    "monotone2",
    "oftpl-prediction-monotone",
    "oftpl-leader-monotone",
    "oftpl-toward-leader",
    "oftpl-toward-prediction",
    "oftpl-combined",
];

fn one_probe(cfg: &ExperimentConfig, spec: &ProbeSpec, eta: f64, k: u64) -> Result<ProbeBatch> {
    let domain = cfg.domain()?;
    let oracle = cfg.oracle()?;
    let reference = cfg.reference(domain)?;
    let d = domain.dim();
    let stream = cfg.master().child(PROBE_TAG).replication(k);
    let mut rng = stream.rng_at(0);
    let n = rng.gen_range(0..=spec.max_history);
    let i = rng.gen_range(0..d);
    let c = 10f64.powf(rng.gen_range(-2.0..2.0));
    let losses = match cfg.adversary().build(domain, n + 1, stream.child(1))? {
        AdversaryProtocol::Oblivious(v) => v,
        _ => return Err(Error::Protocol("probes need an oblivious sequence".into())),
    };
    let sigma = sample_perturbation(eta, d, stream.child(2), 0)?.sigma;
    let mut ftpl = LearnerState::new(LearnerConfig::ftpl(eta, oracle.clone()), domain, stream.child(3))?;
    let mut oftpl = LearnerState::new(
        LearnerConfig::oftpl(eta, oracle.clone(), spec.guess),
        domain,
        stream.child(3),
    )?;
    for f in &losses[..n] {
        ftpl.observe(f.clone())?;
        oftpl.observe(f.clone())?;
    }
    let m1 = probe_monotone1(&ftpl, i, c, &sigma)?;
    let m2 = probe_monotone2(&ftpl, &losses[n], i, &sigma)?;
    let o = probe_monotone_oftpl(&oftpl, &losses[n], i, Shift::Lipschitz, &sigma, &reference)?;
    Ok([
        m1,
        m2,
        o.prediction_monotone,
        o.leader_monotone,
        o.toward_leader,
        o.toward_prediction,
        o.combined,
    ])
}

fn btl_trace(cfg: &ExperimentConfig, learner: &LearnerConfig, horizon: usize, r: u64) -> Result<GameTrace> {
    let domain = cfg.domain()?;
    let (ls, adv) = game_streams(cfg.master().child(BTL_TAG), r);
    let adversary = cfg.adversary().build(domain, horizon, adv)?;
    play(learner, adversary, domain, horizon, ls)
}

fn run_probes(cfg: &ExperimentConfig, workers: usize) -> Result<Outputs> {
    let domain = cfg.domain()?;
    let oracle = cfg.oracle()?;
    let spec = cfg.probes.clone().unwrap_or_default();
    let lipschitz = cfg.adversary().lipschitz();
    let d = domain.dim();
    let eta = cfg
        .learner()?
        .eta()
        .unwrap_or(Eta::Default)
        .resolve(lipschitz, d, spec.max_history + 1)?;
    let mut out = Outputs::default();
    out.resolved_etas.push((spec.max_history + 1, eta));

    let batches = replicate(spec.count.max(1), workers, |k| one_probe(cfg, &spec, eta, k))?;
    let mut tallies: Vec<Tally> = vec![Tally::default(); PROBE_NAMES.len()];
    for batch in batches.iter().take(spec.count) {
        for (t, r) in tallies.iter_mut().zip(batch) {
            t.add(r);
        }
    }
    for (t, name) in tallies.into_iter().zip(PROBE_NAMES) {
        out.checks.push(t.row(&cfg.id, name));
    }

    if spec.btl_traces > 0 {
        let comparators = comparator_grid(domain, spec.comparators);
        let frozen_eta = cfg
            .learner()?
            .eta()
            .unwrap_or(Eta::Default)
            .resolve(lipschitz, d, spec.btl_horizon)?;
        let mut learners = vec![("btl-ftpl", LearnerConfig::ftpl(frozen_eta, oracle.clone()).frozen())];
        if oracle.is_exact() {
            learners.push((
                "btl-oftpl",
                LearnerConfig::oftpl(frozen_eta, oracle.clone(), spec.guess).frozen(),
            ));
        }
        for (name, learner) in learners {
            let results = replicate(spec.btl_traces, workers, |r| {
                probe_btl(&btl_trace(cfg, &learner, spec.btl_horizon, r)?, &comparators)
            })?;
            let mut t = Tally::default();
            results.iter().for_each(|r| t.add(r));
            out.checks.push(t.row(&cfg.id, name));
        }
    }
    Ok(out)
}

fn run_audit(cfg: &ExperimentConfig, workers: usize) -> Result<Outputs> {
    let domain = cfg.domain()?;
    let oracle = cfg.oracle()?;
    let reference = cfg.reference(domain)?;
    let spec = cfg.audit.clone().unwrap_or_default();
    let d = domain.dim();
    let results = replicate(spec.queries.max(1), workers, |k| {
        let stream = cfg.master().child(AUDIT_TAG).replication(k);
        let n = stream.rng_at(0).gen_range(1..=spec.max_history);
        let losses = match cfg.adversary().build(domain, n, stream.child(1))? {
            AdversaryProtocol::Oblivious(v) => v,
            _ => return Err(Error::Protocol("the audit needs an oblivious sequence".into())),
        };
        let sigma = sample_perturbation(spec.eta, d, stream.child(2), 0)?.sigma;
        let q = OracleQuery::new(&losses, None, &sigma, domain)?;
        let answer = oracle.minimize(&q, stream.child(3))?;
        let exact = reference.minimize(&q, stream.child(4))?;
        let slack = exact.gamma(&sigma).ok_or_else(|| {
            Error::NotExact(format!("reference {} gives no guarantee", reference.name()))
        })?;
        let contract = contract_check(&answer, &q, exact.value - slack);
        let mut lipschitz_ok = true;
        for (j, f) in losses.iter().enumerate() {
            let report = lipschitz_audit(f, domain, spec.lipschitz_pairs, stream.child(5).replication(j as u64))?;
            lipschitz_ok &= report.pass;
        }
        Ok((contract, lipschitz_ok))
    })?;
    let mut contract = Tally::default();
    let mut lipschitz = Tally::default();
    for &(c, l) in results.iter().take(spec.queries) {
        contract.add_bool(c);
        lipschitz.add_bool(l);
    }
    Ok(Outputs {
        checks: vec![
            contract.row(&cfg.id, "contract"),
            lipschitz.row(&cfg.id, "lipschitz-audit"),
        ],
        ..Default::default()
    })
}

fn run_saddle(cfg: &ExperimentConfig, workers: usize) -> Result<Outputs> {
    let spec = require(&cfg.saddle, "saddle", cfg.kind)?;
    let payoff = spec.payoff.build(spec.box_x.clone(), spec.box_y.clone())?;
    let oracle = cfg.oracle()?;
    let learner_x = cfg.learner()?;
    let learner_y = spec.learner_y.as_ref().unwrap_or(learner_x);
    let mut out = Outputs::default();
    let mut identity = Tally::default();
    let mut gap_ok = Tally::default();
    for horizon in cfg.horizons()? {
        let cx = learner_x.resolve(oracle, payoff.lipschitz_x().max(f64::MIN_POSITIVE), payoff.box_x.dim(), horizon)?;
        let cy = learner_y.resolve(oracle, payoff.lipschitz_y().max(f64::MIN_POSITIVE), payoff.box_y.dim(), horizon)?;
        out.resolved_etas.push((horizon, cx.eta));
        let reports = replicate(cfg.replications, workers, |r| {
            let stream = cfg.master().child(horizon as u64).replication(r);
            let run = solve_saddle(&payoff, horizon, &cx, &cy, stream)?;
            let reference = cfg.reference(&payoff.box_x)?;
            let report = saddle_report(&payoff, &run, &reference)?;
            let rounds = if cfg.per_round {
                run.mix_x
                    .atoms
                    .iter()
                    .zip(&run.mix_y.atoms)
                    .zip(&run.values)
                    .enumerate()
                    .map(|(t, ((x, y), m))| SaddleRoundRow {
                        t: t + 1,
                        x_t: x.to_string(),
                        y_t: y.to_string(),
                        value: *m,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Ok((report, rounds))
        })?;
        for (report, rounds) in reports {
            let band = report.gap.gap_alpha_band;
            let gap_upper = report.gap.gap + band;
            identity.add_bool(gap_upper <= report.regret_x + report.regret_y + 2.0 * band + 1e-12);
            if let Some(max_gap) = spec.max_gap {
                gap_ok.add_bool(gap_upper <= max_gap);
                gap_ok.worst_slack = Some(gap_ok.worst_slack.map_or(max_gap - gap_upper, |w: f64| w.min(max_gap - gap_upper)));
            }
            out.saddle_summary.push(SaddleSummaryRow {
                horizon,
                gap: report.gap.gap,
                gap_alpha_band: band,
                regret_x: report.regret_x,
                regret_y: report.regret_y,
            });
            if cfg.per_round {
                out.saddle_rounds.push(rounds);
            }
        }
    }
    out.checks.push(identity.row(&cfg.id, "gap-within-regret-sum"));
    if spec.max_gap.is_some() {
        out.checks.push(gap_ok.row(&cfg.id, "max-gap"));
    }
    Ok(out)
}

/// Resolved config plus what is needed to reproduce every output file.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    library_version: &'static str,
    seed: u64,
    resolved_etas: Vec<ResolvedEta>,
    files: Vec<String>,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize)]
struct ResolvedEta {
    horizon: usize,
    eta: f64,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Write the CSV files and the manifest into `dir`; returns the paths.
pub fn write_outputs(cfg: &ExperimentConfig, outputs: &Outputs, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = dir.join(&name);
        write(&path)?;
        files.push(path);
        Ok(())
    };
    match cfg.kind {
        ExperimentKind::Saddle => {
            emit("saddle_summary.csv".into(), &|p| write_csv_file(p, &outputs.saddle_summary))?;
            for (r, rounds) in outputs.saddle_rounds.iter().enumerate() {
                emit(format!("saddle_rounds_{r}.csv"), &|p| write_csv_file(p, rounds))?;
            }
        }
        ExperimentKind::RegretSweep | ExperimentKind::Stability | ExperimentKind::Killer => {
            emit("summary.csv".into(), &|p| write_csv_file(p, &outputs.summary))?;
            if cfg.per_round {
                emit("rounds.csv".into(), &|p| write_csv_file(p, &outputs.rounds))?;
            }
        }
        ExperimentKind::ProbeSuite | ExperimentKind::OracleAudit => {}
    }
    emit("checks.csv".into(), &|p| write_csv_file(p, &outputs.checks))?;

    let manifest = Manifest {
        library_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        resolved_etas: outputs
            .resolved_etas
            .iter()
            .map(|&(horizon, eta)| ResolvedEta { horizon, eta })
            .collect(),
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::config("manifest", e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text)?;
    files.push(path);
    Ok(files)
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub outputs: Outputs,
    pub files: Vec<PathBuf>,
}

/// Validate, execute and write into `cfg.out`.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutcome> {
    if let Some(w) = validate(cfg)?.into_iter().next() {
        return Err(Error::config(w.path, w.message));
    }
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::config("out", "missing; set it in the config or pass --out"))?;
    let outputs = execute(cfg, workers)?;
    let files = write_outputs(cfg, &outputs, &dir)?;
    Ok(RunOutcome { outputs, files })
}
