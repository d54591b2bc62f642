//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs in a few minutes on one core; the regret-rate sweep
//! dominates.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ftpl::adversary::AdversaryProtocol;
use ftpl::experiment::{execute, load_config, validate, write_outputs, ExperimentConfig, Outputs};
use ftpl::harness::{play, regret, PROBE_TOLERANCE};
use ftpl::output::CheckRow;
use ftpl::{
    contract_check, sample_perturbation, BoxDomain, LearnerConfig, LossFunction, Oracle, OracleQuery, Point, Stream,
};
use rand::Rng;

type Verdict = Result<(bool, String), String>;

struct Ctx {
    scratch: tempfile::TempDir,
    sweep_dir: Option<PathBuf>,
}

fn preset(name: &str) -> Result<ExperimentConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"));
    let cfg = load_config(&path).map_err(|e| format!("{name}: {e}"))?;
    let warnings = validate(&cfg).map_err(|e| format!("{name}: {e}"))?;
    if let Some(w) = warnings.first() {
        return Err(format!("{name}: {w}"));
    }
    Ok(cfg)
}

fn run_preset(name: &str, workers: usize) -> Result<(ExperimentConfig, Outputs), String> {
    let cfg = preset(name)?;
    let out = execute(&cfg, workers).map_err(|e| format!("{name}: {e}"))?;
    Ok((cfg, out))
}

fn check<'a>(out: &'a Outputs, name: &str) -> Result<&'a CheckRow, String> {
    out.checks
        .iter()
        .find(|c| c.check == name)
        .ok_or_else(|| format!("no `{name}` check"))
}

fn killer_reproduction(_: &mut Ctx) -> Verdict {
    let start = Instant::now();
    let (diameter, horizon) = (10.0, 1000);
    let domain = BoxDomain::cube(1, -diameter, diameter).map_err(|e| e.to_string())?;
    let trace = play(
        &LearnerConfig::ftl(Oracle::Pwl1d),
        AdversaryProtocol::Killer { diameter },
        &domain,
        horizon,
        Stream::new(0),
    )
    .map_err(|e| e.to_string())?;
    let r = regret(&trace, &Oracle::Pwl1d).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let half = diameter * horizon as f64 / 2.0;
    let quarter = diameter * horizon as f64 / 4.0;
    let pass = (r.learner_cum_loss - half).abs() <= 1e-9
        && r.best_value <= quarter
        && r.avg_regret >= 2.5
        && elapsed < Duration::from_secs(5);
    Ok((
        pass,
        format!(
            "FTL vs killer: learner loss {} (= {half} ± 1e-9), best {} ≤ {quarter}, avg regret {:.3} ≥ 2.5, {:.3} s < 5 s",
            r.learner_cum_loss,
            r.best_value,
            r.avg_regret,
            elapsed.as_secs_f64()
        ),
    ))
}

fn regret_rate(ctx: &mut Ctx) -> Verdict {
    let start = Instant::now();
    let (mut cfg, out) = run_preset("regret-sweep", 1)?;
    cfg.out = Some(PathBuf::from("out").join("regret-sweep"));
    let horizons: Vec<usize> = (7..=14).map(|k| 1 << k).collect();
    let setup_ok = cfg.horizons.as_deref() == Some(&horizons[..])
        && cfg.replications >= 100
        && cfg.domain.as_ref().is_some_and(|b| b.dim() == 1 && b.linf_diameter() == 10.0)
        && cfg.oracle == Some(Oracle::Pwl1d);
    let row = out.summary.first().ok_or("empty summary")?;
    let (slope, r2) = (row.slope.ok_or("no fit")?, row.r2.ok_or("no fit")?);
    let dir = ctx.scratch.path().join("first").join("regret-sweep");
    write_outputs(&cfg, &out, &dir).map_err(|e| e.to_string())?;
    ctx.sweep_dir = Some(dir);
    let pass = setup_ok && (-0.65..=-0.35).contains(&slope) && r2 >= 0.9;
    Ok((
        pass,
        format!(
            "FTPL vs oblivious hinges, T = 128…16384, {} replications: slope {slope:.3} in [-0.65, -0.35], r² {r2:.3} ≥ 0.9 ({:.0} s)",
            cfg.replications,
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn stability_bound(_: &mut Ctx) -> Verdict {
    let (cfg, out) = run_preset("stability", 1)?;
    let mut pass = cfg.replications >= 100 && cfg.horizon == Some(200);
    let mut parts = Vec::new();
    for (eta, want) in [(0.01, 12.5), (0.05, 62.5)] {
        let id = format!("{}:eta={eta}", cfg.id);
        let row = out.summary.iter().find(|r| r.experiment_id == id).ok_or("missing η row")?;
        let bound = row.bound.ok_or("no bound")?;
        let c = out
            .checks
            .iter()
            .find(|c| c.experiment_id == id && c.check == "stability-bound")
            .ok_or("missing stability check")?;
        // The check's slack is the bound minus the upper CI edge.
        let upper = bound - c.worst_slack.ok_or("no slack")?;
        pass &= (bound - want).abs() < 1e-12 && upper <= bound;
        parts.push(format!("η={eta}: CI upper {upper:.4} ≤ {bound}"));
    }
    Ok((pass, format!("frozen-σ FTPL, T=200, {} replications: {}", cfg.replications, parts.join(", "))))
}

const PROBE_FAMILIES: [&str; 7] = [
    "monotone1",
    "monotone2",
    "oftpl-prediction-monotone",
    "oftpl-leader-monotone",
    "oftpl-toward-leader",
    "oftpl-toward-prediction",
    "oftpl-combined",
];

fn monotonicity(_: &mut Ctx) -> Verdict {
    let mut pass = PROBE_TOLERANCE == 1e-9;
    let mut parts = Vec::new();
    for (name, label) in [("probe-suite", "exact"), ("probe-suite-grid", "grid h=0.01")] {
        let (cfg, out) = run_preset(name, 1)?;
        let count = cfg.probes.as_ref().map_or(0, |p| p.count);
        pass &= count >= 1000;
        let mut total = 0;
        let mut passed = 0;
        for family in PROBE_FAMILIES {
            let c = check(&out, family)?;
            pass &= c.passed == count && c.failed == 0;
            total += count;
            passed += c.passed;
        }
        if label == "grid h=0.01" {
            pass &= cfg.oracle == Some(Oracle::grid(0.01));
        }
        parts.push(format!("{label}: {passed}/{total}"));
    }
    Ok((pass, format!("Monotone1, Monotone2 and OFTPL probes, 1000 each: {}", parts.join(", "))))
}

fn be_the_leader(_: &mut Ctx) -> Verdict {
    let (cfg, out) = run_preset("probe-suite", 1)?;
    let spec = cfg.probes.clone().ok_or("no probes section")?;
    let mut pass = spec.btl_traces >= 100 && spec.btl_horizon == 50 && spec.comparators == 201;
    let mut parts = Vec::new();
    for name in ["btl-ftpl", "btl-oftpl"] {
        let c = check(&out, name)?;
        pass &= c.passed == spec.btl_traces && c.failed == 0;
        parts.push(format!("{name} {}/{}", c.passed, spec.btl_traces));
    }
    Ok((
        pass,
        format!("frozen-σ exact traces, T=50, 201 comparators: {}", parts.join(", ")),
    ))
}

fn oracle_contract(_: &mut Ctx) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [0.1, 0.01] {
        let mut cfg = preset("oracle-audit")?;
        cfg.oracle = Some(Oracle::grid(h));
        let out = execute(&cfg, 1).map_err(|e| e.to_string())?;
        let c = check(&out, "contract")?;
        let queries = cfg.audit.as_ref().map_or(0, |a| a.queries);
        pass &= queries >= 1000 && c.passed == queries && c.failed == 0;
        parts.push(format!("grid h={h}: {}/{queries}", c.passed));
    }

    // Centers on the 1e−4 lattice put every kink of the objective on the
    // brute-force grid, so both minima coincide up to rounding.
    let domain = BoxDomain::cube(1, -5.0, 5.0).unwrap();
    let lattice = |k: i64| k as f64 * 1e-4;
    let mut worst = 0.0f64;
    let queries = 1000;
    for k in 0..queries {
        let mut rng = Stream::new(606).replication(k).rng_at(0);
        let n = rng.gen_range(1..=10);
        let losses: Vec<LossFunction> = (0..n)
            .map(|_| LossFunction::hinge(Point::new(vec![lattice(rng.gen_range(-50_000..=50_000))]), 10.0).unwrap())
            .collect();
        let sigma = sample_perturbation(1.0, 1, Stream::new(607).replication(k), 0).unwrap().sigma;
        let q = OracleQuery::new(&losses, None, &sigma, &domain).unwrap();
        let exact = Oracle::Pwl1d.minimize(&q, Stream::new(0)).map_err(|e| e.to_string())?;
        let brute = (-50_000..=50_000)
            .map(|j| q.objective(&[lattice(j)]))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((exact.value - brute).abs());
        pass &= contract_check(&exact, &q, brute);
    }
    pass &= worst <= 1e-9;
    parts.push(format!("pwl1d vs 1e-4 brute force on {queries} queries: max |Δ| {worst:.2e} ≤ 1e-9"));
    Ok((pass, parts.join(", ")))
}

fn oftpl_advantage(_: &mut Ctx) -> Verdict {
    let (cfg, out) = run_preset("oftpl-advantage", 1)?;
    let c = check(&out, "paired-advantage")?;
    let rows: BTreeMap<&str, f64> = out.summary.iter().map(|r| (r.experiment_id.as_str(), r.mean_regret)).collect();
    let oftpl = rows.get("oftpl-advantage").copied().ok_or("missing OFTPL row")?;
    let ftpl = rows.get("oftpl-advantage:baseline").copied().ok_or("missing FTPL row")?;
    let upper = -c.worst_slack.ok_or("no slack")?;
    let pass = c.pass && cfg.replications >= 50 && cfg.horizon == Some(2048) && oftpl <= ftpl;
    Ok((
        pass,
        format!(
            "slowly varying (block 10), T=2048, {} paired replications: OFTPL {oftpl:.4} vs FTPL {ftpl:.4}, 95% upper edge of the difference {upper:.5} ≤ 0",
            cfg.replications
        ),
    ))
}

fn saddle(_: &mut Ctx) -> Verdict {
    let (cfg, out) = run_preset("saddle-bilinear", 1)?;
    let mut pass = cfg.horizon == Some(8192) && !out.saddle_summary.is_empty();
    let mut worst_gap = f64::NEG_INFINITY;
    for r in &out.saddle_summary {
        let upper = r.gap + r.gap_alpha_band;
        pass &= upper <= 0.15 && upper <= r.regret_x + r.regret_y + 2.0 * r.gap_alpha_band + 1e-12;
        worst_gap = worst_gap.max(upper);
    }
    Ok((
        pass,
        format!(
            "x·y on [-1,1]², T=8192, {} runs: worst gap {worst_gap:.4} ≤ 0.15, gap ≤ regret_x + regret_y + 2α on every run",
            out.saddle_summary.len()
        ),
    ))
}

fn sampler(_: &mut Ctx) -> Verdict {
    let n = 1_000_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, eta) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let stream = Stream::new(900 + k as u64);
        let draws: Vec<f64> = (0..n)
            .map(|pos| sample_perturbation(eta, 1, stream, pos).unwrap().sigma[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let rel = (mean - 1.0 / eta).abs() * eta;
        pass &= rel <= 0.01;
        let mut worst = 0.0f64;
        for q in [0.25, 0.5, 0.75] {
            let s = -(1.0 - q as f64).ln() / eta;
            let survival = draws.iter().filter(|&&z| z >= s).count() as f64 / n as f64;
            worst = worst.max((survival - (-eta * s).exp()).abs());
        }
        pass &= worst <= 0.005;
        parts.push(format!("η={eta}: mean off by {:.3}%, survival off by {worst:.4}", rel * 100.0));
    }
    Ok((pass, format!("10^6 draws each, {}", parts.join("; "))))
}

fn files_of(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn reproducibility(ctx: &mut Ctx) -> Verdict {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.path().file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    let mut pass = !names.is_empty();
    let mut mismatched = Vec::new();
    for name in &names {
        let mut cfg = preset(name)?;
        cfg.out = Some(PathBuf::from("out").join(name));
        let first = ctx.scratch.path().join("first").join(name);
        if !(name == "regret-sweep" && ctx.sweep_dir.as_deref() == Some(first.as_path())) {
            let out = execute(&cfg, 1).map_err(|e| format!("{name}: {e}"))?;
            write_outputs(&cfg, &out, &first).map_err(|e| e.to_string())?;
        }
        let second = ctx.scratch.path().join("second").join(name);
        let out = execute(&cfg, 3).map_err(|e| format!("{name}: {e}"))?;
        write_outputs(&cfg, &out, &second).map_err(|e| e.to_string())?;
        let (a, b) = (files_of(&first)?, files_of(&second)?);
        let csv_equal = a.keys().eq(b.keys()) && a.iter().all(|(k, v)| b.get(k) == Some(v));
        if !csv_equal {
            mismatched.push(name.clone());
        }
        pass &= csv_equal;
    }
    Ok((
        pass,
        format!(
            "{} presets run with 1 and 3 workers: {}",
            names.len(),
            if mismatched.is_empty() {
                "all CSV outputs byte-identical".to_string()
            } else {
                format!("differences in {}", mismatched.join(", "))
            }
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn(&mut Ctx) -> Verdict); 10] = [
        ("killer adversary defeats follow-the-leader", killer_reproduction),
        ("FTPL regret decays like T^-1/2", regret_rate),
        ("frozen-σ stability below 125ηLd²D", stability_bound),
        ("monotonicity probe suites", monotonicity),
        ("be-the-leader inequalities", be_the_leader),
        ("oracle contract", oracle_contract),
        ("OFTPL beats FTPL on predictable losses", oftpl_advantage),
        ("saddle self-play", saddle),
        ("exponential sampler", sampler),
        ("reproducibility across worker counts", reproducibility),
    ];
    let mut ctx = Ctx {
        scratch: tempfile::tempdir().expect("temp dir"),
        sweep_dir: None,
    };
    let mut failures = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match f(&mut ctx) {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!("criterion {:>2} [{}] {title}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    if failures == 0 {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 10 criteria fail");
        ExitCode::FAILURE
    }
}
