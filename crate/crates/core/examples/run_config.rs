//! Load a TOML experiment, validate it and run it in memory. Pass a path to
//! use another config; the default is the probe-suite preset.

use ftpl::experiment::{execute, load_config, validate};

fn main() -> ftpl::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/presets/probe-suite.toml").to_string());
    let cfg = load_config(path.as_ref())?;
    for w in validate(&cfg)? {
        println!("warning: {w}");
    }
    let out = execute(&cfg, 1)?;
    for row in &out.summary {
        println!("{} T={} mean regret {:.4} ± {:.4}", row.experiment_id, row.horizon, row.mean_regret, row.ci);
    }
    for c in &out.checks {
        println!("{:<28} {:>5} passed {:>3} failed {}", c.check, c.passed, c.failed, if c.pass { "" } else { "FAIL" });
    }
    Ok(())
}
