//! CSV result files. Every file starts with its header row, even when it
//! has no records.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

pub fn write_csv<R: CsvRow, W: Write>(out: W, rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(R::HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<R: CsvRow>(path: &Path, rows: &[R]) -> Result<()> {
    write_csv(File::create(path)?, rows)
}

/// Per-round record of one replication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRow {
    pub experiment_id: String,
    pub replication: u64,
    pub t: usize,
    /// Cumulative regret of rounds `1 … t`.
    pub regret_so_far: f64,
    pub stability_increment: f64,
    pub sigma_l1: f64,
}

impl CsvRow for RoundRow {
    const HEADER: &'static [&'static str] = &[
        "experiment_id",
        "replication",
        "t",
        "regret_so_far",
        "stability_increment",
        "sigma_l1",
    ];
}

/// Aggregate over replications at one horizon. Fields that do not apply
/// to an experiment are left empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment_id: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub mean_regret: f64,
    pub ci: f64,
    pub stability_mean: f64,
    pub bound: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub learner_cum_loss: f64,
    pub best_value: f64,
}

impl CsvRow for SummaryRow {
    const HEADER: &'static [&'static str] = &[
        "experiment_id",
        "T",
        "mean_regret",
        "ci",
        "stability_mean",
        "bound",
        "slope",
        "intercept",
        "r2",
        "learner_cum_loss",
        "best_value",
    ];
}

/// Outcome of one named check of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub experiment_id: String,
    pub check: String,
    pub passed: usize,
    pub failed: usize,
    pub not_applicable: usize,
    pub worst_slack: Option<f64>,
    pub pass: bool,
}

impl CsvRow for CheckRow {
    const HEADER: &'static [&'static str] = &[
        "experiment_id",
        "check",
        "passed",
        "failed",
        "not_applicable",
        "worst_slack",
        "pass",
    ];
}

/// One self-play round; points are written with their `Display` form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleRoundRow {
    pub t: usize,
    pub x_t: String,
    pub y_t: String,
    #[serde(rename = "M")]
    pub value: f64,
}

impl CsvRow for SaddleRoundRow {
    const HEADER: &'static [&'static str] = &["t", "x_t", "y_t", "M"];
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleSummaryRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub gap: f64,
    pub gap_alpha_band: f64,
    pub regret_x: f64,
    pub regret_y: f64,
}

impl CsvRow for SaddleSummaryRow {
    const HEADER: &'static [&'static str] = &["T", "gap", "gap_alpha_band", "regret_x", "regret_y"];
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;

    fn render<R: CsvRow>(rows: &[R]) -> String {
        let mut buf = Vec::new();
        write_csv(&mut buf, rows).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_file_has_header() {
        assert_eq!(
            render::<RoundRow>(&[]),
            "experiment_id,replication,t,regret_so_far,stability_increment,sigma_l1\n"
        );
    }

    #[test]
    fn header_matches_field_order() {
        let row = SummaryRow {
            experiment_id: "a".into(),
            horizon: 8,
            mean_regret: 0.25,
            ci: 0.0,
            stability_mean: 1.5,
            bound: Some(12.5),
            learner_cum_loss: 4.0,
            best_value: 2.0,
            ..Default::default()
        };
        let text = render(&[row]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SummaryRow::HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "a,8,0.25,0.0,1.5,12.5,,,,4.0,2.0");
    }

    #[test]
    fn points_fit_one_field() {
        let row = SaddleRoundRow {
            t: 1,
            x_t: Point::new(vec![-1.0, 0.5]).to_string(),
            y_t: Point::new(vec![1.0]).to_string(),
            value: -0.5,
        };
        assert_eq!(render(&[row]), "t,x_t,y_t,M\n1,-1;0.5,1,-0.5\n");
    }
}
