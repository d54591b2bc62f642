//! Mixed equilibria of `min_x max_y M(x, y)` by self-play.
//!
//! Each round the x-player suffers `M(·, y_t)` and the y-player suffers
//! `−M(x_t, ·)`. Both move simultaneously, and the uniform mixtures of
//! their iterates are returned.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{BoxDomain, Point};
use crate::error::{Error, Result};
use crate::harness::best_in_hindsight;
use crate::learner::{LearnerConfig, LearnerState, Variant};
use crate::loss::LossFunction;
use crate::oracle::Oracle;
use crate::perturbation::Stream;

type PayoffFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Payoff {
    /// `M(x, y) = xᵀ A y`, with `A` stored row-major as `dim_x` rows.
    Bilinear(Vec<Vec<f64>>),
    /// `M(x, y) = max{0, D/2 − ‖x − y‖₁}`, the hinge centered at `y`.
    HingeFamily { diameter: f64 },
    Zero,
    Opaque {
        label: String,
        lipschitz_x: f64,
        lipschitz_y: f64,
        f: PayoffFn,
    },
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Bilinear(a) => f.debug_tuple("Bilinear").field(a).finish(),
            Payoff::HingeFamily { diameter } => {
                f.debug_struct("HingeFamily").field("diameter", diameter).finish()
            }
            Payoff::Zero => f.write_str("Zero"),
            Payoff::Opaque { label, .. } => f.debug_struct("Opaque").field("label", label).finish(),
        }
    }
}

/// A payoff together with the two players' boxes.
#[derive(Clone, Debug)]
pub struct PayoffFunction {
    pub payoff: Payoff,
    pub box_x: BoxDomain,
    pub box_y: BoxDomain,
}

fn max_abs(domain: &BoxDomain, j: usize) -> f64 {
    domain.lo()[j].abs().max(domain.hi()[j].abs())
}

impl PayoffFunction {
    pub fn new(payoff: Payoff, box_x: BoxDomain, box_y: BoxDomain) -> Result<Self> {
        match &payoff {
            Payoff::Bilinear(a) => {
                if a.len() != box_x.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: box_x.dim(),
                        got: a.len(),
                    });
                }
                if let Some(row) = a.iter().find(|r| r.len() != box_y.dim()) {
                    return Err(Error::DimensionMismatch {
                        expected: box_y.dim(),
                        got: row.len(),
                    });
                }
            }
            Payoff::HingeFamily { diameter } => {
                box_x.check_dim(box_y.dim())?;
                if !(*diameter > 0.0) {
                    return Err(Error::param("diameter", "must be positive"));
                }
            }
            Payoff::Zero | Payoff::Opaque { .. } => {}
        }
        Ok(PayoffFunction {
            payoff,
            box_x,
            box_y,
        })
    }

    /// `M(x, y) = x·y` on `[−1, 1]²`.
    pub fn xy() -> Self {
        let unit = BoxDomain::cube(1, -1.0, 1.0).expect("valid box");
        PayoffFunction::new(Payoff::Bilinear(vec![vec![1.0]]), unit.clone(), unit).expect("valid payoff")
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.payoff {
            Payoff::Bilinear(a) => a
                .iter()
                .zip(x)
                .map(|(row, xi)| xi * row.iter().zip(y).map(|(aij, yj)| aij * yj).sum::<f64>())
                .sum(),
            Payoff::HingeFamily { diameter } => {
                let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                (0.5 * diameter - dist).max(0.0)
            }
            Payoff::Zero => 0.0,
            Payoff::Opaque { f, .. } => f(x, y),
        }
    }

    /// ℓ1-Lipschitz constant of `M(·, y)`, uniformly over `y` in its box.
    pub fn lipschitz_x(&self) -> f64 {
        match &self.payoff {
            Payoff::Bilinear(a) => a
                .iter()
                .map(|row| row.iter().enumerate().map(|(j, v)| v.abs() * max_abs(&self.box_y, j)).sum::<f64>())
                .fold(0.0, f64::max),
            Payoff::HingeFamily { .. } => 1.0,
            Payoff::Zero => 0.0,
            Payoff::Opaque { lipschitz_x, .. } => *lipschitz_x,
        }
    }

    /// ℓ1-Lipschitz constant of `M(x, ·)`, uniformly over `x` in its box.
    pub fn lipschitz_y(&self) -> f64 {
        match &self.payoff {
            Payoff::Bilinear(a) => (0..self.box_y.dim())
                .map(|j| {
                    a.iter()
                        .enumerate()
                        .map(|(i, row)| row[j].abs() * max_abs(&self.box_x, i))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
            Payoff::HingeFamily { .. } => 1.0,
            Payoff::Zero => 0.0,
            Payoff::Opaque { lipschitz_y, .. } => *lipschitz_y,
        }
    }

    /// The x-player's loss `M(·, y)`.
    pub fn section_x(&self, y: &Point) -> Result<LossFunction> {
        let dim = self.box_x.dim();
        Ok(match &self.payoff {
            Payoff::Bilinear(a) => {
                let coeffs = a
                    .iter()
                    .map(|row| row.iter().zip(y.iter()).map(|(aij, yj)| aij * yj).sum())
                    .collect();
                LossFunction::linear(coeffs, 0.0)
            }
            Payoff::HingeFamily { diameter } => LossFunction::hinge(y.clone(), *diameter)?,
            Payoff::Zero => LossFunction::zero(dim),
            Payoff::Opaque {
                label,
                lipschitz_x,
                f,
                ..
            } => {
                let (f, y) = (f.clone(), y.clone());
                LossFunction::opaque(dim, *lipschitz_x, format!("{label}(·, y)"), move |x| f(x, &y))
            }
        })
    }

    /// The y-player's loss `−M(x, ·)`.
    pub fn neg_section_y(&self, x: &Point) -> Result<LossFunction> {
        let dim = self.box_y.dim();
        Ok(match &self.payoff {
            Payoff::Bilinear(a) => {
                let coeffs = (0..dim)
                    .map(|j| -a.iter().zip(x.iter()).map(|(row, xi)| row[j] * xi).sum::<f64>())
                    .collect();
                LossFunction::linear(coeffs, 0.0)
            }
            Payoff::HingeFamily { diameter } => LossFunction::hinge(x.clone(), *diameter)?.negated(),
            Payoff::Zero => LossFunction::zero(dim),
            Payoff::Opaque {
                label,
                lipschitz_y,
                f,
                ..
            } => {
                let (f, x) = (f.clone(), x.clone());
                LossFunction::opaque(dim, *lipschitz_y, format!("−{label}(x, ·)"), move |y| -f(&x, y))
            }
        })
    }

    /// `M'(y, x) = −M(x, y)`: the same game with the roles exchanged.
    pub fn swapped(&self) -> PayoffFunction {
        let payoff = match &self.payoff {
            Payoff::Bilinear(a) => {
                let (rows, cols) = (a.len(), self.box_y.dim());
                Payoff::Bilinear((0..cols).map(|j| (0..rows).map(|i| -a[i][j]).collect()).collect())
            }
            Payoff::Zero => Payoff::Zero,
            Payoff::HingeFamily { diameter } => {
                let d = *diameter;
                Payoff::Opaque {
                    label: "−hinge".into(),
                    lipschitz_x: 1.0,
                    lipschitz_y: 1.0,
                    f: Arc::new(move |y: &[f64], x: &[f64]| {
                        let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                        -(0.5 * d - dist).max(0.0)
                    }),
                }
            }
            Payoff::Opaque {
                label,
                lipschitz_x,
                lipschitz_y,
                f,
            } => {
                let f = f.clone();
                Payoff::Opaque {
                    label: format!("−{label}ᵀ"),
                    lipschitz_x: *lipschitz_y,
                    lipschitz_y: *lipschitz_x,
                    f: Arc::new(move |y: &[f64], x: &[f64]| -f(x, y)),
                }
            }
        };
        PayoffFunction {
            payoff,
            box_x: self.box_y.clone(),
            box_y: self.box_x.clone(),
        }
    }
}

/// Uniform distribution over a player's iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedStrategy {
    pub atoms: Vec<Point>,
}

impl MixedStrategy {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.atoms.len() as f64
    }

    pub fn mean(&self) -> Point {
        let d = self.atoms.first().map_or(0, |p| p.dim());
        let mut m = vec![0.0; d];
        for p in &self.atoms {
            for (acc, v) in m.iter_mut().zip(p.iter()) {
                *acc += v;
            }
        }
        Point::new(m.into_iter().map(|v| v * self.weight()).collect())
    }
}

/// One self-play run.
#[derive(Clone, Debug)]
pub struct SaddleRun {
    pub mix_x: MixedStrategy,
    pub mix_y: MixedStrategy,
    /// `M(x_t, y_t)`.
    pub values: Vec<f64>,
}

impl SaddleRun {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }
}

const X_TAG: u64 = 0x78;
const Y_TAG: u64 = 0x79;

pub fn solve_saddle(
    payoff: &PayoffFunction,
    horizon: usize,
    config_x: &LearnerConfig,
    config_y: &LearnerConfig,
    stream: Stream,
) -> Result<SaddleRun> {
    solve_saddle_with_streams(
        payoff,
        horizon,
        config_x,
        config_y,
        stream.child(X_TAG),
        stream.child(Y_TAG),
    )
}

fn player_err(player: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Player {
        player,
        source: Box::new(e),
    }
}

pub fn solve_saddle_with_streams(
    payoff: &PayoffFunction,
    horizon: usize,
    config_x: &LearnerConfig,
    config_y: &LearnerConfig,
    stream_x: Stream,
    stream_y: Stream,
) -> Result<SaddleRun> {
    if horizon == 0 {
        return Err(Error::param("T", "must be at least 1"));
    }
    for (player, cfg) in [("x", config_x), ("y", config_y)] {
        if matches!(cfg.variant, Variant::Ftl) {
            return Err(player_err(player)(Error::param(
                "variant",
                "self-play needs FTPL or OFTPL learners",
            )));
        }
    }
    let mut px = LearnerState::new(config_x.clone(), &payoff.box_x, stream_x).map_err(player_err("x"))?;
    let mut py = LearnerState::new(config_y.clone(), &payoff.box_y, stream_y).map_err(player_err("y"))?;
    let mut run = SaddleRun {
        mix_x: MixedStrategy {
            atoms: Vec::with_capacity(horizon),
        },
        mix_y: MixedStrategy {
            atoms: Vec::with_capacity(horizon),
        },
        values: Vec::with_capacity(horizon),
    };
    for t in 1..=horizon {
        let x = px.predict().map_err(|e| player_err("x")(e.at_round(t)))?.point;
        let y = py.predict().map_err(|e| player_err("y")(e.at_round(t)))?.point;
        run.values.push(payoff.eval(&x, &y));
        px.observe(payoff.section_x(&y)?)
            .map_err(|e| player_err("x")(e.at_round(t)))?;
        py.observe(payoff.neg_section_y(&x)?)
            .map_err(|e| player_err("y")(e.at_round(t)))?;
        run.mix_x.atoms.push(x);
        run.mix_y.atoms.push(y);
    }
    Ok(run)
}

/// Certified equilibrium quality of a pair of mixtures.
#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    /// `max_y avg_t M(x_t, y) − min_x avg_t M(x, y_t)` from the reference
    /// oracle's values.
    pub gap: f64,
    /// The true gap lies in `[gap, gap + gap_alpha_band]`.
    pub gap_alpha_band: f64,
    /// `max_y avg_t M(x_t, y)`.
    pub best_response_y: f64,
    /// `min_x avg_t M(x, y_t)`.
    pub best_response_x: f64,
}

pub fn duality_gap(
    payoff: &PayoffFunction,
    mix_x: &MixedStrategy,
    mix_y: &MixedStrategy,
    reference: &Oracle,
) -> Result<GapReport> {
    if mix_x.is_empty() || mix_y.is_empty() {
        return Err(Error::param("mixture", "must have at least one atom"));
    }
    let losses_x = mix_y
        .atoms
        .iter()
        .map(|y| payoff.section_x(y))
        .collect::<Result<Vec<_>>>()?;
    let losses_y = mix_x
        .atoms
        .iter()
        .map(|x| payoff.neg_section_y(x))
        .collect::<Result<Vec<_>>>()?;
    let bx = best_in_hindsight(&losses_x, &payoff.box_x, reference).map_err(player_err("x"))?;
    let by = best_in_hindsight(&losses_y, &payoff.box_y, reference).map_err(player_err("y"))?;
    let (nx, ny) = (mix_y.len() as f64, mix_x.len() as f64);
    // best_in_hindsight reports value − α; undo that for the point estimate.
    let min_x = (bx.value + bx.alpha) / nx;
    let max_y = -(by.value + by.alpha) / ny;
    Ok(GapReport {
        gap: max_y - min_x,
        gap_alpha_band: bx.alpha / nx + by.alpha / ny,
        best_response_y: max_y,
        best_response_x: min_x,
    })
}

/// Gap plus the players' average regrets, which add up to the gap.
#[derive(Clone, Debug, PartialEq)]
pub struct SaddleReport {
    pub horizon: usize,
    pub value: f64,
    pub gap: GapReport,
    pub regret_x: f64,
    pub regret_y: f64,
}

pub fn saddle_report(payoff: &PayoffFunction, run: &SaddleRun, reference: &Oracle) -> Result<SaddleReport> {
    let gap = duality_gap(payoff, &run.mix_x, &run.mix_y, reference)?;
    let value = run.values.iter().sum::<f64>() / run.horizon() as f64;
    Ok(SaddleReport {
        horizon: run.horizon(),
        value,
        regret_x: value - gap.best_response_x,
        regret_y: gap.best_response_y - value,
        gap,
    })
}

/// Config-level payoff description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PayoffSpec {
    Bilinear { matrix: Vec<Vec<f64>> },
    HingeFamily { diameter: f64 },
    Zero,
}

impl PayoffSpec {
    pub fn build(&self, box_x: BoxDomain, box_y: BoxDomain) -> Result<PayoffFunction> {
        let payoff = match self {
            PayoffSpec::Bilinear { matrix } => Payoff::Bilinear(matrix.clone()),
            PayoffSpec::HingeFamily { diameter } => Payoff::HingeFamily { diameter: *diameter },
            PayoffSpec::Zero => Payoff::Zero,
        };
        PayoffFunction::new(payoff, box_x, box_y)
    }
}
