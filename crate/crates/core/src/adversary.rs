//! Loss-sequence generators.
//!
//! Oblivious generators return the whole sequence before play starts and
//! never see a prediction. Adaptive adversaries implement
//! [`AdaptiveAdversary`] and are shown `x_1 … x_{t−1}` when choosing `f_t`.
//! The killer adversary is the one protocol that reads `x_t` itself, which
//! is only meaningful against deterministic learners.

use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BoxDomain, Point};
use crate::error::{Error, Result};
use crate::loss::LossFunction;
use crate::perturbation::Stream;

fn uniform_point(domain: &BoxDomain, stream: Stream, position: u64) -> Point {
    let mut rng = stream.rng_at(position);
    Point::new(
        domain
            .lo()
            .iter()
            .zip(domain.hi())
            .map(|(&l, &h)| rng.gen_range(l..=h))
            .collect(),
    )
}

/// `T` hinge losses `max{0, D/2 − ‖x − a_t‖₁}` with centers uniform in the
/// box and `D` the box's ℓ∞ diameter.
pub fn oblivious_hinge_sequence(domain: &BoxDomain, horizon: usize, stream: Stream) -> Vec<LossFunction> {
    hinge_sequence(domain, horizon, domain.linf_diameter(), 1, stream)
}

/// Like [`oblivious_hinge_sequence`], but the center only moves every
/// `block` rounds.
pub fn slowly_varying_sequence(
    domain: &BoxDomain,
    horizon: usize,
    block: usize,
    stream: Stream,
) -> Result<Vec<LossFunction>> {
    if block == 0 {
        return Err(Error::param("block", "must be at least 1"));
    }
    Ok(hinge_sequence(domain, horizon, domain.linf_diameter(), block, stream))
}

fn hinge_sequence(
    domain: &BoxDomain,
    horizon: usize,
    diameter: f64,
    block: usize,
    stream: Stream,
) -> Vec<LossFunction> {
    let mut out = Vec::with_capacity(horizon);
    let mut current: Option<LossFunction> = None;
    for t in 0..horizon {
        if t % block == 0 {
            let center = uniform_point(domain, stream, (t / block) as u64);
            current = Some(LossFunction::hinge(center, diameter).expect("box diameter is positive"));
        }
        out.push(current.clone().expect("set on the first round"));
    }
    out
}

/// `f_t(x) = (L/freq) Σ_i sin(freq·x_i + φ_{t,i})` with phases uniform in
/// `[0, 2π)`.
pub fn oblivious_sinusoid_sequence(
    domain: &BoxDomain,
    horizon: usize,
    lipschitz: f64,
    freq: f64,
    stream: Stream,
) -> Result<Vec<LossFunction>> {
    (0..horizon)
        .map(|t| {
            let mut rng = stream.rng_at(t as u64);
            let phases = (0..domain.dim()).map(|_| rng.gen_range(0.0..TAU)).collect();
            LossFunction::sinusoid(lipschitz, freq, phases)
        })
        .collect()
}

/// The hinge `g_{x_t}` centered on the learner's own prediction.
pub fn killer_next_loss(x_t: &Point, diameter: f64) -> Result<LossFunction> {
    LossFunction::hinge(x_t.clone(), diameter)
}

/// An adversary that chooses `f_t` after seeing `x_1 … x_{t−1}`.
pub trait AdaptiveAdversary: Send {
    fn next_loss(&mut self, past: &[Point]) -> Result<LossFunction>;
}

/// Places a hinge of width `diameter` on the learner's previous prediction
/// (on the box center in round 1).
#[derive(Clone, Debug)]
pub struct Chaser {
    pub diameter: f64,
    pub start: Point,
}

impl Chaser {
    pub fn new(domain: &BoxDomain, diameter: f64) -> Self {
        let start = domain.lo().iter().zip(domain.hi()).map(|(l, h)| (l + h) / 2.0).collect();
        Chaser {
            diameter,
            start: Point::new(start),
        }
    }
}

impl AdaptiveAdversary for Chaser {
    fn next_loss(&mut self, past: &[Point]) -> Result<LossFunction> {
        LossFunction::hinge(past.last().unwrap_or(&self.start).clone(), self.diameter)
    }
}

pub enum AdversaryProtocol {
    Oblivious(Vec<LossFunction>),
    Adaptive(Box<dyn AdaptiveAdversary>),
    /// `f_t = g_{x_t}`; legal only against a deterministic learner.
    Killer { diameter: f64 },
}

impl fmt::Debug for AdversaryProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryProtocol::Oblivious(seq) => write!(f, "Oblivious({} losses)", seq.len()),
            AdversaryProtocol::Adaptive(_) => f.write_str("Adaptive"),
            AdversaryProtocol::Killer { diameter } => write!(f, "Killer {{ diameter: {diameter} }}"),
        }
    }
}

impl AdversaryProtocol {
    pub fn is_oblivious(&self) -> bool {
        matches!(self, AdversaryProtocol::Oblivious(_))
    }
}

/// Config-level description of an adversary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversarySpec {
    ObliviousHinge,
    ObliviousSinusoid {
        lipschitz: f64,
        freq: f64,
    },
    SlowlyVarying {
        block: usize,
    },
    /// Hinge width defaults to half the box's ℓ∞ diameter, so the box
    /// `[−D, D]` yields the width-`D` construction.
    Killer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diameter: Option<f64>,
    },
    Chaser {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diameter: Option<f64>,
    },
}

impl AdversarySpec {
    pub fn name(&self) -> &'static str {
        match self {
            AdversarySpec::ObliviousHinge => "oblivious-hinge",
            AdversarySpec::ObliviousSinusoid { .. } => "oblivious-sinusoid",
            AdversarySpec::SlowlyVarying { .. } => "slowly-varying",
            AdversarySpec::Killer { .. } => "killer",
            AdversarySpec::Chaser { .. } => "chaser",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AdversarySpec::ObliviousSinusoid { lipschitz, freq } => {
                if !(lipschitz > 0.0) {
                    return Err(Error::param("lipschitz", "must be positive"));
                }
                if !(freq > 0.0) {
                    return Err(Error::param("freq", "must be positive"));
                }
            }
            AdversarySpec::SlowlyVarying { block } if block == 0 => {
                return Err(Error::param("block", "must be at least 1"));
            }
            AdversarySpec::Killer { diameter: Some(d) } | AdversarySpec::Chaser { diameter: Some(d) }
                if !(d > 0.0 && d.is_finite()) =>
            {
                return Err(Error::param("diameter", "must be positive"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Largest Lipschitz constant of any loss this adversary emits.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            AdversarySpec::ObliviousSinusoid { lipschitz, .. } => lipschitz,
            _ => 1.0,
        }
    }

    pub fn build(&self, domain: &BoxDomain, horizon: usize, stream: Stream) -> Result<AdversaryProtocol> {
        self.validate()?;
        Ok(match *self {
            AdversarySpec::ObliviousHinge => {
                AdversaryProtocol::Oblivious(oblivious_hinge_sequence(domain, horizon, stream))
            }
            AdversarySpec::ObliviousSinusoid { lipschitz, freq } => AdversaryProtocol::Oblivious(
                oblivious_sinusoid_sequence(domain, horizon, lipschitz, freq, stream)?,
            ),
            AdversarySpec::SlowlyVarying { block } => {
                AdversaryProtocol::Oblivious(slowly_varying_sequence(domain, horizon, block, stream)?)
            }
            AdversarySpec::Killer { diameter } => AdversaryProtocol::Killer {
                diameter: diameter.unwrap_or(domain.linf_diameter() / 2.0),
            },
            AdversarySpec::Chaser { diameter } => AdversaryProtocol::Adaptive(Box::new(Chaser::new(
                domain,
                diameter.unwrap_or(domain.linf_diameter()),
            ))),
        })
    }
}
