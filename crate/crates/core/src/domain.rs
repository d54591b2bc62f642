//! Box-shaped decision sets and points.
//!
//! Every learner in this crate plays inside an axis-aligned hyper-rectangle.
//! The ℓ∞ diameter of such a box is its longest edge, and the ratio of the
//! summed edge lengths to the longest edge is its effective dimension.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of ℝ^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl fmt::Display for Point {
    /// Coordinates joined by `;` so a point fits in one CSV field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// ℓ1 distance `Σ|a_i − b_i|`.
pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(l1_unchecked(a, b))
}

pub(crate) fn l1_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Axis-aligned box `[lo_1, hi_1] × … × [lo_d, hi_d]` with `lo_i < hi_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBox> for BoxDomain {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoxDomain::new(raw.lo, raw.hi)
    }
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox(format!("axis {i} has a non-finite bound")));
            }
            if l >= h {
                return Err(Error::InvalidBox(format!(
                    "axis {i}: lo={l} must be strictly below hi={h}"
                )));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo; d], vec![hi; d])
    }

    /// The box centered at the origin with every edge equal to `edge`.
    pub fn centered(d: usize, edge: f64) -> Result<Self> {
        BoxDomain::cube(d, -edge / 2.0, edge / 2.0)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn lower_corner(&self) -> Point {
        Point(self.lo.clone())
    }

    pub fn upper_corner(&self) -> Point {
        Point(self.hi.clone())
    }

    /// Edge length `D_i` along axis `i`.
    pub fn edge_length(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn edge_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(|i| self.edge_length(i))
    }

    /// `sup ‖x − y‖∞` over the box, i.e. the longest edge.
    pub fn linf_diameter(&self) -> f64 {
        self.edge_lengths().fold(0.0, f64::max)
    }

    /// `sup ‖x − y‖₁` over the box.
    pub fn l1_diameter(&self) -> f64 {
        self.edge_lengths().sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// `(Σ_i D_i) / max_i D_i`, which lies in `[1, d]`.
pub fn effective_dimension(domain: &BoxDomain) -> f64 {
    domain.l1_diameter() / domain.linf_diameter()
}
