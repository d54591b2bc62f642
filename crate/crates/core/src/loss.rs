//! Loss functions `f: X → ℝ` with a declared ℓ1-Lipschitz constant.
//!
//! A [`LossFunction`] is a cheaply clonable handle around a structural
//! [`Shape`]. The structure lets exact oracles see breakpoints of
//! piecewise-linear losses; opaque closures are only evaluated.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::domain::{l1_unchecked, BoxDomain, Point};
use crate::error::{Error, Result};
use crate::perturbation::Stream;

/// Coarse structural tag of a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Hinge,
    Sinusoid,
    PiecewiseLinear,
    Opaque,
}

/// `g_a(x) = max{0, D/2 − ‖x − a‖₁}`; 1-Lipschitz w.r.t. ℓ1, peak `D/2` at `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeLoss {
    pub center: Point,
    pub diameter: f64,
}

impl HingeLoss {
    pub fn eval(&self, x: &[f64]) -> f64 {
        (0.5 * self.diameter - l1_unchecked(x, &self.center)).max(0.0)
    }
}

/// A 1-d piecewise-linear function through `knots`, extended linearly past
/// the first and last knot.
#[derive(Clone, Debug, PartialEq)]
pub struct Piecewise1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Piecewise1d {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::param("knots", "need at least two knots"));
        }
        let mut knots = knots;
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("knots", "knot abscissae must be distinct"));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::param("knots", "knots must be finite"));
        }
        let (xs, ys) = knots.into_iter().unzip();
        Ok(Piecewise1d { xs, ys })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn slope(&self, seg: usize) -> f64 {
        (self.ys[seg + 1] - self.ys[seg]) / (self.xs[seg + 1] - self.xs[seg])
    }

    pub fn max_abs_slope(&self) -> f64 {
        (0..self.xs.len() - 1)
            .map(|s| self.slope(s).abs())
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let seg = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        self.ys[seg] + self.slope(seg) * (x - self.xs[seg])
    }
}

type OpaqueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// The structure behind a [`LossFunction`].
pub enum Shape {
    Zero,
    Hinge(HingeLoss),
    /// `amplitude · Σ_i sin(freq·x_i + phase_i)`.
    Sinusoid {
        amplitude: f64,
        freq: f64,
        phases: Vec<f64>,
    },
    /// `⟨coeffs, x⟩ + offset`.
    Linear { coeffs: Vec<f64>, offset: f64 },
    Piecewise(Piecewise1d),
    Scaled { weight: f64, inner: LossFunction },
    Sum(Vec<LossFunction>),
    Opaque { label: String, f: Box<OpaqueFn> },
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Zero => f.write_str("Zero"),
            Shape::Hinge(h) => f.debug_tuple("Hinge").field(h).finish(),
            Shape::Sinusoid {
                amplitude,
                freq,
                phases,
            } => f
                .debug_struct("Sinusoid")
                .field("amplitude", amplitude)
                .field("freq", freq)
                .field("phases", phases)
                .finish(),
            Shape::Linear { coeffs, offset } => f
                .debug_struct("Linear")
                .field("coeffs", coeffs)
                .field("offset", offset)
                .finish(),
            Shape::Piecewise(p) => f.debug_tuple("Piecewise").field(p).finish(),
            Shape::Scaled { weight, inner } => f
                .debug_struct("Scaled")
                .field("weight", weight)
                .field("inner", inner)
                .finish(),
            Shape::Sum(terms) => f.debug_tuple("Sum").field(&terms.len()).finish(),
            Shape::Opaque { label, .. } => f.debug_tuple("Opaque").field(label).finish(),
        }
    }
}

/// A loss `f: ℝ^d → ℝ` together with its declared ℓ1-Lipschitz constant.
#[derive(Clone, Debug)]
pub struct LossFunction {
    shape: Arc<Shape>,
    dim: usize,
    lipschitz: f64,
}

impl LossFunction {
    fn from_shape(shape: Shape, dim: usize, lipschitz: f64) -> Self {
        LossFunction {
            shape: Arc::new(shape),
            dim,
            lipschitz,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_shape(Shape::Zero, dim, 0.0)
    }

    pub fn hinge(center: Point, diameter: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::param("diameter", format!("must be positive, got {diameter}")));
        }
        let dim = center.dim();
        Ok(Self::from_shape(
            Shape::Hinge(HingeLoss { center, diameter }),
            dim,
            1.0,
        ))
    }

    /// `(L/freq) · Σ_i sin(freq·x_i + φ_i)`, which is L-Lipschitz w.r.t. ℓ1.
    pub fn sinusoid(lipschitz: f64, freq: f64, phases: Vec<f64>) -> Result<Self> {
        if !(lipschitz > 0.0) {
            return Err(Error::param("lipschitz", "must be positive"));
        }
        if !(freq > 0.0) {
            return Err(Error::param("freq", "must be positive"));
        }
        let dim = phases.len();
        Ok(Self::from_shape(
            Shape::Sinusoid {
                amplitude: lipschitz / freq,
                freq,
                phases,
            },
            dim,
            lipschitz,
        ))
    }

    pub fn linear(coeffs: Vec<f64>, offset: f64) -> Self {
        let lip = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let dim = coeffs.len();
        Self::from_shape(Shape::Linear { coeffs, offset }, dim, lip)
    }

    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self> {
        let p = Piecewise1d::new(knots)?;
        let lip = p.max_abs_slope();
        Ok(Self::from_shape(Shape::Piecewise(p), 1, lip))
    }

    pub fn scaled(weight: f64, inner: LossFunction) -> Self {
        let dim = inner.dim;
        let lip = weight.abs() * inner.lipschitz;
        Self::from_shape(Shape::Scaled { weight, inner }, dim, lip)
    }

    pub fn negated(&self) -> Self {
        Self::scaled(-1.0, self.clone())
    }

    pub fn sum(dim: usize, terms: Vec<LossFunction>) -> Result<Self> {
        if let Some(bad) = terms.iter().find(|t| t.dim != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim,
            });
        }
        let lip = terms.iter().map(|t| t.lipschitz).sum();
        Ok(Self::from_shape(Shape::Sum(terms), dim, lip))
    }

    pub fn opaque<F>(dim: usize, lipschitz: f64, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_shape(
            Shape::Opaque {
                label: label.into(),
                f: Box::new(f),
            },
            dim,
            lipschitz,
        )
    }

    /// Same function, different declared Lipschitz constant.
    pub fn with_lipschitz(&self, lipschitz: f64) -> Self {
        LossFunction {
            lipschitz,
            ..self.clone()
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// True when both handles denote the same function: a shared shape or
    /// two identical hinges.
    pub fn same_function(&self, other: &LossFunction) -> bool {
        if self.dim != other.dim {
            return false;
        }
        Arc::ptr_eq(&self.shape, &other.shape)
            || matches!((self.as_hinge(), other.as_hinge()), (Some(a), Some(b)) if a == b)
    }

    pub fn as_hinge(&self) -> Option<&HingeLoss> {
        match &*self.shape {
            Shape::Hinge(h) => Some(h),
            _ => None,
        }
    }

    pub fn kind(&self) -> LossKind {
        match &*self.shape {
            Shape::Hinge(_) => LossKind::Hinge,
            Shape::Sinusoid { .. } => LossKind::Sinusoid,
            Shape::Opaque { .. } => LossKind::Opaque,
            Shape::Zero | Shape::Linear { .. } | Shape::Piecewise(_) => {
                LossKind::PiecewiseLinear
            }
            Shape::Scaled { inner, .. } => match inner.kind() {
                LossKind::Hinge => LossKind::PiecewiseLinear,
                k => k,
            },
            Shape::Sum(terms) => {
                if terms.iter().all(|t| t.is_piecewise_linear_1d()) {
                    LossKind::PiecewiseLinear
                } else {
                    LossKind::Opaque
                }
            }
        }
    }

    /// Evaluate without a dimension check.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &*self.shape {
            Shape::Zero => 0.0,
            Shape::Hinge(h) => h.eval(x),
            Shape::Sinusoid {
                amplitude,
                freq,
                phases,
            } => {
                amplitude
                    * x.iter()
                        .zip(phases)
                        .map(|(xi, p)| (freq * xi + p).sin())
                        .sum::<f64>()
            }
            Shape::Linear { coeffs, offset } => crate::domain::dot(coeffs, x) + offset,
            Shape::Piecewise(p) => p.eval(x[0]),
            Shape::Scaled { weight, inner } => weight * inner.eval(x),
            Shape::Sum(terms) => terms.iter().map(|t| t.eval(x)).sum(),
            Shape::Opaque { f, .. } => f(x),
        }
    }

    pub fn try_eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    pub fn is_piecewise_linear_1d(&self) -> bool {
        if self.dim != 1 {
            return false;
        }
        match &*self.shape {
            Shape::Zero | Shape::Hinge(_) | Shape::Linear { .. } | Shape::Piecewise(_) => true,
            Shape::Scaled { inner, .. } => inner.is_piecewise_linear_1d(),
            Shape::Sum(terms) => terms.iter().all(LossFunction::is_piecewise_linear_1d),
            Shape::Sinusoid { .. } | Shape::Opaque { .. } => false,
        }
    }

    /// Append every kink of a 1-d piecewise-linear loss to `out`.
    /// Returns an error naming the offending piece otherwise.
    pub fn breakpoints_1d(&self, out: &mut Vec<f64>) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::NotPiecewiseLinear(format!(
                "loss has dimension {}",
                self.dim
            )));
        }
        match &*self.shape {
            Shape::Zero | Shape::Linear { .. } => {}
            Shape::Hinge(h) => {
                let a = h.center[0];
                let r = 0.5 * h.diameter;
                out.extend_from_slice(&[a - r, a, a + r]);
            }
            Shape::Piecewise(p) => out.extend(p.knots().map(|(x, _)| x)),
            Shape::Scaled { inner, .. } => inner.breakpoints_1d(out)?,
            Shape::Sum(terms) => {
                for t in terms {
                    t.breakpoints_1d(out)?;
                }
            }
            Shape::Sinusoid { .. } => {
                return Err(Error::NotPiecewiseLinear("sinusoid loss".into()))
            }
            Shape::Opaque { label, .. } => {
                return Err(Error::NotPiecewiseLinear(format!("opaque loss `{label}`")))
            }
        }
        Ok(())
    }

    /// Short human-readable descriptor, e.g. `hinge(a=1.5,D=10)`.
    pub fn describe(&self) -> String {
        match &*self.shape {
            Shape::Zero => "zero".into(),
            Shape::Hinge(h) => format!("hinge(a={},D={})", h.center, h.diameter),
            Shape::Sinusoid { freq, phases, .. } => format!(
                "sinusoid(L={},freq={freq},phase={})",
                self.lipschitz,
                Point::new(phases.clone())
            ),
            Shape::Linear { coeffs, offset } => {
                format!("linear(c={},b={offset})", Point::new(coeffs.clone()))
            }
            Shape::Piecewise(p) => format!("pwl({} knots)", p.xs.len()),
            Shape::Scaled { weight, inner } => format!("{weight}*{}", inner.describe()),
            Shape::Sum(terms) => format!("sum({} terms)", terms.len()),
            Shape::Opaque { label, .. } => format!("opaque({label})"),
        }
    }
}

/// Result of a sampled Lipschitz audit.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub max_ratio: f64,
    pub pairs_used: usize,
    pub pass: bool,
}

/// Largest observed `|f(x) − f(y)| / ‖x − y‖₁` over `n_pairs` uniform pairs
/// from the box. Passes iff it does not exceed `L·(1 + 1e−9)`.
pub fn lipschitz_audit(
    f: &LossFunction,
    domain: &BoxDomain,
    n_pairs: usize,
    stream: Stream,
) -> Result<AuditReport> {
    domain.check_dim(f.dim())?;
    let mut rng = stream.rng_at(0);
    let d = domain.dim();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut max_ratio = 0.0f64;
    let mut used = 0;
    for _ in 0..n_pairs {
        for i in 0..d {
            x[i] = rng.gen_range(domain.lo()[i]..=domain.hi()[i]);
            y[i] = rng.gen_range(domain.lo()[i]..=domain.hi()[i]);
        }
        let dist = l1_unchecked(&x, &y);
        if dist == 0.0 {
            continue;
        }
        used += 1;
        max_ratio = max_ratio.max((f.eval(&x) - f.eval(&y)).abs() / dist);
    }
    Ok(AuditReport {
        max_ratio,
        pairs_used: used,
        pass: max_ratio <= f.lipschitz() * (1.0 + 1e-9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hinge1(a: f64, d: f64) -> LossFunction {
        LossFunction::hinge(Point::new(vec![a]), d).unwrap()
    }

    #[test]
    fn hinge_values() {
        let g = hinge1(3.0, 10.0);
        assert_eq!(g.eval(&[3.0]), 5.0);
        assert_eq!(g.eval(&[8.0]), 0.0);
        assert_eq!(g.eval(&[-2.0]), 0.0);
        assert_eq!(g.eval(&[4.0]), 4.0);
        assert_eq!(g.lipschitz(), 1.0);
        assert_eq!(g.kind(), LossKind::Hinge);
    }

    #[test]
    fn multi_d_hinge_uses_l1_ball() {
        let g = LossFunction::hinge(Point::new(vec![0.0, 0.0]), 4.0).unwrap();
        assert_eq!(g.eval(&[1.0, 0.5]), 0.5);
        assert_eq!(g.eval(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn piecewise_interpolates_and_extrapolates() {
        let abs = LossFunction::piecewise(vec![(-1.0, 1.0), (0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(abs.eval(&[0.25]), 0.25);
        assert_eq!(abs.eval(&[-3.0]), 3.0);
        assert_eq!(abs.eval(&[2.0]), 2.0);
        assert_eq!(abs.lipschitz(), 1.0);
        assert!(LossFunction::piecewise(vec![(0.0, 1.0)]).is_err());
        assert!(LossFunction::piecewise(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn breakpoints_of_compound_losses() {
        let f = LossFunction::sum(
            1,
            vec![
                hinge1(0.0, 10.0),
                LossFunction::scaled(0.5, hinge1(4.0, 10.0)),
                LossFunction::linear(vec![2.0], 1.0),
            ],
        )
        .unwrap();
        let mut bp = vec![];
        f.breakpoints_1d(&mut bp).unwrap();
        assert_eq!(bp, vec![-5.0, 0.0, 5.0, -1.0, 4.0, 9.0]);
        assert_eq!(f.lipschitz(), 3.5);
        assert!(f.is_piecewise_linear_1d());

        let s = LossFunction::sinusoid(1.0, 1.0, vec![0.0]).unwrap();
        assert!(matches!(
            s.breakpoints_1d(&mut bp),
            Err(Error::NotPiecewiseLinear(_))
        ));
        assert!(!LossFunction::sum(1, vec![s, hinge1(0.0, 1.0)])
            .unwrap()
            .is_piecewise_linear_1d());
    }

    #[test]
    fn sum_rejects_mixed_dimensions() {
        let a = hinge1(0.0, 1.0);
        let b = LossFunction::zero(2);
        assert!(LossFunction::sum(1, vec![a, b]).is_err());
    }

    #[test]
    fn audit_zero_passes() {
        let dom = BoxDomain::cube(3, -1.0, 2.0).unwrap();
        let r = lipschitz_audit(&LossFunction::zero(3), &dom, 1000, Stream::new(1)).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn audit_hinge_passes() {
        let dom = BoxDomain::cube(1, -10.0, 10.0).unwrap();
        let r = lipschitz_audit(&hinge1(0.0, 10.0), &dom, 10_000, Stream::new(2)).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_ratio <= 1.0 + 1e-12);
        assert!(r.max_ratio > 0.5);
    }

    #[test]
    fn audit_catches_understated_constant() {
        let dom = BoxDomain::cube(1, -1.0, 1.0).unwrap();
        let f = LossFunction::linear(vec![2.0], 0.0).with_lipschitz(1.0);
        let r = lipschitz_audit(&f, &dom, 100, Stream::new(3)).unwrap();
        assert!(!r.pass);
        assert!((r.max_ratio - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sinusoid_range_and_audit() {
        let f = LossFunction::sinusoid(1.0, 1.0, vec![0.3]).unwrap();
        let dom = BoxDomain::cube(1, -10.0, 10.0).unwrap();
        for k in 0..=200 {
            let x = -10.0 + 0.1 * k as f64;
            assert!(f.eval(&[x]).abs() <= 1.0);
        }
        assert!(lipschitz_audit(&f, &dom, 10_000, Stream::new(4)).unwrap().pass);
    }
}
