//! Offline optimization oracles.
//!
//! An `(α, β)`-approximate oracle receives a loss `f`, a perturbation
//! `σ ≥ 0` and a box, and returns `x*` with
//!
//! ```text
//! f(x*) − ⟨σ, x*⟩ ≤ inf_x { f(x) − ⟨σ, x⟩ } + α + β‖σ‖₁
//! ```
//!
//! Three backends are provided:
//!
//! * [`pwl1d_minimize`]: exact (`α = β = 0`) for 1-d piecewise-linear
//!   objectives, by enumerating breakpoints.
//! * [`grid_minimize`]: exhaustive search over an axis-aligned grid, with a
//!   guarantee derived from the grid spacing and the objective's Lipschitz
//!   constant.
//! * [`local_search_minimize`]: random-restart coordinate search, no
//!   guarantee.
//!
//! All backends break ties toward the lexicographically smallest point.
//! [`CumulativeObjective`] keeps the per-backend state needed to minimize a
//! growing sum of losses without re-reading the whole history every round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{dot, BoxDomain, Point};
use crate::error::{Error, Result};
use crate::loss::{LossFunction, Shape};
use crate::perturbation::Stream;

/// Default cap on the number of grid points.
pub const DEFAULT_GRID_BUDGET: usize = 4_000_000;

/// Slack used when comparing an answer against its contract.
pub const CONTRACT_TOLERANCE: f64 = 1e-9;

/// The `(α, β)` pair of an approximate oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGuarantee {
    pub alpha: f64,
    pub beta: f64,
}

impl OracleGuarantee {
    pub const EXACT: OracleGuarantee = OracleGuarantee {
        alpha: 0.0,
        beta: 0.0,
    };

    /// `γ(σ) = α + β‖σ‖₁`.
    pub fn gamma(&self, sigma: &[f64]) -> f64 {
        self.alpha + self.beta * sigma.iter().map(|s| s.abs()).sum::<f64>()
    }
}

/// Minimize `Σ losses + guess − ⟨σ, ·⟩` over `domain`.
#[derive(Clone, Copy, Debug)]
pub struct OracleQuery<'a> {
    pub losses: &'a [LossFunction],
    pub guess: Option<&'a LossFunction>,
    pub sigma: &'a [f64],
    pub domain: &'a BoxDomain,
}

impl<'a> OracleQuery<'a> {
    pub fn new(
        losses: &'a [LossFunction],
        guess: Option<&'a LossFunction>,
        sigma: &'a [f64],
        domain: &'a BoxDomain,
    ) -> Result<Self> {
        domain.check_dim(sigma.len())?;
        for f in losses.iter().chain(guess) {
            domain.check_dim(f.dim())?;
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("sigma", "entries must be finite and non-negative"));
        }
        Ok(OracleQuery {
            losses,
            guess,
            sigma,
            domain,
        })
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v: f64 = self.losses.iter().map(|f| f.eval(x)).sum();
        if let Some(g) = self.guess {
            v += g.eval(x);
        }
        v - dot(self.sigma, x)
    }

    /// `Σ L(losses) + L(guess)`.
    pub fn lipschitz(&self) -> f64 {
        self.losses.iter().map(LossFunction::lipschitz).sum::<f64>()
            + self.guess.map_or(0.0, LossFunction::lipschitz)
    }
}

/// An oracle's reply: the point, its objective value and the guarantee it
/// was produced under (`None` for heuristics).
#[derive(Clone, Debug, PartialEq)]
pub struct OracleAnswer {
    pub minimizer: Point,
    pub value: f64,
    pub guarantee: Option<OracleGuarantee>,
}

impl OracleAnswer {
    pub fn gamma(&self, sigma: &[f64]) -> Option<f64> {
        self.guarantee.map(|g| g.gamma(sigma))
    }
}

/// Backend selector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Oracle {
    Pwl1d,
    Grid {
        h: f64,
        #[serde(default = "default_budget")]
        budget: usize,
    },
    LocalSearch {
        restarts: usize,
        steps: usize,
    },
}

fn default_budget() -> usize {
    DEFAULT_GRID_BUDGET
}

impl Oracle {
    pub fn grid(h: f64) -> Self {
        Oracle::Grid {
            h,
            budget: DEFAULT_GRID_BUDGET,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Oracle::Pwl1d)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Oracle::Pwl1d => "pwl1d",
            Oracle::Grid { .. } => "grid",
            Oracle::LocalSearch { .. } => "local-search",
        }
    }

    /// Check the backend's parameters against a domain without running it.
    pub fn validate(&self, domain: &BoxDomain) -> Result<()> {
        match *self {
            Oracle::Pwl1d if domain.dim() != 1 => Err(Error::NotPiecewiseLinear(format!(
                "domain has dimension {}",
                domain.dim()
            ))),
            Oracle::Pwl1d => Ok(()),
            Oracle::Grid { h, budget } => Grid::new(domain, h, budget).map(|_| ()),
            Oracle::LocalSearch { restarts, steps } => {
                if restarts == 0 {
                    return Err(Error::param("restarts", "must be at least 1"));
                }
                if steps == 0 {
                    return Err(Error::param("steps", "must be at least 1"));
                }
                Ok(())
            }
        }
    }

    pub fn minimize(&self, q: &OracleQuery<'_>, stream: Stream) -> Result<OracleAnswer> {
        match *self {
            Oracle::Pwl1d => pwl1d_minimize(q),
            Oracle::Grid { h, budget } => grid_minimize(q, h, budget),
            Oracle::LocalSearch { restarts, steps } => {
                local_search_minimize(q, restarts, steps, stream)
            }
        }
    }
}

/// `answer.value ≤ reference_min + α + β‖σ‖₁ + 1e−9`. Answers without a
/// guarantee are never certified.
pub fn contract_check(answer: &OracleAnswer, q: &OracleQuery<'_>, reference_min: f64) -> bool {
    match answer.guarantee {
        Some(g) => answer.value <= reference_min + g.gamma(q.sigma) + CONTRACT_TOLERANCE,
        None => false,
    }
}

// ---------------------------------------------------------------------------
// tie-breaking
// ---------------------------------------------------------------------------

/// Index of the first value within a rounding-level tolerance of the minimum.
fn leftmost_near_min(values: &[f64]) -> usize {
    let (mut min, mut scale) = (f64::INFINITY, 0.0f64);
    for &v in values {
        min = min.min(v);
        scale = scale.max(v.abs());
    }
    let tol = 1e-12 * (1.0 + scale);
    values
        .iter()
        .position(|&v| v <= min + tol)
        .expect("non-empty candidate set")
}

// ---------------------------------------------------------------------------
// exact 1-d backend
// ---------------------------------------------------------------------------

/// Values of a 1-d piecewise-linear function at a sorted set of abscissae
/// that contains every kink inside `[lo, hi]` plus both endpoints.
///
/// Between consecutive abscissae the function is affine, so its restriction
/// to the box is determined by the table and so is the minimum of
/// `f(x) − σx`.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakpointTable {
    xs: Vec<f64>,
    vals: Vec<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl BreakpointTable {
    /// The zero function on `[lo, hi]`.
    pub fn zero(lo: f64, hi: f64) -> Self {
        BreakpointTable {
            xs: vec![lo, hi],
            vals: vec![0.0, 0.0],
        }
    }

    /// Build the table of `Σ losses` by sweeping slope changes.
    pub fn from_losses<'a, I>(lo: f64, hi: f64, losses: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LossFunction>,
    {
        let mut atoms = Vec::new();
        for f in losses {
            flatten(f, 1.0, &mut atoms)?;
        }
        let mut base = CompensatedSum::default();
        let mut slope = CompensatedSum::default();
        let mut events: Vec<(f64, f64)> = Vec::new();
        for (w, f) in atoms {
            atom_events(w, f, lo, hi, &mut base, &mut slope, &mut events);
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut xs = Vec::with_capacity(events.len() + 2);
        let mut vals = Vec::with_capacity(events.len() + 2);
        xs.push(lo);
        vals.push(base.value());
        let mut value = base;
        let mut i = 0;
        let mut last = lo;
        loop {
            let next = if i < events.len() { events[i].0 } else { hi };
            value.add(slope.value() * (next - last));
            last = next;
            if i >= events.len() {
                xs.push(hi);
                vals.push(value.value());
                break;
            }
            while i < events.len() && events[i].0 == next {
                slope.add(events[i].1);
                i += 1;
            }
            xs.push(next);
            vals.push(value.value());
        }
        Ok(BreakpointTable { xs, vals })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    /// Linear interpolation inside the table.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&v| v <= x).clamp(1, n - 1);
        interpolate(self.xs[k - 1], self.vals[k - 1], self.xs[k], self.vals[k], x)
    }

    /// Pointwise sum of two tables over the same interval.
    pub fn merged_with(&self, other: &BreakpointTable) -> BreakpointTable {
        let (a, b) = (self, other);
        let mut xs = Vec::with_capacity(a.len() + b.len());
        let mut vals = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let xa = a.xs.get(i).copied().unwrap_or(f64::INFINITY);
            let xb = b.xs.get(j).copied().unwrap_or(f64::INFINITY);
            let (x, v) = if xa == xb {
                let r = (xa, a.vals[i] + b.vals[j]);
                i += 1;
                j += 1;
                r
            } else if xa < xb {
                let r = (xa, a.vals[i] + b.interp_before(j, xa));
                i += 1;
                r
            } else {
                let r = (xb, a.interp_before(i, xb) + b.vals[j]);
                j += 1;
                r
            };
            xs.push(x);
            vals.push(v);
        }
        BreakpointTable { xs, vals }
    }

    /// Value at `x` given that `x` lies between `xs[k-1]` and `xs[k]`.
    fn interp_before(&self, k: usize, x: f64) -> f64 {
        let n = self.xs.len();
        let k = k.clamp(1, n - 1);
        interpolate(self.xs[k - 1], self.vals[k - 1], self.xs[k], self.vals[k], x)
    }

    /// Add `other` (a table over the same interval) in place. Only the
    /// stretches where `other` is non-zero are touched.
    pub fn add_assign(&mut self, other: &BreakpointTable) {
        for &x in &other.xs {
            let k = self.xs.partition_point(|&v| v < x);
            if self.xs.get(k) != Some(&x) {
                let v = self.interp_before(k, x);
                self.xs.insert(k, x);
                self.vals.insert(k, v);
            }
        }
        for seg in 0..other.len() - 1 {
            let (x0, x1) = (other.xs[seg], other.xs[seg + 1]);
            let (y0, y1) = (other.vals[seg], other.vals[seg + 1]);
            if y0 == 0.0 && y1 == 0.0 {
                continue;
            }
            let start = self.xs.partition_point(|&v| v < x0);
            let end = self.xs.partition_point(|&v| v < x1);
            for k in start..end {
                self.vals[k] += interpolate(x0, y0, x1, y1, self.xs[k]);
            }
        }
        let last = other.len() - 1;
        let k = self.xs.len() - 1;
        if self.xs[k] == other.xs[last] {
            self.vals[k] += other.vals[last];
        }
    }

    /// Leftmost minimizer of `f(x) − σx` with its value.
    pub fn argmin(&self, sigma: f64) -> (f64, f64) {
        let objective = |k: usize| self.vals[k] - sigma * self.xs[k];
        let (mut min, mut scale) = (f64::INFINITY, 0.0f64);
        for k in 0..self.xs.len() {
            let v = objective(k);
            min = min.min(v);
            scale = scale.max(v.abs());
        }
        let tol = 1e-12 * (1.0 + scale);
        let k = (0..self.xs.len())
            .find(|&k| objective(k) <= min + tol)
            .expect("tables are never empty");
        (self.xs[k], objective(k))
    }
}

fn interpolate(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
}

/// Expand sums and scalings into weighted elementary pieces.
fn flatten<'a>(
    f: &'a LossFunction,
    weight: f64,
    out: &mut Vec<(f64, &'a LossFunction)>,
) -> Result<()> {
    if f.dim() != 1 {
        return Err(Error::NotPiecewiseLinear(format!(
            "loss has dimension {}",
            f.dim()
        )));
    }
    match f.shape() {
        Shape::Zero => {}
        Shape::Scaled { weight: w, inner } => flatten(inner, weight * w, out)?,
        Shape::Sum(terms) => {
            for t in terms {
                flatten(t, weight, out)?;
            }
        }
        Shape::Hinge(_) | Shape::Linear { .. } | Shape::Piecewise(_) => out.push((weight, f)),
        Shape::Sinusoid { .. } => {
            return Err(Error::NotPiecewiseLinear("sinusoid loss".into()))
        }
        Shape::Opaque { .. } => {
            return Err(Error::NotPiecewiseLinear(format!(
                "opaque loss {}",
                f.describe()
            )))
        }
    }
    Ok(())
}

/// Contribute `w·f` to the value at `lo`, the right-slope at `lo`, and the
/// slope jumps strictly inside `(lo, hi)`.
fn atom_events(
    w: f64,
    f: &LossFunction,
    lo: f64,
    hi: f64,
    base: &mut CompensatedSum,
    slope: &mut CompensatedSum,
    events: &mut Vec<(f64, f64)>,
) {
    base.add(w * f.eval(&[lo]));
    let mut push = |x: f64, delta: f64| {
        if x > lo && x < hi {
            events.push((x, w * delta));
        }
    };
    match f.shape() {
        Shape::Linear { coeffs, .. } => slope.add(w * coeffs[0]),
        Shape::Hinge(h) => {
            let a = h.center[0];
            let r = 0.5 * h.diameter;
            let s0 = if lo < a - r {
                0.0
            } else if lo < a {
                1.0
            } else if lo < a + r {
                -1.0
            } else {
                0.0
            };
            slope.add(w * s0);
            push(a - r, 1.0);
            push(a, -2.0);
            push(a + r, 1.0);
        }
        Shape::Piecewise(p) => {
            let knots: Vec<(f64, f64)> = p.knots().collect();
            let m = knots.len();
            let seg_slope =
                |s: usize| (knots[s + 1].1 - knots[s].1) / (knots[s + 1].0 - knots[s].0);
            // slope just right of lo
            let seg = knots.partition_point(|k| k.0 <= lo).clamp(1, m - 1) - 1;
            slope.add(w * seg_slope(seg));
            for j in 0..m {
                let before = seg_slope(j.saturating_sub(1).min(m - 2));
                let after = seg_slope(j.min(m - 2));
                if after != before {
                    push(knots[j].0, after - before);
                }
            }
        }
        _ => unreachable!("flatten only yields elementary pieces"),
    }
}

/// Exact minimizer of a 1-d piecewise-linear objective (`α = β = 0`).
pub fn pwl1d_minimize(q: &OracleQuery<'_>) -> Result<OracleAnswer> {
    if q.domain.dim() != 1 {
        return Err(Error::NotPiecewiseLinear(format!(
            "domain has dimension {}",
            q.domain.dim()
        )));
    }
    let (lo, hi) = (q.domain.lo()[0], q.domain.hi()[0]);
    let table = BreakpointTable::from_losses(lo, hi, q.losses.iter().chain(q.guess))?;
    let (x, _) = table.argmin(q.sigma[0]);
    Ok(OracleAnswer {
        value: q.objective(&[x]),
        minimizer: Point::new(vec![x]),
        guarantee: Some(OracleGuarantee::EXACT),
    })
}

// ---------------------------------------------------------------------------
// grid backend
// ---------------------------------------------------------------------------

/// Axis-aligned grid with spacing at most `h`, including both box corners.
/// Points are enumerated in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
    len: usize,
    h: f64,
}

fn intervals(edge: f64, h: f64) -> f64 {
    (edge / h - 1e-9).ceil().max(1.0)
}

/// Number of points of the spacing-`h` grid over `domain`.
pub fn grid_size(domain: &BoxDomain, h: f64) -> f64 {
    domain.edge_lengths().map(|e| intervals(e, h) + 1.0).product()
}

/// Smallest spacing (to 3 significant digits, rounded up) whose grid fits
/// in `budget` points.
pub fn suggest_grid_h(domain: &BoxDomain, budget: usize) -> f64 {
    let (mut lo, mut hi) = (1e-12, domain.linf_diameter());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if grid_size(domain, mid) <= budget as f64 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mag = 10f64.powf(hi.log10().floor() - 2.0);
    let mut h = (hi / mag).ceil() * mag;
    while grid_size(domain, h) > budget as f64 {
        h += mag;
    }
    h
}

impl Grid {
    pub fn new(domain: &BoxDomain, h: f64, budget: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", format!("must be positive, got {h}")));
        }
        let points = grid_size(domain, h);
        if points > budget as f64 {
            return Err(Error::GridBudget {
                points,
                budget,
                suggested_h: suggest_grid_h(domain, budget),
            });
        }
        let axes: Vec<Vec<f64>> = (0..domain.dim())
            .map(|i| {
                let (lo, hi) = (domain.lo()[i], domain.hi()[i]);
                let n = intervals(hi - lo, h) as usize;
                (0..=n)
                    .map(|k| {
                        if k == n {
                            hi
                        } else {
                            lo + (hi - lo) * (k as f64 / n as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        let len = axes.iter().map(Vec::len).product();
        Ok(Grid { axes, len, h })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// The guarantee of exhaustive grid search on an objective whose loss
    /// part is `lipschitz`-Lipschitz: the nearest grid point is within
    /// `d·h/2` in ℓ1.
    pub fn guarantee(&self, lipschitz: f64) -> OracleGuarantee {
        let half = self.axes.len() as f64 * self.h / 2.0;
        OracleGuarantee {
            alpha: lipschitz * half,
            beta: half,
        }
    }

    /// Visit every point in lexicographic order.
    pub fn for_each(&self, mut visit: impl FnMut(usize, &[f64])) {
        let d = self.axes.len();
        let mut idx = vec![0usize; d];
        let mut x: Vec<f64> = self.axes.iter().map(|a| a[0]).collect();
        for flat in 0..self.len {
            visit(flat, &x);
            for axis in (0..d).rev() {
                idx[axis] += 1;
                if idx[axis] < self.axes[axis].len() {
                    x[axis] = self.axes[axis][idx[axis]];
                    break;
                }
                idx[axis] = 0;
                x[axis] = self.axes[axis][0];
            }
        }
    }

    pub fn point(&self, mut flat: usize) -> Point {
        let mut coords = vec![0.0; self.axes.len()];
        for (axis, c) in self.axes.iter().zip(coords.iter_mut()).rev() {
            *c = axis[flat % axis.len()];
            flat /= axis.len();
        }
        Point::new(coords)
    }
}

/// Best point of the spacing-`h` grid.
pub fn grid_minimize(q: &OracleQuery<'_>, h: f64, budget: usize) -> Result<OracleAnswer> {
    let grid = Grid::new(q.domain, h, budget)?;
    let mut objective = vec![0.0; grid.len()];
    grid.for_each(|k, x| objective[k] = q.objective(x));
    let k = leftmost_near_min(&objective);
    Ok(OracleAnswer {
        minimizer: grid.point(k),
        value: objective[k],
        guarantee: Some(grid.guarantee(q.lipschitz())),
    })
}

// ---------------------------------------------------------------------------
// heuristic backend
// ---------------------------------------------------------------------------

/// Random-restart coordinate search with a halving step. Deterministic
/// given `stream`; reports no guarantee.
pub fn local_search_minimize(
    q: &OracleQuery<'_>,
    restarts: usize,
    steps: usize,
    stream: Stream,
) -> Result<OracleAnswer> {
    if restarts == 0 {
        return Err(Error::param("restarts", "must be at least 1"));
    }
    if steps == 0 {
        return Err(Error::param("steps", "must be at least 1"));
    }
    let dom = q.domain;
    let d = dom.dim();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..restarts {
        let mut rng = stream.rng_at(r as u64);
        let mut x: Vec<f64> = (0..d)
            .map(|i| rng.gen_range(dom.lo()[i]..=dom.hi()[i]))
            .collect();
        let mut fx = q.objective(&x);
        let mut step: Vec<f64> = dom.edge_lengths().map(|e| e / 4.0).collect();
        let mut y = x.clone();
        for _ in 0..steps {
            let mut improved = false;
            'axes: for i in 0..d {
                for dir in [1.0, -1.0] {
                    y.copy_from_slice(&x);
                    y[i] = (x[i] + dir * step[i]).clamp(dom.lo()[i], dom.hi()[i]);
                    if y[i] == x[i] {
                        continue;
                    }
                    let fy = q.objective(&y);
                    if fy < fx {
                        x.copy_from_slice(&y);
                        fx = fy;
                        improved = true;
                        break 'axes;
                    }
                }
            }
            if !improved {
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
        let better = match &best {
            None => true,
            Some((bx, bv)) => fx < *bv || (fx == *bv && x < *bx),
        };
        if better {
            best = Some((x, fx));
        }
    }
    let (x, value) = best.expect("at least one restart");
    Ok(OracleAnswer {
        minimizer: Point::new(x),
        value,
        guarantee: None,
    })
}

// ---------------------------------------------------------------------------
// incremental objective
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Cache {
    Breakpoints(BreakpointTable),
    Grid { grid: Grid, vals: Vec<f64> },
    Plain,
}

/// A growing sum `f_1 + … + f_n` together with backend-specific state that
/// makes each minimization cost O(size of the state) instead of
/// O(n × size).
#[derive(Clone, Debug)]
pub struct CumulativeObjective {
    oracle: Oracle,
    domain: BoxDomain,
    history: Vec<LossFunction>,
    lipschitz: f64,
    cache: Cache,
}

impl CumulativeObjective {
    pub fn new(oracle: &Oracle, domain: &BoxDomain) -> Result<Self> {
        oracle.validate(domain)?;
        let cache = match *oracle {
            Oracle::Pwl1d => Cache::Breakpoints(BreakpointTable::zero(domain.lo()[0], domain.hi()[0])),
            Oracle::Grid { h, budget } => {
                let grid = Grid::new(domain, h, budget)?;
                let vals = vec![0.0; grid.len()];
                Cache::Grid { grid, vals }
            }
            Oracle::LocalSearch { .. } => Cache::Plain,
        };
        Ok(CumulativeObjective {
            oracle: oracle.clone(),
            domain: domain.clone(),
            history: Vec::new(),
            lipschitz: 0.0,
            cache,
        })
    }

    pub fn with_losses(oracle: &Oracle, domain: &BoxDomain, losses: &[LossFunction]) -> Result<Self> {
        let mut obj = Self::new(oracle, domain)?;
        if let Cache::Breakpoints(table) = &mut obj.cache {
            *table = BreakpointTable::from_losses(domain.lo()[0], domain.hi()[0], losses)?;
            obj.lipschitz = losses.iter().map(LossFunction::lipschitz).sum();
            obj.history = losses.to_vec();
            return Ok(obj);
        }
        for f in losses {
            obj.push(f.clone())?;
        }
        Ok(obj)
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn history(&self) -> &[LossFunction] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// `Σ L(f_i)` over the history.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn push(&mut self, f: LossFunction) -> Result<()> {
        self.domain.check_dim(f.dim())?;
        match &mut self.cache {
            Cache::Breakpoints(table) => {
                let (lo, hi) = (self.domain.lo()[0], self.domain.hi()[0]);
                let piece = BreakpointTable::from_losses(lo, hi, [&f])?;
                table.add_assign(&piece);
            }
            Cache::Grid { grid, vals } => grid.for_each(|k, x| vals[k] += f.eval(x)),
            Cache::Plain => {}
        }
        self.lipschitz += f.lipschitz();
        self.history.push(f);
        Ok(())
    }

    /// `Σ f_i(x)`, evaluated from the history.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.history.iter().map(|f| f.eval(x)).sum()
    }

    /// Minimize `Σ f_i + guess − ⟨σ, ·⟩`.
    pub fn minimize(
        &self,
        guess: Option<&LossFunction>,
        sigma: &[f64],
        stream: Stream,
    ) -> Result<OracleAnswer> {
        self.domain.check_dim(sigma.len())?;
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::param("sigma", "entries must be finite and non-negative"));
        }
        if let Some(g) = guess {
            self.domain.check_dim(g.dim())?;
        }
        match &self.cache {
            Cache::Breakpoints(table) => {
                let (x, value) = match guess {
                    None => table.argmin(sigma[0]),
                    Some(g) => {
                        let (lo, hi) = (self.domain.lo()[0], self.domain.hi()[0]);
                        let piece = BreakpointTable::from_losses(lo, hi, [g])?;
                        table.merged_with(&piece).argmin(sigma[0])
                    }
                };
                Ok(OracleAnswer {
                    value,
                    minimizer: Point::new(vec![x]),
                    guarantee: Some(OracleGuarantee::EXACT),
                })
            }
            Cache::Grid { grid, vals } => {
                let mut objective = vals.clone();
                grid.for_each(|k, x| {
                    if let Some(g) = guess {
                        objective[k] += g.eval(x);
                    }
                    objective[k] -= dot(sigma, x);
                });
                let k = leftmost_near_min(&objective);
                let lipschitz = self.lipschitz + guess.map_or(0.0, LossFunction::lipschitz);
                Ok(OracleAnswer {
                    minimizer: grid.point(k),
                    value: objective[k],
                    guarantee: Some(grid.guarantee(lipschitz)),
                })
            }
            Cache::Plain => {
                let q = OracleQuery::new(&self.history, guess, sigma, &self.domain)?;
                self.oracle.minimize(&q, stream)
            }
        }
    }
}
