//! Hukuhara derivative and level-wise (Aumann) integral of fuzzy-valued paths.
//!
//! The one-sided limits `h -> 0+` are realized on a finite [`HSchedule`]. A
//! derivative is accepted when the H-difference quotients exist for every
//! scheduled step, the finest quotients on each side form a contracting Cauchy
//! tail, and the forward and backward quotients agree to within the first-order
//! error predicted by that tail.
//!
//! Integration applies composite Simpson quadrature to every endpoint function
//! `t -> lo_i([F(t)]^α)` and `t -> hi_i([F(t)]^α)`. Simpson weights are positive,
//! so nested integrand cuts give nested integral cuts.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::fuzzy::{FuzzyBox, FuzzyError, IntervalBox, LevelGrid};

/// Simpson subintervals per unit time used by [`integrate_default`].
pub const STEPS_PER_UNIT: f64 = 256.0;

/// Relative part of the derivative acceptance tolerance.
pub const DERIV_REL_TOL: f64 = 1e-4;
/// Absolute part of the derivative acceptance tolerance.
pub const DERIV_ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalculusError {
    #[error("t = {t} is outside the path domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("not H-differentiable at t = {t}: {reason}")]
    NotHDifferentiable { t: f64, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

type PathFn = dyn Fn(f64) -> Result<FuzzyBox, FuzzyError> + Send + Sync;

/// A map `F: [start, end] -> εⁿ` whose values share one grid and dimension.
#[derive(Clone)]
pub struct FuzzyPath {
    start: f64,
    end: f64,
    grid: LevelGrid,
    dim: usize,
    f: Arc<PathFn>,
}

impl fmt::Debug for FuzzyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FuzzyPath")
            .field("domain", &(self.start, self.end))
            .field("levels", &self.grid.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl FuzzyPath {
    pub fn new<F>(start: f64, end: f64, grid: LevelGrid, dim: usize, f: F) -> Result<Self, CalculusError>
    where
        F: Fn(f64) -> Result<FuzzyBox, FuzzyError> + Send + Sync + 'static,
    {
        if !(start <= end) || !start.is_finite() || !end.is_finite() {
            return Err(CalculusError::InvalidArgument(format!(
                "bad domain [{start}, {end}]"
            )));
        }
        Ok(FuzzyPath {
            start,
            end,
            grid,
            dim,
            f: Arc::new(f),
        })
    }

    /// The path that is `u` at every time.
    pub fn constant(start: f64, end: f64, u: FuzzyBox) -> Result<Self, CalculusError> {
        let (grid, dim) = (u.grid().clone(), u.dim());
        FuzzyPath::new(start, end, grid, dim, move |_| Ok(u.clone()))
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * (1.0 + self.start.abs().max(self.end.abs()));
        t >= self.start - slack && t <= self.end + slack
    }

    pub fn evaluate(&self, t: f64) -> Result<FuzzyBox, CalculusError> {
        if !self.contains(t) {
            return Err(CalculusError::OutOfDomain {
                t,
                start: self.start,
                end: self.end,
            });
        }
        let u = (self.f)(t.clamp(self.start, self.end))?;
        if !u.grid().same_as(&self.grid) {
            return Err(FuzzyError::GridMismatch.into());
        }
        if u.dim() != self.dim {
            return Err(FuzzyError::DimensionMismatch {
                left: self.dim,
                right: u.dim(),
            }
            .into());
        }
        Ok(u)
    }

    /// `G(t) = ∫_start^t F`, each value computed by [`integrate_default`].
    pub fn primitive(&self) -> FuzzyPath {
        let inner = self.clone();
        let start = self.start;
        let f = move |t: f64| {
            integrate_default(&inner, start, t).map_err(|e| match e {
                CalculusError::Fuzzy(f) => f,
                other => FuzzyError::InvalidBox(other.to_string()),
            })
        };
        FuzzyPath {
            start: self.start,
            end: self.end,
            grid: self.grid.clone(),
            dim: self.dim,
            f: Arc::new(f),
        }
    }
}

/// Strictly decreasing positive steps realizing `h -> 0+`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct HSchedule {
    steps: Vec<f64>,
}

impl HSchedule {
    pub fn new(steps: Vec<f64>) -> Result<Self, CalculusError> {
        if steps.is_empty() {
            return Err(CalculusError::InvalidArgument("empty h schedule".into()));
        }
        if steps.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(CalculusError::InvalidArgument("h steps must be positive".into()));
        }
        if steps.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(CalculusError::InvalidArgument(
                "h steps must be strictly decreasing".into(),
            ));
        }
        Ok(HSchedule { steps })
    }

    /// `first · 2^{-k}` for `k = 0..count`.
    pub fn geometric(first: f64, count: usize) -> Result<Self, CalculusError> {
        HSchedule::new((0..count).map(|k| first * 0.5f64.powi(k as i32)).collect())
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn finest(&self) -> f64 {
        *self.steps.last().unwrap()
    }

    /// The two finest steps, finest last.
    pub fn finest_pair(&self) -> (Option<f64>, f64) {
        let n = self.steps.len();
        let prev = if n >= 2 { Some(self.steps[n - 2]) } else { None };
        (prev, self.steps[n - 1])
    }
}

impl Default for HSchedule {
    fn default() -> Self {
        HSchedule::geometric(1e-2, 8).expect("default schedule is valid")
    }
}

fn not_diff(t: f64, reason: impl Into<String>) -> CalculusError {
    CalculusError::NotHDifferentiable {
        t,
        reason: reason.into(),
    }
}

struct SideQuotients {
    finest: FuzzyBox,
    /// `d(q(h_{m-1}), q(h_m))`, zero when only one step fits.
    cauchy: f64,
}

fn side_quotients(
    path: &FuzzyPath,
    t0: f64,
    center: &FuzzyBox,
    steps: &[f64],
    forward: bool,
) -> Result<SideQuotients, CalculusError> {
    let mut quotients = Vec::with_capacity(steps.len());
    for &h in steps {
        let diff = if forward {
            path.evaluate(t0 + h)?.h_difference(center)
        } else {
            center.h_difference(&path.evaluate(t0 - h)?)
        };
        let diff = diff.map_err(|e| {
            let side = if forward { "forward" } else { "backward" };
            not_diff(t0, format!("{side} H-difference at h = {h:e}: {e}"))
        })?;
        quotients.push(diff.scale(1.0 / h));
    }
    let m = quotients.len();
    let gaps: Vec<f64> = quotients
        .windows(2)
        .map(|w| w[0].sup_metric(&w[1]))
        .collect::<Result<_, _>>()?;
    let finest = quotients.pop().unwrap();
    let tol = DERIV_REL_TOL * finest.distance_to_zero() + DERIV_ABS_TOL;
    if gaps.len() >= 2 {
        let (prev, last) = (gaps[gaps.len() - 2], gaps[gaps.len() - 1]);
        if last > 0.75 * prev + tol {
            return Err(not_diff(
                t0,
                format!("difference quotients do not converge ({prev:e} -> {last:e} over the finest steps)"),
            ));
        }
    }
    let cauchy = if m >= 2 { gaps[m - 2] } else { 0.0 };
    Ok(SideQuotients { finest, cauchy })
}

/// H-derivative `F'(t0)` estimated on `sched`; returns the finest forward
/// quotient (backward at the right end of the domain).
pub fn h_derivative(path: &FuzzyPath, t0: f64, sched: &HSchedule) -> Result<FuzzyBox, CalculusError> {
    let center = path.evaluate(t0)?;
    let (start, end) = path.domain();
    let fits = |forward: bool| -> Vec<f64> {
        sched
            .steps()
            .iter()
            .copied()
            .filter(|&h| if forward { t0 + h <= end } else { t0 - h >= start })
            .collect()
    };
    let (fwd_steps, bwd_steps) = (fits(true), fits(false));
    let fwd = if fwd_steps.is_empty() {
        None
    } else {
        Some(side_quotients(path, t0, &center, &fwd_steps, true)?)
    };
    let bwd = if bwd_steps.is_empty() {
        None
    } else {
        Some(side_quotients(path, t0, &center, &bwd_steps, false)?)
    };
    match (fwd, bwd) {
        (Some(f), Some(b)) => {
            let gap = f.finest.sup_metric(&b.finest)?;
            let tol = 2.0 * (f.cauchy + b.cauchy)
                + DERIV_REL_TOL * f.finest.distance_to_zero()
                + DERIV_ABS_TOL;
            if gap > tol {
                return Err(not_diff(
                    t0,
                    format!("one-sided derivatives disagree by {gap:e} (tolerance {tol:e})"),
                ));
            }
            Ok(f.finest)
        }
        (Some(f), None) => Ok(f.finest),
        (None, Some(b)) => Ok(b.finest),
        (None, None) => Err(CalculusError::InvalidArgument(
            "no schedule step fits inside the path domain".into(),
        )),
    }
}

fn simpson_weights(n: usize, h: f64) -> impl Iterator<Item = f64> {
    (0..=n).map(move |k| {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * h / 3.0
    })
}

fn even_steps(n_steps: usize) -> usize {
    n_steps.max(2).div_ceil(2) * 2
}

/// Composite Simpson quadrature of a scalar function (`n_steps` rounded up to even).
pub fn integrate_scalar<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n_steps: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = even_steps(n_steps);
    let h = (b - a) / n as f64;
    simpson_weights(n, h)
        .enumerate()
        .map(|(k, w)| w * f(a + k as f64 * h))
        .sum()
}

/// `∫_a^b F` level-wise, with `n_steps` Simpson subintervals (rounded up to even).
pub fn integrate(path: &FuzzyPath, a: f64, b: f64, n_steps: usize) -> Result<FuzzyBox, CalculusError> {
    if !(a <= b) {
        return Err(CalculusError::InvalidArgument(format!("need a <= b, got [{a}, {b}]")));
    }
    if n_steps == 0 {
        return Err(CalculusError::InvalidArgument("n_steps must be at least 1".into()));
    }
    for t in [a, b] {
        if !path.contains(t) {
            let (start, end) = path.domain();
            return Err(CalculusError::OutOfDomain { t, start, end });
        }
    }
    if a == b {
        return Ok(FuzzyBox::zero(path.grid().clone(), path.dim()));
    }
    let n = even_steps(n_steps);
    let h = (b - a) / n as f64;
    let values: Vec<FuzzyBox> = (0..=n)
        .into_par_iter()
        .map(|k| path.evaluate(if k == n { b } else { a + k as f64 * h }))
        .collect::<Result<_, _>>()?;
    let levels = path.grid().len();
    let dim = path.dim();
    let mut lo = vec![vec![0.0; dim]; levels];
    let mut hi = vec![vec![0.0; dim]; levels];
    for (w, u) in simpson_weights(n, h).zip(&values) {
        for (j, c) in u.cuts().iter().enumerate() {
            for i in 0..dim {
                lo[j][i] += w * c.lo()[i];
                hi[j][i] += w * c.hi()[i];
            }
        }
    }
    let cuts = lo
        .into_iter()
        .zip(hi)
        .map(|(l, h)| IntervalBox::new(l, h))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FuzzyBox::new(path.grid().clone(), cuts)?)
}

/// [`integrate`] with `ceil(256 · (b - a))` subintervals.
pub fn integrate_default(path: &FuzzyPath, a: f64, b: f64) -> Result<FuzzyBox, CalculusError> {
    let n = ((b - a) * STEPS_PER_UNIT).ceil().max(2.0) as usize;
    integrate(path, a, b, n)
}
