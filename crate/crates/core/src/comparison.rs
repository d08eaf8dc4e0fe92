//! Scalar comparison equation `w' = g(t, w)`: plain and maximal solutions, and a
//! sampled monitor for the comparison principle `m' <= g(t, m), m(t0) <= w0 => m <= r`.
//!
//! The maximal solution is approached from above by the shifted equations
//! `w' = g(t, w) + ε_k` with `ε_k = 1e-3·4^{-k}`. The shifted solutions decrease
//! in `k`; the returned estimate is the Richardson extrapolation of the two finest,
//! which is exact when the dependence on `ε` is linear.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, ScalarFn};
use crate::fmt_float;
use crate::ode::{self, Flow, SolveError};

/// Default number of shifted equations.
pub const EPS_LEVELS: usize = 6;
/// Slack allowed for the pointwise decrease of the shifted solutions.
pub const EPS_MONOTONE_SLACK: f64 = 1e-9;
/// Relative acceptance tolerance of the scalar integrator.
pub const SCALAR_TOL: f64 = 1e-8;

pub fn eps_level(k: usize) -> f64 {
    1e-3 * 0.25f64.powi(k as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarIvp {
    g: ScalarFn,
    t0: f64,
    w0: f64,
    horizon: f64,
    dt: f64,
}

impl ScalarIvp {
    pub fn new(g: ScalarFn, t0: f64, w0: f64, horizon: f64, dt: f64) -> Result<Self, SolveError> {
        if !(t0 >= 0.0 && horizon > t0 && horizon.is_finite()) {
            return Err(SolveError::InvalidProblem(format!(
                "need 0 <= t0 < horizon, got t0 = {t0}, horizon = {horizon}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolveError::InvalidProblem(format!("dt must be positive, got {dt}")));
        }
        if !w0.is_finite() {
            return Err(SolveError::InvalidProblem(format!("w0 must be finite, got {w0}")));
        }
        Ok(ScalarIvp { g, t0, w0, horizon, dt })
    }

    pub fn g(&self) -> &ScalarFn {
        &self.g
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

struct ScalarFlow<'a> {
    g: &'a ScalarFn,
    eps: f64,
}

impl Flow for ScalarFlow<'_> {
    fn len(&self) -> usize {
        1
    }

    fn deriv(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SolveError> {
        dy[0] = self.g.eval(t, y[0]).map_err(|source| SolveError::Eval { t, source })? + self.eps;
        Ok(())
    }

    fn tolerance(&self, y: &[f64]) -> f64 {
        SCALAR_TOL * y[0].abs().max(1.0)
    }
}

fn integrate(ivp: &ScalarIvp, eps: f64) -> Result<ScalarTrajectory, SolveError> {
    let flow = ScalarFlow { g: &ivp.g, eps };
    let n = ode::base_steps(ivp.t0, ivp.horizon, ivp.dt);
    let s = ode::solve_halving(&flow, ivp.t0, ivp.horizon, n, &[ivp.w0])?;
    Ok(ScalarTrajectory {
        times: s.times,
        values: s.states,
    })
}

/// Plain RK4 solution (unique when `g` is Lipschitz).
pub fn solve_scalar(ivp: &ScalarIvp) -> Result<ScalarTrajectory, SolveError> {
    integrate(ivp, 0.0)
}

/// Maximal solution `r(t; t0, w0)` estimated from `eps_levels` shifted equations.
pub fn maximal_solution(ivp: &ScalarIvp, eps_levels: usize) -> Result<ScalarTrajectory, SolveError> {
    if eps_levels < 2 {
        return Err(SolveError::InvalidProblem(format!(
            "eps_levels must be at least 2, got {eps_levels}"
        )));
    }
    let runs: Vec<ScalarTrajectory> = (0..eps_levels)
        .into_par_iter()
        .map(|k| integrate(ivp, eps_level(k)))
        .collect::<Result<_, _>>()?;
    for (k, pair) in runs.windows(2).enumerate() {
        for (i, (&upper, &lower)) in pair[0].values.iter().zip(&pair[1].values).enumerate() {
            let excess = lower - upper;
            if excess > EPS_MONOTONE_SLACK * upper.abs().max(1.0) {
                return Err(SolveError::NonMonotoneEps {
                    t: pair[0].times[i],
                    index: k + 1,
                    excess,
                });
            }
        }
    }
    let (prev, fine) = (&runs[eps_levels - 2], &runs[eps_levels - 1]);
    let values = fine
        .values
        .iter()
        .zip(&prev.values)
        .map(|(f, p)| f + (f - p) / 3.0)
        .collect();
    Ok(ScalarTrajectory {
        times: fine.times.clone(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("need at least one sample")]
    Empty,
    #[error("t = {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
}

/// Sampled scalar function with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarTrajectory {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ScalarTrajectory {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, TrajectoryError> {
        if times.len() != values.len() {
            return Err(TrajectoryError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(TrajectoryError::NotIncreasing(k + 1));
        }
        if let Some(k) = times.iter().chain(&values).position(|v| !v.is_finite()) {
            return Err(TrajectoryError::NonFinite(k % times.len()));
        }
        Ok(ScalarTrajectory { times, values })
    }

    /// Samples `f` on `times`.
    pub fn from_fn(times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, TrajectoryError> {
        let values = times.iter().map(|&t| f(t)).collect();
        ScalarTrajectory::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn value_at(&self, t: f64) -> Result<f64, TrajectoryError> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + end.abs());
        if !(t >= start - slack && t <= end + slack) {
            return Err(TrajectoryError::OutOfRange { t, start, end });
        }
        if self.len() == 1 {
            return Ok(self.values[0]);
        }
        let t = t.clamp(start, end);
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1).min(self.len() - 2);
        let theta = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Ok((1.0 - theta) * self.values[k] + theta * self.values[k + 1])
    }

    /// Columns `t, w`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,w")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{},{}", fmt_float(*t), fmt_float(*v))?;
        }
        Ok(())
    }
}

/// Absolute part of the hypothesis slack.
pub const HYPOTHESIS_SLACK: f64 = 1e-6;
/// Tolerated violation of `m <= r`.
pub const CONCLUSION_SLACK: f64 = 1e-6;
/// Tolerated violation of `m(t0) <= r(t0)`.
pub const PRECONDITION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LemmaError {
    #[error("time spans differ: m on [{m_start}, {m_end}], r on [{r_start}, {r_end}]")]
    SpanMismatch {
        m_start: f64,
        m_end: f64,
        r_start: f64,
        r_end: f64,
    },
    #[error("precondition fails: m(t0) = {m0} > r(t0) = {r0}")]
    Precondition { m0: f64, r0: f64 },
    #[error("m needs at least two samples")]
    TooShort,
    #[error("g failed at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
}

/// Outcome of a comparison-principle check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// Forward differences of `m` stay below `g(t, m)` plus slack.
    pub hypothesis_holds: bool,
    /// Smallest `g(t, m) + slack - Δm/Δt`.
    pub hypothesis_margin: f64,
    pub hypothesis_worst_t: f64,
    /// `m <= r + 1e-6` at every sample of `m`.
    pub conclusion_holds: bool,
    /// Smallest `r - m`.
    pub conclusion_margin: f64,
    pub conclusion_worst_t: f64,
}

pub fn lemma_check(m: &ScalarTrajectory, g: &ScalarFn, r: &ScalarTrajectory) -> Result<Verdict, LemmaError> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    if !close(m.start(), r.start()) || !close(m.end(), r.end()) {
        return Err(LemmaError::SpanMismatch {
            m_start: m.start(),
            m_end: m.end(),
            r_start: r.start(),
            r_end: r.end(),
        });
    }
    if m.len() < 2 {
        return Err(LemmaError::TooShort);
    }
    let (m0, r0) = (m.values[0], r.values[0]);
    if m0 > r0 + PRECONDITION_SLACK {
        return Err(LemmaError::Precondition { m0, r0 });
    }
    let (t, v) = (&m.times, &m.values);
    let n = t.len();
    let mut hyp = (f64::INFINITY, t[0]);
    for k in 0..n - 1 {
        let dt = t[k + 1] - t[k];
        let quotient = (v[k + 1] - v[k]) / dt;
        let curvature = if n >= 3 {
            let c = k.clamp(1, n - 2);
            let (h1, h2) = (t[c] - t[c - 1], t[c + 1] - t[c]);
            let second = ((v[c + 1] - v[c]) / h2 - (v[c] - v[c - 1]) / h1) / (0.5 * (h1 + h2));
            second.abs()
        } else {
            0.0
        };
        let bound = g
            .eval(t[k], v[k])
            .map_err(|source| LemmaError::Eval { t: t[k], source })?;
        let margin = bound + HYPOTHESIS_SLACK + 10.0 * dt * curvature - quotient;
        if margin < hyp.0 {
            hyp = (margin, t[k]);
        }
    }
    let mut concl = (f64::INFINITY, t[0]);
    for (&tk, &mk) in t.iter().zip(v) {
        let rk = r.value_at(tk).expect("span already checked");
        if rk - mk < concl.0 {
            concl = (rk - mk, tk);
        }
    }
    Ok(Verdict {
        hypothesis_holds: hyp.0 >= 0.0,
        hypothesis_margin: hyp.0,
        hypothesis_worst_t: hyp.1,
        conclusion_holds: concl.0 >= -CONCLUSION_SLACK,
        conclusion_margin: concl.0,
        conclusion_worst_t: concl.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ivp(g: &str, w0: f64, horizon: f64) -> ScalarIvp {
        ScalarIvp::new(parse(g).unwrap(), 0.0, w0, horizon, 0.01).unwrap()
    }

    #[test]
    fn zero_rhs_is_constant() {
        let r = maximal_solution(&ivp("0", 5.0, 3.0), EPS_LEVELS).unwrap();
        assert!(r.values().iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn exponential() {
        let r = maximal_solution(&ivp("w", 1.0, 2.0), EPS_LEVELS).unwrap();
        for (t, w) in r.times().iter().zip(r.values()) {
            assert!((w - t.exp()).abs() < 1e-7, "t = {t}: {w}");
        }
    }

    #[test]
    fn maximal_not_trivial_for_sqrt() {
        // the square root is singular at w = 0, so RK4 converges slowly there
        let p = ScalarIvp::new(parse("2*sqrt(abs(w))").unwrap(), 0.0, 0.0, 3.0, 1e-3).unwrap();
        let r = maximal_solution(&p, EPS_LEVELS).unwrap();
        assert!((r.last_value() - 9.0).abs() < 5e-3, "{}", r.last_value());
        assert_eq!(solve_scalar(&p).unwrap().last_value(), 0.0);
    }

    #[test]
    fn coarse_step_reports_no_convergence_on_singular_g() {
        assert!(matches!(
            solve_scalar(&ivp("2*sqrt(abs(w)) + 2.5e-4", 0.0, 3.0)),
            Err(SolveError::NoConvergence { .. })
        ));
    }

    #[test]
    fn plain_and_maximal_agree_for_lipschitz_g() {
        let p = ivp("-w + sin(t)", 0.5, 5.0);
        let (a, b) = (solve_scalar(&p).unwrap(), maximal_solution(&p, EPS_LEVELS).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn blowup() {
        assert!(matches!(
            maximal_solution(&ivp("w^2", 1.0, 2.0), EPS_LEVELS),
            Err(SolveError::Blowup { .. })
        ));
    }

    #[test]
    fn eps_levels_validated() {
        assert!(maximal_solution(&ivp("0", 1.0, 1.0), 1).is_err());
    }

    #[test]
    fn lemma_zero_below_exponential() {
        let r = maximal_solution(&ivp("w", 1.0, 2.0), EPS_LEVELS).unwrap();
        let m = ScalarTrajectory::from_fn(r.times().to_vec(), |_| 0.0).unwrap();
        let v = lemma_check(&m, &parse("w").unwrap(), &r).unwrap();
        assert!(v.hypothesis_holds && v.conclusion_holds);
        assert!(v.conclusion_margin >= 1.0 - 1e-9);
    }

    #[test]
    fn lemma_precondition() {
        let r = maximal_solution(&ivp("w", 1.0, 1.0), EPS_LEVELS).unwrap();
        let m = ScalarTrajectory::from_fn(r.times().to_vec(), |t| 2.0 * t.exp()).unwrap();
        assert!(matches!(
            lemma_check(&m, &parse("w").unwrap(), &r),
            Err(LemmaError::Precondition { .. })
        ));
    }

    #[test]
    fn lemma_detects_violated_hypothesis() {
        let r = maximal_solution(&ivp("0", 0.0, 1.0), EPS_LEVELS).unwrap();
        let m = ScalarTrajectory::from_fn(r.times().to_vec(), |t| t).unwrap();
        let v = lemma_check(&m, &parse("0").unwrap(), &r).unwrap();
        assert!(!v.hypothesis_holds && !v.conclusion_holds);
        assert!((v.conclusion_margin + 1.0).abs() < 1e-9);
    }

    #[test]
    fn lemma_span_mismatch() {
        let r = maximal_solution(&ivp("0", 0.0, 1.0), EPS_LEVELS).unwrap();
        let m = ScalarTrajectory::from_fn(vec![0.0, 0.5], |_| 0.0).unwrap();
        assert!(matches!(
            lemma_check(&m, &parse("0").unwrap(), &r),
            Err(LemmaError::SpanMismatch { .. })
        ));
    }

    #[test]
    fn trajectory_validation_and_csv() {
        assert!(ScalarTrajectory::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(ScalarTrajectory::new(vec![0.0], vec![]).is_err());
        let s = ScalarTrajectory::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(s.value_at(0.25).unwrap(), 1.5);
        assert!(s.value_at(1.5).is_err());
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,w\n0.0,1.0\n1.0,3.0\n");
    }
}
