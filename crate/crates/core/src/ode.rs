//! Fixed-step classical RK4 on flat state vectors with step-halving acceptance.

use thiserror::Error;

use crate::expr::EvalError;
use crate::fuzzy::FuzzyError;

/// Magnitude treated as finite-time escape.
pub const BLOWUP: f64 = 1e12;
/// Maximum number of step halvings before giving up.
pub const MAX_HALVINGS: usize = 12;
/// Acceptance threshold between successive halvings at the horizon.
pub const TOL_ODE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("solution leaves S(rho) at t = {t}: distance {distance} >= rho = {rho}")]
    DomainExit { t: f64, distance: f64, rho: f64 },
    #[error("width of level {level}, coordinate {coord} shrinks by {shrink:e} at t = {t}")]
    WidthViolation {
        t: f64,
        level: usize,
        coord: usize,
        shrink: f64,
    },
    #[error("no convergence after {halvings} halvings (runs differ by {gap:e} at the horizon)")]
    NoConvergence { halvings: usize, gap: f64 },
    #[error("finite-time escape: |w| exceeds {BLOWUP:e} at t = {t}")]
    Blowup { t: f64 },
    #[error("epsilon sequence increases by {excess:e} at t = {t} (epsilon index {index})")]
    NonMonotoneEps { t: f64, index: usize, excess: f64 },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

/// Right-hand side plus a post-step hook on flat states.
pub(crate) trait Flow {
    fn len(&self) -> usize;

    fn deriv(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SolveError>;

    /// Runs after every accepted substep; may repair `y` in place.
    fn settle(&self, _t: f64, _prev: &[f64], _y: &mut [f64]) -> Result<(), SolveError> {
        Ok(())
    }

    /// Largest tolerated gap between two halvings at the horizon.
    fn tolerance(&self, _y: &[f64]) -> f64 {
        TOL_ODE
    }
}

/// Samples on the base grid `t0 + k·(t_end - t0)/n`, states stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Samples {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub substeps: usize,
}

pub(crate) fn base_steps(t0: f64, t_end: f64, dt: f64) -> usize {
    (((t_end - t0) / dt) - 1e-9).ceil().max(1.0) as usize
}

fn check_finite(t: f64, y: &[f64]) -> Result<(), SolveError> {
    if y.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
        return Err(SolveError::Blowup { t });
    }
    Ok(())
}

/// One RK4 run with `n · refine` substeps, keeping every `refine`-th state.
fn run<F: Flow>(flow: &F, t0: f64, t_end: f64, n: usize, refine: usize, y0: &[f64]) -> Result<Vec<f64>, SolveError> {
    let m = flow.len();
    let total = n * refine;
    let h = (t_end - t0) / total as f64;
    let mut out = Vec::with_capacity((n + 1) * m);
    out.extend_from_slice(y0);
    let mut y = y0.to_vec();
    let mut prev = vec![0.0; m];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for s in 0..total {
        let t = t0 + s as f64 * h;
        flow.deriv(t, &y, &mut k1)?;
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        flow.deriv(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        flow.deriv(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..m {
            tmp[i] = y[i] + h * k3[i];
        }
        flow.deriv(t + h, &tmp, &mut k4)?;
        prev.copy_from_slice(&y);
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = if s + 1 == total { t_end } else { t0 + (s + 1) as f64 * h };
        check_finite(t_next, &y)?;
        flow.settle(t_next, &prev, &mut y)?;
        if (s + 1) % refine == 0 {
            out.extend_from_slice(&y);
        }
    }
    Ok(out)
}

/// Integrates from `t0` to `t_end` on `n` base steps, halving the substep until
/// two successive runs agree at `t_end`. Returns the finer run.
pub(crate) fn solve_halving<F: Flow>(flow: &F, t0: f64, t_end: f64, n: usize, y0: &[f64]) -> Result<Samples, SolveError> {
    let m = flow.len();
    let times: Vec<f64> = (0..=n)
        .map(|k| if k == n { t_end } else { t0 + (t_end - t0) * k as f64 / n as f64 })
        .collect();
    let mut coarse = run(flow, t0, t_end, n, 1, y0)?;
    let mut refine = 1;
    let mut gap = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        refine *= 2;
        let fine = run(flow, t0, t_end, n, refine, y0)?;
        let (a, b) = (&coarse[n * m..], &fine[n * m..]);
        gap = a.iter().zip(b).fold(0.0_f64, |g, (x, y)| g.max((x - y).abs()));
        if gap <= flow.tolerance(b) {
            return Ok(Samples {
                times,
                states: fine,
                substeps: refine,
            });
        }
        coarse = fine;
    }
    Err(SolveError::NoConvergence {
        halvings: MAX_HALVINGS,
        gap,
    })
}
