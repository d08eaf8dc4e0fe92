//! Lyapunov functions on `S(ρ) = {x : d[x, ô] < ρ}`, the upper derivative
//! `D_f⁺V` along a fuzzy right-hand side, and sampled stability certificates.
//!
//! Every "for all (t, x)" hypothesis is checked on a finite [`SamplingPlan`].
//! A violation on the grid is exact falsification; passing the grid is evidence
//! only, and certificates say so (`grid_verified`).

mod certificate;
mod probe;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::HSchedule;
use crate::expr::{check_class_k, ClassK, ClassKError, EvalError, ScalarFn};
use crate::fuzzy::{FuzzyBox, FuzzyError, IntervalBox, LevelGrid};
use crate::ivp::Rhs;
use crate::ode::SolveError;

pub use certificate::{
    check_theorem, Claim, Counterexample, DeltaEntry, ExponentialBounds, Margin, StabilityCertificate, TEntry,
};
pub use probe::{comparison_delta, scalar_stability_probe, ProbeProperties, ProbeReport, ProbeVerdict, Witness};

/// Absolute part of the slack on the derivative hypothesis.
pub const DINI_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("x leaves S(rho): d[x, 0] = {distance} >= rho = {rho}")]
    DomainExit { distance: f64, rho: f64 },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
    #[error("invalid Lyapunov spec: {0}")]
    InvalidSpec(String),
    #[error("{which} requires `{field}`")]
    MissingField { which: Theorem, field: &'static str },
    #[error("envelope `{name}` is not class K on [0, rho]: {source}")]
    NotClassK { name: &'static str, source: ClassKError },
    #[error("g(t, 0) = {value} != 0 at t = {t}")]
    ProbePrecondition { t: f64, value: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

fn eval_at(f: &ScalarFn, t: f64, w: f64) -> Result<f64, LyapunovError> {
    f.eval(t, w).map_err(|source| LyapunovError::Eval { t, source })
}

/// Which stability theorem a certificate is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Theorem {
    T3_1,
    T3_2,
    T3_3,
    T3_4,
    T3_5,
}

impl Theorem {
    pub const ALL: [Theorem; 5] = [Theorem::T3_1, Theorem::T3_2, Theorem::T3_3, Theorem::T3_4, Theorem::T3_5];

    pub fn label(self) -> &'static str {
        match self {
            Theorem::T3_1 => "3.1",
            Theorem::T3_2 => "3.2",
            Theorem::T3_3 => "3.3",
            Theorem::T3_4 => "3.4",
            Theorem::T3_5 => "3.5",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "theorem {}", self.label())
    }
}

impl FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.label() == s.trim())
            .ok_or_else(|| format!("unknown theorem {s:?} (expected one of 3.1, 3.2, 3.3, 3.4, 3.5)"))
    }
}

impl Serialize for Theorem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Theorem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `V(t, x) = φ(t)·d[x, ô]^r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedMetric {
    pub phi: ScalarFn,
    pub r: f64,
}

/// The supported Lyapunov families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum VFamily {
    /// `V = c·d[x, ô]^r`.
    MetricPower { c: f64, r: f64 },
    /// `V = φ(t)·d[x, ô]^r`.
    WeightedMetric { phi: ScalarFn, r: f64 },
}

impl VFamily {
    fn exponent(&self) -> f64 {
        match self {
            VFamily::MetricPower { r, .. } | VFamily::WeightedMetric { r, .. } => *r,
        }
    }

    fn at_distance(&self, t: f64, d: f64) -> Result<f64, LyapunovError> {
        let weight = match self {
            VFamily::MetricPower { c, .. } => *c,
            VFamily::WeightedMetric { phi, .. } => eval_at(phi, t, 0.0)?,
        };
        Ok(weight * d.powf(self.exponent()))
    }
}

/// Positive constants `λ, Λ, γ, K, p, q, δ` of the exponential theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpConstants {
    pub lambda: f64,
    pub big_lambda: f64,
    pub gamma: f64,
    pub k: f64,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
}

/// Serializable description of a [`LyapunovSpec`]; envelopes are expressions in `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub v: VFamily,
    pub lipschitz: ScalarFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_env: Option<ScalarFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_env: Option<ScalarFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_env: Option<ScalarFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0_env: Option<ScalarFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<ScalarFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vstar: Option<WeightedMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ExpConstants>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs_bound: Option<f64>,
}

/// A validated Lyapunov function together with the comparison data of the theorems.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub(crate) v: VFamily,
    pub(crate) lipschitz: ScalarFn,
    pub(crate) a_env: Option<ClassK>,
    pub(crate) b_env: Option<ClassK>,
    pub(crate) c_env: Option<ClassK>,
    pub(crate) a0_env: Option<ScalarFn>,
    pub(crate) g: Option<ScalarFn>,
    pub(crate) vstar: Option<WeightedMetric>,
    pub(crate) constants: Option<ExpConstants>,
    pub(crate) rhs_bound: Option<f64>,
    pub(crate) rho: f64,
    config: LyapunovConfig,
}

fn positive(name: &str, v: f64) -> Result<(), LyapunovError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LyapunovError::InvalidSpec(format!("{name} must be positive, got {v}")))
    }
}

impl LyapunovSpec {
    pub fn new(config: LyapunovConfig, rho: f64) -> Result<Self, LyapunovError> {
        positive("rho", rho)?;
        match &config.v {
            VFamily::MetricPower { c, r } => {
                positive("c", *c)?;
                positive("r", *r)?;
            }
            VFamily::WeightedMetric { r, .. } => positive("r", *r)?,
        }
        if let Some(vs) = &config.vstar {
            positive("vstar.r", vs.r)?;
        }
        if let Some(c) = &config.constants {
            for (name, v) in [
                ("lambda", c.lambda),
                ("big_lambda", c.big_lambda),
                ("gamma", c.gamma),
                ("k", c.k),
                ("p", c.p),
                ("q", c.q),
                ("delta", c.delta),
            ] {
                positive(name, v)?;
            }
        }
        if let Some(b) = config.rhs_bound {
            positive("rhs_bound", b)?;
        }
        let class_k = |name: &'static str, f: &Option<ScalarFn>| -> Result<Option<ClassK>, LyapunovError> {
            f.as_ref()
                .map(|f| check_class_k(f, rho).map_err(|source| LyapunovError::NotClassK { name, source }))
                .transpose()
        };
        Ok(LyapunovSpec {
            v: config.v.clone(),
            lipschitz: config.lipschitz.clone(),
            a_env: class_k("a_env", &config.a_env)?,
            b_env: class_k("b_env", &config.b_env)?,
            c_env: class_k("c_env", &config.c_env)?,
            a0_env: config.a0_env.clone(),
            g: config.g.clone(),
            vstar: config.vstar.clone(),
            constants: config.constants,
            rhs_bound: config.rhs_bound,
            rho,
            config,
        })
    }

    pub fn config(&self) -> &LyapunovConfig {
        &self.config
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn family(&self) -> &VFamily {
        &self.v
    }

    pub fn g(&self) -> Option<&ScalarFn> {
        self.g.as_ref()
    }

    pub fn constants(&self) -> Option<&ExpConstants> {
        self.constants.as_ref()
    }

    fn check_domain(&self, x: &FuzzyBox) -> Result<f64, LyapunovError> {
        let distance = x.distance_to_zero();
        if distance >= self.rho {
            return Err(LyapunovError::DomainExit {
                distance,
                rho: self.rho,
            });
        }
        Ok(distance)
    }

    /// `V*(t, x)`, if configured.
    pub(crate) fn vstar_at(&self, t: f64, d: f64) -> Result<Option<f64>, LyapunovError> {
        match &self.vstar {
            Some(vs) => Ok(Some(eval_at(&vs.phi, t, 0.0)? * d.powf(vs.r))),
            None => Ok(None),
        }
    }
}

/// `V(t, x)`; fails outside `S(ρ)`.
pub fn eval_v(spec: &LyapunovSpec, t: f64, x: &FuzzyBox) -> Result<f64, LyapunovError> {
    let d = spec.check_domain(x)?;
    spec.v.at_distance(t, d)
}

/// Difference quotients `[V(t+h, x + h·f(t,x)) - V(t, x)]/h` for the two finest
/// steps, coarser first.
pub(crate) fn dini_quotients(
    spec: &LyapunovSpec,
    rhs: &Rhs,
    t: f64,
    x: &FuzzyBox,
    sched: &HSchedule,
) -> Result<(Option<f64>, f64), LyapunovError> {
    let v0 = eval_v(spec, t, x)?;
    let f = rhs.value(t, x)?;
    let quotient = |h: f64| -> Result<f64, LyapunovError> {
        let shifted = x.add(&f.scale(h))?;
        Ok((eval_v(spec, t + h, &shifted)? - v0) / h)
    };
    let (prev, fine) = sched.finest_pair();
    let q_prev = prev.map(quotient).transpose()?;
    Ok((q_prev, quotient(fine)?))
}

/// Upper surrogate of `D_f⁺V(t, x)`: the larger quotient of the two finest steps.
pub fn dini_upper(spec: &LyapunovSpec, rhs: &Rhs, t: f64, x: &FuzzyBox, sched: &HSchedule) -> Result<f64, LyapunovError> {
    let (prev, fine) = dini_quotients(spec, rhs, t, x, sched)?;
    Ok(prev.map_or(fine, |p| p.max(fine)))
}

/// Finite surrogate for `ℝ₊ × S(ρ)` plus the settings of the scalar probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingPlan {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<FuzzyBox>,
    pub h_sched: HSchedule,
    /// Tube radii for the tabulated bounds.
    pub eps_grid: Vec<f64>,
    /// Initial times of the scalar probe.
    pub probe_t0: Vec<f64>,
    pub probe_horizon: f64,
    pub probe_dt: f64,
    pub crisp_only: bool,
    pub seed: u64,
}

/// Number of radii in the standard x-grid.
pub const PLAN_RADII: usize = 8;

pub(crate) fn plan_shapes(grid: &LevelGrid, dim: usize, r: f64, crisp_only: bool) -> Result<Vec<FuzzyBox>, FuzzyError> {
    let mut out = vec![
        FuzzyBox::crisp(grid.clone(), vec![r; dim])?,
        FuzzyBox::crisp(grid.clone(), vec![-r; dim])?,
    ];
    if crisp_only {
        return Ok(out);
    }
    let sym = |half: &dyn Fn(f64) -> f64| {
        FuzzyBox::from_fn(grid.clone(), |a| {
            let h = half(a);
            IntervalBox::new(vec![-h; dim], vec![h; dim])
        })
    };
    out.push(sym(&|_| r)?);
    out.push(sym(&|a| r * (1.0 - a))?);
    out.push(sym(&|a| r * (1.0 - 0.5 * a))?);
    Ok(out)
}

impl SamplingPlan {
    /// Times `0, 0.5, …, 20`; radii `ρ·k/9` for `k = 1..=8`, each as a crisp point
    /// `±r` and (unless `crisp_only`) a flat, a triangular and a trapezoidal
    /// symmetric box of support radius `r`.
    pub fn standard(rho: f64, grid: &LevelGrid, dim: usize, crisp_only: bool) -> Result<Self, LyapunovError> {
        positive("rho", rho)?;
        let mut x_grid = Vec::new();
        for k in 1..=PLAN_RADII {
            let r = rho * k as f64 / (PLAN_RADII + 1) as f64;
            x_grid.extend(plan_shapes(grid, dim, r, crisp_only)?);
        }
        Ok(SamplingPlan {
            t_grid: (0..=40).map(|k| 0.5 * k as f64).collect(),
            x_grid,
            h_sched: HSchedule::default(),
            eps_grid: [1e-3, 1e-2, 1e-1, 1.0].into_iter().filter(|&e| e < rho).collect(),
            probe_t0: vec![0.0, 1.0, 5.0, 10.0],
            probe_horizon: 50.0,
            probe_dt: 0.05,
            crisp_only,
            seed: 0,
        })
    }

    /// Reorders the x-grid with a seeded shuffle; seed `0` keeps the canonical order.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if seed != 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.x_grid.shuffle(&mut rng);
        }
        self
    }

    pub fn validate(&self, rho: f64) -> Result<(), LyapunovError> {
        if self.t_grid.is_empty() || self.x_grid.is_empty() {
            return Err(LyapunovError::InvalidSpec("sampling plan has an empty grid".into()));
        }
        if let Some(x) = self.x_grid.iter().find(|x| x.distance_to_zero() >= rho) {
            return Err(LyapunovError::InvalidSpec(format!(
                "x-grid point with d = {} lies outside S(rho)",
                x.distance_to_zero()
            )));
        }
        if self.t_grid.iter().any(|t| !(*t >= 0.0)) || self.probe_t0.iter().any(|t| !(*t >= 0.0)) {
            return Err(LyapunovError::InvalidSpec("times must be nonnegative".into()));
        }
        positive("probe_horizon", self.probe_horizon)?;
        positive("probe_dt", self.probe_dt)?;
        Ok(())
    }
}
