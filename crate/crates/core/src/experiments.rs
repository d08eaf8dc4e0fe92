//! End-to-end experiments: empirical δ(ε) search, decay-rate fits and the
//! built-in reproduction scenarios.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ivp::{solve, Trajectory};
use crate::lyapunov::{check_theorem, Claim, ExponentialBounds, LyapunovError, StabilityCertificate, Theorem};
use crate::ode::SolveError;
use crate::scenario::{Overrides, Scenario, ScenarioError, ScenarioFile};

/// Relative resolution of the δ bisection.
pub const DELTA_REL_TOL: f64 = 1e-3;
/// Scales below `eps·2^{-DELTA_LADDER}` count as below resolution.
pub const DELTA_LADDER: u32 = 20;
pub const DEFAULT_SKIP: f64 = 0.2;

pub const EXAMPLE_3_1: &str = include_str!("../../../scenarios/example_3_1.json");
pub const CRISP_DECAY: &str = include_str!("../../../scenarios/crisp_decay.json");

/// Names accepted by [`run_named`].
pub const EXPERIMENTS: [&str; 2] = ["example-3-1", "crisp-exponential"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("decay fit: {0}")]
    Fit(String),
    #[error("invalid probe: {0}")]
    Invalid(String),
}

/// Result of [`delta_search`] for one `(ε, t0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaResult {
    pub eps: f64,
    pub t0: f64,
    /// Largest accepted initial distance; `0` when below resolution.
    pub delta: f64,
    pub ratio: f64,
    pub below_resolution: bool,
    /// `sup_t d[x(t), ô]/d[x0, ô]` over every completed probe trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplification: Option<f64>,
    /// Probes are truncated at `t0 + horizon`.
    pub horizon: f64,
    pub trajectories: usize,
    /// Solver failures, each of which rejected its scale.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

struct ScaleOutcome {
    stays: bool,
    amplification: Option<f64>,
    failure: Option<String>,
}

fn probe_scale(scn: &Scenario, eps: f64, t0: f64, s: f64) -> Result<ScaleOutcome, ExperimentError> {
    let runs: Vec<Result<Trajectory, SolveError>> = scn
        .shapes
        .par_iter()
        .map(|shape| {
            let ivp = scn.ivp.with_start(t0, shape.scale(s))?;
            solve(&ivp.with_horizon(t0 + scn.probe_horizon, scn.probe_dt)?)
        })
        .collect();
    let mut out = ScaleOutcome {
        stays: true,
        amplification: None,
        failure: None,
    };
    for r in runs {
        match r {
            Ok(tr) => {
                let d = tr.distances();
                let d0 = d[0];
                let top = d.iter().fold(0.0_f64, |m, v| m.max(*v));
                if d0 > 0.0 {
                    let amp = top / d0;
                    out.amplification = Some(out.amplification.map_or(amp, |a: f64| a.max(amp)));
                }
                // the probe at d = s stands for the limit of d[x0, ô] < s
                if top > eps {
                    out.stays = false;
                }
            }
            Err(SolveError::InvalidProblem(m)) => return Err(ExperimentError::Invalid(m)),
            Err(e) => {
                out.stays = false;
                out.failure.get_or_insert(format!("scale {s:?}: {e}"));
            }
        }
    }
    Ok(out)
}

/// Largest scale `s <= eps` (within [`DELTA_REL_TOL`]) such that every probe shape
/// scaled to `d[x0, ô] = s` keeps `d[x(t), ô] <= eps` on `[t0, t0 + horizon]`.
pub fn delta_search(scn: &Scenario, eps: f64, t0: f64) -> Result<DeltaResult, ExperimentError> {
    if !(eps > 0.0 && eps < scn.ivp.rho()) {
        return Err(ExperimentError::Invalid(format!("eps = {eps} outside (0, rho)")));
    }
    let mut amplification: Option<f64> = None;
    let mut failures = Vec::new();
    let mut count = 0;
    let mut probe = |s: f64| -> Result<bool, ExperimentError> {
        let o = probe_scale(scn, eps, t0, s)?;
        count += scn.shapes.len();
        if let Some(a) = o.amplification {
            amplification = Some(amplification.map_or(a, |b| b.max(a)));
        }
        failures.extend(o.failure);
        Ok(o.stays)
    };
    let mut hi = eps;
    let mut lo = None;
    if probe(eps)? {
        lo = Some(eps);
    } else {
        for j in 1..=DELTA_LADDER {
            let s = eps * 0.5f64.powi(j as i32);
            if probe(s)? {
                lo = Some(s);
                break;
            }
            hi = s;
        }
    }
    let delta = match lo {
        None => 0.0,
        Some(mut lo) => {
            while hi - lo > DELTA_REL_TOL * lo {
                let mid = 0.5 * (lo + hi);
                if probe(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
    };
    Ok(DeltaResult {
        eps,
        t0,
        delta,
        ratio: delta / eps,
        below_resolution: lo.is_none(),
        amplification,
        horizon: scn.probe_horizon,
        trajectories: count,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Largest absolute residual of `ln d` about the fitted line.
    pub residual: f64,
    pub samples: usize,
}

/// Least-squares fit of `ln d[x(t), ô]` against `t` on the last `1 - skip` of the samples.
pub fn decay_fit(traj: &Trajectory, skip: f64) -> Result<DecayFit, ExperimentError> {
    if !(0.0..1.0).contains(&skip) {
        return Err(ExperimentError::Fit(format!("skip must lie in [0, 1), got {skip}")));
    }
    let n = traj.len();
    let first = ((n as f64) * skip).floor() as usize;
    let ts = &traj.times()[first..];
    let ds = &traj.distances()[first..];
    if ts.len() < 2 {
        return Err(ExperimentError::Fit("fewer than two samples".into()));
    }
    if let Some((t, d)) = ts.iter().zip(ds).find(|(_, d)| !(**d > 0.0)) {
        return Err(ExperimentError::Fit(format!("nonpositive distance {d} at t = {t}")));
    }
    let ys: Vec<f64> = ds.iter().map(|d| d.ln()).collect();
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let residual = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y - intercept - slope * t).abs())
        .fold(0.0, f64::max);
    Ok(DecayFit {
        rate: -slope,
        intercept,
        residual,
        samples: ts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flag {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRef {
    pub theorem: Theorem,
    pub status: &'static str,
    pub claim: Option<Claim>,
    pub grid_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ExponentialBounds>,
}

impl From<&StabilityCertificate> for CertificateRef {
    fn from(c: &StabilityCertificate) -> Self {
        CertificateRef {
            theorem: c.theorem,
            status: c.status,
            claim: c.claim,
            grid_verified: c.grid_verified,
            growth_bound: c.probe.as_ref().and_then(|p| p.growth_bound),
            bounds: c.bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRecord {
    pub t0: f64,
    pub d0: f64,
    pub fit: DecayFit,
    /// `max_t d[x(t), ô]/(β(d0)·e^{-α(t - t0)})`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalReport {
    pub experiment: String,
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<DeltaResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub decay: Vec<DecayRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_error: Option<f64>,
    pub flags: Vec<Flag>,
    pub passed: bool,
}

impl EmpiricalReport {
    fn new(experiment: &str, scenario: &str) -> Self {
        EmpiricalReport {
            experiment: experiment.into(),
            scenario: scenario.into(),
            certificate: None,
            error: None,
            deltas: Vec::new(),
            decay: Vec::new(),
            closed_form_error: None,
            flags: Vec::new(),
            passed: false,
        }
    }

    fn flag(&mut self, name: &'static str, pass: bool, detail: String) {
        self.flags.push(Flag { name, pass, detail });
    }

    fn finish(mut self, result: Result<(), ExperimentError>) -> Self {
        if let Err(e) = result {
            self.error = Some(e.to_string());
            self.flag("completed", false, e.to_string());
        }
        self.passed = !self.flags.is_empty() && self.flags.iter().all(|f| f.pass);
        self
    }

    pub fn text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} (scenario {})", self.experiment, self.scenario);
        if let Some(c) = &self.certificate {
            let claim = c.claim.map_or("none".to_string(), |c| format!("{c:?}"));
            let _ = writeln!(s, "certificate: {} {} claim {}", c.theorem, c.status, claim);
        }
        if !self.deltas.is_empty() {
            let _ = writeln!(s, "{:>8} {:>6} {:>12} {:>10} {:>14}", "eps", "t0", "delta", "delta/eps", "amplification");
            for d in &self.deltas {
                let amp = d.amplification.map_or("-".to_string(), |a| format!("{a:.6}"));
                let _ = writeln!(s, "{:>8} {:>6} {:>12.6} {:>10.6} {:>14}", d.eps, d.t0, d.delta, d.ratio, amp);
            }
        }
        if !self.decay.is_empty() {
            let _ = writeln!(s, "{:>6} {:>8} {:>12} {:>12} {:>12}", "t0", "d0", "rate", "residual", "envelope");
            for r in &self.decay {
                let env = r.envelope_ratio.map_or("-".to_string(), |e| format!("{e:.9}"));
                let _ = writeln!(s, "{:>6} {:>8} {:>12.9} {:>12.3e} {:>12}", r.t0, r.d0, r.fit.rate, r.fit.residual, env);
            }
        }
        for f in &self.flags {
            let _ = writeln!(s, "[{}] {}: {}", if f.pass { "pass" } else { "FAIL" }, f.name, f.detail);
        }
        let _ = writeln!(s, "{}", if self.passed { "all checks passed" } else { "some checks failed" });
        s
    }
}

fn builtin(text: &str, ov: &Overrides) -> Result<Scenario, ExperimentError> {
    Ok(Scenario::from_file(&ScenarioFile::from_json(text)?, ov)?)
}

/// Runs every `(ε, t0)` pair of the scenario, ordered by `ε` then `t0`.
pub fn delta_table(scn: &Scenario) -> Result<Vec<DeltaResult>, ExperimentError> {
    let pairs: Vec<(f64, f64)> = scn
        .eps_list
        .iter()
        .flat_map(|&e| scn.t0_list.iter().map(move |&t| (e, t)))
        .collect();
    pairs.par_iter().map(|&(e, t)| delta_search(scn, e, t)).collect()
}

pub fn run_example_3_1() -> EmpiricalReport {
    run_example_3_1_with(&Overrides::default())
}

/// Certificate, closed-form trajectory check, δ search and decay fit for
/// `x' = x/(1+t²)` with `V = d[x, ô]` and `g = w/(1+t²)`.
pub fn run_example_3_1_with(ov: &Overrides) -> EmpiricalReport {
    let mut rep = EmpiricalReport::new("example-3-1", "example_3_1");
    let result = example_body(&mut rep, ov);
    rep.finish(result)
}

fn example_body(rep: &mut EmpiricalReport, ov: &Overrides) -> Result<(), ExperimentError> {
    let scn = builtin(EXAMPLE_3_1, ov)?;
    rep.scenario = scn.name.clone();
    let cert = check_theorem(scn.spec()?, scn.ivp.rhs(), Theorem::T3_2, &scn.plan)?;
    rep.flag(
        "certificate_uniformly_stable",
        cert.claim == Some(Claim::UniformlyStable),
        format!("status {} claim {:?}", cert.status, cert.claim),
    );
    rep.certificate = Some((&cert).into());

    let traj = solve(&scn.ivp)?;
    let x0 = scn.ivp.x0();
    let t0 = scn.ivp.t0();
    let mut err = 0.0_f64;
    for (k, &t) in traj.times().iter().enumerate() {
        let g = (t.atan() - t0.atan()).exp();
        let x = traj.state(k);
        for (c, c0) in x.cuts().iter().zip(x0.cuts()) {
            for i in 0..c.dim() {
                err = err.max((c.lo()[i] - c0.lo()[i] * g).abs()).max((c.hi()[i] - c0.hi()[i] * g).abs());
            }
        }
    }
    rep.closed_form_error = Some(err);
    rep.flag("closed_form_endpoints", err <= 1e-6, format!("max endpoint error {err:e}"));

    let fit = decay_fit(&traj, DEFAULT_SKIP)?;
    rep.flag("tail_rate_near_zero", fit.rate.abs() <= 5e-3, format!("rate {:?}", fit.rate));
    rep.decay.push(DecayRecord {
        t0,
        d0: x0.distance_to_zero(),
        fit,
        envelope_ratio: None,
    });

    rep.deltas = delta_table(&scn)?;
    let bound = FRAC_PI_2.exp() + 1e-3;
    let worst = rep
        .deltas
        .iter()
        .filter_map(|d| d.amplification)
        .fold(0.0_f64, f64::max);
    rep.flag(
        "amplification_bounded",
        rep.deltas.iter().all(|d| d.amplification.is_some()) && worst <= bound,
        format!("max amplification {worst:?} against {bound:?}"),
    );
    let uniform = scn.eps_list.iter().all(|&e| {
        let row: Vec<f64> = rep.deltas.iter().filter(|d| d.eps == e).map(|d| d.ratio).collect();
        row.windows(2).all(|w| w[1] >= w[0])
    });
    rep.flag("ratio_nondecreasing_in_t0", uniform, "delta/eps along t0".into());
    let monotone = scn.t0_list.iter().all(|&t| {
        let row: Vec<f64> = rep.deltas.iter().filter(|d| d.t0 == t).map(|d| d.delta).collect();
        row.windows(2).all(|w| w[1] >= w[0])
    });
    rep.flag("delta_nondecreasing_in_eps", monotone, "delta along eps".into());
    if let Some(d) = rep.deltas.iter().find(|d| d.eps == 1.0 && d.t0 == 0.0) {
        let target = (-FRAC_PI_2).exp();
        rep.flag(
            "delta_matches_closed_form",
            (d.delta - target).abs() <= 2e-3,
            format!("delta(1, 0) = {:?}, closed form {target:?}", d.delta),
        );
    }
    Ok(())
}

pub fn run_crisp_exponential() -> EmpiricalReport {
    run_crisp_exponential_with(&Overrides::default())
}

/// Exponential certificate for `x' = -x` on crisp states, checked against simulated
/// trajectories and fitted decay rates.
pub fn run_crisp_exponential_with(ov: &Overrides) -> EmpiricalReport {
    let mut rep = EmpiricalReport::new("crisp-exponential", "crisp_decay");
    let result = crisp_body(&mut rep, ov);
    rep.finish(result)
}

/// Initial distances of the crisp decay probes.
pub const CRISP_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

fn crisp_body(rep: &mut EmpiricalReport, ov: &Overrides) -> Result<(), ExperimentError> {
    let scn = builtin(CRISP_DECAY, ov)?;
    rep.scenario = scn.name.clone();
    let cert = check_theorem(scn.spec()?, scn.ivp.rhs(), Theorem::T3_5, &scn.plan)?;
    rep.flag(
        "certificate_exponential",
        cert.claim == Some(Claim::UniformlyExponentiallyStable),
        format!("status {} claim {:?}", cert.status, cert.claim),
    );
    rep.certificate = Some((&cert).into());
    let Some(bounds) = cert.bounds else {
        return Ok(());
    };
    let mut cases = Vec::new();
    for &t0 in &scn.t0_list {
        for shape in &scn.shapes {
            for &s in &CRISP_SCALES {
                cases.push((t0, shape.scale(s)));
            }
        }
    }
    let runs: Vec<Result<Trajectory, SolveError>> = cases
        .par_iter()
        .map(|(t0, x0)| solve(&scn.ivp.with_start(*t0, x0.clone())?.with_horizon(t0 + scn.probe_horizon, scn.probe_dt)?))
        .collect();
    for ((t0, x0), run) in cases.iter().zip(runs) {
        let traj = run?;
        let d0 = x0.distance_to_zero();
        let ratio = traj
            .times()
            .iter()
            .zip(traj.distances())
            .map(|(&t, &d)| d / bounds.envelope(d0, *t0, t))
            .fold(0.0, f64::max);
        rep.decay.push(DecayRecord {
            t0: *t0,
            d0,
            fit: decay_fit(&traj, DEFAULT_SKIP)?,
            envelope_ratio: Some(ratio),
        });
    }
    let worst = rep.decay.iter().filter_map(|r| r.envelope_ratio).fold(0.0, f64::max);
    rep.flag(
        "envelope_holds",
        worst <= 1.0 + 1e-6,
        format!("max d/(beta(d0) e^(-alpha (t - t0))) = {worst:?}"),
    );
    let slowest = rep.decay.iter().map(|r| r.fit.rate).fold(f64::INFINITY, f64::min);
    rep.flag(
        "rate_at_least_alpha",
        slowest >= bounds.alpha - 5e-3,
        format!("slowest fitted rate {slowest:?}, alpha {:?}", bounds.alpha),
    );
    Ok(())
}

/// Runs a built-in experiment by name.
pub fn run_named(name: &str, ov: &Overrides) -> Option<EmpiricalReport> {
    match name {
        "example-3-1" => Some(run_example_3_1_with(ov)),
        "crisp-exponential" => Some(run_crisp_exponential_with(ov)),
        _ => None,
    }
}
