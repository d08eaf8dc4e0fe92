//! Empirical stability of the zero solution of `w' = g(t, w)`.
//!
//! Linear `g = a(t)·w` is decided analytically when `a` is recognized as one of
//! `c`, `c/(1+t²)` or `c·exp(-k·t)`: the zero solution is uniformly stable when
//! `sup_{t0} ∫_{t0}^∞ max(a, 0)` is finite, with growth bound
//! `G = exp(∫_0^∞ max(a, 0))`. The integral is Simpson quadrature up to the probe
//! horizon plus the closed-form tail. Everything else goes through a numeric
//! probe of maximal solutions over a ladder of initial values.

use serde::Serialize;

use crate::calculus::integrate_scalar;
use crate::comparison::{maximal_solution, ScalarIvp};
use crate::expr::{EvalErrorKind, ScalarFn};
use crate::ode::{SolveError, BLOWUP};

use super::{eval_at, LyapunovError, SamplingPlan};

/// Tube radii of the numeric probe.
pub const PROBE_EPS: [f64; 3] = [1e-1, 1e-2, 1e-3];
/// Initial values tried are `ε·2^{-j}` for `j = 0..=LADDER`.
pub const LADDER: u32 = 20;
/// Shifted equations per maximal solution in the numeric probe.
pub const PROBE_EPS_LEVELS: usize = 3;
/// Relative decay that counts as convergence to zero.
pub const DECAY_FACTOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeVerdict {
    ZeroStable,
    ZeroUniformlyStable,
    ZeroAsymptoticallyStable,
    ZeroUniformlyAsymptoticallyStable,
    Inconclusive,
    Falsified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ProbeProperties {
    pub stable: bool,
    pub uniformly_stable: bool,
    pub asymptotically_stable: bool,
    pub uniformly_asymptotically_stable: bool,
}

impl ProbeProperties {
    fn verdict(&self) -> ProbeVerdict {
        if self.uniformly_asymptotically_stable {
            ProbeVerdict::ZeroUniformlyAsymptoticallyStable
        } else if self.uniformly_stable {
            ProbeVerdict::ZeroUniformlyStable
        } else if self.asymptotically_stable {
            ProbeVerdict::ZeroAsymptoticallyStable
        } else if self.stable {
            ProbeVerdict::ZeroStable
        } else {
            ProbeVerdict::Inconclusive
        }
    }
}

/// A trajectory of the comparison equation leaving its tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub t0: f64,
    pub w0: f64,
    pub eps: f64,
    pub t_exit: f64,
    pub w_exit: f64,
}

/// Largest probed `w0` whose maximal solution stays in the `eps`-tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeDelta {
    pub t0: f64,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub verdict: ProbeVerdict,
    pub properties: ProbeProperties,
    /// `"linear"` or `"numeric"`.
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_form: Option<String>,
    /// `∫_0^H max(a, 0)` by quadrature.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<f64>,
    /// `sup w(t)/w0` over all `t >= t0 >= 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<ProbeDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tail {
    Const(f64),
    Rational(f64),
    Exp { c: f64, k: f64 },
}

impl Tail {
    fn describe(self) -> String {
        match self {
            Tail::Const(c) => format!("{c:?}"),
            Tail::Rational(c) => format!("{c:?}/(1+t^2)"),
            Tail::Exp { c, k } => format!("{c:?}*exp(-{k:?}*t)"),
        }
    }

    /// `∫_h^∞ max(a, 0)`; infinite when divergent.
    fn positive_tail(self, h: f64) -> f64 {
        match self {
            Tail::Const(c) => {
                if c > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Tail::Rational(c) => c.max(0.0) * (std::f64::consts::FRAC_PI_2 - h.atan()),
            Tail::Exp { c, k } => {
                if c <= 0.0 {
                    0.0
                } else if k > 0.0 {
                    c * (-k * h).exp() / k
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `∫_{t0}^{t0+T} a -> -∞` uniformly in `t0`.
    fn uniformly_attractive(self) -> bool {
        match self {
            Tail::Const(c) => c < 0.0,
            Tail::Exp { c, k } => c < 0.0 && k <= 0.0,
            Tail::Rational(_) => false,
        }
    }
}

const TAIL_SAMPLES: [f64; 11] = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 20.0, 50.0, 100.0];

fn recognize(a: &ScalarFn) -> Option<Tail> {
    let vals: Vec<f64> = TAIL_SAMPLES
        .iter()
        .map(|&t| a.eval(t, 0.0).ok())
        .collect::<Option<_>>()?;
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 + 1e-9 * x.abs().max(y.abs());
    let matches = |model: &dyn Fn(f64) -> f64| TAIL_SAMPLES.iter().zip(&vals).all(|(&t, &v)| close(v, model(t)));
    let c = vals[0];
    if matches(&|_| c) {
        return Some(Tail::Const(c));
    }
    if matches(&|t| c / (1.0 + t * t)) {
        return Some(Tail::Rational(c));
    }
    if c != 0.0 && vals[2] / c > 0.0 {
        let k = -(vals[2] / c).ln();
        if matches(&|t| c * (-k * t).exp()) {
            return Some(Tail::Exp { c, k });
        }
    }
    None
}

fn check_origin(g: &ScalarFn, plan: &SamplingPlan) -> Result<(), LyapunovError> {
    for &t in plan.t_grid.iter().chain(&plan.probe_t0) {
        let value = eval_at(g, t, 0.0)?;
        if value.abs() > 1e-12 {
            return Err(LyapunovError::ProbePrecondition { t, value });
        }
    }
    Ok(())
}

/// Scans `∫_{t0}^t a` until the growth `exp(∫ a)` exceeds `eps/w0`.
fn linear_witness(a: &ScalarFn, plan: &SamplingPlan) -> Option<Witness> {
    let t0 = plan.probe_t0.first().copied().unwrap_or(0.0);
    let eps = PROBE_EPS[0];
    let w0 = eps * 0.5f64.powi(LADDER as i32);
    let target = (eps / w0).ln();
    let (mut t, mut acc) = (t0, 0.0);
    while t < t0 + 1e4 {
        let step = integrate_scalar(|s| a.eval(s, 0.0).unwrap_or(f64::NAN), t, t + plan.probe_dt, 8);
        if !step.is_finite() {
            return None;
        }
        acc += step;
        t += plan.probe_dt;
        if acc >= target {
            return Some(Witness {
                t0,
                w0,
                eps,
                t_exit: t,
                w_exit: w0 * acc.exp(),
            });
        }
    }
    None
}

fn linear_probe(a: &ScalarFn, tail: Tail, plan: &SamplingPlan) -> ProbeReport {
    let h = plan.probe_horizon;
    let rest = tail.positive_tail(h);
    let mut report = ProbeReport {
        verdict: ProbeVerdict::Inconclusive,
        properties: ProbeProperties::default(),
        method: "linear",
        tail_form: Some(tail.describe()),
        quadrature: None,
        growth_bound: None,
        witness: None,
        deltas: Vec::new(),
    };
    if rest.is_infinite() {
        report.witness = linear_witness(a, plan);
        if report.witness.is_some() {
            report.verdict = ProbeVerdict::Falsified;
        }
        return report;
    }
    let n = (h * crate::calculus::STEPS_PER_UNIT).ceil() as usize;
    let quad = integrate_scalar(|t| a.eval(t, 0.0).map_or(f64::NAN, |v| v.max(0.0)), 0.0, h, n);
    if !quad.is_finite() {
        return report;
    }
    let uas = tail.uniformly_attractive();
    report.properties = ProbeProperties {
        stable: true,
        uniformly_stable: true,
        asymptotically_stable: uas,
        uniformly_asymptotically_stable: uas,
    };
    report.quadrature = Some(quad);
    report.growth_bound = Some((quad + rest).exp());
    report.verdict = report.properties.verdict();
    report
}

enum Outcome {
    Stays,
    Exits { t: f64, w: f64 },
}

fn run_from(g: &ScalarFn, plan: &SamplingPlan, t0: f64, w0: f64, eps: f64) -> Result<Outcome, LyapunovError> {
    let ivp = ScalarIvp::new(g.clone(), t0, w0, t0 + plan.probe_horizon, plan.probe_dt)?;
    match maximal_solution(&ivp, PROBE_EPS_LEVELS) {
        Ok(r) => Ok(r
            .times()
            .iter()
            .zip(r.values())
            .find(|(_, w)| w.abs() >= eps)
            .map_or(Outcome::Stays, |(&t, &w)| Outcome::Exits { t, w })),
        Err(SolveError::Blowup { t }) => Ok(Outcome::Exits { t, w: BLOWUP }),
        Err(SolveError::Eval { t, source }) if source.kind == EvalErrorKind::Overflow => Ok(Outcome::Exits { t, w: BLOWUP }),
        Err(e) => Err(e.into()),
    }
}

/// Largest ladder value `eps·2^{-j}` that stays in the tube, or the witness of the
/// smallest one leaving it. Uses that maximal solutions are monotone in `w0`.
fn ladder_search(g: &ScalarFn, plan: &SamplingPlan, t0: f64, eps: f64) -> Result<Result<f64, Witness>, LyapunovError> {
    let w = |j: u32| eps * 0.5f64.powi(j as i32);
    if let Outcome::Exits { t, w: w_exit } = run_from(g, plan, t0, w(LADDER), eps)? {
        return Ok(Err(Witness {
            t0,
            w0: w(LADDER),
            eps,
            t_exit: t,
            w_exit,
        }));
    }
    if let Outcome::Stays = run_from(g, plan, t0, w(0), eps)? {
        return Ok(Ok(w(0)));
    }
    let (mut bad, mut good) = (0, LADDER);
    while good - bad > 1 {
        let mid = (bad + good) / 2;
        match run_from(g, plan, t0, w(mid), eps)? {
            Outcome::Stays => good = mid,
            Outcome::Exits { .. } => bad = mid,
        }
    }
    Ok(Ok(w(good)))
}

/// Time after `t0` at which the maximal solution from `w0` has decayed by [`DECAY_FACTOR`].
fn decay_time(g: &ScalarFn, plan: &SamplingPlan, t0: f64, w0: f64) -> Result<Option<f64>, LyapunovError> {
    let ivp = ScalarIvp::new(g.clone(), t0, w0, t0 + plan.probe_horizon, plan.probe_dt)?;
    let r = maximal_solution(&ivp, PROBE_EPS_LEVELS)?;
    Ok(r
        .times()
        .iter()
        .zip(r.values())
        .find(|(_, w)| w.abs() <= DECAY_FACTOR * w0)
        .map(|(&t, _)| t - t0))
}

fn numeric_probe(g: &ScalarFn, plan: &SamplingPlan) -> Result<ProbeReport, LyapunovError> {
    let mut deltas = Vec::new();
    for &eps in &PROBE_EPS {
        for &t0 in &plan.probe_t0 {
            match ladder_search(g, plan, t0, eps)? {
                Ok(delta) => deltas.push(ProbeDelta { t0, eps, delta }),
                Err(witness) => {
                    return Ok(ProbeReport {
                        verdict: ProbeVerdict::Falsified,
                        properties: ProbeProperties::default(),
                        method: "numeric",
                        tail_form: None,
                        quadrature: None,
                        growth_bound: None,
                        witness: Some(witness),
                        deltas,
                    })
                }
            }
        }
    }
    // δ may grow with t0 but must not collapse
    let uniformly_stable = PROBE_EPS.iter().all(|&eps| {
        let row: Vec<f64> = deltas.iter().filter(|d| d.eps == eps).map(|d| d.delta).collect();
        row.iter().all(|&d| d >= 0.5 * row[0])
    });
    let mut times = Vec::new();
    for d in deltas.iter().filter(|d| d.eps == PROBE_EPS[0]) {
        times.push(decay_time(g, plan, d.t0, d.delta)?);
    }
    let asymptotically_stable = times.iter().all(Option::is_some);
    let uniform_decay = asymptotically_stable && {
        let ts: Vec<f64> = times.iter().flatten().copied().collect();
        ts.iter().all(|&t| t <= 2.0 * ts[0] + 1.0)
    };
    let properties = ProbeProperties {
        stable: true,
        uniformly_stable,
        asymptotically_stable,
        uniformly_asymptotically_stable: uniformly_stable && uniform_decay,
    };
    Ok(ProbeReport {
        verdict: properties.verdict(),
        properties,
        method: "numeric",
        tail_form: None,
        quadrature: None,
        growth_bound: None,
        witness: None,
        deltas,
    })
}

/// Classifies the zero solution of `w' = g(t, w)`; requires `g(t, 0) = 0` on the
/// plan's times.
pub fn scalar_stability_probe(g: &ScalarFn, plan: &SamplingPlan) -> Result<ProbeReport, LyapunovError> {
    check_origin(g, plan)?;
    if plan.probe_t0.is_empty() {
        return Err(LyapunovError::InvalidSpec("probe needs at least one initial time".into()));
    }
    if let Some(a) = g.expr().linear_in_w() {
        let a = ScalarFn::from(a);
        if let Some(tail) = recognize(&a) {
            let report = linear_probe(&a, tail, plan);
            if report.verdict != ProbeVerdict::Inconclusive {
                return Ok(report);
            }
        }
    }
    numeric_probe(g, plan)
}

/// `δ₀` with `0 <= w0 < δ₀ ⇒ |w(t; t0, w0)| < tube` for every probed `t0`.
pub fn comparison_delta(g: &ScalarFn, plan: &SamplingPlan, report: &ProbeReport, tube: f64) -> Result<Option<f64>, LyapunovError> {
    if let Some(growth) = report.growth_bound {
        return Ok(Some(tube / growth));
    }
    let mut best = f64::INFINITY;
    for &t0 in &plan.probe_t0 {
        match ladder_search(g, plan, t0, tube)? {
            Ok(d) => best = best.min(d),
            Err(_) => return Ok(None),
        }
    }
    Ok(Some(best))
}
