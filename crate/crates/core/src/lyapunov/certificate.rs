//! Hypothesis checking for the five stability theorems and certificate assembly.

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::ScalarFn;
use crate::fuzzy::FuzzyBox;
use crate::ivp::Rhs;

use super::probe::{comparison_delta, scalar_stability_probe, ProbeReport, ProbeVerdict, Witness};
use super::{dini_quotients, eval_at, eval_v, LyapunovError, LyapunovSpec, SamplingPlan, Theorem, DINI_SLACK};

/// Relative tolerance of the envelope and Lipschitz comparisons.
pub const ENVELOPE_TOL: f64 = 1e-10;
/// Samples per unit interval when checking monotonicity in `w`.
const MONOTONE_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Claim {
    Stable,
    UniformlyStable,
    AsymptoticallyStable,
    UniformlyAsymptoticallyStable,
    UniformlyExponentiallyStable,
}

/// Smallest margin of one hypothesis over the grid; negative means violated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub hypothesis: &'static str,
    pub min_margin: f64,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_index: Option<usize>,
    pub checked: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub hypothesis: &'static str,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<FuzzyBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<FuzzyBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Counterexample {
    fn bare(hypothesis: &'static str, detail: String) -> Self {
        Counterexample {
            hypothesis,
            detail,
            margin: None,
            t: None,
            x_index: None,
            x: None,
            y_index: None,
            y: None,
            witness: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaParams {
    pub lambda: f64,
    pub big_lambda: f64,
    pub q: f64,
    pub p: f64,
    pub k: f64,
    pub delta1: f64,
}

/// `d[x(t), ô] <= β(d[x0, ô])·e^{-α(t - t0)}` with
/// `β(h) = ((Λ·h^q + K/δ₁)/λ)^{1/p}`, `M = γ/Λ`, `α = M/p`, `δ₁ = δ - M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialBounds {
    pub m: f64,
    pub alpha: f64,
    pub delta1: f64,
    pub beta_params: BetaParams,
}

impl ExponentialBounds {
    pub fn beta(&self, h: f64) -> f64 {
        let b = &self.beta_params;
        ((b.big_lambda * h.powf(b.q) + b.k / b.delta1) / b.lambda).powf(1.0 / b.p)
    }

    /// The bound `β(d0)·e^{-α(t - t0)}`.
    pub fn envelope(&self, d0: f64, t0: f64, t: f64) -> f64 {
        self.beta(d0) * (-self.alpha * (t - t0)).exp()
    }
}

/// `δ(ε)` from the comparison bound `δ₀(ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaEntry {
    pub eps: f64,
    pub delta0: f64,
    pub delta: f64,
}

/// `T(ε) = 1 + a(ρ)/c(δ(ε))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TEntry {
    pub eps: f64,
    pub delta: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub theorem: Theorem,
    /// `None` when falsified or inconclusive.
    pub claim: Option<Claim>,
    /// `"established"`, `"falsified"` or `"inconclusive"`.
    pub status: &'static str,
    /// All sampled hypotheses hold; evidence, not proof.
    pub grid_verified: bool,
    pub margins: Vec<Margin>,
    pub counterexample: Option<Counterexample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ExponentialBounds>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub delta_table: Vec<DeltaEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub t_table: Vec<TEntry>,
    pub notes: Vec<String>,
    pub plan: SamplingPlan,
}

impl StabilityCertificate {
    pub fn is_falsified(&self) -> bool {
        self.counterexample.is_some()
    }
}

const HYPOTHESES: [&str; 12] = [
    "lipschitz_nonnegative",
    "lipschitz",
    "v_at_zero",
    "lower_envelope",
    "upper_envelope",
    "derivative",
    "vstar_lower",
    "rhs_bound",
    "a0_at_zero",
    "a0_increasing",
    "g_at_zero",
    "g_nondecreasing",
];

fn hyp_index(name: &str) -> usize {
    HYPOTHESES.iter().position(|h| *h == name).expect("known hypothesis")
}

#[derive(Debug, Clone, Copy)]
struct Point {
    margin: f64,
    t: f64,
    x: Option<usize>,
    y: Option<usize>,
}

#[derive(Debug, Clone, Default)]
struct Acc {
    worst: Option<Point>,
    checked: usize,
    violations: usize,
}

impl Acc {
    fn push(&mut self, p: Point) {
        self.checked += 1;
        if p.margin < 0.0 {
            self.violations += 1;
        }
        if self.worst.is_none_or(|w| p.margin < w.margin) {
            self.worst = Some(p);
        }
    }

    fn merge(&mut self, other: Acc) {
        self.checked += other.checked;
        self.violations += other.violations;
        if let Some(p) = other.worst {
            if self.worst.is_none_or(|w| p.margin < w.margin) {
                self.worst = Some(p);
            }
        }
    }
}

struct Slice {
    accs: Vec<Acc>,
    failure: Option<(f64, Option<usize>, LyapunovError)>,
}

fn tol(v: f64) -> f64 {
    ENVELOPE_TOL * v.abs().max(1.0)
}

fn require<'a, T>(v: &'a Option<T>, which: Theorem, field: &'static str) -> Result<&'a T, LyapunovError> {
    v.as_ref().ok_or(LyapunovError::MissingField { which, field })
}

fn check_required(spec: &LyapunovSpec, which: Theorem) -> Result<(), LyapunovError> {
    use Theorem::*;
    if which != T3_5 {
        require(&spec.a_env, which, "a_env")?;
        require(&spec.g, which, "g")?;
    }
    if matches!(which, T3_2 | T3_4) {
        require(&spec.b_env, which, "b_env")?;
    }
    if matches!(which, T3_3 | T3_4) {
        require(&spec.vstar, which, "vstar")?;
        require(&spec.c_env, which, "c_env")?;
    }
    if which == T3_3 {
        require(&spec.a0_env, which, "a0_env")?;
        require(&spec.rhs_bound, which, "rhs_bound")?;
    }
    if which == T3_5 {
        require(&spec.constants, which, "constants")?;
    }
    Ok(())
}

/// All checks at one grid time.
fn check_slice(spec: &LyapunovSpec, rhs: &Rhs, which: Theorem, plan: &SamplingPlan, t: f64) -> Slice {
    let mut accs = vec![Acc::default(); HYPOTHESES.len()];
    match slice_inner(spec, rhs, which, plan, t, &mut accs) {
        Ok(()) => Slice { accs, failure: None },
        Err((x, e)) => Slice {
            accs,
            failure: Some((t, x, e)),
        },
    }
}

type SliceResult = Result<(), (Option<usize>, LyapunovError)>;

fn slice_inner(spec: &LyapunovSpec, rhs: &Rhs, which: Theorem, plan: &SamplingPlan, t: f64, accs: &mut [Acc]) -> SliceResult {
    use Theorem::*;
    let at = |x: Option<usize>| move |e: LyapunovError| (x, e);
    let mut push = |name: &str, margin: f64, x: Option<usize>, y: Option<usize>| {
        accs[hyp_index(name)].push(Point { margin, t, x, y })
    };
    let xs = &plan.x_grid;
    let ds: Vec<f64> = xs.iter().map(FuzzyBox::distance_to_zero).collect();
    let vs: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| eval_v(spec, t, x).map_err(at(Some(i))))
        .collect::<Result<_, _>>()?;

    let l = eval_at(&spec.lipschitz, t, 0.0).map_err(at(None))?;
    push("lipschitz_nonnegative", l, None, None);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dxy = xs[i].sup_metric(&xs[j]).map_err(|e| (Some(i), e.into()))?;
            let margin = l * dxy + tol(vs[i].max(vs[j])) - (vs[i] - vs[j]).abs();
            push("lipschitz", margin, Some(i), Some(j));
        }
    }
    let zero = FuzzyBox::zero(xs[0].grid().clone(), xs[0].dim());
    let v_zero = eval_v(spec, t, &zero).map_err(at(None))?;
    push("v_at_zero", -v_zero.abs(), None, None);

    let g_at = |w: f64| -> Result<f64, LyapunovError> { eval_at(spec.g.as_ref().expect("checked"), t, w) };
    if which != T3_5 {
        push("g_at_zero", 1e-12 - g_at(0.0).map_err(at(None))?.abs(), None, None);
    }
    if matches!(which, T3_3 | T3_4) {
        // g(t, ·) nondecreasing over the range of V on the grid
        let top = vs.iter().fold(0.0_f64, |m, v| m.max(*v)).max(1e-12);
        let mut prev = g_at(0.0).map_err(at(None))?;
        for k in 1..=MONOTONE_SAMPLES {
            let cur = g_at(top * k as f64 / MONOTONE_SAMPLES as f64).map_err(at(None))?;
            push("g_nondecreasing", cur - prev + tol(cur), None, None);
            prev = cur;
        }
    }
    if which == T3_3 {
        let a0 = spec.a0_env.as_ref().expect("checked");
        let mut prev = eval_at(a0, t, 0.0).map_err(at(None))?;
        push("a0_at_zero", 1e-12 - prev.abs(), None, None);
        for k in 1..=MONOTONE_SAMPLES {
            let cur = eval_at(a0, t, spec.rho * k as f64 / MONOTONE_SAMPLES as f64).map_err(at(None))?;
            push("a0_increasing", cur - prev, None, None);
            prev = cur;
        }
    }

    for (i, x) in xs.iter().enumerate() {
        let (d, v) = (ds[i], vs[i]);
        let (lower, upper) = match which {
            T3_5 => {
                let c = spec.constants.as_ref().expect("checked");
                (Some(c.lambda * d.powf(c.p)), Some(c.big_lambda * d.powf(c.q)))
            }
            _ => {
                let a = spec.a_env.as_ref().expect("checked").eval(d).map_err(|source| (Some(i), LyapunovError::Eval { t, source }))?;
                let upper = match which {
                    T3_2 | T3_4 => Some(spec.b_env.as_ref().expect("checked").eval(d).map_err(|source| (Some(i), LyapunovError::Eval { t, source }))?),
                    T3_3 => Some(eval_at(spec.a0_env.as_ref().expect("checked"), t, d).map_err(at(Some(i)))?),
                    _ => None,
                };
                (Some(a), upper)
            }
        };
        if let Some(lo) = lower {
            push("lower_envelope", v - lo + tol(v), Some(i), None);
        }
        if let Some(hi) = upper {
            push("upper_envelope", hi - v + tol(v), Some(i), None);
        }

        let (q_prev, q_fine) = dini_quotients(spec, rhs, t, x, &plan.h_sched).map_err(at(Some(i)))?;
        let dini = q_prev.map_or(q_fine, |p| p.max(q_fine));
        let slack = DINI_SLACK + 2.0 * q_prev.map_or(0.0, |p| (p - q_fine).abs());
        let bound = match which {
            T3_1 | T3_2 => g_at(v).map_err(at(Some(i)))?,
            T3_3 | T3_4 => {
                let vstar = spec.vstar_at(t, d).map_err(at(Some(i)))?.expect("checked");
                let c = spec.c_env.as_ref().expect("checked").eval(d).map_err(|source| (Some(i), LyapunovError::Eval { t, source }))?;
                push("vstar_lower", vstar - c + tol(vstar), Some(i), None);
                g_at(v).map_err(at(Some(i)))? - vstar
            }
            T3_5 => {
                let c = spec.constants.as_ref().expect("checked");
                -c.gamma * d.powf(c.q) + c.k * (-c.delta * t).exp()
            }
        };
        push("derivative", bound + slack - dini, Some(i), None);

        if which == T3_3 {
            let f = rhs.value(t, x).map_err(|e| (Some(i), e.into()))?;
            let b = spec.rhs_bound.expect("checked");
            push("rhs_bound", b - f.distance_to_zero() + tol(b), Some(i), None);
        }
    }
    Ok(())
}

fn claim_for(which: Theorem, probe: Option<&ProbeReport>) -> Option<Claim> {
    use Theorem::*;
    if which == T3_5 {
        return Some(Claim::UniformlyExponentiallyStable);
    }
    let p = probe?.properties;
    match which {
        T3_1 if p.asymptotically_stable => Some(Claim::AsymptoticallyStable),
        T3_1 if p.stable => Some(Claim::Stable),
        T3_2 if p.uniformly_asymptotically_stable => Some(Claim::UniformlyAsymptoticallyStable),
        T3_2 if p.uniformly_stable => Some(Claim::UniformlyStable),
        T3_3 if p.stable => Some(Claim::AsymptoticallyStable),
        T3_4 if p.uniformly_stable => Some(Claim::UniformlyAsymptoticallyStable),
        _ => None,
    }
}

fn delta_table(spec: &LyapunovSpec, plan: &SamplingPlan, probe: &ProbeReport) -> Result<Vec<DeltaEntry>, LyapunovError> {
    let a = spec.a_env.as_ref().expect("checked");
    let b = spec.b_env.as_ref().expect("checked");
    let g: &ScalarFn = spec.g.as_ref().expect("checked");
    let eval = |r: Result<f64, crate::expr::EvalError>| r.map_err(|source| LyapunovError::Eval { t: 0.0, source });
    let mut out = Vec::new();
    for &eps in &plan.eps_grid {
        let tube = eval(a.eval(eps))?;
        let Some(delta0) = comparison_delta(g, plan, probe, tube)? else {
            continue;
        };
        // V(t0, x0) <= b(d[x0, ô]) < δ₀ keeps the comparison solution below a(ε)
        let delta = eval(b.sup_below(delta0, spec.rho.min(b.w_max())))?;
        out.push(DeltaEntry { eps, delta0, delta });
    }
    Ok(out)
}

fn t_table(spec: &LyapunovSpec, deltas: &[DeltaEntry]) -> Result<Vec<TEntry>, LyapunovError> {
    let a = spec.a_env.as_ref().expect("checked");
    let c = spec.c_env.as_ref().expect("checked");
    let eval = |r: Result<f64, crate::expr::EvalError>| r.map_err(|source| LyapunovError::Eval { t: 0.0, source });
    let a_rho = eval(a.eval(spec.rho))?;
    deltas
        .iter()
        .map(|d| {
            let c_delta = eval(c.eval(d.delta))?;
            Ok(TEntry {
                eps: d.eps,
                delta: d.delta,
                t: 1.0 + a_rho / c_delta,
            })
        })
        .collect()
}

fn exponential_bounds(spec: &LyapunovSpec) -> ExponentialBounds {
    let c = spec.constants.expect("checked");
    let m = c.gamma / c.big_lambda;
    let delta1 = c.delta - m;
    ExponentialBounds {
        m,
        alpha: m / c.p,
        delta1,
        beta_params: BetaParams {
            lambda: c.lambda,
            big_lambda: c.big_lambda,
            q: c.q,
            p: c.p,
            k: c.k,
            delta1,
        },
    }
}

/// Checks the hypotheses of `which` on `plan` and assembles a certificate.
///
/// Falsification is reported inside the certificate; errors are reserved for
/// specs that lack the fields `which` needs or plans outside `S(ρ)`.
pub fn check_theorem(spec: &LyapunovSpec, rhs: &Rhs, which: Theorem, plan: &SamplingPlan) -> Result<StabilityCertificate, LyapunovError> {
    check_required(spec, which)?;
    plan.validate(spec.rho)?;
    let slices: Vec<Slice> = plan
        .t_grid
        .par_iter()
        .map(|&t| check_slice(spec, rhs, which, plan, t))
        .collect();
    let mut accs = vec![Acc::default(); HYPOTHESES.len()];
    let mut failure = None;
    for s in slices {
        for (acc, other) in accs.iter_mut().zip(s.accs) {
            acc.merge(other);
        }
        if failure.is_none() {
            failure = s.failure;
        }
    }
    let margins: Vec<Margin> = HYPOTHESES
        .iter()
        .zip(&accs)
        .filter_map(|(name, acc)| {
            acc.worst.map(|p| Margin {
                hypothesis: name,
                min_margin: p.margin,
                t: p.t,
                x_index: p.x,
                y_index: p.y,
                checked: acc.checked,
                violations: acc.violations,
            })
        })
        .collect();

    let mut notes = Vec::new();
    let mut counterexample = None;
    if let Some((t, x, err)) = failure {
        let name = if matches!(err, LyapunovError::DomainExit { .. }) { "domain" } else { "evaluation" };
        let mut c = Counterexample::bare(name, err.to_string());
        c.t = Some(t);
        c.x_index = x;
        c.x = x.map(|i| plan.x_grid[i].clone());
        counterexample = Some(c);
    }
    if let Some(m) = margins.iter().filter(|m| m.min_margin < 0.0).min_by(|a, b| a.min_margin.total_cmp(&b.min_margin)) {
        let mut c = Counterexample::bare(m.hypothesis, format!("{} violated by {:e} at t = {}", m.hypothesis, -m.min_margin, m.t));
        c.margin = Some(m.min_margin);
        c.t = Some(m.t);
        c.x_index = m.x_index;
        c.x = m.x_index.map(|i| plan.x_grid[i].clone());
        c.y_index = m.y_index;
        c.y = m.y_index.map(|i| plan.x_grid[i].clone());
        counterexample = counterexample.or(Some(c));
    }
    let grid_verified = counterexample.is_none();

    if which == Theorem::T3_5 {
        let c = spec.constants.expect("checked");
        let ratio = c.gamma / c.big_lambda;
        if !(c.delta > ratio && ratio > 0.0) {
            counterexample = counterexample.or(Some(Counterexample::bare(
                "side_condition",
                format!("requires delta > gamma/Lambda > 0, got delta = {} and gamma/Lambda = {}", c.delta, ratio),
            )));
        }
    }

    let mut probe = None;
    if counterexample.is_none() && which != Theorem::T3_5 {
        let report = scalar_stability_probe(spec.g.as_ref().expect("checked"), plan)?;
        if report.verdict == ProbeVerdict::Falsified {
            let mut c = Counterexample::bare(
                "comparison_stability",
                "a solution of the comparison equation leaves its tube".into(),
            );
            c.witness = report.witness;
            counterexample = Some(c);
        }
        probe = Some(report);
    }

    let claim = if counterexample.is_none() {
        claim_for(which, probe.as_ref())
    } else {
        None
    };
    if counterexample.is_none() && claim.is_none() {
        notes.push("comparison probe did not establish the property this theorem needs".into());
    }

    let mut deltas = Vec::new();
    let mut ts = Vec::new();
    let mut bounds = None;
    if claim.is_some() {
        match which {
            Theorem::T3_2 | Theorem::T3_4 => {
                deltas = delta_table(spec, plan, probe.as_ref().expect("probed"))?;
                if which == Theorem::T3_4 {
                    ts = t_table(spec, &deltas)?;
                }
            }
            Theorem::T3_5 => bounds = Some(exponential_bounds(spec)),
            _ => {}
        }
    }
    let status = if counterexample.is_some() {
        "falsified"
    } else if claim.is_some() {
        "established"
    } else {
        "inconclusive"
    };
    Ok(StabilityCertificate {
        theorem: which,
        claim,
        status,
        grid_verified,
        margins,
        counterexample,
        probe,
        bounds,
        delta_table: deltas,
        t_table: ts,
        notes,
        plan: plan.clone(),
    })
}
