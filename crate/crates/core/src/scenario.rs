//! Scenario files: JSON with an `ivp`, an optional `lyapunov` and an optional `run` section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::ScalarFn;
use crate::fuzzy::{FuzzyBox, FuzzyError, LevelGrid};
use crate::ivp::{FuzzyIvp, Rhs};
use crate::lyapunov::{plan_shapes, LyapunovConfig, LyapunovError, LyapunovSpec, SamplingPlan, Theorem};
use crate::ode::SolveError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSpec {
    /// `f(t, x) = a(t)·x`.
    Linear { a: ScalarFn },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvpSection {
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub rho: f64,
    pub x0: FuzzyBox,
    pub rhs: RhsSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    /// Restrict the sampling plan and the probe shapes to crisp states.
    #[serde(default)]
    pub crisp_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Tube radii of the empirical δ search.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps: Vec<f64>,
    /// Initial times of the empirical probes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t0s: Vec<f64>,
    /// Length of each probe trajectory after its initial time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub ivp: IvpSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(default)]
    pub run: RunSection,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Command-line overrides applied on top of a file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub levels: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

pub const DEFAULT_PROBE_HORIZON: f64 = 50.0;

/// A validated scenario ready for the solver, the checker and the experiments.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub ivp: FuzzyIvp,
    pub spec: Option<LyapunovSpec>,
    pub theorem: Option<Theorem>,
    pub plan: SamplingPlan,
    pub eps_list: Vec<f64>,
    pub t0_list: Vec<f64>,
    /// Probe initial states of unit distance to `ô`, scaled by the δ search.
    pub shapes: Vec<FuzzyBox>,
    pub probe_horizon: f64,
    pub probe_dt: f64,
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile, ov: &Overrides) -> Result<Self, ScenarioError> {
        let sec = &file.ivp;
        let levels = ov.levels.or(file.run.levels);
        let grid = match levels {
            Some(n) => LevelGrid::uniform(n)?,
            None => sec.x0.grid().clone(),
        };
        let x0 = if grid.same_as(sec.x0.grid()) {
            sec.x0.clone()
        } else {
            sec.x0.resample(&grid)
        };
        let rhs = match &sec.rhs {
            RhsSpec::Linear { a } => {
                if a.expr().mentions(crate::expr::Var::W) {
                    return Err(ScenarioError::Invalid("linear rhs coefficient `a` may depend on t only".into()));
                }
                Rhs::linear(a.clone())
            }
        };
        let ivp = FuzzyIvp::new(
            sec.t0,
            x0.clone(),
            rhs,
            ov.horizon.unwrap_or(sec.horizon),
            ov.dt.unwrap_or(sec.dt),
            sec.rho,
        )?;
        let spec = file
            .lyapunov
            .as_ref()
            .map(|c| LyapunovSpec::new(c.clone(), sec.rho))
            .transpose()?;
        let run = &file.run;
        let seed = ov.seed.unwrap_or(run.seed);
        let plan = SamplingPlan::standard(sec.rho, &grid, x0.dim(), run.crisp_only)?.with_seed(seed);
        let shapes = plan_shapes(&grid, x0.dim(), 1.0, run.crisp_only)?;
        let eps_list = run.eps.clone();
        if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e < sec.rho)) {
            return Err(ScenarioError::Invalid(format!("probe radius {e} outside (0, rho)")));
        }
        let t0_list = if run.t0s.is_empty() { vec![sec.t0] } else { run.t0s.clone() };
        if t0_list.iter().any(|t| !(*t >= 0.0)) {
            return Err(ScenarioError::Invalid("probe times must be nonnegative".into()));
        }
        let probe_horizon = run.probe_horizon.unwrap_or(DEFAULT_PROBE_HORIZON);
        let probe_dt = run.probe_dt.unwrap_or(ivp.dt());
        if !(probe_horizon > 0.0 && probe_dt > 0.0) {
            return Err(ScenarioError::Invalid("probe horizon and dt must be positive".into()));
        }
        Ok(Scenario {
            name: file.name.clone().unwrap_or_else(|| "scenario".into()),
            ivp,
            spec,
            theorem: run.theorem,
            plan,
            eps_list,
            t0_list,
            shapes,
            probe_horizon,
            probe_dt,
        })
    }

    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, ScenarioError> {
        Self::from_file(&ScenarioFile::read(path)?, ov)
    }

    pub fn spec(&self) -> Result<&LyapunovSpec, ScenarioError> {
        self.spec
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("scenario has no `lyapunov` section".into()))
    }
}
