//! Fuzzy initial-value problems `x' = f(t, x)`, `x(t0) = x0`, under the
//! Hukuhara derivative, solved by level-wise endpoint reduction.
//!
//! For the linear family `f(t, x) = a(t)·x` the endpoint law is
//!
//! ```text
//! lo' = min(a·lo, a·hi),   hi' = max(a·lo, a·hi)
//! ```
//!
//! so every width obeys `w' = |a(t)|·w`. Widths never shrink, even when `a < 0`:
//! a genuinely fuzzy state cannot contract toward `ô` under this derivative,
//! only crisp states can.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::calculus::FuzzyPath;
use crate::expr::ScalarFn;
use crate::fmt_float;
use crate::fuzzy::{FuzzyBox, FuzzyError, IntervalBox, LevelGrid, NEST_TOL};
use crate::ode::{self, Flow, SolveError};

/// Decoupled endpoint dynamics of one coordinate: `(t, lo, hi) -> (lo', hi')`.
pub type EndpointFn = Arc<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub enum Rhs {
    /// `f(t, x) = a(t)·x`, coordinate-wise.
    LinearScalar { a: ScalarFn },
    /// One endpoint map per coordinate, applied identically at every level.
    EndpointField { coords: Vec<EndpointFn> },
}

impl fmt::Debug for Rhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rhs::LinearScalar { a } => f.debug_struct("LinearScalar").field("a", &a.source()).finish(),
            Rhs::EndpointField { coords } => f
                .debug_struct("EndpointField")
                .field("coords", &coords.len())
                .finish(),
        }
    }
}

impl Rhs {
    pub fn linear(a: ScalarFn) -> Self {
        Rhs::LinearScalar { a }
    }

    pub fn endpoint_field(coords: Vec<EndpointFn>) -> Self {
        Rhs::EndpointField { coords }
    }

    fn coefficient(a: &ScalarFn, t: f64) -> Result<f64, SolveError> {
        a.eval(t, 0.0).map_err(|source| SolveError::Eval { t, source })
    }

    /// The level-wise value `f(t, x)`.
    pub fn value(&self, t: f64, x: &FuzzyBox) -> Result<FuzzyBox, SolveError> {
        match self {
            Rhs::LinearScalar { a } => Ok(x.scale(Rhs::coefficient(a, t)?)),
            Rhs::EndpointField { coords } => {
                if coords.len() != x.dim() {
                    return Err(FuzzyError::DimensionMismatch {
                        left: coords.len(),
                        right: x.dim(),
                    }
                    .into());
                }
                let cuts = x
                    .cuts()
                    .iter()
                    .map(|c| {
                        let (lo, hi): (Vec<f64>, Vec<f64>) = coords
                            .iter()
                            .enumerate()
                            .map(|(i, f)| f(t, c.lo()[i], c.hi()[i]))
                            .unzip();
                        IntervalBox::new(lo, hi)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(FuzzyBox::new(x.grid().clone(), cuts)?)
            }
        }
    }
}

/// A validated problem instance.
#[derive(Debug, Clone)]
pub struct FuzzyIvp {
    t0: f64,
    x0: FuzzyBox,
    rhs: Rhs,
    horizon: f64,
    dt: f64,
    rho: f64,
}

fn invalid(msg: impl Into<String>) -> SolveError {
    SolveError::InvalidProblem(msg.into())
}

impl FuzzyIvp {
    pub fn new(t0: f64, x0: FuzzyBox, rhs: Rhs, horizon: f64, dt: f64, rho: f64) -> Result<Self, SolveError> {
        if !(t0 >= 0.0 && t0.is_finite()) {
            return Err(invalid(format!("t0 must be a finite nonnegative time, got {t0}")));
        }
        if !(horizon > t0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon {horizon} must exceed t0 = {t0}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if !(rho > 0.0) {
            return Err(invalid(format!("rho must be positive, got {rho}")));
        }
        let d0 = x0.distance_to_zero();
        if !(d0 < rho) {
            return Err(invalid(format!("x0 lies outside S(rho): d[x0, 0] = {d0} >= {rho}")));
        }
        if let Rhs::EndpointField { coords } = &rhs {
            if coords.len() != x0.dim() {
                return Err(invalid(format!(
                    "endpoint field has {} coordinates, x0 has {}",
                    coords.len(),
                    x0.dim()
                )));
            }
            for t in [t0, 0.5 * (t0 + horizon), horizon] {
                for (i, f) in coords.iter().enumerate() {
                    let (dl, dh) = f(t, 0.0, 0.0);
                    if dl.abs() > NEST_TOL || dh.abs() > NEST_TOL {
                        return Err(invalid(format!(
                            "f(t, 0) != 0 at t = {t}, coordinate {i}: ({dl}, {dh})"
                        )));
                    }
                }
            }
        }
        Ok(FuzzyIvp {
            t0,
            x0,
            rhs,
            horizon,
            dt,
            rho,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn x0(&self) -> &FuzzyBox {
        &self.x0
    }

    pub fn rhs(&self) -> &Rhs {
        &self.rhs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_start(&self, t0: f64, x0: FuzzyBox) -> Result<Self, SolveError> {
        FuzzyIvp::new(t0, x0, self.rhs.clone(), self.horizon, self.dt, self.rho)
    }

    pub fn with_horizon(&self, horizon: f64, dt: f64) -> Result<Self, SolveError> {
        FuzzyIvp::new(self.t0, self.x0.clone(), self.rhs.clone(), horizon, dt, self.rho)
    }
}

struct FuzzyFlow<'a> {
    rhs: &'a Rhs,
    levels: usize,
    dim: usize,
    rho: f64,
}

impl FuzzyFlow<'_> {
    fn lo(&self, j: usize, i: usize) -> usize {
        2 * self.dim * j + i
    }

    fn hi(&self, j: usize, i: usize) -> usize {
        2 * self.dim * j + self.dim + i
    }
}

impl Flow for FuzzyFlow<'_> {
    fn len(&self) -> usize {
        2 * self.dim * self.levels
    }

    fn deriv(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SolveError> {
        match self.rhs {
            Rhs::LinearScalar { a } => {
                let a = Rhs::coefficient(a, t)?;
                for j in 0..self.levels {
                    for i in 0..self.dim {
                        let (l, h) = (a * y[self.lo(j, i)], a * y[self.hi(j, i)]);
                        dy[self.lo(j, i)] = l.min(h);
                        dy[self.hi(j, i)] = l.max(h);
                    }
                }
            }
            Rhs::EndpointField { coords } => {
                for j in 0..self.levels {
                    for (i, f) in coords.iter().enumerate() {
                        let (dl, dh) = f(t, y[self.lo(j, i)], y[self.hi(j, i)]);
                        dy[self.lo(j, i)] = dl;
                        dy[self.hi(j, i)] = dh;
                    }
                }
            }
        }
        Ok(())
    }

    fn settle(&self, t: f64, prev: &[f64], y: &mut [f64]) -> Result<(), SolveError> {
        for j in 0..self.levels {
            for i in 0..self.dim {
                let (l, h) = (self.lo(j, i), self.hi(j, i));
                let tol = NEST_TOL * (1.0 + y[l].abs() + y[h].abs());
                let shrink = (prev[h] - prev[l]) - (y[h] - y[l]);
                if shrink > tol {
                    return Err(SolveError::WidthViolation {
                        t,
                        level: j,
                        coord: i,
                        shrink,
                    });
                }
                if y[l] > y[h] {
                    y.swap(l, h);
                }
            }
        }
        for j in (1..self.levels).rev() {
            for i in 0..self.dim {
                let (lb, hb) = (self.lo(j - 1, i), self.hi(j - 1, i));
                let (la, ha) = (self.lo(j, i), self.hi(j, i));
                let excess = (y[lb] - y[la]).max(y[ha] - y[hb]);
                if excess > NEST_TOL * (1.0 + y[la].abs() + y[ha].abs()) {
                    return Err(FuzzyError::NotNested {
                        level: j,
                        below: j - 1,
                        coord: i,
                        excess,
                    }
                    .into());
                }
                y[lb] = y[lb].min(y[la]);
                y[hb] = y[hb].max(y[ha]);
            }
        }
        let distance = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if distance >= self.rho {
            return Err(SolveError::DomainExit {
                t,
                distance,
                rho: self.rho,
            });
        }
        Ok(())
    }
}

fn flatten(x: &FuzzyBox) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.dim() * x.levels());
    for c in x.cuts() {
        out.extend_from_slice(c.lo());
        out.extend_from_slice(c.hi());
    }
    out
}

/// Solves the problem on the uniform grid with `ceil((horizon - t0)/dt)` steps.
pub fn solve(ivp: &FuzzyIvp) -> Result<Trajectory, SolveError> {
    let x0 = &ivp.x0;
    let flow = FuzzyFlow {
        rhs: &ivp.rhs,
        levels: x0.levels(),
        dim: x0.dim(),
        rho: ivp.rho,
    };
    let n = ode::base_steps(ivp.t0, ivp.horizon, ivp.dt);
    let samples = ode::solve_halving(&flow, ivp.t0, ivp.horizon, n, &flatten(x0))?;
    let stride = flow.len();
    let d_to_zero = samples
        .states
        .chunks(stride)
        .map(|s| s.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .collect();
    Ok(Trajectory {
        grid: x0.grid().clone(),
        dim: x0.dim(),
        times: samples.times,
        data: samples.states.into(),
        d_to_zero,
        substeps: samples.substeps,
    })
}

/// Sampled solution with per-endpoint linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: LevelGrid,
    dim: usize,
    times: Vec<f64>,
    data: Arc<[f64]>,
    d_to_zero: Vec<f64>,
    substeps: usize,
}

impl Trajectory {
    fn stride(&self) -> usize {
        2 * self.dim * self.grid.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// RK4 substeps per base step in the accepted run.
    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// `d[x(t_k), ô]` at every sample.
    pub fn distances(&self) -> &[f64] {
        &self.d_to_zero
    }

    fn cuts_from(&self, row: impl Fn(usize) -> f64) -> Vec<IntervalBox> {
        let d = self.dim;
        (0..self.grid.len())
            .map(|j| {
                let lo = (0..d).map(|i| row(2 * d * j + i)).collect();
                let hi = (0..d).map(|i| row(2 * d * j + d + i)).collect();
                IntervalBox::from_parts_unchecked(lo, hi)
            })
            .collect()
    }

    pub fn state(&self, k: usize) -> FuzzyBox {
        let base = k * self.stride();
        let cuts = self.cuts_from(|o| self.data[base + o]);
        FuzzyBox::from_parts_unchecked(self.grid.clone(), cuts)
    }

    pub fn states(&self) -> impl Iterator<Item = FuzzyBox> + '_ {
        (0..self.len()).map(|k| self.state(k))
    }

    pub fn final_state(&self) -> FuzzyBox {
        self.state(self.len() - 1)
    }

    fn locate(&self, t: f64) -> Result<(usize, f64), SolveError> {
        let (start, end) = (self.times[0], *self.times.last().unwrap());
        let slack = 1e-12 * (1.0 + end.abs());
        if !(t >= start - slack && t <= end + slack) {
            return Err(invalid(format!("t = {t} outside the trajectory span [{start}, {end}]")));
        }
        let t = t.clamp(start, end);
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1).min(self.len() - 2);
        let theta = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Ok((k, theta.clamp(0.0, 1.0)))
    }

    /// Linearly interpolated state at `t`.
    pub fn state_at(&self, t: f64) -> Result<FuzzyBox, SolveError> {
        if self.len() == 1 {
            return Ok(self.state(0));
        }
        let (k, theta) = self.locate(t)?;
        let (a, b) = (k * self.stride(), (k + 1) * self.stride());
        let mut cuts = self.cuts_from(|o| (1.0 - theta) * self.data[a + o] + theta * self.data[b + o]);
        for c in &mut cuts {
            // interpolation keeps lo <= hi up to rounding
            let (lo, hi): (Vec<f64>, Vec<f64>) = c.lo().iter().zip(c.hi()).map(|(l, h)| (l.min(*h), l.max(*h))).unzip();
            *c = IntervalBox::from_parts_unchecked(lo, hi);
        }
        Ok(FuzzyBox::new(self.grid.clone(), cuts)?)
    }

    /// `d[x(t), ô]` of the interpolated state.
    pub fn distance_to_zero(&self, t: f64) -> Result<f64, SolveError> {
        Ok(self.state_at(t)?.distance_to_zero())
    }

    /// The trajectory as a path on its sample span.
    pub fn as_path(&self) -> FuzzyPath {
        let me = Arc::new(self.clone());
        let (start, end) = (self.times[0], *self.times.last().unwrap());
        let f = move |t: f64| {
            me.state_at(t).map_err(|e| match e {
                SolveError::Fuzzy(f) => f,
                other => FuzzyError::InvalidBox(other.to_string()),
            })
        };
        FuzzyPath::new(start, end, self.grid.clone(), self.dim, f).expect("trajectory span is valid")
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string(), "d_to_zero".to_string()];
        for j in 0..self.grid.len() {
            for i in 0..self.dim {
                cols.push(format!("lo_j{j}_i{i}"));
                cols.push(format!("hi_j{j}_i{i}"));
            }
        }
        cols.join(",")
    }

    /// Columns `t, d_to_zero`, then `lo, hi` per level and coordinate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let d = self.dim;
        for k in 0..self.len() {
            let row = &self.data[k * self.stride()..(k + 1) * self.stride()];
            let mut line = format!("{},{}", fmt_float(self.times[k]), fmt_float(self.d_to_zero[k]));
            for j in 0..self.grid.len() {
                for i in 0..d {
                    line.push(',');
                    line.push_str(&fmt_float(row[2 * d * j + i]));
                    line.push(',');
                    line.push_str(&fmt_float(row[2 * d * j + d + i]));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
