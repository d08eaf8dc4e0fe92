#![allow(dead_code)]

use std::f64::consts::PI;

use fuzzy_lyapunov::calculus::FuzzyPath;
use fuzzy_lyapunov::expr::parse;
use fuzzy_lyapunov::fuzzy::{FuzzyBox, IntervalBox, LevelGrid};
use fuzzy_lyapunov::ivp::{FuzzyIvp, Rhs};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng) -> LevelGrid {
    LevelGrid::uniform(rng.random_range(2..=12)).unwrap()
}

/// Random nested fuzzy box: a core box at α = 1 widened outward level by level.
pub fn random_box(rng: &mut ChaCha8Rng, grid: &LevelGrid, dim: usize, scale: f64) -> FuzzyBox {
    let n = grid.len();
    let mut lo = vec![vec![0.0; dim]; n];
    let mut hi = vec![vec![0.0; dim]; n];
    for i in 0..dim {
        let c = rng.random_range(-scale..scale);
        let core = rng.random_range(0.0..0.3 * scale);
        lo[n - 1][i] = c - core;
        hi[n - 1][i] = c + core;
        for j in (0..n - 1).rev() {
            lo[j][i] = lo[j + 1][i] - rng.random_range(0.0..0.2 * scale);
            hi[j][i] = hi[j + 1][i] + rng.random_range(0.0..0.2 * scale);
        }
    }
    let cuts = lo.into_iter().zip(hi).map(|(l, h)| IntervalBox::new(l, h).unwrap()).collect();
    FuzzyBox::new(grid.clone(), cuts).unwrap()
}

/// A smooth path `F(t)` with cuts `[m(t) - r_lo·s(t), m(t) + r_hi·s(t)]`,
/// radii nonincreasing in α and `s > 0`.
#[derive(Debug, Clone)]
pub struct SmoothPath {
    pub grid: LevelGrid,
    pub dim: usize,
    center: Vec<[f64; 4]>,
    spread: Vec<[f64; 2]>,
    r_lo: Vec<Vec<f64>>,
    r_hi: Vec<Vec<f64>>,
}

impl SmoothPath {
    pub fn random(rng: &mut ChaCha8Rng, grid: &LevelGrid, dim: usize) -> Self {
        let n = grid.len();
        let rad = |rng: &mut ChaCha8Rng| {
            let mut v = vec![0.0; n];
            v[n - 1] = rng.random_range(0.0..0.2);
            for j in (0..n - 1).rev() {
                v[j] = v[j + 1] + rng.random_range(0.0..0.2);
            }
            v
        };
        let mut r_lo = Vec::new();
        let mut r_hi = Vec::new();
        let mut center = Vec::new();
        let mut spread = Vec::new();
        for _ in 0..dim {
            r_lo.push(rad(rng));
            r_hi.push(rad(rng));
            center.push([
                rng.random_range(-2.0..2.0),
                rng.random_range(0.1..2.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(-1.0..1.0),
            ]);
            spread.push([rng.random_range(0.1..1.5), rng.random_range(0.0..2.0 * PI)]);
        }
        SmoothPath {
            grid: grid.clone(),
            dim,
            center,
            spread,
            r_lo,
            r_hi,
        }
    }

    pub fn at(&self, t: f64) -> FuzzyBox {
        let cuts = (0..self.grid.len())
            .map(|j| {
                let mut lo = vec![0.0; self.dim];
                let mut hi = vec![0.0; self.dim];
                for i in 0..self.dim {
                    let [a, w, phi, b] = self.center[i];
                    let [nu, psi] = self.spread[i];
                    let m = a * (w * t + phi).sin() + b;
                    let s = 1.2 + (nu * t + psi).sin();
                    lo[i] = m - self.r_lo[i][j] * s;
                    hi[i] = m + self.r_hi[i][j] * s;
                }
                IntervalBox::new(lo, hi).unwrap()
            })
            .collect();
        FuzzyBox::new(self.grid.clone(), cuts).unwrap()
    }

    pub fn path(&self, start: f64, end: f64) -> FuzzyPath {
        let me = self.clone();
        FuzzyPath::new(start, end, self.grid.clone(), self.dim, move |t| Ok(me.at(t))).unwrap()
    }
}

/// Coefficients used across the trajectory test matrix.
pub const MATRIX_COEFFS: [&str; 6] = ["0", "-1", "1/(1+t^2)", "-2*exp(-0.5*t)", "sin(t)", "0.3"];
pub const MATRIX_T0: [f64; 2] = [0.0, 1.5];

/// Initial states of the matrix on the default grid.
pub fn matrix_states() -> Vec<FuzzyBox> {
    let g = LevelGrid::default();
    vec![
        FuzzyBox::crisp(g.clone(), vec![1.0]).unwrap(),
        FuzzyBox::triangular(g.clone(), 0.5, 1.0, 1.5).unwrap(),
        FuzzyBox::triangular(g.clone(), -1.0, 0.0, 2.0).unwrap(),
        FuzzyBox::constant(g.clone(), IntervalBox::interval(-0.5, 0.25).unwrap()),
        FuzzyBox::from_fn(g, |a| IntervalBox::new(vec![-1.0 + 0.5 * a, 0.2 * a], vec![1.0, 1.5 - 0.5 * a])).unwrap(),
    ]
}

/// Every (coefficient, t0, state) problem of the matrix on horizon `t0 + 5`.
pub fn ivp_matrix() -> Vec<(String, FuzzyIvp)> {
    let mut out = Vec::new();
    for a in MATRIX_COEFFS {
        for t0 in MATRIX_T0 {
            for (k, x0) in matrix_states().into_iter().enumerate() {
                let ivp = FuzzyIvp::new(t0, x0, Rhs::linear(parse(a).unwrap()), t0 + 5.0, 0.01, 1e3).unwrap();
                out.push((format!("a = {a}, t0 = {t0}, x0 #{k}"), ivp));
            }
        }
    }
    out
}
