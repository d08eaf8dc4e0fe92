//! Fuzzy sets on ℝⁿ represented by nested families of axis-aligned α-cut boxes.
//!
//! A [`FuzzyBox`] stores one [`IntervalBox`] per level of a [`LevelGrid`]. With
//! boxes as level sets, Minkowski addition and scalar multiplication are exact
//! endpoint operations and the Hausdorff distance under the max-coordinate norm
//! has the closed form `max_i max(|a.lo_i - b.lo_i|, |a.hi_i - b.hi_i|)`.
//!
//! The supremum metric `d[u, v] = sup_α d_H([u]^α, [v]^α)` is evaluated on the
//! grid levels only, so [`FuzzyBox::sup_metric`] is a lower bound of the
//! supremum over the full α continuum.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for nesting and width checks at this module's scale.
pub const NEST_TOL: f64 = 1e-12;

/// Default number of uniform α levels, `{0, 0.1, ..., 1}`.
pub const DEFAULT_LEVELS: usize = 11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuzzyError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("level grids differ")]
    GridMismatch,
    #[error("invalid level grid: {0}")]
    InvalidGrid(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("cut {level} is not contained in cut {below} (coordinate {coord}, excess {excess:e})")]
    NotNested {
        level: usize,
        below: usize,
        coord: usize,
        excess: f64,
    },
    #[error("level index {index} out of range (grid has {len} levels)")]
    LevelOutOfRange { index: usize, len: usize },
    #[error("H-difference does not exist (level {level}, coordinate {coord}: {reason})")]
    NoHDifference {
        level: usize,
        coord: usize,
        reason: String,
    },
}

/// Axis-aligned box `lo[i] <= x_i <= hi[i]`. A box with `lo == hi` is a crisp point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct IntervalBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRepr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<BoxRepr> for IntervalBox {
    type Error = FuzzyError;

    fn try_from(r: BoxRepr) -> Result<Self, Self::Error> {
        IntervalBox::new(r.lo, r.hi)
    }
}

impl From<IntervalBox> for BoxRepr {
    fn from(b: IntervalBox) -> Self {
        BoxRepr { lo: b.lo, hi: b.hi }
    }
}

impl IntervalBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, FuzzyError> {
        if lo.is_empty() {
            return Err(FuzzyError::InvalidBox("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(FuzzyError::DimensionMismatch {
                left: lo.len(),
                right: hi.len(),
            });
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(FuzzyError::InvalidBox(format!(
                    "non-finite endpoint at coordinate {i}"
                )));
            }
            if l > h {
                return Err(FuzzyError::InvalidBox(format!(
                    "lo > hi at coordinate {i} ({l} > {h})"
                )));
            }
        }
        Ok(IntervalBox { lo, hi })
    }

    /// Degenerate box at a single point.
    pub(crate) fn from_parts_unchecked(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        IntervalBox { lo, hi }
    }

    pub fn point(x: Vec<f64>) -> Result<Self, FuzzyError> {
        IntervalBox::new(x.clone(), x)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, FuzzyError> {
        IntervalBox::new(vec![lo], vec![hi])
    }

    pub fn zero(dim: usize) -> Self {
        IntervalBox {
            lo: vec![0.0; dim],
            hi: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn is_crisp(&self) -> bool {
        self.lo == self.hi
    }

    /// Hausdorff distance under the max-coordinate norm.
    pub fn hausdorff(&self, other: &IntervalBox) -> Result<f64, FuzzyError> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.hausdorff_unchecked(other))
    }

    fn hausdorff_unchecked(&self, other: &IntervalBox) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.lo.len() {
            d = d
                .max((self.lo[i] - other.lo[i]).abs())
                .max((self.hi[i] - other.hi[i]).abs());
        }
        d
    }

    /// Largest `|x_i|` over the box, i.e. the distance to the origin point.
    pub fn norm(&self) -> f64 {
        self.lo
            .iter()
            .chain(&self.hi)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn scaled(&self, lambda: f64) -> IntervalBox {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let (a, b) = (lambda * l, lambda * h);
                if lambda < 0.0 {
                    (b, a)
                } else {
                    (a, b)
                }
            })
            .unzip();
        IntervalBox { lo, hi }
    }

    fn summed(&self, other: &IntervalBox) -> IntervalBox {
        IntervalBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Free-function form of [`IntervalBox::hausdorff`].
pub fn box_hausdorff(a: &IntervalBox, b: &IntervalBox) -> Result<f64, FuzzyError> {
    a.hausdorff(b)
}

fn check_dim(left: usize, right: usize) -> Result<(), FuzzyError> {
    if left != right {
        return Err(FuzzyError::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Strictly increasing α levels `0 = α_0 < ... < α_L = 1`.
#[derive(Clone, PartialEq)]
pub struct LevelGrid {
    alphas: Arc<[f64]>,
}

impl fmt::Debug for LevelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.alphas.iter()).finish()
    }
}

impl LevelGrid {
    pub fn new(alphas: Vec<f64>) -> Result<Self, FuzzyError> {
        if alphas.len() < 2 {
            return Err(FuzzyError::InvalidGrid("need at least two levels".into()));
        }
        if alphas[0] != 0.0 || *alphas.last().unwrap() != 1.0 {
            return Err(FuzzyError::InvalidGrid(
                "first level must be 0 and last level must be 1".into(),
            ));
        }
        if alphas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(FuzzyError::InvalidGrid("levels must be strictly increasing".into()));
        }
        Ok(LevelGrid {
            alphas: alphas.into(),
        })
    }

    /// `count` equally spaced levels on `[0, 1]` (`count >= 2`).
    pub fn uniform(count: usize) -> Result<Self, FuzzyError> {
        if count < 2 {
            return Err(FuzzyError::InvalidGrid("need at least two levels".into()));
        }
        let last = (count - 1) as f64;
        let alphas = (0..count).map(|j| j as f64 / last).collect();
        LevelGrid::new(alphas)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn same_as(&self, other: &LevelGrid) -> bool {
        Arc::ptr_eq(&self.alphas, &other.alphas) || self.alphas == other.alphas
    }
}

impl Default for LevelGrid {
    fn default() -> Self {
        LevelGrid::uniform(DEFAULT_LEVELS).expect("default grid is valid")
    }
}

impl Serialize for LevelGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.alphas.as_ref().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LevelGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let alphas = Vec::<f64>::deserialize(d)?;
        LevelGrid::new(alphas).map_err(serde::de::Error::custom)
    }
}

/// A fuzzy set given by its α-cuts on a [`LevelGrid`]; `cuts[j] = [u]^{α_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FuzzyBoxRepr", into = "FuzzyBoxRepr")]
pub struct FuzzyBox {
    grid: LevelGrid,
    cuts: Vec<IntervalBox>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuzzyBoxRepr {
    alphas: LevelGrid,
    cuts: Vec<IntervalBox>,
}

impl TryFrom<FuzzyBoxRepr> for FuzzyBox {
    type Error = FuzzyError;

    fn try_from(r: FuzzyBoxRepr) -> Result<Self, Self::Error> {
        FuzzyBox::new(r.alphas, r.cuts)
    }
}

impl From<FuzzyBox> for FuzzyBoxRepr {
    fn from(u: FuzzyBox) -> Self {
        FuzzyBoxRepr {
            alphas: u.grid,
            cuts: u.cuts,
        }
    }
}

impl FuzzyBox {
    /// Builds a fuzzy box, repairing nesting violations of at most [`NEST_TOL`]
    /// by outward rounding and rejecting larger ones.
    pub fn new(grid: LevelGrid, cuts: Vec<IntervalBox>) -> Result<Self, FuzzyError> {
        if cuts.len() != grid.len() {
            return Err(FuzzyError::InvalidGrid(format!(
                "{} cuts for {} levels",
                cuts.len(),
                grid.len()
            )));
        }
        let dim = cuts[0].dim();
        for c in &cuts {
            check_dim(dim, c.dim())?;
        }
        let mut u = FuzzyBox { grid, cuts };
        u.enforce_nesting(NEST_TOL)?;
        Ok(u)
    }

    /// The crisp zero `ô` of dimension `dim`.
    pub fn zero(grid: LevelGrid, dim: usize) -> Self {
        let cuts = vec![IntervalBox::zero(dim); grid.len()];
        FuzzyBox { grid, cuts }
    }

    /// Same box at every level.
    pub fn constant(grid: LevelGrid, b: IntervalBox) -> Self {
        let cuts = vec![b; grid.len()];
        FuzzyBox { grid, cuts }
    }

    /// Crisp point.
    pub fn crisp(grid: LevelGrid, x: Vec<f64>) -> Result<Self, FuzzyError> {
        Ok(FuzzyBox::constant(grid, IntervalBox::point(x)?))
    }

    /// Builds cuts from a function of α.
    pub fn from_fn<F>(grid: LevelGrid, mut cut: F) -> Result<Self, FuzzyError>
    where
        F: FnMut(f64) -> Result<IntervalBox, FuzzyError>,
    {
        let cuts = grid
            .alphas()
            .iter()
            .map(|&a| cut(a))
            .collect::<Result<Vec<_>, _>>()?;
        FuzzyBox::new(grid, cuts)
    }

    /// Triangular fuzzy number `(left, peak, right)` in one dimension.
    pub fn triangular(grid: LevelGrid, left: f64, peak: f64, right: f64) -> Result<Self, FuzzyError> {
        FuzzyBox::from_fn(grid, |a| {
            IntervalBox::interval(peak - (1.0 - a) * (peak - left), peak + (1.0 - a) * (right - peak))
        })
    }

    pub(crate) fn from_parts_unchecked(grid: LevelGrid, cuts: Vec<IntervalBox>) -> Self {
        FuzzyBox { grid, cuts }
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn cuts(&self) -> &[IntervalBox] {
        &self.cuts
    }

    pub fn cut(&self, level: usize) -> Result<&IntervalBox, FuzzyError> {
        self.cuts.get(level).ok_or(FuzzyError::LevelOutOfRange {
            index: level,
            len: self.cuts.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.cuts[0].dim()
    }

    pub fn levels(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_crisp(&self) -> bool {
        self.cuts.iter().all(|c| c.is_crisp())
    }

    fn check_compatible(&self, other: &FuzzyBox) -> Result<(), FuzzyError> {
        if !self.grid.same_as(&other.grid) {
            return Err(FuzzyError::GridMismatch);
        }
        check_dim(self.dim(), other.dim())
    }

    /// Discretized `d[u, v] = max_j d_H(u.cuts[j], v.cuts[j])`.
    pub fn sup_metric(&self, other: &FuzzyBox) -> Result<f64, FuzzyError> {
        self.check_compatible(other)?;
        Ok(self
            .cuts
            .iter()
            .zip(&other.cuts)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hausdorff_unchecked(b))))
    }

    /// `d[u, ô]`.
    pub fn distance_to_zero(&self) -> f64 {
        self.cuts.iter().fold(0.0_f64, |m, c| m.max(c.norm()))
    }

    /// Level-wise Minkowski sum.
    pub fn add(&self, other: &FuzzyBox) -> Result<FuzzyBox, FuzzyError> {
        self.check_compatible(other)?;
        let cuts = self
            .cuts
            .iter()
            .zip(&other.cuts)
            .map(|(a, b)| a.summed(b))
            .collect();
        Ok(FuzzyBox {
            grid: self.grid.clone(),
            cuts,
        })
    }

    /// Level-wise `λ·[u]^α`; endpoints swap when `λ < 0`.
    pub fn scale(&self, lambda: f64) -> FuzzyBox {
        FuzzyBox {
            grid: self.grid.clone(),
            cuts: self.cuts.iter().map(|c| c.scaled(lambda)).collect(),
        }
    }

    /// Hukuhara difference `self ⊖ y`: the `z` with `y + z = self`, if it exists
    /// in the box representation.
    pub fn h_difference(&self, y: &FuzzyBox) -> Result<FuzzyBox, FuzzyError> {
        self.check_compatible(y)?;
        let mut cuts = Vec::with_capacity(self.cuts.len());
        for (j, (x, yc)) in self.cuts.iter().zip(&y.cuts).enumerate() {
            let mut lo = Vec::with_capacity(x.dim());
            let mut hi = Vec::with_capacity(x.dim());
            for i in 0..x.dim() {
                let wx = x.hi[i] - x.lo[i];
                let wy = yc.hi[i] - yc.lo[i];
                if wx < wy - NEST_TOL {
                    return Err(FuzzyError::NoHDifference {
                        level: j,
                        coord: i,
                        reason: format!("minuend width {wx} is smaller than subtrahend width {wy}"),
                    });
                }
                let zl = x.lo[i] - yc.lo[i];
                let mut zh = x.hi[i] - yc.hi[i];
                if zh < zl {
                    zh = zl;
                }
                lo.push(zl);
                hi.push(zh);
            }
            cuts.push(IntervalBox { lo, hi });
        }
        let mut z = FuzzyBox {
            grid: self.grid.clone(),
            cuts,
        };
        z.enforce_nesting(NEST_TOL).map_err(|e| match e {
            FuzzyError::NotNested {
                level,
                coord,
                excess,
                ..
            } => FuzzyError::NoHDifference {
                level,
                coord,
                reason: format!("difference cuts are not nested (excess {excess:e})"),
            },
            other => other,
        })?;
        Ok(z)
    }

    /// Per-coordinate widths `hi - lo` at level `level`.
    pub fn diameter(&self, level: usize) -> Result<Vec<f64>, FuzzyError> {
        Ok(self.cut(level)?.widths())
    }

    /// Re-expresses `self` on `grid`, taking at each target level the cut of the
    /// largest source level not above it. The result contains the true cut.
    pub fn resample(&self, grid: &LevelGrid) -> FuzzyBox {
        let src = self.grid.alphas();
        let cuts = grid
            .alphas()
            .iter()
            .map(|&a| {
                let j = src.iter().rposition(|&s| s <= a).unwrap_or(0);
                self.cuts[j].clone()
            })
            .collect();
        FuzzyBox {
            grid: grid.clone(),
            cuts,
        }
    }

    /// Checks `cuts[j+1] ⊆ cuts[j]`. Violations up to `tol` are repaired by
    /// widening the lower level; larger ones are reported.
    fn enforce_nesting(&mut self, tol: f64) -> Result<(), FuzzyError> {
        for j in (0..self.cuts.len() - 1).rev() {
            let (below, above) = self.cuts.split_at_mut(j + 1);
            let (lower, upper) = (&mut below[j], &above[0]);
            for i in 0..lower.lo.len() {
                let excess = (lower.lo[i] - upper.lo[i]).max(upper.hi[i] - lower.hi[i]);
                if excess > tol {
                    return Err(FuzzyError::NotNested {
                        level: j + 1,
                        below: j,
                        coord: i,
                        excess,
                    });
                }
                lower.lo[i] = lower.lo[i].min(upper.lo[i]);
                lower.hi[i] = lower.hi[i].max(upper.hi[i]);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`FuzzyBox::sup_metric`].
pub fn sup_metric(u: &FuzzyBox, v: &FuzzyBox) -> Result<f64, FuzzyError> {
    u.sup_metric(v)
}
