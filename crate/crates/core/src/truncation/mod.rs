//! Solenoidal Lipschitz truncation on the grid.
//!
//! A solenoidal field `u` is written as `u = curl A` with `A = curl (-Laplace)^-1 u`. Cells where
//! the maximal function of `|grad^2 A|` exceeds a threshold form the bad set; the truncated
//! field is `u - curl((1 - zeta) A)`, where `zeta` vanishes near the bad set. The result is
//! exactly solenoidal, coincides with `u` away from the bad set, and has gradients of the
//! order of the threshold.

mod ensemble;

pub use ensemble::{
    ensemble_report, level_decay, null_sequence, test_dictionary, weak_pairings, BoundRow, DecayRow, DecayTable,
    EnsembleReport, NullSequenceSpec,
};

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::norms::gradient_magnitude;
use crate::fields::ops::{curl, curl_edges, div};
use crate::fields::poisson::VectorLaplacian;
use crate::fields::stencil::{d_to_cell, d_to_node, Bc};
use crate::fields::subcell::{gather, CORNERS};
use crate::fields::{FieldRef, Grid, Location, ScalarField, StaggeredField};
use crate::inequalities::sampling::smooth_cut;
use crate::operators::maximal_function;
use crate::solver::LocalBall;

/// Width of the cutoff transition, in cells: the first dyadic radius of the maximal function
/// beyond a single cell.
pub const COLLAR_CELLS: f64 = 2.0;

/// Largest admissible level; `2^(2^(j+1))` overflows `f64` beyond it.
pub const MAX_LEVEL: u32 = 8;

/// Thresholds `lambda_j` for the levels `j0, j0 + 1, ...` of one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationLevels {
    pub j0: u32,
    pub thresholds: Vec<f64>,
}

/// `[2^(2^j), 2^(2^(j+1) - 1)]`.
pub fn bracket(j: u32) -> (f64, f64) {
    let lo = 2f64.powi(1 << j);
    let hi = 2f64.powi((1 << (j + 1)) - 1);
    (lo, hi)
}

impl TruncationLevels {
    pub fn new(j0: u32, thresholds: Vec<f64>) -> Result<Self> {
        let levels = Self { j0, thresholds };
        levels.validate()?;
        Ok(levels)
    }

    /// Lower end of every bracket.
    pub fn lowest(j0: u32, j_max: u32) -> Result<Self> {
        check_range(j0, j_max)?;
        Self::new(j0, (j0..=j_max).map(|j| bracket(j).0).collect())
    }

    /// For every level, the power of two `2^k` in the bracket that minimises
    /// `2^(ks) |{M > 2^k}|`. Since the brackets are disjoint and the sum over all `k` is
    /// bounded by `|M|_s^s`, the chosen value satisfies the `2^(-j/s)` decay.
    pub fn select(grid: &Grid, u: &StaggeredField, j0: u32, j_max: u32, s: f64) -> Result<Self> {
        let maximal = second_gradient_maximal(grid, u)?;
        Self::select_from(grid, &maximal, j0, j_max, s)
    }

    pub(crate) fn select_from(grid: &Grid, maximal: &ScalarField, j0: u32, j_max: u32, s: f64) -> Result<Self> {
        check_range(j0, j_max)?;
        check_exponent(s)?;
        let vol = grid.cell_volume();
        let thresholds = (j0..=j_max)
            .map(|j| {
                let ks = (1u32 << j)..(1u32 << (j + 1));
                let cost = |k: u32| {
                    let lam = 2f64.powi(k as i32);
                    let count = maximal.data.iter().filter(|m| **m > lam).count();
                    lam.powf(s) * count as f64 * vol
                };
                // Ties go to the smallest power.
                let best = ks.fold((f64::INFINITY, 1u32 << j), |(c0, k0), k| {
                    let c = cost(k);
                    if c < c0 {
                        (c, k)
                    } else {
                        (c0, k0)
                    }
                });
                2f64.powi(best.1 as i32)
            })
            .collect();
        Self::new(j0, thresholds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(Error::InvalidParams("at least one truncation level is required".into()));
        }
        check_range(self.j0, self.j_max())?;
        for (j, lam) in self.levels().zip(&self.thresholds) {
            let (lo, hi) = bracket(j);
            if !(*lam >= lo && *lam <= hi) {
                return Err(Error::InvalidParams(format!("threshold {lam} outside [{lo}, {hi}] at level {j}")));
            }
        }
        Ok(())
    }

    pub fn j_max(&self) -> u32 {
        self.j0 + self.thresholds.len() as u32 - 1
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.j0..=self.j_max()
    }

    pub fn threshold(&self, j: u32) -> Result<f64> {
        if j < self.j0 || j > self.j_max() {
            return Err(Error::InvalidParams(format!("level {j} outside {}..={}", self.j0, self.j_max())));
        }
        Ok(self.thresholds[(j - self.j0) as usize])
    }
}

fn check_range(j0: u32, j_max: u32) -> Result<()> {
    if j_max < j0 || j_max > MAX_LEVEL {
        return Err(Error::InvalidParams(format!("levels {j0}..={j_max} must be ordered and at most {MAX_LEVEL}")));
    }
    Ok(())
}

pub(crate) fn check_exponent(s: f64) -> Result<()> {
    if !(s > 1.0 && s.is_finite()) {
        return Err(Error::InvalidParams(format!("exponent s = {s} must lie in (1, inf)")));
    }
    Ok(())
}

/// Cells where the maximal function exceeds the level threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct BadSet {
    pub level: u32,
    pub threshold: f64,
    pub mask: Array3<bool>,
}

impl BadSet {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn measure(&self, grid: &Grid) -> f64 {
        self.count() as f64 * grid.cell_volume()
    }
}

/// `A = curl (-Laplace)^-1 u` with componentwise Poisson solves on the grid box.
///
/// For a discretely solenoidal `u` vanishing near the walls, `curl A` reproduces `u`.
pub fn curl_inverse(grid: &Grid, u: &StaggeredField) -> Result<StaggeredField> {
    u.check(grid, Location::Faces)?;
    if !grid.is_box() {
        return Err(Error::Precondition("the vector potential is computed on box grids".into()));
    }
    let psi = VectorLaplacian::new(grid).solve(u);
    if !psi.is_finite() {
        return Err(Error::NonFinite("Poisson solve for the vector potential".into()));
    }
    curl(grid, &psi)
}

/// Divergence of an edge field at the interior nodes.
pub fn edge_divergence(grid: &Grid, a: &StaggeredField) -> Result<Array3<f64>> {
    a.check(grid, Location::Edges)?;
    let n = grid.cells;
    let h = grid.spacing;
    let mut out = Array3::zeros((n[0] - 1, n[1] - 1, n[2] - 1));
    for ((i, j, k), v) in out.indexed_iter_mut() {
        let node = [i + 1, j + 1, k + 1];
        let mut s = 0.0;
        for c in 0..3 {
            let mut lo = node;
            lo[c] -= 1;
            s += (a.comps[c][node] - a.comps[c][lo]) / h[c];
        }
        *v = s;
    }
    Ok(out)
}

/// One-axis difference flipping the alignment along `axis`. Wall nodes copy their neighbour,
/// so that second differences vanish across the walls instead of seeing a fictitious jump.
fn difference(arr: &Array3<f64>, stagger: [bool; 3], axis: usize, h: f64) -> (Array3<f64>, [bool; 3]) {
    let mut flipped = stagger;
    flipped[axis] = !stagger[axis];
    if stagger[axis] {
        return (d_to_cell(arr.view(), axis, h), flipped);
    }
    let mut out = d_to_node(arr.view(), axis, h, Bc::Zero);
    let n = out.len_of(Axis(axis));
    if n > 2 {
        let first = out.index_axis(Axis(axis), 1).to_owned();
        out.index_axis_mut(Axis(axis), 0).assign(&first);
        let last = out.index_axis(Axis(axis), n - 2).to_owned();
        out.index_axis_mut(Axis(axis), n - 1).assign(&last);
    }
    (out, flipped)
}

/// Frobenius norm of the second gradient of an edge field, per cell.
///
/// Second differences use compact stencils at their natural staggered locations and are
/// sampled in the corner subcells; each cell takes the largest of its eight values, so that
/// `|grad v| <= sqrt(2) |grad^2 A|` holds cellwise for `v = curl A`.
pub fn second_gradient_magnitude(grid: &Grid, a: &StaggeredField) -> Result<ScalarField> {
    a.check(grid, Location::Edges)?;
    let h = grid.spacing;
    let mut total = vec![0.0; grid.n_cells() * CORNERS];
    for c in 0..3 {
        let stagger = Location::Edges.stagger(c);
        for p in 0..3 {
            let (dp, sp) = difference(&a.comps[c], stagger, p, h[p]);
            for q in p..3 {
                let (dpq, spq) = difference(&dp, sp, q, h[q]);
                let weight = if p == q { 1.0 } else { 2.0 };
                for (t, v) in total.iter_mut().zip(gather(&dpq, spq, grid.cells)) {
                    *t += weight * v * v;
                }
            }
        }
    }
    let mut out = Array3::zeros(grid.cells);
    for (v, chunk) in out.iter_mut().zip(total.chunks(CORNERS)) {
        *v = chunk.iter().fold(0.0f64, |m, x| m.max(*x)).sqrt();
    }
    Ok(ScalarField { data: out })
}

/// `M(|grad^2 curl^-1 u|)` on cells.
pub fn second_gradient_maximal(grid: &Grid, u: &StaggeredField) -> Result<ScalarField> {
    let a = curl_inverse(grid, u)?;
    maximal_function(grid, &second_gradient_magnitude(grid, &a)?)
}

pub fn bad_set(maximal: &ScalarField, level: u32, threshold: f64) -> BadSet {
    BadSet { level, threshold, mask: maximal.data.mapv(|m| m > threshold) }
}

/// Cutoff at `x`: 0 within one cell of a bad cell centre, 1 beyond a further
/// [`COLLAR_CELLS`] cells.
fn cutoff_at(grid: &Grid, mask: &Array3<bool>, x: [f64; 3]) -> f64 {
    let h = grid.h();
    let reach = 1.0 + COLLAR_CELLS;
    let window = reach.ceil() as isize + 1;
    let n = grid.cells;
    let base = [0, 1, 2].map(|a| ((x[a] - grid.origin[a]) / grid.spacing[a]).floor() as isize);
    let mut nearest = f64::INFINITY;
    for di in -window..=window {
        for dj in -window..=window {
            for dk in -window..=window {
                let idx = [base[0] + di, base[1] + dj, base[2] + dk];
                if (0..3).any(|a| idx[a] < 0 || idx[a] >= n[a] as isize) {
                    continue;
                }
                let idx = idx.map(|v| v as usize);
                if !mask[idx] {
                    continue;
                }
                let c = grid.cell_center(idx);
                let d = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
                nearest = nearest.min(d);
            }
        }
    }
    let t = (nearest / h - 1.0) / COLLAR_CELLS;
    1.0 - smooth_cut(0.5 + 0.5 * t.clamp(0.0, 1.0))
}

/// Truncated field and its bad set.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub field: StaggeredField,
    pub bad_set: BadSet,
}

fn check_support(grid: &Grid, u: &StaggeredField, ball: &LocalBall) -> Result<()> {
    if !(ball.radius > 0.0) {
        return Err(Error::InvalidParams("ball radius must be positive".into()));
    }
    let half = [0, 1, 2].map(|a| grid.origin[a] + 0.5 * grid.spacing[a] * grid.cells[a] as f64);
    let inside = (0..3).all(|a| {
        let l = 0.5 * grid.spacing[a] * grid.cells[a] as f64;
        (ball.center[a] - half[a]).abs() + 2.0 * ball.radius <= l + 1e-12
    });
    if !inside {
        return Err(Error::Precondition("the doubled ball must lie inside the grid box".into()));
    }
    let tol = 1e-12 * u.max_abs().max(f64::MIN_POSITIVE);
    let slack = grid.h() * 3f64.sqrt();
    for c in 0..3 {
        let stagger = Location::Faces.stagger(c);
        for (idx, v) in u.comps[c].indexed_iter() {
            if v.abs() > tol {
                let x = grid.position(stagger, [idx.0, idx.1, idx.2]);
                let r = (0..3).map(|a| (x[a] - ball.center[a]).powi(2)).sum::<f64>().sqrt();
                if r > ball.radius + slack {
                    return Err(Error::Precondition(format!("field is nonzero at distance {r:.3} from the ball centre")));
                }
            }
        }
    }
    Ok(())
}

fn check_solenoidal(grid: &Grid, u: &StaggeredField) -> Result<()> {
    let scale = u.max_abs() / grid.h();
    let d = div(grid, u)?.max_abs();
    if d > 1e-8 * scale.max(1.0) {
        return Err(Error::Precondition(format!("field is not solenoidal (max |div| = {d:.3e})")));
    }
    Ok(())
}

/// Truncation of `u` at level `j`: `u - curl((1 - zeta) A)` with `A = curl^-1 u`.
pub fn truncate(grid: &Grid, u: &StaggeredField, ball: &LocalBall, levels: &TruncationLevels, j: u32) -> Result<Truncation> {
    u.check(grid, Location::Faces)?;
    levels.validate()?;
    let threshold = levels.threshold(j)?;
    check_support(grid, u, ball)?;
    check_solenoidal(grid, u)?;
    let a = curl_inverse(grid, u)?;
    let maximal = maximal_function(grid, &second_gradient_magnitude(grid, &a)?)?;
    let bad = bad_set(&maximal, j, threshold);
    truncate_with(grid, u, &a, ball, bad)
}

pub(crate) fn truncate_with(grid: &Grid, u: &StaggeredField, a: &StaggeredField, ball: &LocalBall, bad: BadSet) -> Result<Truncation> {
    let mut inside = 0usize;
    let mut covered = 0usize;
    for (idx, b) in bad.mask.indexed_iter() {
        let x = grid.cell_center([idx.0, idx.1, idx.2]);
        let r = (0..3).map(|c| (x[c] - ball.center[c]).powi(2)).sum::<f64>().sqrt();
        if r <= 2.0 * ball.radius {
            inside += 1;
            covered += *b as usize;
        }
    }
    if inside > 0 && covered == inside {
        return Err(Error::Degenerate(format!("bad set at level {} covers the doubled ball", bad.level)));
    }
    if bad.is_empty() {
        return Ok(Truncation { field: u.clone(), bad_set: bad });
    }
    let mut outer = a.clone();
    for c in 0..3 {
        let stagger = Location::Edges.stagger(c);
        for (idx, v) in outer.comps[c].indexed_iter_mut() {
            let x = grid.position(stagger, [idx.0, idx.1, idx.2]);
            *v *= 1.0 - cutoff_at(grid, &bad.mask, x);
        }
    }
    let field = u.sub(&curl_edges(grid, &outer)?);
    if !field.is_finite() {
        return Err(Error::NonFinite("truncated field".into()));
    }
    Ok(Truncation { field, bad_set: bad })
}

/// `max |grad v|` over corner subcells.
pub fn gradient_sup(grid: &Grid, v: &StaggeredField) -> Result<f64> {
    Ok(gradient_magnitude(grid, FieldRef::Vector(v))?.into_iter().fold(0.0, f64::max))
}

/// `|grad v|_s` with corner-subcell quadrature.
pub fn gradient_norm(grid: &Grid, v: &StaggeredField, s: f64) -> Result<f64> {
    let vol = grid.cell_volume() / 8.0;
    Ok((gradient_magnitude(grid, FieldRef::Vector(v))?.iter().map(|g| g.powf(s)).sum::<f64>() * vol).powf(1.0 / s))
}

/// Cells of `mask` as a scalar indicator, for output.
pub fn mask_field(bad: &BadSet) -> ScalarField {
    ScalarField { data: bad.mask.mapv(|b| if b { 1.0 } else { 0.0 }) }
}

#[cfg(test)]
mod tests;
