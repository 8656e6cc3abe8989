//! Truncation of a whole sequence: decay tables, gradient bounds and the demo null sequence.

use serde::{Deserialize, Serialize};

use super::{
    bad_set, check_exponent, curl_inverse, gradient_norm, gradient_sup, second_gradient_magnitude, truncate_with,
    TruncationLevels, COLLAR_CELLS,
};
use crate::error::{Error, Result};
use crate::fields::ops::{corner_gradient, curl_edges, div, CornerTensor};
use crate::fields::subcell::{subcell_centers, subcell_volume};
use crate::fields::{Grid, Location, ScalarField, StaggeredField};
use crate::operators::maximal_function;
use crate::solver::LocalBall;

/// Shrinking, gradient-normalised profiles with a mild gradient singularity at the centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NullSequenceSpec {
    #[serde(default = "default_count")]
    pub count: usize,
    /// Support radius ratio between consecutive members.
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    /// `|grad u| ~ |x - x0|^-a` near the centre; `a < 3/2` keeps the gradient square integrable.
    #[serde(default = "default_singularity")]
    pub singularity: f64,
    /// Common value of `|grad u^m|_2`.
    #[serde(default = "default_gradient_scale")]
    pub gradient_scale: f64,
}

fn default_count() -> usize {
    5
}
fn default_shrink() -> f64 {
    0.75
}
fn default_singularity() -> f64 {
    1.2
}
fn default_gradient_scale() -> f64 {
    2.0
}

impl Default for NullSequenceSpec {
    fn default() -> Self {
        Self {
            count: default_count(),
            shrink: default_shrink(),
            singularity: default_singularity(),
            gradient_scale: default_gradient_scale(),
        }
    }
}

impl NullSequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParams("null sequence needs at least one member".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParams("shrink factor must lie in (0, 1)".into()));
        }
        if !(self.singularity >= 0.0 && self.singularity < 1.5) {
            return Err(Error::InvalidParams("singularity exponent must lie in [0, 3/2)".into()));
        }
        if !(self.gradient_scale > 0.0 && self.gradient_scale.is_finite()) {
            return Err(Error::InvalidParams("gradient scale must be positive".into()));
        }
        Ok(())
    }
}

/// `u^m = curl(phi_m e_(m mod 3))` with `phi_m(x) = t^(2-a) (1 - t^2)^3`, `t = |x - x0| / r_m`,
/// radii shrinking geometrically inside `ball`, each scaled to the common gradient norm.
/// The sequence tends to zero in `L^2` while `|grad u^m|_2` stays fixed.
pub fn null_sequence(grid: &Grid, ball: &LocalBall, spec: &NullSequenceSpec) -> Result<Vec<StaggeredField>> {
    spec.validate()?;
    let r0 = ball.radius - grid.h();
    if r0 <= 2.0 * grid.h() {
        return Err(Error::InvalidParams("ball is too small for the grid".into()));
    }
    let expo = 2.0 - spec.singularity;
    (0..spec.count)
        .map(|m| {
            let r = r0 * spec.shrink.powi(m as i32);
            if r < 1.5 * grid.h() {
                return Err(Error::InvalidParams(format!("member {m} has radius {r:.3}, below 1.5 cells")));
            }
            let axis = m % 3;
            let mut psi = StaggeredField::zeros(grid, Location::Edges);
            let stagger = Location::Edges.stagger(axis);
            for (idx, v) in psi.comps[axis].indexed_iter_mut() {
                let x = grid.position(stagger, [idx.0, idx.1, idx.2]);
                let t = (0..3).map(|a| (x[a] - ball.center[a]).powi(2)).sum::<f64>().sqrt() / r;
                if t < 1.0 {
                    *v = t.powf(expo) * (1.0 - t * t).powi(3);
                }
            }
            let u = curl_edges(grid, &psi)?;
            let g = gradient_norm(grid, &u, 2.0)?;
            Ok(u.scaled(spec.gradient_scale / g))
        })
        .collect()
}

/// Ten smooth tensor fields at the corner subcells, used to test weak-* convergence of gradients.
pub fn test_dictionary(grid: &Grid) -> Vec<CornerTensor> {
    let centers = subcell_centers(grid);
    let length = [0, 1, 2].map(|a| grid.spacing[a] * grid.cells[a] as f64);
    (0..10)
        .map(|k| {
            let freq = [1 + k % 3, 1 + (k / 3) % 3, 1 + (k + 1) % 2].map(|f| f as f64 * std::f64::consts::PI);
            std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    let phase = 0.7 * (i * 3 + j + k) as f64;
                    centers
                        .iter()
                        .map(|x| {
                            let y = [0, 1, 2].map(|a| (x[a] - grid.origin[a]) / length[a]);
                            (freq[0] * y[0] + phase).sin() * (freq[1] * y[1]).cos() * (freq[2] * y[2] + 0.3 * phase).sin()
                        })
                        .collect()
                })
            })
        })
        .collect()
}

/// `<grad v, phi>` for every entry of `dictionary`.
pub fn weak_pairings(grid: &Grid, v: &StaggeredField, dictionary: &[CornerTensor]) -> Result<Vec<f64>> {
    v.check(grid, Location::Faces)?;
    let g = corner_gradient(grid, v);
    let vol = subcell_volume(grid);
    Ok(dictionary
        .iter()
        .map(|phi| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += g[i][j].iter().zip(&phi[i][j]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            s * vol
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub member: usize,
    pub level: u32,
    pub threshold: f64,
    pub bad_measure: f64,
    /// `|lambda chi_O|_s / |grad u|_s`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub exponent_s: f64,
    pub rows: Vec<DecayRow>,
    /// `(j, max_m value)`: the ensemble envelope at every level.
    pub envelope: Vec<(u32, f64)>,
    /// Least-squares slope of `log2` of the envelope against the level, over the levels with a
    /// nonempty bad set; `None` with fewer than two such levels.
    pub fitted_exponent: Option<f64>,
    /// Smallest `c` with `value <= c 2^(-j/s)` for every row.
    pub bound_constant: f64,
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn check_sequence(levels: &[TruncationLevels], count: usize) -> Result<()> {
    if levels.len() != count {
        return Err(Error::InvalidParams(format!("{} level sets for {count} fields", levels.len())));
    }
    Ok(())
}

pub(crate) fn decay_table(
    grid: &Grid,
    maximal: &[ScalarField],
    gradients: &[f64],
    levels: &[TruncationLevels],
    s: f64,
) -> DecayTable {
    let mut rows = Vec::new();
    for (m, (lv, mf)) in levels.iter().zip(maximal).enumerate() {
        for (j, &lam) in lv.levels().zip(&lv.thresholds) {
            let measure = bad_set(mf, j, lam).measure(grid);
            let value = if gradients[m] > 0.0 { lam * measure.powf(1.0 / s) / gradients[m] } else { 0.0 };
            rows.push(DecayRow { member: m, level: j, threshold: lam, bad_measure: measure, value });
        }
    }
    let mut envelope: Vec<(u32, f64)> = Vec::new();
    for r in &rows {
        match envelope.iter_mut().find(|(j, _)| *j == r.level) {
            Some(e) => e.1 = e.1.max(r.value),
            None => envelope.push((r.level, r.value)),
        }
    }
    envelope.sort_by_key(|e| e.0);
    let points: Vec<(f64, f64)> = envelope.iter().filter(|e| e.1 > 0.0).map(|e| (e.0 as f64, e.1.log2())).collect();
    let fitted_exponent = slope(&points);
    let bound_constant = rows.iter().map(|r| r.value * 2f64.powf(r.level as f64 / s)).fold(0.0, f64::max);
    DecayTable { exponent_s: s, rows, envelope, fitted_exponent, bound_constant }
}

/// `|lambda^(m,j) chi_O^(m,j)|_s / |grad u^m|_s` for every member and level.
pub fn level_decay(grid: &Grid, sequence: &[StaggeredField], levels: &[TruncationLevels], s: f64) -> Result<DecayTable> {
    check_exponent(s)?;
    check_sequence(levels, sequence.len())?;
    let mut maximal = Vec::new();
    let mut gradients = Vec::new();
    for u in sequence {
        let a = curl_inverse(grid, u)?;
        maximal.push(maximal_function(grid, &second_gradient_magnitude(grid, &a)?)?);
        gradients.push(gradient_norm(grid, u, s)?);
    }
    Ok(decay_table(grid, &maximal, &gradients, levels, s))
}

/// Properties of one truncated member at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub member: usize,
    pub level: u32,
    pub threshold: f64,
    pub bad_cells: usize,
    /// `max |grad u^(m,j)|`.
    pub gradient_sup: f64,
    /// `gradient_sup / threshold`.
    pub ratio: f64,
    /// `max |u^(m,j)|`.
    pub sup_norm: f64,
    /// `max |div u^(m,j)|`.
    pub divergence_max: f64,
    /// `max |u^(m,j) - u^m|` at faces beyond the cutoff collar of the bad set.
    pub outside_change: f64,
    /// `max_k |<grad u^(m,j), phi_k>|` over the test dictionary.
    pub pairing_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub levels: Vec<TruncationLevels>,
    pub decay: DecayTable,
    pub bounds: Vec<BoundRow>,
    /// Smallest `c` with `|grad u^(m,j)|_inf <= c lambda^(m,j)` for every row.
    pub fitted_constant: f64,
    pub divergence_max: f64,
    /// Largest relative reconstruction error `|curl A - u|_2 / |u|_2` over the members.
    pub reconstruction_error: f64,
}

/// True when `x` is at least `cap` cells from every bad cell centre.
fn beyond_collar(grid: &Grid, mask: &ndarray::Array3<bool>, x: [f64; 3], cap: f64) -> bool {
    let n = grid.cells;
    let h = grid.h();
    let w = cap.ceil() as isize + 1;
    let base = [0, 1, 2].map(|a| ((x[a] - grid.origin[a]) / grid.spacing[a]).floor() as isize);
    for di in -w..=w {
        for dj in -w..=w {
            for dk in -w..=w {
                let idx = [base[0] + di, base[1] + dj, base[2] + dk];
                if (0..3).any(|a| idx[a] < 0 || idx[a] >= n[a] as isize) {
                    continue;
                }
                let idx = idx.map(|v| v as usize);
                if mask[idx] {
                    let c = grid.cell_center(idx);
                    let d = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
                    if d < cap * h {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Selects thresholds for every member, truncates at every level and collects the
/// properties of the construction.
pub fn ensemble_report(
    grid: &Grid,
    sequence: &[StaggeredField],
    ball: &LocalBall,
    j0: u32,
    j_max: u32,
    s: f64,
) -> Result<EnsembleReport> {
    check_exponent(s)?;
    if sequence.is_empty() {
        return Err(Error::InvalidParams("empty sequence".into()));
    }
    let dictionary = test_dictionary(grid);
    let mut levels = Vec::new();
    let mut maximal = Vec::new();
    let mut gradients = Vec::new();
    let mut bounds = Vec::new();
    let mut reconstruction_error = 0.0f64;
    // One stencil reach beyond the collar.
    let cap = 1.0 + COLLAR_CELLS + 1.5;
    for (m, u) in sequence.iter().enumerate() {
        super::check_support(grid, u, ball)?;
        super::check_solenoidal(grid, u)?;
        let a = curl_inverse(grid, u)?;
        let un = u.norm_l2(grid);
        if un > 0.0 {
            reconstruction_error = reconstruction_error.max(curl_edges(grid, &a)?.sub(u).norm_l2(grid) / un);
        }
        let mf = maximal_function(grid, &second_gradient_magnitude(grid, &a)?)?;
        let lv = TruncationLevels::select_from(grid, &mf, j0, j_max, s)?;
        for (j, &lam) in lv.levels().zip(&lv.thresholds) {
            let t = truncate_with(grid, u, &a, ball, bad_set(&mf, j, lam))?;
            let gsup = gradient_sup(grid, &t.field)?;
            let change = t.field.sub(u);
            let mut outside_change = 0.0f64;
            for c in 0..3 {
                let stagger = Location::Faces.stagger(c);
                for (idx, v) in change.comps[c].indexed_iter() {
                    if v.abs() > outside_change
                        && beyond_collar(grid, &t.bad_set.mask, grid.position(stagger, [idx.0, idx.1, idx.2]), cap)
                    {
                        outside_change = v.abs();
                    }
                }
            }
            let pairing_max = weak_pairings(grid, &t.field, &dictionary)?.into_iter().fold(0.0f64, |x, y| x.max(y.abs()));
            bounds.push(BoundRow {
                member: m,
                level: j,
                threshold: lam,
                bad_cells: t.bad_set.count(),
                gradient_sup: gsup,
                ratio: gsup / lam,
                sup_norm: t.field.max_abs(),
                divergence_max: div(grid, &t.field)?.max_abs(),
                outside_change,
                pairing_max,
            });
        }
        gradients.push(gradient_norm(grid, u, s)?);
        maximal.push(mf);
        levels.push(lv);
    }
    let decay = decay_table(grid, &maximal, &gradients, &levels, s);
    let fitted_constant = bounds.iter().map(|b| b.ratio).fold(0.0, f64::max);
    let divergence_max = bounds.iter().map(|b| b.divergence_max).fold(0.0, f64::max);
    Ok(EnsembleReport { levels, decay, bounds, fitted_constant, divergence_max, reconstruction_error })
}
