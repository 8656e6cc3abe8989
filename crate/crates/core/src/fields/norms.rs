//! Plain, weighted, Sobolev and fractional norms.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::ops::corner_gradient;
use super::stencil::{avg_to_cell, d_to_node, Bc};
use super::subcell::{gather, subcell_centers, subcell_volume, CORNERS};
use super::{Grid, Location, ScalarField, StaggeredField};
use crate::error::{Error, Result};
use crate::geometry::{power, DomainSpec};

/// Largest grid accepted by the fractional seminorm double sum.
pub const FRACTIONAL_MAX_CELLS: usize = 32 * 32 * 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    /// Exponent in `(1, inf]`; `p = 1` is accepted for plain integrals.
    pub p: f64,
    /// Power of the boundary distance used as weight.
    #[serde(default)]
    pub weight_alpha: Option<f64>,
    #[serde(default)]
    pub sobolev_order: u8,
    #[serde(default)]
    pub fractional_s: Option<f64>,
}

impl NormSpec {
    pub fn lp(p: f64) -> Self {
        Self { p, weight_alpha: None, sobolev_order: 0, fractional_s: None }
    }

    pub fn weighted(p: f64, alpha: f64) -> Self {
        Self { weight_alpha: Some(alpha), ..Self::lp(p) }
    }

    pub fn sobolev(p: f64, alpha: Option<f64>) -> Self {
        Self { weight_alpha: alpha, sobolev_order: 1, ..Self::lp(p) }
    }

    pub fn fractional(p: f64, s: f64) -> Self {
        Self { fractional_s: Some(s), ..Self::lp(p) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) {
            return Err(Error::InvalidParams(format!("norm exponent {} below 1", self.p)));
        }
        if self.sobolev_order > 1 {
            return Err(Error::InvalidParams("sobolev order must be 0 or 1".into()));
        }
        if let Some(s) = self.fractional_s {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidParams(format!("fractional order {s} not in (0,1)")));
            }
            if self.sobolev_order != 0 || self.weight_alpha.is_some() {
                return Err(Error::InvalidParams("fractional seminorm is unweighted and of order 0".into()));
            }
            if !self.p.is_finite() {
                return Err(Error::InvalidParams("fractional seminorm needs finite p".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub enum FieldRef<'a> {
    Scalar(&'a ScalarField),
    Vector(&'a StaggeredField),
}

/// Pointwise magnitude at cell centres (face and edge components averaged).
pub fn cell_magnitude(grid: &Grid, field: FieldRef) -> Result<Array3<f64>> {
    match field {
        FieldRef::Scalar(s) => {
            s.check(grid)?;
            Ok(s.data.mapv(f64::abs))
        }
        FieldRef::Vector(v) => {
            v.check(grid, v.location)?;
            let mut sq = Array3::<f64>::zeros(grid.cells);
            for c in 0..3 {
                let mut a = v.comps[c].clone();
                for (axis, node) in v.location.stagger(c).into_iter().enumerate() {
                    if node {
                        a = avg_to_cell(a.view(), axis);
                    }
                }
                sq += &(&a * &a);
            }
            Ok(sq.mapv(f64::sqrt))
        }
    }
}

/// Cell-averaged weight: centre value, or the mean over the eight subcell centres in cells
/// touching the boundary when `alpha < 0`.
pub fn cell_weights(grid: &Grid, domain: &DomainSpec, alpha: f64) -> Array3<f64> {
    let mut w = Array3::zeros(grid.cells);
    if alpha == 0.0 {
        w.fill(1.0);
        return w;
    }
    let centers = subcell_centers(grid);
    let hmax = grid.h();
    w.indexed_iter_mut().enumerate().for_each(|(lin, ((i, j, k), v))| {
        let x = grid.cell_center([i, j, k]);
        let d = domain.distance_clamped(&x);
        *v = if alpha < 0.0 && d < hmax {
            centers[lin * CORNERS..(lin + 1) * CORNERS]
                .iter()
                .map(|y| power(domain.distance_clamped(y), alpha))
                .sum::<f64>()
                / CORNERS as f64
        } else {
            power(d, alpha)
        };
    });
    w
}

/// `d^alpha` at every subcell centre.
pub fn subcell_weights(grid: &Grid, domain: &DomainSpec, alpha: f64) -> Vec<f64> {
    if alpha == 0.0 {
        return vec![1.0; grid.n_cells() * CORNERS];
    }
    subcell_centers(grid).iter().map(|x| power(domain.distance_clamped(x), alpha)).collect()
}

/// `(sum_q w_q |f_q|^p * vol)^(1/p)`, or the weighted maximum for `p = inf`.
fn lp_sum(values: impl Iterator<Item = (f64, f64)>, p: f64, vol: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, |m, (f, w)| m.max(f.abs() * w))
    } else {
        (values.map(|(f, w)| w * f.abs().powf(p)).sum::<f64>() * vol).powf(1.0 / p)
    }
}

/// Frobenius norm of the gradient in every corner subcell.
pub fn gradient_magnitude(grid: &Grid, field: FieldRef) -> Result<Vec<f64>> {
    match field {
        FieldRef::Scalar(s) => {
            s.check(grid)?;
            let g: Vec<Vec<f64>> = (0..3)
                .map(|a| {
                    let d = d_to_node(s.data.view(), a, grid.spacing[a], Bc::Mirror);
                    gather(&d, Location::Faces.stagger(a), grid.cells)
                })
                .collect();
            Ok((0..g[0].len()).map(|q| (g[0][q].powi(2) + g[1][q].powi(2) + g[2][q].powi(2)).sqrt()).collect())
        }
        FieldRef::Vector(v) => {
            v.check(grid, Location::Faces)?;
            let g = corner_gradient(grid, v);
            let n = g[0][0].len();
            Ok((0..n)
                .map(|q| {
                    let mut s = 0.0;
                    for row in &g {
                        for comp in row {
                            s += comp[q] * comp[q];
                        }
                    }
                    s.sqrt()
                })
                .collect())
        }
    }
}

/// Norm of `field` selected by `spec`.
///
/// Zeroth-order terms use cell-centre quadrature; gradient terms use one point per corner
/// subcell. `Ω` is the grid's domain; cells of the bounding box outside a ball domain count
/// with zero weight.
pub fn norm(grid: &Grid, field: FieldRef, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let domain = &grid.domain;
    if let Some(s) = spec.fractional_s {
        let mag = match field {
            FieldRef::Scalar(sf) => {
                sf.check(grid)?;
                sf.data.clone()
            }
            FieldRef::Vector(_) => cell_magnitude(grid, field)?,
        };
        return fractional_seminorm(grid, &mag, s, spec.p);
    }
    let alpha = spec.weight_alpha.unwrap_or(0.0);
    let inside = |x: &[f64; 3]| domain.signed_distance(x) > 0.0;
    let mag = cell_magnitude(grid, field)?;
    let cw = cell_weights(grid, domain, alpha);
    let mask: Vec<f64> = mag
        .indexed_iter()
        .map(|((i, j, k), _)| if inside(&grid.cell_center([i, j, k])) { 1.0 } else { 0.0 })
        .collect();
    let zeroth = lp_sum(
        mag.iter().zip(cw.iter()).zip(&mask).map(|((f, w), m)| (*f, w * m)),
        spec.p,
        grid.cell_volume(),
    );
    if spec.sobolev_order == 0 {
        return Ok(zeroth);
    }
    let gm = gradient_magnitude(grid, field)?;
    let sw = subcell_weights(grid, domain, alpha);
    let centers = subcell_centers(grid);
    let first = lp_sum(
        gm.iter().zip(&sw).zip(&centers).map(|((f, w), x)| (*f, if inside(x) { *w } else { 0.0 })),
        spec.p,
        subcell_volume(grid),
    );
    Ok(if spec.p.is_infinite() { zeroth.max(first) } else { (zeroth.powf(spec.p) + first.powf(spec.p)).powf(1.0 / spec.p) })
}

/// `[u]_{s,p} = (sum_{i != j} |u_i - u_j|^p / |x_i - x_j|^(3 + s p) V^2)^(1/p)`.
pub fn fractional_seminorm(grid: &Grid, u: &Array3<f64>, s: f64, p: f64) -> Result<f64> {
    let n = grid.n_cells();
    if n > FRACTIONAL_MAX_CELLS {
        return Err(Error::CostGuard(format!(
            "fractional seminorm on {n} cells exceeds the limit of {FRACTIONAL_MAX_CELLS}"
        )));
    }
    let pts: Vec<([f64; 3], f64)> = u
        .indexed_iter()
        .map(|((i, j, k), v)| (grid.cell_center([i, j, k]), *v))
        .filter(|(x, _)| grid.domain.signed_distance(x) > 0.0)
        .collect();
    let expo = (3.0 + s * p) / 2.0;
    let mut acc = 0.0;
    for (a, (xa, ua)) in pts.iter().enumerate() {
        for (xb, ub) in &pts[a + 1..] {
            let diff = (ua - ub).abs();
            if diff == 0.0 {
                continue;
            }
            let r2 = (0..3).map(|c| (xa[c] - xb[c]).powi(2)).sum::<f64>();
            acc += diff.powf(p) / r2.powf(expo);
        }
    }
    let vol = grid.cell_volume();
    Ok((2.0 * acc * vol * vol).powf(1.0 / p))
}

/// One-dimensional norms on `(0, length)` with values at the `n` cell centres.
pub fn norm_1d(values: &[f64], length: f64, spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidParams("empty sample".into()));
    }
    let h = length / n as f64;
    let x = |i: usize| (i as f64 + 0.5) * h;
    if let Some(s) = spec.fractional_s {
        return Ok(fractional_1d(values, length, s, spec.p));
    }
    let alpha = spec.weight_alpha.unwrap_or(0.0);
    let weight = |i: usize| {
        let d = |y: f64| y.min(length - y);
        if alpha < 0.0 && (i == 0 || i + 1 == n) {
            0.5 * (power(d(x(i) - 0.25 * h), alpha) + power(d(x(i) + 0.25 * h), alpha))
        } else {
            power(d(x(i)), alpha)
        }
    };
    let zeroth = lp_sum(values.iter().enumerate().map(|(i, v)| (*v, weight(i))), spec.p, h);
    if spec.sobolev_order == 0 {
        return Ok(zeroth);
    }
    let slopes = derivative_1d(values, h);
    let first = lp_sum(
        slopes.iter().enumerate().map(|(m, v)| {
            let w = power((m as f64 * h).min(length - m as f64 * h).max(0.25 * h), alpha);
            let dual = if m == 0 || m == n { 0.5 } else { 1.0 };
            (*v, w * dual)
        }),
        spec.p,
        h,
    );
    Ok(if spec.p.is_infinite() { zeroth.max(first) } else { (zeroth.powf(spec.p) + first.powf(spec.p)).powf(1.0 / spec.p) })
}

/// Node derivatives of cell values with zero Dirichlet data at both ends (`n + 1` values).
pub fn derivative_1d(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(2.0 * values[0] / h);
    for m in 1..n {
        out.push((values[m] - values[m - 1]) / h);
    }
    out.push(-2.0 * values[n - 1] / h);
    out
}

/// `[u]_{s,p}` on an interval with kernel `|x - y|^{-(1 + s p)}`.
pub fn fractional_1d(values: &[f64], length: f64, s: f64, p: f64) -> f64 {
    let n = values.len();
    let h = length / n as f64;
    let mut acc = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let diff = (values[a] - values[b]).abs();
            if diff > 0.0 {
                acc += diff.powf(p) / (((b - a) as f64) * h).powf(1.0 + s * p);
            }
        }
    }
    (2.0 * acc * h * h).powf(1.0 / p)
}
