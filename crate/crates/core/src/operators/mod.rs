//! Degenerate stress law, monotone p-operators, the Bogovskiĭ operator and the maximal
//! function.

pub mod bogovskii;
pub mod maximal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ops::{corner_gradient_adjoint, corner_sym_gradient, CornerTensor, CornerVector};
use crate::fields::subcell::{gather, scatter, subcell_volume, CORNERS};
use crate::fields::{norms::subcell_weights, Grid, Location, StaggeredField};
use crate::geometry::PowerWeight;

pub use bogovskii::{
    bogovskii, bogovskii_batch, bogovskii_quadrature, divergence_residual, zero_mean_sample, BogovskiiKernel,
};
pub use maximal::maximal_function;

/// Exponents of `S(omega) = d^alpha (kappa + |omega|)^(p-2) omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressParams {
    pub p: f64,
    pub alpha: f64,
    pub kappa: f64,
}

impl StressParams {
    pub fn new(p: f64, alpha: f64, kappa: f64) -> Result<Self> {
        let s = Self { p, alpha, kappa };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::InvalidParams(format!("stress exponent p = {} must exceed 1", self.p)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("weight power alpha = {} must be >= 0", self.alpha)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParams(format!("shift kappa = {} must be >= 0", self.kappa)));
        }
        Ok(())
    }

    /// Scalar factor `(kappa + |omega|)^(p-2)` times the weight, continuous at `omega = 0`.
    #[inline]
    pub fn coefficient(&self, weight: f64, magnitude: f64) -> f64 {
        let base = self.kappa + magnitude;
        if base == 0.0 {
            return 0.0;
        }
        weight * base.powf(self.p - 2.0)
    }

    /// Potential `Phi` with `grad Phi = S`: `weight * int_0^|omega| (kappa + t)^(p-2) t dt`.
    pub fn potential(&self, weight: f64, magnitude: f64) -> f64 {
        let (k, p, m) = (self.kappa, self.p, magnitude);
        if m == 0.0 {
            return 0.0;
        }
        if k == 0.0 {
            return weight * m.powf(p) / p;
        }
        // int_0^m (k+t)^(p-2) t dt = [(k+t)^p/p - k (k+t)^(p-1)/(p-1)]_0^m
        let f = |t: f64| (k + t).powf(p) / p - k * (k + t).powf(p - 1.0) / (p - 1.0);
        weight * (f(m) - f(0.0))
    }
}

/// Pointwise stress for boundary distance weight value `weight`.
#[inline]
pub fn stress_value(params: &StressParams, weight: f64, omega: [f64; 3]) -> [f64; 3] {
    let m = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
    let c = params.coefficient(weight, m);
    [c * omega[0], c * omega[1], c * omega[2]]
}

/// `(S(omega1) - S(omega2)) . (omega1 - omega2)` at one point.
pub fn monotonicity_integrand(params: &StressParams, weight: f64, omega1: [f64; 3], omega2: [f64; 3]) -> f64 {
    let s1 = stress_value(params, weight, omega1);
    let s2 = stress_value(params, weight, omega2);
    (0..3).map(|a| (s1[a] - s2[a]) * (omega1[a] - omega2[a])).sum()
}

/// Stress in every corner subcell for corner-collocated vorticity.
pub fn corner_stress(params: &StressParams, weights: &[f64], omega: &CornerVector) -> CornerVector {
    let n = weights.len();
    let mut out: CornerVector = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for q in 0..n {
        let s = stress_value(params, weights[q], [omega[0][q], omega[1][q], omega[2][q]]);
        for a in 0..3 {
            out[a][q] = s[a];
        }
    }
    out
}

fn check_weight(params: &StressParams, w: &PowerWeight) -> Result<()> {
    params.validate()?;
    if params.alpha != w.alpha {
        return Err(Error::InvalidParams(format!(
            "stress power {} differs from the weight power {}",
            params.alpha, w.alpha
        )));
    }
    Ok(())
}

fn gather_edges(grid: &Grid, omega: &StaggeredField) -> Result<CornerVector> {
    omega.check(grid, Location::Edges)?;
    Ok([0, 1, 2].map(|c| gather(&omega.comps[c], Location::Edges.stagger(c), grid.cells)))
}

/// Stress of an edge-collocated vorticity, evaluated in the corner subcells and averaged back
/// to each edge over the subcells touching it.
pub fn stress(params: &StressParams, w: &PowerWeight, grid: &Grid, omega: &StaggeredField) -> Result<StaggeredField> {
    check_weight(params, w)?;
    let oc = gather_edges(grid, omega)?;
    let weights = subcell_weights(grid, &w.domain, w.alpha);
    let sc = corner_stress(params, &weights, &oc);
    let ones = vec![1.0; weights.len()];
    let comps = [0, 1, 2].map(|c| {
        let stag = Location::Edges.stagger(c);
        let sum = scatter(&sc[c], stag, grid.cells);
        let count = scatter(&ones, stag, grid.cells);
        sum / count
    });
    Ok(StaggeredField { location: Location::Edges, comps })
}

/// `sum_subcells (V/8) (S(omega1) - S(omega2)) . (omega1 - omega2)`.
pub fn monotonicity_gap(
    params: &StressParams,
    w: &PowerWeight,
    grid: &Grid,
    omega1: &StaggeredField,
    omega2: &StaggeredField,
) -> Result<f64> {
    check_weight(params, w)?;
    let a = gather_edges(grid, omega1)?;
    let b = gather_edges(grid, omega2)?;
    let weights = subcell_weights(grid, &w.domain, w.alpha);
    let total: f64 = (0..weights.len())
        .map(|q| {
            monotonicity_integrand(params, weights[q], [a[0][q], a[1][q], a[2][q]], [b[0][q], b[1][q], b[2][q]])
        })
        .sum();
    Ok(total * subcell_volume(grid))
}

/// `|D|^(p-2) D` per subcell (zero where `D = 0`).
pub fn power_law_flux(d: &CornerTensor, p: f64) -> CornerTensor {
    let n = d[0][0].len();
    let mut out: CornerTensor = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; n]));
    for q in 0..n {
        let mut s = 0.0;
        for row in d {
            for comp in row {
                s += comp[q] * comp[q];
            }
        }
        let m = s.sqrt();
        let c = if m == 0.0 { 0.0 } else { m.powf(p - 2.0) };
        for i in 0..3 {
            for j in 0..3 {
                out[i][j][q] = c * d[i][j][q];
            }
        }
    }
    out
}

/// `-eps div(|Dv|^(p_reg - 2) Dv)` as the exact gradient of `eps/p_reg sum (V/8)|Dv|^p_reg`.
pub fn p_stokes_operator(grid: &Grid, v: &StaggeredField, p_reg: f64, eps: f64) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    if !(p_reg > 1.0) {
        return Err(Error::InvalidParams(format!("regularization exponent {p_reg} must exceed 1")));
    }
    if eps == 0.0 {
        return Ok(StaggeredField::zeros(grid, Location::Faces));
    }
    let d = corner_sym_gradient(grid, v);
    let flux = power_law_flux(&d, p_reg);
    Ok(corner_gradient_adjoint(grid, &flux).scaled(eps))
}

/// Number of corner subcells.
pub fn n_subcells(grid: &Grid) -> usize {
    grid.n_cells() * CORNERS
}
