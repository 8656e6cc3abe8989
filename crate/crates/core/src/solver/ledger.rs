//! Energy bookkeeping for converged solutions.

use serde::{Deserialize, Serialize};

use super::{Forcing, Model, ModelParams, RegFlavor};
use crate::error::Result;
use crate::fields::norms::gradient_magnitude;
use crate::fields::ops::{corner_sym_gradient, corner_vorticity};
use crate::fields::poisson::VectorLaplacian;
use crate::fields::subcell::{subcell_distances, subcell_volume};
use crate::fields::{FieldRef, Grid, StaggeredField};
use crate::geometry::power;

/// Exponents `q < 3/2` for the unweighted gradient bounds.
pub const GRADIENT_EXPONENTS: [f64; 3] = [1.2, 1.33, 1.45];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCase {
    /// `nu0 > 0`: bound by the dual norm of `f`.
    Viscous,
    /// Degenerate model with `alpha < 6/5`: energy equality checked.
    Equality,
    /// Degenerate model with `alpha >= 6/5`: only the weak form is meaningful.
    WeakFormOnly,
}

/// Terms of the energy estimate obtained by testing the equation with the solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub case: EnergyCase,
    /// `eps int |Dv|^r` (symmetric-gradient flavor) or `int ((eps+d)^a - d^a) |omega|^p`.
    pub regularization: f64,
    /// `int d^alpha |omega|^p`.
    pub weighted_vorticity: f64,
    /// `int S(omega) . omega` with the weight actually used in the stress.
    pub stress_work: f64,
    /// `nu0 int |Dv|^2`.
    pub viscous: f64,
    /// `<C(v), v>`; zero up to rounding for the rotational form.
    pub convective_work: f64,
    /// `<f, v>`, equal to `-int F : grad v` for potential forcing.
    pub forcing_work: f64,
    /// Left side of the estimate: regularization + weighted vorticity (+ half the viscous term).
    pub lhs: f64,
    /// Right side: `|f|_{-1,2}^2 / (2 nu0)` for the viscous model, otherwise
    /// `int |F|^p' d^(-alpha/(p-1))` when the potential is known.
    pub rhs: Option<f64>,
    pub constant: Option<f64>,
    /// `|stress work - <f, v>| / stress work`, reported only in the `Equality` case.
    pub energy_equality: Option<f64>,
    /// `regularization / (regularization + weighted vorticity)`.
    pub regularization_share: f64,
    /// `(q, |grad v|_q)` for every `q` in [`GRADIENT_EXPONENTS`].
    pub gradient_norms: Vec<(f64, f64)>,
}

pub(crate) fn compute(model: &Model, forcing: &Forcing, v: &StaggeredField) -> Result<EnergyLedger> {
    let grid = model.grid;
    let p = &model.params;
    let vol = subcell_volume(grid);
    let dist = subcell_distances(grid, &grid.domain);
    let omega = corner_vorticity(grid, v);
    let sp = p.stress();
    let n = dist.len();
    let mut weighted = 0.0;
    let mut stress_work = 0.0;
    for q in 0..n {
        let m = (omega[0][q].powi(2) + omega[1][q].powi(2) + omega[2][q].powi(2)).sqrt();
        let d_alpha = if p.alpha == 0.0 { 1.0 } else { power(dist[q], p.alpha) };
        weighted += d_alpha * m.powf(p.p);
        stress_work += sp.coefficient(model.weights[q], m) * m * m;
    }
    weighted *= vol;
    stress_work *= vol;
    let sym = corner_sym_gradient(grid, v);
    let sym_norm: Vec<f64> =
        (0..n).map(|q| sym.iter().flatten().map(|c| c[q] * c[q]).sum::<f64>().sqrt()).collect();
    let regularization = match p.reg_flavor {
        RegFlavor::SymGrad => p.eps * sym_norm.iter().map(|m| m.powf(p.reg_exponent())).sum::<f64>() * vol,
        RegFlavor::ShiftedWeight => (stress_work - weighted).max(0.0),
    };
    let viscous = p.nu0 * sym_norm.iter().map(|m| m * m).sum::<f64>() * vol;
    let terms = model.terms(v)?;
    let convective_work = terms.convective.dot(v, grid);
    let forcing_work = forcing.body.dot(v, grid);
    let case = p.energy_case();
    let lhs = regularization + weighted + 0.5 * viscous;
    let rhs = match case {
        EnergyCase::Viscous => Some(dual_norm_sq(grid, &forcing.body) / (2.0 * p.nu0)),
        _ => forcing.potential.as_ref().map(|f| weighted_potential_norm(p, &dist, f, vol)),
    };
    let constant = rhs.filter(|r| *r > 0.0).map(|r| lhs / r);
    let energy_equality = (case == EnergyCase::Equality && stress_work > 0.0)
        .then(|| (stress_work - forcing_work).abs() / stress_work);
    let total = regularization + weighted;
    let regularization_share = if total > 0.0 { regularization / total } else { 0.0 };
    let grad = gradient_magnitude(grid, FieldRef::Vector(v))?;
    let gradient_norms = GRADIENT_EXPONENTS
        .iter()
        .map(|&q| (q, (grad.iter().map(|g| g.powf(q)).sum::<f64>() * vol).powf(1.0 / q)))
        .collect();
    Ok(EnergyLedger {
        case,
        regularization,
        weighted_vorticity: weighted,
        stress_work,
        viscous,
        convective_work,
        forcing_work,
        lhs,
        rhs,
        constant,
        energy_equality,
        regularization_share,
        gradient_norms,
    })
}

/// `<f, (-Laplace)^-1 f>`.
fn dual_norm_sq(grid: &Grid, f: &StaggeredField) -> f64 {
    VectorLaplacian::new(grid).solve(f).dot(f, grid)
}

/// `int |F|^p' d^(-alpha/(p-1))`.
fn weighted_potential_norm(p: &ModelParams, dist: &[f64], f: &[[Vec<f64>; 3]; 3], vol: f64) -> f64 {
    let conj = p.p / (p.p - 1.0);
    let expo = -p.alpha / (p.p - 1.0);
    (0..dist.len())
        .map(|q| {
            let m = f.iter().flatten().map(|c| c[q] * c[q]).sum::<f64>().sqrt();
            if m == 0.0 {
                0.0
            } else {
                m.powf(conj) * power(dist[q], expo)
            }
        })
        .sum::<f64>()
        * vol
}

/// Ledger of an arbitrary velocity for the given model and forcing.
pub fn energy_ledger(params: &ModelParams, forcing: &Forcing, grid: &Grid, v: &StaggeredField) -> Result<EnergyLedger> {
    compute(&Model::new(params, grid)?, forcing, v)
}
