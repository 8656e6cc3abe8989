//! Localized monotonicity gap between a regularized solution and a limit candidate.

use serde::{Deserialize, Serialize};

use super::{Model, ModelParams};
use crate::error::{Error, Result};
use crate::fields::ops::{corner_vorticity, CornerVector};
use crate::fields::subcell::{subcell_centers, subcell_volume};
use crate::fields::{div, Grid, Location, StaggeredField};
use crate::inequalities::sampling::smooth_cut;
use crate::operators::{bogovskii, corner_stress, BogovskiiKernel};

/// Ball `B`; the cutoff lives in the concentric ball of twice the radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalBall {
    pub center: [f64; 3],
    pub radius: f64,
}

impl LocalBall {
    /// Cutoff equal to 1 on `B`, vanishing beyond `1.6 R`, with gradient of order `1/R`.
    pub fn cutoff(&self, x: [f64; 3]) -> f64 {
        let r = (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum::<f64>().sqrt();
        smooth_cut(0.5 + 0.5 * (r - self.radius) / (0.6 * self.radius))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    /// `int eta (S(omega_m) - S(omega)) . (omega_m - omega)`.
    pub gap: f64,
    /// The six terms of the decomposition of `gap`:
    /// commutator of the cutoff with the curl, Bogovskiĭ correction, viscous, convective,
    /// regularization of the limit, regularization of the stage.
    pub terms: [f64; 6],
    /// `gap - sum(terms)`: the weak-form residuals of both solutions tested with `w`.
    pub closure: f64,
    /// `max |div w|` of the localized test field.
    pub divergence_max: f64,
}

fn dot_corner(a: &CornerVector, b: &CornerVector, weight: impl Fn(usize) -> f64) -> f64 {
    (0..a[0].len()).map(|q| weight(q) * (0..3).map(|c| a[c][q] * b[c][q]).sum::<f64>()).sum()
}

fn diff(a: &CornerVector, b: &CornerVector) -> CornerVector {
    std::array::from_fn(|c| a[c].iter().zip(&b[c]).map(|(x, y)| x - y).collect())
}

/// Builds `w = eta (v_eps - v_limit) - Bog_2B(div(eta (v_eps - v_limit)))` and splits the
/// localized monotonicity gap tested with `w`.
///
/// The two velocities are solutions of `stage` and `limit`, which must share every
/// parameter except `eps`.
pub fn localization_diagnostic(
    grid: &Grid,
    stage: &ModelParams,
    v_eps: &StaggeredField,
    limit: &ModelParams,
    v_limit: &StaggeredField,
    ball: &LocalBall,
) -> Result<LocalizationReport> {
    v_eps.check(grid, Location::Faces)?;
    v_limit.check(grid, Location::Faces)?;
    if stage.with_eps(limit.eps) != *limit {
        return Err(Error::InvalidParams("stage and limit models differ beyond eps".into()));
    }
    if !(ball.radius > 0.0) || grid.domain.signed_distance(&ball.center) <= 2.0 * ball.radius {
        return Err(Error::Precondition("the doubled ball must lie strictly inside the domain".into()));
    }
    let m_stage = Model::new(stage, grid)?;
    let m_limit = Model::new(limit, grid)?;
    let dv = v_eps.sub(v_limit);
    let mut local = StaggeredField::from_fn(grid, Location::Faces, |x| {
        let e = ball.cutoff(x);
        [e; 3]
    });
    for c in 0..3 {
        local.comps[c] *= &dv.comps[c];
    }
    local.clear_boundary();
    let g = div(grid, &local)?;
    let kernel = BogovskiiKernel::for_ball(ball.center, 2.0 * ball.radius);
    let correction = bogovskii(&kernel, grid, &g)?;
    let w = local.sub(&correction);
    let divergence_max = div(grid, &w)?.max_abs();

    let vol = subcell_volume(grid);
    let eta: Vec<f64> = subcell_centers(grid).into_iter().map(|x| ball.cutoff(x)).collect();
    let om_stage = corner_vorticity(grid, v_eps);
    let om_limit = corner_vorticity(grid, v_limit);
    let dom = diff(&om_stage, &om_limit);
    let ds = diff(
        &corner_stress(&stage.stress(), &m_stage.weights, &om_stage),
        &corner_stress(&limit.stress(), &m_limit.weights, &om_limit),
    );
    let gap = vol * dot_corner(&ds, &dom, |q| eta[q]);

    let curl_local = corner_vorticity(grid, &local);
    let eta_dom: CornerVector = std::array::from_fn(|c| dom[c].iter().zip(&eta).map(|(a, e)| a * e).collect());
    let commutator = -vol * dot_corner(&ds, &diff(&curl_local, &eta_dom), |_| 1.0);
    let bog = vol * dot_corner(&ds, &corner_vorticity(grid, &correction), |_| 1.0);

    let t_stage = m_stage.terms(v_eps)?;
    let t_limit = m_limit.terms(v_limit)?;
    let viscous = t_limit.viscous.sub(&t_stage.viscous).dot(&w, grid);
    let convective = t_limit.convective.sub(&t_stage.convective).dot(&w, grid);
    let reg_limit = t_limit.regularization.dot(&w, grid);
    let reg_stage = -t_stage.regularization.dot(&w, grid);
    let terms = [commutator, bog, viscous, convective, reg_limit, reg_stage];
    let closure = gap - terms.iter().sum::<f64>();
    Ok(LocalizationReport { gap, terms, closure, divergence_max })
}
