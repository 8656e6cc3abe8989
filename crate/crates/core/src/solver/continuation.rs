//! Warm-started solves along a decreasing regularization schedule.

use serde::{Deserialize, Serialize};

use super::{local_difference, solve_from, EnergyLedger, Forcing, ModelParams, SolverConfig};
use crate::error::{Error, Result};
use crate::fields::ops::{corner_vorticity, CornerVector};
use crate::fields::subcell::subcell_distances;
use crate::fields::{Grid, StaggeredField};
use crate::geometry::power;
use crate::operators::corner_stress;

/// Compacts `K_n = {d >= 1/n}` tracked by the continuation.
pub const COMPACT_LEVELS: [f64; 2] = [4.0, 8.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStage {
    pub eps: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    /// Relative residual before each outer iteration and after the last one.
    pub residual_history: Vec<f64>,
    pub ledger: EnergyLedger,
    /// `(n, |omega_k - omega_{k-1}|_{L^3(K_n)})`; empty for the first stage.
    pub vorticity_increments: Vec<(f64, f64)>,
    /// `(n, |S_k - S_{k-1}|_{L^p'(K_n)})` with `S = d^alpha |omega|^(p-2) omega`.
    pub stress_increments: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub stages: Vec<ContinuationStage>,
    /// False when a stage failed to converge; later stages are not attempted.
    pub complete: bool,
    #[serde(skip)]
    pub velocities: Vec<StaggeredField>,
}

impl ContinuationReport {
    pub fn shares(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.ledger.regularization_share).collect()
    }

    /// Increments on `K_n` across the stages (from the second stage on).
    pub fn vorticity_increments(&self, n: f64) -> Vec<f64> {
        self.stages
            .iter()
            .filter_map(|s| s.vorticity_increments.iter().find(|(m, _)| *m == n).map(|(_, v)| *v))
            .collect()
    }
}

/// Solves at every `eps` of `schedule` (strictly decreasing), each warm-started from the
/// previous solution.
pub fn continuation(
    params: &ModelParams,
    forcing: &Forcing,
    grid: &Grid,
    schedule: &[f64],
    cfg: &SolverConfig,
) -> Result<ContinuationReport> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParams("eps schedule must be positive and strictly decreasing".into()));
    }
    let dist = subcell_distances(grid, &grid.domain);
    let weights: Vec<f64> = dist.iter().map(|d| if params.alpha == 0.0 { 1.0 } else { power(*d, params.alpha) }).collect();
    let sp = params.stress();
    let conj = params.p / (params.p - 1.0);
    let mut stages = Vec::new();
    let mut velocities: Vec<StaggeredField> = Vec::new();
    let mut previous: Option<(CornerVector, CornerVector)> = None;
    let mut complete = true;
    for &eps in schedule {
        let stage_params = params.with_eps(eps);
        let report = solve_from(&stage_params, forcing, grid, cfg, velocities.last())?;
        let omega = corner_vorticity(grid, &report.velocity);
        let stress = corner_stress(&sp, &weights, &omega);
        let (vorticity_increments, stress_increments) = match &previous {
            None => (Vec::new(), Vec::new()),
            Some((om_prev, s_prev)) => (
                COMPACT_LEVELS.iter().map(|&n| (n, local_difference(grid, &omega, om_prev, 3.0, 1.0 / n))).collect(),
                COMPACT_LEVELS.iter().map(|&n| (n, local_difference(grid, &stress, s_prev, conj, 1.0 / n))).collect(),
            ),
        };
        let s = &report.summary;
        stages.push(ContinuationStage {
            eps,
            converged: s.converged,
            iterations: s.iterations,
            final_residual: *s.residual_history.last().unwrap_or(&0.0),
            residual_history: s.residual_history.clone(),
            ledger: s.ledger.clone(),
            vorticity_increments,
            stress_increments,
        });
        velocities.push(report.velocity);
        previous = Some((omega, stress));
        if !s.converged {
            complete = false;
            break;
        }
    }
    Ok(ContinuationReport { stages, complete, velocities })
}
