//! Empirical best constants of the functional inequalities over random ensembles.
//!
//! Every check samples smooth fields that satisfy the hypotheses of the inequality,
//! evaluates both sides with the grid quadratures and reports the largest observed ratio.
//! Observed constants are lower bounds for the true ones; the useful signal is whether they
//! stay put when the grid is refined.

pub mod sampling;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::norms::{cell_magnitude, cell_weights, fractional_1d, fractional_seminorm, gradient_magnitude, subcell_weights};
use crate::fields::ops::{corner_sym_gradient, corner_vorticity, div_raw};
use crate::fields::subcell::{subcell_centers, subcell_volume};
use crate::fields::{FieldRef, Grid, ScalarField, StaggeredField};
use crate::geometry::power;

pub use sampling::{bump_profile, sample_field, sample_scalar, SampleKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityName {
    Poincare,
    Korn,
    Sobolev,
    DivCurl,
    GradCurlWeighted,
    GenSobolev,
    #[serde(rename = "embedding_L1", alias = "embedding_l1")]
    EmbeddingL1,
    Hardy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityParams {
    pub p: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
}

impl InequalityParams {
    pub fn p(p: f64) -> Self {
        Self { p, alpha: None, delta: None, s: None, q: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityCase {
    pub name: InequalityName,
    pub params: InequalityParams,
    pub ensemble: Ensemble,
    /// Run outside the hypotheses on purpose, with an adversarial ensemble.
    #[serde(default)]
    pub hypothesis_demo: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Unstable,
    ViolatedHypothesisDemo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: InequalityName,
    pub cells: [usize; 3],
    pub max_ratio: f64,
    /// `(level, value)` for levels 0, 0.25, 0.5, 0.75, 0.9 and 1.
    pub quantiles: Vec<(f64, f64)>,
    pub verdict: Verdict,
    pub samples_used: usize,
    pub skipped: usize,
    /// Samples with a vanishing right-hand side but a nonzero left-hand side.
    pub violations: usize,
    pub rows: Vec<SampleRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub coarse: InequalityReport,
    pub fine: InequalityReport,
    /// `|max_fine - max_coarse| / max_coarse`.
    pub drift: f64,
    /// `max_fine / max_coarse`.
    pub growth: f64,
    pub verdict: Verdict,
}

/// Largest `q` allowed for the weighted Sobolev inequality with weight `d^(delta p)`.
pub fn gen_sobolev_exponent(p: f64, delta: f64) -> f64 {
    let denom = 3.0 - p * (1.0 - delta);
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        3.0 * p / denom
    }
}

/// Sobolev exponent `3p/(3-p)` for `p < 3`.
pub fn sobolev_exponent(p: f64) -> f64 {
    gen_sobolev_exponent(p, 0.0)
}

fn require(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidParams(format!("parameter {what} is required")))
}

impl InequalityCase {
    pub fn validate(&self) -> Result<()> {
        let p = self.params.p;
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParams(format!("exponent p = {p} must be finite and exceed 1")));
        }
        if self.ensemble.samples == 0 {
            return Err(Error::InvalidParams("ensemble needs at least one sample".into()));
        }
        let demo = self.hypothesis_demo;
        let outside = |msg: String| -> Result<()> {
            if demo {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{msg}; set hypothesis_demo to run anyway")))
            }
        };
        match self.name {
            InequalityName::GradCurlWeighted => {
                let a = require(self.params.alpha, "alpha")?;
                if !(a > -1.0 && a < p - 1.0) {
                    outside(format!("weighted grad-curl bound needs -1 < alpha < p - 1, got alpha = {a}"))?;
                }
            }
            InequalityName::EmbeddingL1 => {
                let a = require(self.params.alpha, "alpha")?;
                if !(a < p - 1.0) {
                    outside(format!("embedding into L1 needs alpha < p - 1, got alpha = {a}"))?;
                }
            }
            InequalityName::Sobolev => {
                let q = self.target_exponent()?;
                if p < 3.0 && q > sobolev_exponent(p) + 1e-12 {
                    outside(format!("q = {q} exceeds the Sobolev exponent {}", sobolev_exponent(p)))?;
                }
            }
            InequalityName::GenSobolev => {
                let d = require(self.params.delta, "delta")?;
                if !(0.0..1.0).contains(&d) {
                    return Err(Error::InvalidParams(format!("delta = {d} must lie in [0, 1)")));
                }
                let q = self.target_exponent()?;
                if q > gen_sobolev_exponent(p, d) + 1e-12 {
                    outside(format!("q = {q} exceeds {}", gen_sobolev_exponent(p, d)))?;
                }
            }
            InequalityName::Hardy => {
                let s = require(self.params.s, "s")?;
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::InvalidParams(format!("s = {s} must lie in (0, 1)")));
                }
                if (s - 1.0 / p - 0.5).abs() < 1e-12 {
                    return Err(Error::InvalidParams("the case s - 1/p = 1/2 is excluded".into()));
                }
            }
            InequalityName::Poincare | InequalityName::Korn | InequalityName::DivCurl => {}
        }
        Ok(())
    }

    /// Exponent of the left-hand side for the Sobolev-type inequalities.
    fn target_exponent(&self) -> Result<f64> {
        let p = self.params.p;
        let bound = match self.name {
            InequalityName::GenSobolev => gen_sobolev_exponent(p, self.params.delta.unwrap_or(0.0)),
            _ => sobolev_exponent(p),
        };
        match self.params.q {
            Some(q) if q >= 1.0 => Ok(q),
            Some(q) => Err(Error::InvalidParams(format!("q = {q} below 1"))),
            None if bound.is_finite() => Ok(bound),
            None => Err(Error::InvalidParams("q is required when the exponent bound is infinite".into())),
        }
    }

    fn sample_kind(&self) -> SampleKind {
        match self.name {
            InequalityName::GradCurlWeighted if self.hypothesis_demo => SampleKind::BoundaryLayer,
            InequalityName::GradCurlWeighted => SampleKind::SolenoidalDirichlet,
            _ => SampleKind::Dirichlet,
        }
    }
}

/// `sum_subcells (V/8) d^alpha |g|^p` over subcells inside the domain.
pub fn subcell_integral(grid: &Grid, values: &[f64], alpha: f64, p: f64) -> f64 {
    let w = subcell_weights(grid, &grid.domain, alpha);
    let centers = subcell_centers(grid);
    let inside_all = grid.is_box();
    values
        .iter()
        .zip(&w)
        .zip(&centers)
        .filter(|(_, x)| inside_all || grid.domain.signed_distance(*x) > 0.0)
        .map(|((v, w), _)| w * v.abs().powf(p))
        .sum::<f64>()
        * subcell_volume(grid)
}

/// `sum_cells V d^alpha |g|^p` over cells inside the domain.
pub fn cell_integral(grid: &Grid, values: &Array3<f64>, alpha: f64, p: f64) -> f64 {
    let w = cell_weights(grid, &grid.domain, alpha);
    values
        .indexed_iter()
        .zip(w.iter())
        .filter(|(((i, j, k), _), _)| grid.domain.signed_distance(&grid.cell_center([*i, *j, *k])) > 0.0)
        .map(|((_, v), w)| w * v.abs().powf(p))
        .sum::<f64>()
        * grid.cell_volume()
}

fn corner_magnitudes(t: &[Vec<f64>]) -> Vec<f64> {
    let n = t[0].len();
    (0..n).map(|q| t.iter().map(|c| c[q] * c[q]).sum::<f64>().sqrt()).collect()
}

fn tensor_magnitudes(t: &[[Vec<f64>; 3]; 3]) -> Vec<f64> {
    let flat: Vec<Vec<f64>> = t.iter().flat_map(|row| row.iter().cloned()).collect();
    corner_magnitudes(&flat)
}

/// `|curl v|` in every corner subcell.
pub fn vorticity_magnitude(grid: &Grid, v: &StaggeredField) -> Vec<f64> {
    corner_magnitudes(&corner_vorticity(grid, v))
}

/// `|Dv|` (Frobenius) in every corner subcell.
pub fn sym_gradient_magnitude(grid: &Grid, v: &StaggeredField) -> Vec<f64> {
    tensor_magnitudes(&corner_sym_gradient(grid, v))
}

fn root(x: f64, p: f64) -> f64 {
    x.powf(1.0 / p)
}

/// Left- and right-hand sides of the named inequality for one vector sample.
fn sides(case: &InequalityCase, grid: &Grid, v: &StaggeredField) -> Result<(f64, f64)> {
    let p = case.params.p;
    let grad = || gradient_magnitude(grid, FieldRef::Vector(v));
    Ok(match case.name {
        InequalityName::Poincare => {
            (root(cell_integral(grid, &cell_magnitude(grid, FieldRef::Vector(v))?, 0.0, p), p), root(subcell_integral(grid, &grad()?, 0.0, p), p))
        }
        InequalityName::Korn => (
            root(subcell_integral(grid, &grad()?, 0.0, p), p),
            root(subcell_integral(grid, &sym_gradient_magnitude(grid, v), 0.0, p), p),
        ),
        InequalityName::Sobolev => {
            let q = case.target_exponent()?;
            (
                root(cell_integral(grid, &cell_magnitude(grid, FieldRef::Vector(v))?, 0.0, q), q),
                root(subcell_integral(grid, &sym_gradient_magnitude(grid, v), 0.0, p), p),
            )
        }
        InequalityName::DivCurl => {
            let d = div_raw(grid, v);
            (
                root(subcell_integral(grid, &grad()?, 0.0, p), p),
                root(cell_integral(grid, &d, 0.0, p), p) + root(subcell_integral(grid, &vorticity_magnitude(grid, v), 0.0, p), p),
            )
        }
        InequalityName::GradCurlWeighted => {
            let a = case.params.alpha.unwrap_or(0.0);
            (subcell_integral(grid, &grad()?, a, p), subcell_integral(grid, &vorticity_magnitude(grid, v), a, p))
        }
        InequalityName::GenSobolev => {
            let q = case.target_exponent()?;
            let delta = case.params.delta.unwrap_or(0.0);
            let mut mags = Array3::<f64>::zeros(grid.cells);
            // Subtract the cell-centred mean of every component.
            let cells = cell_components(v);
            for comp in cells.iter() {
                let mean = comp.mean().unwrap_or(0.0);
                mags += &comp.mapv(|x| (x - mean).powi(2));
            }
            (root(cell_integral(grid, &mags.mapv(f64::sqrt), 0.0, q), q), root(subcell_integral(grid, &grad()?, delta * p, p), p))
        }
        InequalityName::EmbeddingL1 | InequalityName::Hardy => {
            return Err(Error::InvalidParams("scalar inequality evaluated on a vector sample".into()))
        }
    })
}

fn cell_components(v: &StaggeredField) -> [Array3<f64>; 3] {
    [0, 1, 2].map(|c| crate::fields::stencil::avg_to_cell(v.comps[c].view(), c))
}

/// Scalar sample for the embedding inequality: smooth bumps, or for the demonstration a
/// profile `max(d, c h)^(-alpha/(p-1))` that saturates Hölder's inequality.
fn embedding_sample(case: &InequalityCase, grid: &Grid, seed: u64) -> Result<ScalarField> {
    if !case.hypothesis_demo {
        return sample_scalar(grid, false, seed);
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let beta = case.params.alpha.unwrap_or(0.0) / (case.params.p - 1.0);
    let floor = rng.gen_range(1.0..2.0) * grid.h();
    let amp = rng.gen_range(0.5..1.5);
    Ok(ScalarField::from_fn(grid, |x| amp * power(grid.domain.distance_clamped(&x).max(floor), -beta)))
}

/// Points per unit length used by the one-dimensional Hardy path.
const HARDY_REFINE: usize = 8;

fn hardy_sample(n: usize, seed: u64, demo: bool) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / n as f64;
    if demo {
        // Constant with a sharp cutoff a few cells from the ends.
        let c = rng.gen_range(1.0..3.0) * h;
        return (0..n).map(|i| if ((i as f64 + 0.5) * h).min(1.0 - (i as f64 + 0.5) * h) > c { 1.0 } else { 0.0 }).collect();
    }
    let count = rng.gen_range(2..=4);
    let bumps: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let r = rng.gen_range(0.1..0.3);
            (rng.gen_range(r..1.0 - r), r, rng.gen_range(-1.0..1.0))
        })
        .collect();
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            bumps.iter().map(|(c, r, a)| a * bump_profile(((x - c) / r).powi(2))).sum()
        })
        .collect()
}

/// `(||u/d^s||_p, [u]_{s,p})` for cell values on `(0, length)`.
pub fn hardy_sides_1d(values: &[f64], length: f64, s: f64, p: f64) -> (f64, f64) {
    let n = values.len();
    let h = length / n as f64;
    let lhs = values
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let x = (i as f64 + 0.5) * h;
            (u.abs() / x.min(length - x).powf(s)).powf(p)
        })
        .sum::<f64>()
        * h;
    (lhs.powf(1.0 / p), fractional_1d(values, length, s, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub weighted: f64,
    pub seminorm: f64,
    pub ratio: f64,
}

/// `||u/d^s||_p` and `[u]_{s,p}` for a scalar field on a (small) 3D grid.
pub fn hardy_check(s: f64, p: f64, grid: &Grid, field: &ScalarField) -> Result<HardyReport> {
    if !(s > 0.0 && s < 1.0) || (s - 1.0 / p - 0.5).abs() < 1e-12 {
        return Err(Error::InvalidParams(format!("need 0 < s < 1 and s - 1/p != 1/2, got s = {s}, p = {p}")));
    }
    field.check(grid)?;
    let seminorm = fractional_seminorm(grid, &field.data, s, p)?;
    let weighted = root(cell_integral(grid, &field.data, -s * p, p), p);
    Ok(HardyReport { weighted, seminorm, ratio: ratio_of(weighted, seminorm) })
}

fn ratio_of(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

/// Runs the ensemble of `case` on `grid`.
pub fn check(case: &InequalityCase, grid: &Grid) -> Result<InequalityReport> {
    case.validate()?;
    let p = case.params.p;
    let mut rows = Vec::with_capacity(case.ensemble.samples);
    for i in 0..case.ensemble.samples {
        let seed = case.ensemble.seed.wrapping_add(i as u64);
        let (lhs, rhs) = match case.name {
            InequalityName::EmbeddingL1 => {
                let u = embedding_sample(case, grid, seed)?;
                let a = case.params.alpha.unwrap_or(0.0);
                (cell_integral(grid, &u.data, 0.0, 1.0), root(cell_integral(grid, &u.data, a, p), p))
            }
            InequalityName::Hardy => {
                let s = case.params.s.unwrap_or(0.5);
                let values = hardy_sample(HARDY_REFINE * grid.cells[0], seed, case.hypothesis_demo);
                hardy_sides_1d(&values, 1.0, s, p)
            }
            _ => {
                let v = sample_field(grid, case.sample_kind(), seed)?;
                sides(case, grid, &v)?
            }
        };
        rows.push(SampleRow { seed, lhs, rhs, ratio: ratio_of(lhs, rhs) });
    }
    Ok(summarize(case, grid, rows))
}

fn summarize(case: &InequalityCase, grid: &Grid, rows: Vec<SampleRow>) -> InequalityReport {
    let tol = 1e-13;
    let scale = rows.iter().map(|r| r.lhs.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut skipped = 0;
    let mut violations = 0;
    let mut ratios = Vec::new();
    for r in &rows {
        if r.rhs <= tol * scale {
            if r.lhs > tol * scale {
                violations += 1;
            } else {
                skipped += 1;
            }
            continue;
        }
        ratios.push(r.ratio);
    }
    ratios.sort_by(|a, b| a.total_cmp(b));
    let quantiles = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0]
        .iter()
        .map(|&q| {
            let v = if ratios.is_empty() {
                f64::NAN
            } else {
                ratios[((q * (ratios.len() - 1) as f64).round() as usize).min(ratios.len() - 1)]
            };
            (q, v)
        })
        .collect();
    let max_ratio = if violations > 0 { f64::INFINITY } else { ratios.last().copied().unwrap_or(f64::NAN) };
    let verdict = if case.hypothesis_demo {
        Verdict::ViolatedHypothesisDemo
    } else if max_ratio.is_finite() {
        Verdict::Bounded
    } else {
        Verdict::Unstable
    };
    InequalityReport {
        name: case.name,
        cells: grid.cells,
        max_ratio,
        quantiles,
        verdict,
        samples_used: ratios.len(),
        skipped,
        violations,
        rows,
    }
}

/// Runs `case` on `grid` and on its refinement; bounded means a drift below 10%.
pub fn refinement_study(case: &InequalityCase, grid: &Grid) -> Result<RefinementStudy> {
    let coarse = check(case, grid)?;
    let fine = check(case, &grid.refined())?;
    let growth = fine.max_ratio / coarse.max_ratio;
    let drift = (growth - 1.0).abs();
    let verdict = if case.hypothesis_demo {
        Verdict::ViolatedHypothesisDemo
    } else if coarse.max_ratio.is_finite() && fine.max_ratio.is_finite() && drift < 0.1 {
        Verdict::Bounded
    } else {
        Verdict::Unstable
    };
    Ok(RefinementStudy { coarse, fine, drift, growth, verdict })
}

/// Refinement behaviour of `int d^(-alpha p'/p) = int d^(-alpha/(p-1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMargin {
    /// `(cells per axis, integral)` on successive refinements.
    pub integrals: Vec<(usize, f64)>,
    /// Ratio of the last two increments; below 1 for a convergent integral.
    pub increment_ratio: f64,
    /// Extrapolated limit when converging, otherwise `inf`.
    pub limit: f64,
    /// Increase of the integral per grid doubling at the finest level.
    pub growth_per_doubling: f64,
    pub converging: bool,
}

/// Evaluates the Hölder factor of the embedding `L^p(d^alpha) in L^1` on `grid` and two
/// refinements with cell-centre quadrature.
pub fn embedding_margin(p: f64, alpha: f64, grid: &Grid) -> Result<EmbeddingMargin> {
    if !(p > 1.0) {
        return Err(Error::InvalidParams(format!("exponent p = {p} must exceed 1")));
    }
    let beta = -alpha / (p - 1.0);
    let mut g = grid.clone();
    let mut integrals = Vec::new();
    for _ in 0..3 {
        let ones = Array3::<f64>::ones(g.cells);
        integrals.push((g.cells[0], cell_integral(&g, &ones, beta, 1.0)));
        g = g.refined();
    }
    let inc1 = integrals[1].1 - integrals[0].1;
    let inc2 = integrals[2].1 - integrals[1].1;
    let scale = integrals[2].1.abs().max(f64::MIN_POSITIVE);
    let (increment_ratio, converging) = if inc1.abs() <= 1e-13 * scale && inc2.abs() <= 1e-13 * scale {
        (0.0, true)
    } else {
        let r = inc2 / inc1;
        (r, r.abs() < 0.85)
    };
    let limit = if converging {
        if increment_ratio == 0.0 {
            integrals[2].1
        } else {
            integrals[2].1 + inc2 * increment_ratio / (1.0 - increment_ratio)
        }
    } else {
        f64::INFINITY
    };
    Ok(EmbeddingMargin { integrals, increment_ratio, limit, growth_per_doubling: inc2, converging })
}
