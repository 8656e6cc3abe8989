//! Steady solver for the regularized degenerate curl-curl systems.
//!
//! The unknown is a discretely solenoidal face velocity with homogeneous Dirichlet data. All
//! nonlinear terms are collocated in the corner subcells, so the discrete weak form against
//! solenoidal test fields is exactly `<R(v), phi>` with `R` the projected residual.

mod continuation;
mod krylov;
mod ledger;
mod localization;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ops::{
    corner_gradient_adjoint, corner_sym_gradient, corner_vorticity, corner_vorticity_adjoint, CornerTensor,
    CornerVector,
};
use crate::fields::poisson::VectorLaplacian;
use krylov::gmres;
use crate::fields::subcell::{scatter, subcell_centers, subcell_distances, subcell_volume};
use crate::fields::{convective_divergence, convective_rotational, Grid, Location, Projector, ScalarField, StaggeredField};
use crate::geometry::power;
use crate::inequalities::sampling::{bump_profile, sample_field, SampleKind};
use crate::operators::{corner_stress, p_stokes_operator, power_law_flux, StressParams};

pub use continuation::{continuation, ContinuationReport, ContinuationStage, COMPACT_LEVELS};
pub use ledger::{energy_ledger, EnergyCase, EnergyLedger, GRADIENT_EXPONENTS};
pub use localization::{localization_diagnostic, LocalBall, LocalizationReport};

/// Forcing amplitude used when a configuration does not give one. Small enough that the
/// convective term stays a perturbation of the monotone part.
pub const DEFAULT_FORCING_SCALE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegFlavor {
    /// `-eps div(|Dv|^(p_reg-2) Dv)` added to the operator.
    #[default]
    SymGrad,
    /// Weight `(eps + d)^alpha` in the stress instead of `d^alpha`.
    ShiftedWeight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvectiveForm {
    /// `omega x v`, pressure absorbs `|v|^2/2`.
    #[default]
    Rotational,
    /// `div(v (x) v)`.
    Divergence,
}

fn zero() -> f64 {
    0.0
}

/// Coefficients of `-eps div(|Dv|^(r-2)Dv) - nu0 div Dv + curl(w (kappa+|omega|)^(p-2) omega)
/// + convection = f`, with `w = d^alpha` or `(eps + d)^alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub p: f64,
    pub alpha: f64,
    #[serde(default = "zero")]
    pub kappa: f64,
    #[serde(default = "zero")]
    pub nu0: f64,
    #[serde(default = "zero")]
    pub eps: f64,
    /// Regularization exponent; defaults to `p`.
    #[serde(default)]
    pub p_reg: Option<f64>,
    #[serde(default)]
    pub reg_flavor: RegFlavor,
    #[serde(default)]
    pub convective_form: ConvectiveForm,
}

impl ModelParams {
    /// Degenerate model `eps`-regularized with the symmetric gradient, rotational convection.
    pub fn degenerate(p: f64, alpha: f64, eps: f64) -> Self {
        Self {
            p,
            alpha,
            kappa: 0.0,
            nu0: 0.0,
            eps,
            p_reg: None,
            reg_flavor: RegFlavor::SymGrad,
            convective_form: ConvectiveForm::Rotational,
        }
    }

    /// Viscous model with `nu0 > 0` and no regularization.
    pub fn viscous(p: f64, alpha: f64, nu0: f64) -> Self {
        Self { nu0, ..Self::degenerate(p, alpha, 0.0) }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }

    pub fn reg_exponent(&self) -> f64 {
        self.p_reg.unwrap_or(self.p)
    }

    pub fn stress(&self) -> StressParams {
        StressParams { p: self.p, alpha: self.alpha, kappa: self.kappa }
    }

    /// Largest admissible `alpha` (exclusive) for the degenerate model, `None` when unbounded.
    pub fn alpha_bound(&self) -> Option<f64> {
        if self.nu0 > 0.0 {
            return None;
        }
        Some(match self.convective_form {
            ConvectiveForm::Rotational => (self.p - 1.0).min(1.5),
            ConvectiveForm::Divergence => self.p - 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.stress().validate()?;
        for (name, v) in [("nu0", self.nu0), ("eps", self.eps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        let r = self.reg_exponent();
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::InvalidParams(format!("regularization exponent {r} must exceed 1")));
        }
        if self.nu0 == 0.0 && self.eps == 0.0 {
            return Err(Error::InvalidParams("nu0 = 0 and eps = 0 leave the operator without coercivity".into()));
        }
        if let Some(bound) = self.alpha_bound() {
            if self.alpha >= bound {
                return Err(Error::InvalidParams(format!(
                    "alpha = {} must stay below {bound} for the degenerate model with {:?} convection",
                    self.alpha, self.convective_form
                )));
            }
        }
        Ok(())
    }

    /// Energy equality `int d^a |omega|^p = <f, v>` is only meaningful below `6/5`.
    pub fn energy_case(&self) -> EnergyCase {
        if self.nu0 > 0.0 {
            EnergyCase::Viscous
        } else if self.alpha < 1.2 {
            EnergyCase::Equality
        } else {
            EnergyCase::WeakFormOnly
        }
    }
}

/// Right-hand side description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    /// Body force built from random smooth bumps supported in the domain.
    Bumps {
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `f = Div F` for a random smooth tensor `F` supported in the domain.
    Potential {
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_scale() -> f64 {
    DEFAULT_FORCING_SCALE
}

impl ForcingSpec {
    pub fn scale(&self) -> f64 {
        match self {
            ForcingSpec::Zero => 0.0,
            ForcingSpec::Bumps { scale, .. } | ForcingSpec::Potential { scale, .. } => *scale,
        }
    }

    pub fn with_scale(&self, s: f64) -> Self {
        match self {
            ForcingSpec::Zero => ForcingSpec::Zero,
            ForcingSpec::Bumps { seed, .. } => ForcingSpec::Bumps { scale: s, seed: *seed },
            ForcingSpec::Potential { seed, .. } => ForcingSpec::Potential { scale: s, seed: *seed },
        }
    }
}

/// Forcing resolved on a grid: the face force and, when known, its tensor potential in the
/// corner subcells.
#[derive(Clone, Debug)]
pub struct Forcing {
    pub body: StaggeredField,
    pub potential: Option<CornerTensor>,
    pub scale: f64,
}

impl Forcing {
    pub fn zero(grid: &Grid) -> Self {
        Self { body: StaggeredField::zeros(grid, Location::Faces), potential: None, scale: 0.0 }
    }

    pub fn from_body(grid: &Grid, body: StaggeredField) -> Result<Self> {
        body.check(grid, Location::Faces)?;
        let mut body = body;
        body.clear_boundary();
        let scale = body.max_abs();
        Ok(Self { body, potential: None, scale })
    }

    /// `f = Div F` in the weak sense `<f, phi> = -sum (V/8) F : grad(phi)`.
    pub fn from_potential(grid: &Grid, potential: CornerTensor) -> Result<Self> {
        let n = grid.n_cells() * crate::fields::subcell::CORNERS;
        if potential.iter().flatten().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch { expected: vec![n], found: vec![potential[0][0].len()] });
        }
        let body = corner_gradient_adjoint(grid, &potential).scaled(-1.0);
        let scale = potential.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { body, potential: Some(potential), scale })
    }

    pub fn resolve(spec: &ForcingSpec, grid: &Grid) -> Result<Self> {
        let scale = spec.scale();
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParams(format!("forcing scale {scale} must be finite and >= 0")));
        }
        let mut out = match spec {
            ForcingSpec::Zero => Self::zero(grid),
            ForcingSpec::Bumps { scale, seed } => {
                let f = sample_field(grid, SampleKind::Dirichlet, *seed)?.scaled(*scale);
                Self::from_body(grid, f)?
            }
            ForcingSpec::Potential { scale, seed } => Self::from_potential(grid, random_potential(grid, *scale, *seed)?)?,
        };
        out.scale = scale;
        Ok(out)
    }
}

/// Nine-component sum of 3 to 5 bumps of radius 0.15–0.3 of the smallest extent, each fully
/// inside the domain.
fn random_potential(grid: &Grid, scale: f64, seed: u64) -> Result<CornerTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = &grid.domain;
    let (lo, hi) = domain.bounding_box();
    let l = (0..3).map(|a| hi[a] - lo[a]).fold(f64::INFINITY, f64::min);
    let count = rng.gen_range(3..=5);
    let mut bumps = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.gen_range(0.15..0.3) * l;
        let mut center = None;
        for _ in 0..10_000 {
            let c: [f64; 3] = std::array::from_fn(|a| rng.gen_range(lo[a] + r..hi[a] - r));
            if domain.signed_distance(&c) >= r {
                center = Some(c);
                break;
            }
        }
        let center = center.ok_or_else(|| Error::InvalidDomain("domain too thin for forcing bumps".into()))?;
        let amp: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        bumps.push((center, r, amp));
    }
    let centers = subcell_centers(grid);
    let mut out: CornerTensor = std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; centers.len()]));
    for (q, x) in centers.iter().enumerate() {
        for (c, r, amp) in &bumps {
            let s2 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>() / (r * r);
            let b = bump_profile(s2);
            if b > 0.0 {
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j][q] += scale * amp[i][j] * b;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Outer iteration controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative tolerance on `|P(A(v) + C(v) - f)| / |P f|`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Initial under-relaxation factor; halved whenever a step would raise the residual.
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    500
}
fn default_damping() -> f64 {
    0.5
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter(), damping: default_damping() }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParams(format!("tolerance {} must lie in (0, 1)", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParams(format!("damping {} must lie in (0, 1]", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar outcome of a solve; serializable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub params: ModelParams,
    pub cells: [usize; 3],
    pub forcing_scale: f64,
    /// Relative projected residual before each iteration and after the last one.
    pub residual_history: Vec<f64>,
    /// Inner GMRES iterations per outer iteration.
    pub inner_iterations: Vec<usize>,
    /// Accepted under-relaxation factor per outer iteration.
    pub damping: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub ledger: EnergyLedger,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub velocity: StaggeredField,
    /// Mean-free pressure recovered from the projection (Bernoulli pressure in rotational form).
    pub pressure: ScalarField,
    pub summary: SolveSummary,
}

/// Operator terms evaluated at one velocity.
#[derive(Clone, Debug)]
pub struct OperatorTerms {
    pub regularization: StaggeredField,
    pub viscous: StaggeredField,
    pub stress: StaggeredField,
    pub convective: StaggeredField,
}

impl OperatorTerms {
    /// Everything except the forcing.
    pub fn total(&self) -> StaggeredField {
        let mut t = self.regularization.add(&self.viscous);
        t.axpy(1.0, &self.stress);
        t.axpy(1.0, &self.convective);
        t
    }
}

/// Precomputed per-grid data for one model.
pub(crate) struct Model<'a> {
    pub params: ModelParams,
    pub grid: &'a Grid,
    /// Stress weight per subcell.
    pub weights: Vec<f64>,
    pub projector: Projector,
}

impl<'a> Model<'a> {
    pub fn new(params: &ModelParams, grid: &'a Grid) -> Result<Self> {
        params.validate()?;
        if !grid.is_box() {
            return Err(Error::InvalidDomain("the steady solver needs a box domain".into()));
        }
        let shift = if params.reg_flavor == RegFlavor::ShiftedWeight { params.eps } else { 0.0 };
        let weights = subcell_distances(grid, &grid.domain)
            .into_iter()
            .map(|d| if params.alpha == 0.0 { 1.0 } else { power(d + shift, params.alpha) })
            .collect();
        Ok(Self { params: *params, grid, weights, projector: Projector::new(grid) })
    }

    pub fn terms(&self, v: &StaggeredField) -> Result<OperatorTerms> {
        v.check(self.grid, Location::Faces)?;
        let g = self.grid;
        let p = &self.params;
        let regularization = if p.reg_flavor == RegFlavor::SymGrad {
            p_stokes_operator(g, v, p.reg_exponent(), p.eps)?
        } else {
            StaggeredField::zeros(g, Location::Faces)
        };
        let viscous = p_stokes_operator(g, v, 2.0, p.nu0)?;
        let omega = corner_vorticity(g, v);
        let stress = corner_vorticity_adjoint(g, &corner_stress(&p.stress(), &self.weights, &omega));
        let convective = self.convective(v)?;
        Ok(OperatorTerms { regularization, viscous, stress, convective })
    }

    pub fn convective(&self, v: &StaggeredField) -> Result<StaggeredField> {
        match self.params.convective_form {
            ConvectiveForm::Rotational => convective_rotational(self.grid, v),
            ConvectiveForm::Divergence => convective_divergence(self.grid, v),
        }
    }

    /// Unprojected defect `A(v) + C(v) - f`.
    pub fn defect(&self, forcing: &Forcing, v: &StaggeredField) -> Result<StaggeredField> {
        Ok(self.terms(v)?.total().sub(&forcing.body))
    }

    pub fn residual(&self, forcing: &Forcing, v: &StaggeredField) -> Result<StaggeredField> {
        Ok(self.projector.project(&self.defect(forcing, v)?))
    }

    /// `<A(t u) + C(t u) - f, u>` as a function of `t`.
    fn directional_defect(&self, forcing: &Forcing, u: &StaggeredField, t: f64) -> Result<f64> {
        Ok(self.defect(forcing, &u.scaled(t))?.raw_dot(u))
    }

    /// Frozen-coefficient (Kačanov) operator at `v`: stress weight `w (kappa + |omega|)^(p-2)`
    /// and regularization weight `eps |Dv|^(r-2) + nu0`, with magnitudes floored at a
    /// fraction of their maxima so the operator stays definite where the flow is at rest.
    fn linearize(&self, v: &StaggeredField) -> Linearized {
        let g = self.grid;
        let p = &self.params;
        let omega = corner_vorticity(g, v);
        let om: Vec<f64> = (0..self.weights.len())
            .map(|q| (omega[0][q].powi(2) + omega[1][q].powi(2) + omega[2][q].powi(2)).sqrt())
            .collect();
        let om_floor = FLOOR * om.iter().cloned().fold(0.0, f64::max);
        let stress_coef: Vec<f64> = om
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| w * (p.kappa + m).max(om_floor).max(f64::MIN_POSITIVE).powf(p.p - 2.0))
            .collect();
        let sym_coef: Vec<f64> = if p.reg_flavor == RegFlavor::SymGrad && p.eps > 0.0 {
            let d = corner_sym_gradient(g, v);
            let dm = tensor_norms(&d);
            let d_floor = FLOOR * dm.iter().cloned().fold(0.0, f64::max);
            let r = p.reg_exponent();
            dm.iter().map(|m| p.eps * m.max(d_floor).max(f64::MIN_POSITIVE).powf(r - 2.0) + p.nu0).collect()
        } else {
            vec![p.nu0; self.weights.len()]
        };
        // Solenoidal fields: curl-curl and -div D act like -Laplace and -Laplace/2.
        let eff: Vec<f64> = stress_coef.iter().zip(&sym_coef).map(|(a, b)| a + 0.5 * b).collect();
        let ones = vec![1.0; eff.len()];
        let face_scale = [0, 1, 2].map(|c| {
            let stag = Location::Faces.stagger(c);
            let s = scatter(&eff, stag, g.cells) / scatter(&ones, stag, g.cells);
            s.mapv(|x| 1.0 / x.max(f64::MIN_POSITIVE).sqrt())
        });
        Linearized { stress_coef, sym_coef, inv_sqrt_scale: face_scale }
    }
}

/// Relative floor of the frozen magnitudes.
const FLOOR: f64 = 1e-6;
const INNER_TOL: f64 = 1e-3;
const INNER_RESTART: usize = 40;
const INNER_MAX: usize = 400;

fn tensor_norms(t: &CornerTensor) -> Vec<f64> {
    let n = t[0][0].len();
    (0..n).map(|q| t.iter().flatten().map(|c| c[q] * c[q]).sum::<f64>().sqrt()).collect()
}

struct Linearized {
    stress_coef: Vec<f64>,
    sym_coef: Vec<f64>,
    inv_sqrt_scale: [ndarray::Array3<f64>; 3],
}

impl Linearized {
    fn apply(&self, grid: &Grid, u: &StaggeredField) -> StaggeredField {
        let omega = corner_vorticity(grid, u);
        let weighted: CornerVector = omega.map(|c| c.iter().zip(&self.stress_coef).map(|(a, b)| a * b).collect());
        let mut out = corner_vorticity_adjoint(grid, &weighted);
        if self.sym_coef.iter().any(|&c| c != 0.0) {
            let d = corner_sym_gradient(grid, u);
            let scaled: CornerTensor =
                d.map(|row| row.map(|c| c.iter().zip(&self.sym_coef).map(|(a, b)| a * b).collect()));
            out.axpy(1.0, &corner_gradient_adjoint(grid, &scaled));
        }
        out
    }

    fn rescale(&self, u: &StaggeredField) -> StaggeredField {
        let mut out = u.clone();
        for c in 0..3 {
            out.comps[c] *= &self.inv_sqrt_scale[c];
        }
        out
    }
}

fn flatten(v: &StaggeredField) -> Vec<f64> {
    v.comps.iter().flat_map(|a| a.iter().cloned()).collect()
}

fn unflatten(template: &StaggeredField, x: &[f64]) -> StaggeredField {
    let mut out = template.clone();
    let mut it = x.iter();
    for c in 0..3 {
        out.comps[c].iter_mut().for_each(|v| *v = *it.next().expect("length matches"));
    }
    out
}

/// Projected residual `P(eps A_reg(v) + nu0 A_visc(v) + curl S(curl v) + C(v) - f)`.
pub fn residual(params: &ModelParams, forcing: &Forcing, grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    Model::new(params, grid)?.residual(forcing, v)
}

/// Operator terms at `v` (unprojected).
pub fn operator_terms(params: &ModelParams, grid: &Grid, v: &StaggeredField) -> Result<OperatorTerms> {
    Model::new(params, grid)?.terms(v)
}

/// Solves from rest.
pub fn solve(params: &ModelParams, forcing: &Forcing, grid: &Grid, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_from(params, forcing, grid, cfg, None)
}

/// Damped defect-correction Picard iteration.
///
/// Each step solves `P J_k P delta = -R(v_k)` on the solenoidal subspace by right-preconditioned
/// GMRES. `J_k` freezes the stress and regularization coefficients at `v_k` (Kačanov
/// linearization) and carries the exact derivative of the quadratic convective term. The step
/// `v_k + theta delta` is accepted once it lowers the residual norm; `theta` is halved on every
/// rejection and doubled back, up to its initial value, after each acceptance.
pub fn solve_from(
    params: &ModelParams,
    forcing: &Forcing,
    grid: &Grid,
    cfg: &SolverConfig,
    initial: Option<&StaggeredField>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let model = Model::new(params, grid)?;
    forcing.body.check(grid, Location::Faces)?;
    let pf = model.projector.project(&forcing.body);
    let scale = pf.norm_l2(grid);
    let mut history = Vec::new();
    let mut inner = Vec::new();
    let mut accepted = Vec::new();
    if scale == 0.0 {
        let velocity = StaggeredField::zeros(grid, Location::Faces);
        return finish(&model, forcing, velocity, vec![0.0], (inner, accepted), 0, true);
    }
    let mut v = match initial {
        Some(v0) => {
            v0.check(grid, Location::Faces)?;
            model.projector.project(v0)
        }
        None => StaggeredField::zeros(grid, Location::Faces),
    };
    if corner_vorticity(grid, &v).iter().flatten().all(|&x| x == 0.0) {
        v = energy_fit_start(&model, forcing, &pf)?;
    }
    let mut r = model.residual(forcing, &v)?;
    let mut rel = r.norm_l2(grid) / scale;
    let mut theta = cfg.damping;
    let mut iterations = 0;
    history.push(rel);
    let laplacian = VectorLaplacian::new(grid);
    while rel >= cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let lin = model.linearize(&v);
        let b = flatten(&r.scaled(-1.0));
        let mut x = vec![0.0; b.len()];
        let proj = |x: &[f64]| model.projector.project(&unflatten(&r, x));
        let conv_v = model.convective(&v)?;
        let stats = gmres(
            |x, y| {
                let u = proj(x);
                let mut out = lin.apply(grid, &u);
                // Exact derivative of the quadratic convective term.
                if let (Ok(cu), Ok(cvu)) = (model.convective(&u), model.convective(&v.add(&u))) {
                    out.axpy(1.0, &cvu.sub(&conv_v).sub(&cu));
                }
                y.copy_from_slice(&flatten(&model.projector.project(&out)));
            },
            |x, y| {
                let u = proj(x);
                let z = lin.rescale(&laplacian.solve(&lin.rescale(&u)));
                y.copy_from_slice(&flatten(&model.projector.project(&z)));
            },
            &b,
            &mut x,
            INNER_TOL,
            INNER_RESTART,
            INNER_MAX,
        );
        inner.push(stats.iterations);
        let delta = proj(&x);
        if !delta.is_finite() {
            return Err(Error::NonFinite(format!("correction at outer iteration {iterations}")));
        }
        let current = r.norm_l2(grid);
        loop {
            let trial = {
                let mut t = v.clone();
                t.axpy(theta, &delta);
                t
            };
            let rt = model.residual(forcing, &trial)?;
            let nt = rt.norm_l2(grid);
            if !nt.is_finite() {
                return Err(Error::NonFinite(format!(
                    "residual at outer iteration {iterations} (theta = {theta:.3e})"
                )));
            }
            if nt < current || theta < 1e-6 {
                accepted.push(theta);
                v = trial;
                r = rt;
                theta = (2.0 * theta).min(cfg.damping);
                break;
            }
            theta *= 0.5;
        }
        rel = r.norm_l2(grid) / scale;
        history.push(rel);
    }
    let converged = rel < cfg.tol;
    finish(&model, forcing, v, history, (inner, accepted), iterations, converged)
}

/// `t u0` with `u0 = P (-Laplace)^-1 P f` and `t` minimizing the energy along `u0`.
fn energy_fit_start(model: &Model, forcing: &Forcing, pf: &StaggeredField) -> Result<StaggeredField> {
    let grid = model.grid;
    let u0 = model.projector.project(&VectorLaplacian::new(grid).solve(pf));
    let phi = |t: f64| model.directional_defect(forcing, &u0, t);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut guard = 0;
    while phi(hi)? < 0.0 {
        lo = hi;
        hi *= 4.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NonFinite("no energy minimum along the Stokes direction".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(u0.scaled(0.5 * (lo + hi)))
}

fn finish(
    model: &Model,
    forcing: &Forcing,
    velocity: StaggeredField,
    residual_history: Vec<f64>,
    (inner_iterations, damping): (Vec<usize>, Vec<f64>),
    iterations: usize,
    converged: bool,
) -> Result<SolveReport> {
    let defect = model.defect(forcing, &velocity)?;
    let mut pressure = model.projector.potential(&defect);
    pressure.data.mapv_inplace(|x| -x);
    let ledger = ledger::compute(model, forcing, &velocity)?;
    Ok(SolveReport {
        velocity,
        pressure,
        summary: SolveSummary {
            params: model.params,
            cells: model.grid.cells,
            forcing_scale: forcing.scale,
            residual_history,
            inner_iterations,
            damping,
            iterations,
            converged,
            ledger,
        },
    })
}

/// Weak-form defects against random solenoidal test fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakFormCheck {
    /// `|<A(v) + C(v) - f, phi>| / (|<A(v), phi>| + |<C(v), phi>| + |<f, phi>|)` per test.
    pub relative: Vec<f64>,
    pub max_relative: f64,
}

pub fn weak_form_check(
    params: &ModelParams,
    forcing: &Forcing,
    grid: &Grid,
    v: &StaggeredField,
    tests: usize,
    seed: u64,
) -> Result<WeakFormCheck> {
    let model = Model::new(params, grid)?;
    let terms = model.terms(v)?;
    let monotone = terms.regularization.add(&terms.viscous).add(&terms.stress);
    let mut relative = Vec::with_capacity(tests);
    for i in 0..tests {
        let phi = sample_field(grid, SampleKind::SolenoidalDirichlet, seed.wrapping_add(i as u64))?;
        let a = monotone.raw_dot(&phi);
        let c = terms.convective.raw_dot(&phi);
        let f = forcing.body.raw_dot(&phi);
        let denom = a.abs() + c.abs() + f.abs();
        relative.push(if denom == 0.0 { 0.0 } else { (a + c - f).abs() / denom });
    }
    let max_relative = relative.iter().cloned().fold(0.0, f64::max);
    Ok(WeakFormCheck { relative, max_relative })
}

/// `(sum_{q in K} (V/8) |a_q - b_q|^s)^(1/s)` over subcells with `d >= threshold`.
pub(crate) fn local_difference(grid: &Grid, a: &CornerVector, b: &CornerVector, s: f64, threshold: f64) -> f64 {
    let d = subcell_distances(grid, &grid.domain);
    let sum: f64 = (0..d.len())
        .filter(|&q| d[q] >= threshold)
        .map(|q| ((0..3).map(|c| (a[c][q] - b[c][q]).powi(2)).sum::<f64>()).sqrt().powf(s))
        .sum();
    (sum * subcell_volume(grid)).powf(1.0 / s)
}

/// Power-law flux helper re-exported for diagnostics.
pub fn regularization_flux(grid: &Grid, v: &StaggeredField, r: f64) -> CornerTensor {
    power_law_flux(&corner_sym_gradient(grid, v), r)
}

#[cfg(test)]
mod tests;
