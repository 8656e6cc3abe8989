//! Bogovskiĭ right inverse of the divergence on a ball.
//!
//! For `f` with zero mean supported in the reference ball,
//! `u(x) = int f(y) (x - y)/|x - y|^3 int_{|x-y|}^inf bump(y + r e) r^2 dr dy`
//! with `e = (x - y)/|x - y|` and `bump` a smooth unit-mass function on a concentric core
//! ball. The radial integral is a polynomial and is evaluated in closed form; the outer
//! integral is split by a smooth cutoff into a near part in polar coordinates about the
//! target and a far part summed over cell midpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::projection::masked_divergence_correction;
use crate::fields::{div, Grid, Location, ScalarField, StaggeredField};
use crate::inequalities::bump_profile;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BogovskiiKernel {
    /// Centre of the reference ball and of the core.
    pub center: [f64; 3],
    /// Radius of the reference ball; data must vanish outside it.
    pub radius: f64,
    /// Radius of the averaging core.
    pub core_radius: f64,
    /// Radius, in cell widths, of the region integrated in polar coordinates.
    pub near_cells: f64,
    /// Remove the quadrature's divergence defect with a discrete Neumann solve on the cells
    /// of the reference ball.
    pub exact_divergence: bool,
}

impl BogovskiiKernel {
    /// Kernel for the ball of radius `radius` with a core of half that radius.
    pub fn for_ball(center: [f64; 3], radius: f64) -> Self {
        Self { center, radius, core_radius: 0.5 * radius, near_cells: 4.0, exact_divergence: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.core_radius > 0.0 && self.core_radius <= self.radius) {
            return Err(Error::InvalidParams(format!(
                "need 0 < core radius {} <= radius {}",
                self.core_radius, self.radius
            )));
        }
        if !(self.near_cells >= 1.0 && self.near_cells.is_finite()) {
            return Err(Error::InvalidParams(format!("near_cells = {} must be at least 1", self.near_cells)));
        }
        Ok(())
    }

    /// `int_rho^inf bump(y + r e) r^2 dr` for unit `e`.
    pub fn radial_integral(&self, y: [f64; 3], e: [f64; 3], rho: f64) -> f64 {
        let r2 = self.core_radius * self.core_radius;
        let yc = [y[0] - self.center[0], y[1] - self.center[1], y[2] - self.center[2]];
        let a = yc[0] * yc[0] + yc[1] * yc[1] + yc[2] * yc[2];
        let b = yc[0] * e[0] + yc[1] * e[1] + yc[2] * e[2];
        let disc = b * b - a + r2;
        if disc <= 0.0 {
            return 0.0;
        }
        let hi = disc.sqrt();
        let lo = (rho + b).max(-hi);
        if lo >= hi {
            return 0.0;
        }
        // With t = r + b the bump is (disc - t^2)^3 / R^6 and r^2 = (t - b)^2.
        let coef = [disc * disc * disc, -3.0 * disc * disc, 3.0 * disc, -1.0];
        let antiderivative = |t: f64| {
            let t2 = t * t;
            let mut pow = t; // t^(2m+1)
            let mut sum = 0.0;
            for (m, c) in coef.iter().enumerate() {
                let k = 2 * m as i32;
                sum += c * (pow * t2 / (k + 3) as f64 - 2.0 * b * pow * t / (k + 2) as f64 + b * b * pow / (k + 1) as f64);
                pow *= t2;
            }
            sum
        };
        let norm = 315.0 / (64.0 * std::f64::consts::PI * r2 * self.core_radius) / (r2 * r2 * r2);
        norm * (antiderivative(hi) - antiderivative(lo))
    }

    /// Cells whose centre lies in the reference ball, row-major.
    pub fn cell_mask(&self, grid: &Grid) -> Vec<bool> {
        let n = grid.cells;
        let mut out = Vec::with_capacity(grid.n_cells());
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    out.push(self.inside(grid.cell_center([i, j, k])));
                }
            }
        }
        out
    }

    fn inside(&self, x: [f64; 3]) -> bool {
        let d2: f64 = (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum();
        d2 < self.radius * self.radius
    }
}

/// `u = Bog(f)` sampled at the faces of `grid`.
pub fn bogovskii(kernel: &BogovskiiKernel, grid: &Grid, f: &ScalarField) -> Result<StaggeredField> {
    Ok(bogovskii_batch(kernel, grid, std::slice::from_ref(f))?.remove(0))
}

/// [`bogovskii_quadrature`] followed, if requested by the kernel, by the discrete correction.
pub fn bogovskii_batch(kernel: &BogovskiiKernel, grid: &Grid, fs: &[ScalarField]) -> Result<Vec<StaggeredField>> {
    let raw = bogovskii_quadrature(kernel, grid, fs)?;
    if !kernel.exact_divergence {
        return Ok(raw);
    }
    let mask = kernel.cell_mask(grid);
    raw.iter().zip(fs).map(|(u, f)| Ok(masked_divergence_correction(grid, &mask, u, f)?.0)).collect()
}

/// `|div u - f|_2 / |f|_2` over all cells.
pub fn divergence_residual(grid: &Grid, u: &StaggeredField, f: &ScalarField) -> Result<f64> {
    let d = div(grid, u)?;
    let num: f64 = d.data.iter().zip(f.data.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = f.data.iter().map(|b| b * b).sum();
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

/// Smooth step: 1 for `t <= 0`, 0 for `t >= 1`.
fn cutoff(t: f64) -> f64 {
    let psi = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let (a, b) = (psi(1.0 - t), psi(t));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` from the Golub–Welsch eigenproblem.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = jac.symmetric_eigen();
    let mut out: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

const RADIAL_POINTS: usize = 8;
const POLAR_POINTS: usize = 8;
const AZIMUTH_POINTS: usize = 16;

/// Polar quadrature about the target for the near part: `(direction, radius, weight)`.
fn near_rule(inner: f64, outer: f64) -> Vec<([f64; 3], f64, f64)> {
    let radial = gauss_legendre(RADIAL_POINTS);
    let polar = gauss_legendre(POLAR_POINTS);
    let mut out = Vec::new();
    for &(mu, wmu) in &polar {
        let st = (1.0 - mu * mu).sqrt();
        for m in 0..AZIMUTH_POINTS {
            let phi = 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / AZIMUTH_POINTS as f64;
            let e = [st * phi.cos(), st * phi.sin(), mu];
            let wdir = wmu * 2.0 * std::f64::consts::PI / AZIMUTH_POINTS as f64;
            for &(s, ws) in &radial {
                let r = 0.5 * outer * (s + 1.0);
                let chi = cutoff((r - inner) / (outer - inner));
                if chi > 0.0 {
                    out.push((e, r, wdir * ws * 0.5 * outer * chi));
                }
            }
        }
    }
    out
}

/// Trilinear interpolation of cell-centre data (zero outside the grid), all samples at once.
fn interpolate(grid: &Grid, values: &[f64], ns: usize, y: [f64; 3], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = grid.cells;
    let mut base = [0isize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let s = (y[a] - grid.origin[a]) / grid.spacing[a] - 0.5;
        let fl = s.floor();
        base[a] = fl as isize;
        frac[a] = s - fl;
    }
    for corner in 0..8 {
        let o = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
        let mut w = 1.0;
        let mut idx = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let i = base[a] + o[a] as isize;
            if i < 0 || i >= n[a] as isize {
                inside = false;
                break;
            }
            idx[a] = i as usize;
            w *= if o[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if !inside || w == 0.0 {
            continue;
        }
        let lin = (idx[0] * n[1] + idx[1]) * n[2] + idx[2];
        for (o, v) in out.iter_mut().zip(&values[lin * ns..(lin + 1) * ns]) {
            *o += w * v;
        }
    }
}

/// Quadrature of the kernel for several right-hand sides sharing one kernel evaluation.
///
/// The kernel is split with a smooth cutoff of radius `near_cells` cell widths. The near part
/// is integrated in polar coordinates about the target, where the `1/r^2` singularity
/// cancels against the volume element, with the data interpolated trilinearly. The far part
/// uses one point per source cell.
pub fn bogovskii_quadrature(kernel: &BogovskiiKernel, grid: &Grid, fs: &[ScalarField]) -> Result<Vec<StaggeredField>> {
    kernel.validate()?;
    let ns = fs.len();
    if ns == 0 {
        return Ok(Vec::new());
    }
    for f in fs {
        f.check(grid)?;
    }
    let vol = grid.cell_volume();
    let ncells = grid.n_cells();
    // Cell values for all right-hand sides, sample index fastest.
    let mut all = vec![0.0; ncells * ns];
    let mut sources: Vec<([f64; 3], usize)> = Vec::new();
    let mut sums = vec![0.0; ns];
    let mut scales = vec![0.0; ns];
    for (lin, ((i, j, k), _)) in fs[0].data.indexed_iter().enumerate() {
        let mut any = false;
        for (s, f) in fs.iter().enumerate() {
            let v = f.data[[i, j, k]];
            all[lin * ns + s] = v;
            sums[s] += v;
            scales[s] += v.abs();
            any |= v != 0.0;
        }
        if !any {
            continue;
        }
        let y = grid.cell_center([i, j, k]);
        if !kernel.inside(y) {
            return Err(Error::Precondition(format!("data is nonzero at {y:?}, outside the reference ball")));
        }
        sources.push((y, lin));
    }
    for s in 0..ns {
        if sums[s].abs() > 1e-9 * scales[s] {
            return Err(Error::Precondition(format!(
                "data {s} has mean {} relative to its L1 norm, expected zero",
                sums[s] / scales[s]
            )));
        }
    }

    let h = grid.h();
    let outer = kernel.near_cells * h;
    let inner = 0.4 * outer;
    let rule = near_rule(inner, outer);

    let mut out: Vec<StaggeredField> = (0..ns).map(|_| StaggeredField::zeros(grid, Location::Faces)).collect();
    let mut acc = vec![0.0; ns];
    let mut fy = vec![0.0; ns];
    for comp in 0..3 {
        let stag = Location::Faces.stagger(comp);
        let shape = grid.shape(stag);
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    let x = grid.position(stag, [i, j, k]);
                    if !kernel.inside(x) {
                        continue;
                    }
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    for &(y, lin) in &sources {
                        let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
                        let rho = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                        if rho <= inner {
                            continue;
                        }
                        let w = if rho < outer { 1.0 - cutoff((rho - inner) / (outer - inner)) } else { 1.0 };
                        let kval = kernel_component(kernel, x, y, comp) * vol * w;
                        if kval != 0.0 {
                            for (a, v) in acc.iter_mut().zip(&all[lin * ns..(lin + 1) * ns]) {
                                *a += kval * v;
                            }
                        }
                    }
                    for &(e, r, wq) in &rule {
                        if e[comp] == 0.0 {
                            continue;
                        }
                        let y = [x[0] - r * e[0], x[1] - r * e[1], x[2] - r * e[2]];
                        let kval = wq * e[comp] * kernel.radial_integral(y, e, r);
                        if kval == 0.0 {
                            continue;
                        }
                        interpolate(grid, &all, ns, y, &mut fy);
                        for (a, v) in acc.iter_mut().zip(&fy) {
                            *a += kval * v;
                        }
                    }
                    for (field, a) in out.iter_mut().zip(&acc) {
                        field.comps[comp][[i, j, k]] = *a;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn kernel_component(kernel: &BogovskiiKernel, x: [f64; 3], y: [f64; 3], comp: usize) -> f64 {
    let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    let rho = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if rho == 0.0 {
        return 0.0;
    }
    let e = [d[0] / rho, d[1] / rho, d[2] / rho];
    kernel.radial_integral(y, e, rho) * e[comp] / (rho * rho)
}

/// Random smooth data with zero cell sum, supported in the reference ball of `kernel`.
///
/// Two to four bumps of random sign inside the ball, minus the multiple of a centred bump of
/// radius `0.8 R` that cancels the discrete mean. The bumps depend on `seed` only, so the same
/// seed gives the same function on every grid.
pub fn zero_mean_sample(kernel: &BogovskiiKernel, grid: &Grid, seed: u64) -> Result<ScalarField> {
    kernel.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let big = kernel.radius;
    let bumps: Vec<([f64; 3], f64, f64)> = (0..rng.gen_range(2..=4))
        .map(|_| {
            let r = rng.gen_range(0.15..0.4) * big;
            // Uniform direction, radius chosen so the bump stays inside the ball.
            let dir: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let reach = rng.gen_range(0.0..0.95) * (0.95 * big - r);
            let c = std::array::from_fn(|a| kernel.center[a] + reach * dir[a] / len);
            (c, r, rng.gen_range(-1.0..1.0))
        })
        .collect();
    let eval = |x: [f64; 3], c: [f64; 3], r: f64| bump_profile((0..3).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>() / (r * r));
    let raw = ScalarField::from_fn(grid, |x| bumps.iter().map(|(c, r, amp)| amp * eval(x, *c, *r)).sum());
    let reference = ScalarField::from_fn(grid, |x| eval(x, kernel.center, 0.8 * big));
    let mass = reference.data.sum();
    if mass == 0.0 {
        return Err(Error::Precondition("reference ball is not resolved by the grid".into()));
    }
    let shift = raw.data.sum() / mass;
    Ok(ScalarField { data: raw.data - reference.data * shift })
}
