//! Discrete Leray projection onto divergence-free face fields.

use super::ops::div_raw;
use super::poisson::{conjugate_gradient, masked_neumann_apply, AxisKind, FastPoisson};
use super::stencil::{d_to_node, Bc};
use super::{Grid, Location, ScalarField, StaggeredField};
use crate::error::{Error, Result};

/// Reusable projector `P = I - G L^{-1} D` for one grid.
#[derive(Clone, Debug)]
pub struct Projector {
    grid: Grid,
    poisson: FastPoisson,
}

impl Projector {
    pub fn new(grid: &Grid) -> Self {
        let poisson = FastPoisson::new([AxisKind::NeumannCell; 3], grid.cells, grid.spacing);
        Self { grid: grid.clone(), poisson }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Mean-free potential `phi` with `div grad phi = div v`.
    pub fn potential(&self, v: &StaggeredField) -> ScalarField {
        let mut rhs = div_raw(&self.grid, v);
        let mean = rhs.mean().unwrap_or(0.0);
        rhs.mapv_inplace(|x| mean - x);
        ScalarField { data: self.poisson.solve(&rhs) }
    }

    pub fn project(&self, v: &StaggeredField) -> StaggeredField {
        let phi = self.potential(v);
        let mut out = v.clone();
        for a in 0..3 {
            out.comps[a] -= &d_to_node(phi.data.view(), a, self.grid.spacing[a], Bc::Zero);
        }
        out
    }
}

/// `v - grad phi` with `div grad phi = div v` and zero-flux walls.
pub fn leray_project(grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    let out = Projector::new(grid).project(v);
    let scale = v.max_abs() / grid.h();
    let residual = div_raw(grid, &out).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NoConvergence { iterations: 1, residual: residual / scale });
    }
    Ok(out)
}

/// Faces both of whose adjacent cells lie in `mask` (row-major cell flags).
pub fn interior_face_mask(grid: &Grid, mask: &[bool]) -> [Vec<bool>; 3] {
    let n = grid.cells;
    let cell = |i: usize, j: usize, k: usize| mask[(i * n[1] + j) * n[2] + k];
    [0, 1, 2].map(|a| {
        let shape = grid.shape(Location::Faces.stagger(a));
        let mut out = Vec::with_capacity(shape.iter().product());
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    let idx = [i, j, k];
                    let interior = idx[a] > 0 && idx[a] < n[a] && {
                        let mut lo = idx;
                        lo[a] -= 1;
                        cell(lo[0], lo[1], lo[2]) && cell(i, j, k)
                    };
                    out.push(interior);
                }
            }
        }
        out
    })
}

/// Corrects `u` so that its discrete divergence equals `target` on the cells of `mask`.
///
/// Faces not interior to the mask are set to zero, then `grad psi` from a Neumann problem on
/// the masked cells is subtracted. Returns the corrected field and the relative size of the
/// divergence defect before correction.
pub fn masked_divergence_correction(
    grid: &Grid,
    mask: &[bool],
    u: &StaggeredField,
    target: &ScalarField,
) -> Result<(StaggeredField, f64)> {
    u.check(grid, Location::Faces)?;
    target.check(grid)?;
    if mask.len() != grid.n_cells() {
        return Err(Error::ShapeMismatch { expected: vec![grid.n_cells()], found: vec![mask.len()] });
    }
    let faces = interior_face_mask(grid, mask);
    let mut out = u.clone();
    for a in 0..3 {
        out.comps[a].iter_mut().zip(&faces[a]).for_each(|(v, keep)| {
            if !keep {
                *v = 0.0
            }
        });
    }
    let d = div_raw(grid, &out);
    let active = mask.iter().filter(|m| **m).count().max(1);
    let mut rhs: Vec<f64> = target
        .data
        .iter()
        .zip(d.iter())
        .zip(mask)
        .map(|((t, dv), m)| if *m { t - dv } else { 0.0 })
        .collect();
    let mean = rhs.iter().sum::<f64>() / active as f64;
    rhs.iter_mut().zip(mask).for_each(|(r, m)| {
        if *m {
            *r -= mean
        }
    });
    let tnorm = target.data.iter().zip(mask).filter(|(_, m)| **m).map(|(t, _)| t * t).sum::<f64>().sqrt();
    let defect = rhs.iter().map(|r| r * r).sum::<f64>().sqrt() / tnorm.max(f64::MIN_POSITIVE);
    let mut psi = vec![0.0; rhs.len()];
    conjugate_gradient(
        |p, q| masked_neumann_apply(grid, mask, p, q),
        |r, z| z.copy_from_slice(r),
        &rhs,
        &mut psi,
        1e-12,
        20 * grid.cells.iter().sum::<usize>() + 200,
    )?;
    let psi = ndarray::Array3::from_shape_vec(grid.cells, psi).expect("cell shape");
    for a in 0..3 {
        let g = d_to_node(psi.view(), a, grid.spacing[a], Bc::Zero);
        out.comps[a].iter_mut().zip(g.iter()).zip(&faces[a]).for_each(|((v, gv), keep)| {
            if *keep {
                *v -= gv
            }
        });
    }
    Ok((out, defect))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ops::{div, grad};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_faces(grid: &Grid, seed: u64) -> StaggeredField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = StaggeredField::zeros(grid, Location::Faces);
        v.comps.iter_mut().for_each(|a| a.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0)));
        v.clear_boundary();
        v
    }

    #[test]
    fn projection_removes_divergence() {
        let grid = Grid::unit_cube(8).unwrap();
        let v = random_faces(&grid, 1);
        let pv = leray_project(&grid, &v).unwrap();
        assert!(div(&grid, &pv).unwrap().max_abs() <= 1e-8);
    }

    #[test]
    fn projection_is_idempotent() {
        let grid = Grid::unit_cube(8).unwrap();
        let pv = leray_project(&grid, &random_faces(&grid, 2)).unwrap();
        let ppv = leray_project(&grid, &pv).unwrap();
        assert!(ppv.sub(&pv).norm_l2(&grid) <= 1e-10 * pv.norm_l2(&grid));
    }

    #[test]
    fn gradients_are_annihilated() {
        let grid = Grid::unit_cube(8).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| (3.0 * x[0]).sin() * x[1] * x[1] + x[2]);
        let g = grad(&grid, &phi).unwrap();
        let pg = leray_project(&grid, &g).unwrap();
        assert!(pg.norm_l2(&grid) <= 1e-10 * g.norm_l2(&grid));
    }

    #[test]
    fn masked_correction_hits_target_divergence() {
        let grid = Grid::unit_cube(8).unwrap();
        let inside = |x: [f64; 3]| (0..3).map(|a| (x[a] - 0.5).powi(2)).sum::<f64>() < 0.16;
        let mask: Vec<bool> = (0..grid.n_cells())
            .map(|l| inside(grid.cell_center([l / 64, (l / 8) % 8, l % 8])))
            .collect();
        let mut target = ScalarField::from_fn(&grid, |x| if inside(x) { x[0] - 0.5 } else { 0.0 });
        let mean = target.sum() / mask.iter().filter(|m| **m).count() as f64;
        target.data.iter_mut().zip(&mask).for_each(|(t, m)| if *m { *t -= mean });
        let (u, defect) = masked_divergence_correction(&grid, &mask, &random_faces(&grid, 5), &target).unwrap();
        assert!(defect > 0.0);
        let d = div_raw(&grid, &u);
        for (l, (dv, t)) in d.iter().zip(target.data.iter()).enumerate() {
            if mask[l] {
                assert!((dv - t).abs() < 1e-9, "{dv} vs {t}");
            } else {
                assert!(dv.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_orthogonal() {
        let grid = Grid::unit_cube(6).unwrap();
        let p = Projector::new(&grid);
        let a = random_faces(&grid, 3);
        let b = random_faces(&grid, 4);
        let lhs = p.project(&a).dot(&b, &grid);
        let rhs = a.dot(&p.project(&b), &grid);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
