//! Discrete gradient, divergence, curl, symmetric gradient and convective terms.

use ndarray::Array3;

use super::stencil::{avg_to_cell, avg_to_node, d_to_cell, d_to_cell_t, d_to_node, d_to_node_t, Bc};
use super::subcell::{gather, scatter, CORNERS};
use super::{Grid, Location, ScalarField, StaggeredField};
use crate::error::Result;

/// Cell values to face differences; wall faces are zero.
pub fn grad(grid: &Grid, u: &ScalarField) -> Result<StaggeredField> {
    u.check(grid)?;
    let comps = [0, 1, 2].map(|a| d_to_node(u.data.view(), a, grid.spacing[a], Bc::Zero));
    Ok(StaggeredField { location: Location::Faces, comps })
}

/// Face values to cell divergence.
pub fn div(grid: &Grid, v: &StaggeredField) -> Result<ScalarField> {
    v.check(grid, Location::Faces)?;
    Ok(ScalarField { data: div_raw(grid, v) })
}

pub(crate) fn div_raw(grid: &Grid, v: &StaggeredField) -> Array3<f64> {
    let mut out = d_to_cell(v.comps[0].view(), 0, grid.spacing[0]);
    out += &d_to_cell(v.comps[1].view(), 1, grid.spacing[1]);
    out += &d_to_cell(v.comps[2].view(), 2, grid.spacing[2]);
    out
}

/// Curl of a face field onto edges, with odd reflection of tangential components at walls.
pub fn curl(grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    Ok(curl_with(grid, v, Bc::Mirror))
}

pub(crate) fn curl_with(grid: &Grid, v: &StaggeredField, bc: Bc) -> StaggeredField {
    let h = grid.spacing;
    let d = |c: usize, axis: usize| d_to_node(v.comps[c].view(), axis, h[axis], bc);
    let comps = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
    StaggeredField { location: Location::Edges, comps }
}

/// Exact matrix transpose of [`curl`] (edge arrays to face arrays, unweighted).
pub(crate) fn curl_transpose(grid: &Grid, xi: &[Array3<f64>; 3]) -> StaggeredField {
    let h = grid.spacing;
    let dt = |c: usize, axis: usize| d_to_node_t(xi[c].view(), axis, h[axis], Bc::Mirror);
    let comps = [dt(1, 2) - dt(2, 1), dt(2, 0) - dt(0, 2), dt(0, 1) - dt(1, 0)];
    StaggeredField { location: Location::Faces, comps }
}

/// Curl of an edge field onto faces.
pub fn curl_edges(grid: &Grid, a: &StaggeredField) -> Result<StaggeredField> {
    a.check(grid, Location::Edges)?;
    let h = grid.spacing;
    let d = |c: usize, axis: usize| d_to_cell(a.comps[c].view(), axis, h[axis]);
    let comps = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
    Ok(StaggeredField { location: Location::Faces, comps })
}

/// Array of `d v_i / d x_j` at its natural location: cells for `i == j`, edges otherwise.
fn grad_component(grid: &Grid, v: &StaggeredField, i: usize, j: usize) -> Array3<f64> {
    if i == j {
        d_to_cell(v.comps[i].view(), i, grid.spacing[i])
    } else {
        d_to_node(v.comps[i].view(), j, grid.spacing[j], Bc::Mirror)
    }
}

/// Alignment of `d v_i / d x_j`.
pub(crate) fn grad_stagger(i: usize, j: usize) -> [bool; 3] {
    if i == j {
        [false; 3]
    } else {
        [0, 1, 2].map(|a| a == i || a == j)
    }
}

/// Symmetric gradient at natural MAC locations.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    /// `D_aa` at cell centres.
    pub diag: [Array3<f64>; 3],
    /// `off[a]` couples the two axes other than `a` and lives on edges parallel to `a`
    /// (`off[0] = D_yz`, `off[1] = D_xz`, `off[2] = D_xy`).
    pub off: [Array3<f64>; 3],
}

impl SymTensorField {
    pub fn max_abs(&self) -> f64 {
        self.diag.iter().chain(self.off.iter()).flat_map(|a| a.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sym_grad(grid: &Grid, v: &StaggeredField) -> Result<SymTensorField> {
    v.check(grid, Location::Faces)?;
    let diag = [0, 1, 2].map(|a| grad_component(grid, v, a, a));
    let off = [(1, 2), (0, 2), (0, 1)]
        .map(|(i, j)| (grad_component(grid, v, i, j) + grad_component(grid, v, j, i)) * 0.5);
    Ok(SymTensorField { diag, off })
}

/// Values of the three components in every corner subcell.
pub type CornerVector = [Vec<f64>; 3];
/// `t[i][j]` in every corner subcell.
pub type CornerTensor = [[Vec<f64>; 3]; 3];

pub fn corner_velocity(grid: &Grid, v: &StaggeredField) -> CornerVector {
    [0, 1, 2].map(|c| gather(&v.comps[c], Location::Faces.stagger(c), grid.cells))
}

pub fn corner_vorticity(grid: &Grid, v: &StaggeredField) -> CornerVector {
    let w = curl_with(grid, v, Bc::Mirror);
    [0, 1, 2].map(|c| gather(&w.comps[c], Location::Edges.stagger(c), grid.cells))
}

/// Full velocity gradient `g[i][j] = d v_i / d x_j` in every corner subcell.
pub fn corner_gradient(grid: &Grid, v: &StaggeredField) -> CornerTensor {
    [0, 1, 2].map(|i| {
        [0, 1, 2].map(|j| gather(&grad_component(grid, v, i, j), grad_stagger(i, j), grid.cells))
    })
}

/// Symmetric part of [`corner_gradient`].
pub fn corner_sym_gradient(grid: &Grid, v: &StaggeredField) -> CornerTensor {
    let g = corner_gradient(grid, v);
    [0, 1, 2].map(|i| {
        [0, 1, 2].map(|j| g[i][j].iter().zip(&g[j][i]).map(|(a, b)| 0.5 * (a + b)).collect())
    })
}

/// Face force `F` with `<F, phi> = sum_subcells (V/8) t . phi` for Dirichlet `phi`.
pub fn corner_velocity_adjoint(grid: &Grid, t: &CornerVector) -> StaggeredField {
    let comps = [0, 1, 2].map(|c| scatter(&t[c], Location::Faces.stagger(c), grid.cells) / CORNERS as f64);
    let mut out = StaggeredField { location: Location::Faces, comps };
    out.clear_boundary();
    out
}

/// Face force `F` with `<F, phi> = sum_subcells (V/8) t . curl(phi)` for Dirichlet `phi`.
pub fn corner_vorticity_adjoint(grid: &Grid, t: &CornerVector) -> StaggeredField {
    let xi = [0, 1, 2].map(|c| scatter(&t[c], Location::Edges.stagger(c), grid.cells) / CORNERS as f64);
    let mut out = curl_transpose(grid, &xi);
    out.clear_boundary();
    out
}

/// Face force `F` with `<F, phi> = sum_subcells (V/8) t : grad(phi)` for Dirichlet `phi`.
pub fn corner_gradient_adjoint(grid: &Grid, t: &CornerTensor) -> StaggeredField {
    let h = grid.spacing;
    let mut out = StaggeredField::zeros(grid, Location::Faces);
    for i in 0..3 {
        for j in 0..3 {
            let s = scatter(&t[i][j], grad_stagger(i, j), grid.cells) / CORNERS as f64;
            let contrib = if i == j {
                d_to_cell_t(s.view(), i, h[i])
            } else {
                d_to_node_t(s.view(), j, h[j], Bc::Mirror)
            };
            out.comps[i] += &contrib;
        }
    }
    out.clear_boundary();
    out
}

/// Rotational convective term `omega x v`, collocated in corner subcells.
pub fn convective_rotational(grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    let w = corner_vorticity(grid, v);
    let u = corner_velocity(grid, v);
    let n = u[0].len();
    let mut t: CornerVector = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for q in 0..n {
        t[0][q] = w[1][q] * u[2][q] - w[2][q] * u[1][q];
        t[1][q] = w[2][q] * u[0][q] - w[0][q] * u[2][q];
        t[2][q] = w[0][q] * u[1][q] - w[1][q] * u[0][q];
    }
    Ok(corner_velocity_adjoint(grid, &t))
}

/// Advective form `(grad v) v` with centred averages; wall faces are zero.
pub fn convective_standard(grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    let h = grid.spacing;
    let mut out = StaggeredField::zeros(grid, Location::Faces);
    for i in 0..3 {
        for j in 0..3 {
            let (transport, slope) = if i == j {
                let g = d_to_cell(v.comps[i].view(), i, h[i]);
                (v.comps[i].clone(), avg_to_node(g.view(), i, Bc::Zero))
            } else {
                let t = avg_to_node(avg_to_cell(v.comps[j].view(), j).view(), i, Bc::Zero);
                let g = d_to_node(v.comps[i].view(), j, h[j], Bc::Mirror);
                (t, avg_to_cell(g.view(), j))
            };
            out.comps[i] += &(&transport * &slope);
        }
    }
    out.clear_boundary();
    Ok(out)
}

/// Conservative (divergence-form) convective term `div(v (x) v)` of the MAC scheme.
pub fn convective_divergence(grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    let h = grid.spacing;
    let mut out = StaggeredField::zeros(grid, Location::Faces);
    for i in 0..3 {
        for j in 0..3 {
            let term = if i == j {
                let c = avg_to_cell(v.comps[i].view(), i);
                d_to_node((&c * &c).view(), i, h[i], Bc::Zero)
            } else {
                let carrier = avg_to_node(v.comps[j].view(), i, Bc::Mirror);
                let carried = avg_to_node(v.comps[i].view(), j, Bc::Mirror);
                d_to_cell((&carrier * &carried).view(), j, h[j])
            };
            out.comps[i] += &term;
        }
    }
    out.clear_boundary();
    Ok(out)
}

/// `grad(|v|^2 / 2)` with `|v|^2` from face averages at cell centres.
pub fn kinetic_gradient(grid: &Grid, v: &StaggeredField) -> Result<StaggeredField> {
    v.check(grid, Location::Faces)?;
    let mut e = Array3::<f64>::zeros(grid.cells);
    for a in 0..3 {
        let c = avg_to_cell(v.comps[a].view(), a);
        e += &(&c * &c);
    }
    grad(grid, &ScalarField { data: e * 0.5 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_faces(grid: &Grid, seed: u64) -> StaggeredField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = StaggeredField::zeros(grid, Location::Faces);
        for c in 0..3 {
            v.comps[c].iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        v.clear_boundary();
        v
    }

    fn grid() -> Grid {
        crate::fields::Grid::new(crate::geometry::DomainSpec::cuboid(&[1.0, 1.3, 0.8]).unwrap(), [5, 6, 7])
            .unwrap()
    }

    #[test]
    fn zero_field_has_zero_derivatives() {
        let g = grid();
        let v = StaggeredField::zeros(&g, Location::Faces);
        assert_eq!(div(&g, &v).unwrap().max_abs(), 0.0);
        assert_eq!(curl(&g, &v).unwrap().max_abs(), 0.0);
        assert_eq!(sym_grad(&g, &v).unwrap().max_abs(), 0.0);
        assert_eq!(convective_rotational(&g, &v).unwrap().max_abs(), 0.0);
        assert_eq!(convective_standard(&g, &v).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn grad_of_linear_function() {
        let g = grid();
        let u = ScalarField::from_fn(&g, |x| x[0]);
        let gu = grad(&g, &u).unwrap();
        let n = g.cells;
        for i in 1..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    assert!((gu.comps[0][[i, j, k]] - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(gu.comps[1].iter().chain(gu.comps[2].iter()).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn curl_of_shear_flow() {
        let g = grid();
        let v = StaggeredField::from_fn(&g, Location::Faces, |x| [x[1], 0.0, 0.0]);
        let w = curl(&g, &v).unwrap();
        let n = g.cells;
        // Interior z-edges: nodes 1..n-1 in x and y.
        for i in 1..n[0] {
            for j in 1..n[1] {
                for k in 0..n[2] {
                    assert!((w.comps[2][[i, j, k]] + 1.0).abs() < 1e-12);
                }
            }
        }
        for c in 0..2 {
            let sh = w.comps[c].shape();
            for i in 1..sh[0] - 1 {
                for j in 1..sh[1] - 1 {
                    for k in 1..sh[2] - 1 {
                        assert!(w.comps[c][[i, j, k]].abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn adjointness_of_grad_and_div() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = ScalarField::from_fn(&g, |_| 0.0);
        let u = ScalarField { data: u.data.mapv(|_| rng.gen_range(-1.0..1.0)) };
        let v = random_faces(&g, 12);
        let lhs = grad(&g, &u).unwrap().dot(&v, &g);
        let rhs = u.dot(&div(&g, &v).unwrap(), &g);
        assert!((lhs + rhs).abs() <= 1e-12 * u.norm_l2(&g) * v.norm_l2(&g));
    }

    #[test]
    fn div_curl_and_curl_grad_vanish() {
        let g = grid();
        let v = random_faces(&g, 5);
        let a = curl(&g, &v).unwrap();
        let dca = div(&g, &curl_edges(&g, &a).unwrap()).unwrap();
        assert!(dca.max_abs() < 1e-12 * a.max_abs());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = ScalarField { data: Array3::from_shape_fn(g.cells, |_| rng.gen_range(-1.0..1.0)) };
        let cg = curl(&g, &grad(&g, &u).unwrap()).unwrap();
        // Interior edges only: wall edges see the odd reflection of the gradient.
        let n = g.cells;
        let mut m: f64 = 0.0;
        for i in 1..n[0] {
            for j in 1..n[1] {
                for k in 1..n[2] {
                    for c in 0..3 {
                        let sh = cg.comps[c].shape();
                        if i < sh[0] && j < sh[1] && k < sh[2] {
                            m = m.max(cg.comps[c][[i, j, k]].abs());
                        }
                    }
                }
            }
        }
        assert!(m < 1e-10);
    }

    #[test]
    fn curl_transpose_is_exact() {
        let g = grid();
        let v = random_faces(&g, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xi = StaggeredField::zeros(&g, Location::Edges).comps.map(|a| a.mapv(|_| rng.gen_range(-1.0..1.0)));
        let w = curl(&g, &v).unwrap();
        let lhs: f64 = (0..3).map(|c| (&w.comps[c] * &xi[c]).sum()).sum();
        let rhs = curl_transpose(&g, &xi).raw_dot(&v);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn corner_adjoints_are_exact() {
        let g = grid();
        let v = random_faces(&g, 21);
        let vol8 = g.cell_volume() / 8.0;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = g.n_cells() * 8;
        let mut rv = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let t: CornerVector = [rv(), rv(), rv()];
        let tt: CornerTensor = [[rv(), rv(), rv()], [rv(), rv(), rv()], [rv(), rv(), rv()]];
        let pair = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * vol8;

        let cu = corner_velocity(&g, &v);
        let lhs: f64 = (0..3).map(|c| pair(&t[c], &cu[c])).sum();
        assert!((lhs - corner_velocity_adjoint(&g, &t).dot(&v, &g)).abs() < 1e-12);

        let cw = corner_vorticity(&g, &v);
        let lhs: f64 = (0..3).map(|c| pair(&t[c], &cw[c])).sum();
        let rhs = corner_vorticity_adjoint(&g, &t).dot(&v, &g);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

        let cg = corner_gradient(&g, &v);
        let lhs: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| pair(&tt[i][j], &cg[i][j])).sum();
        let rhs = corner_gradient_adjoint(&g, &tt).dot(&v, &g);
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
