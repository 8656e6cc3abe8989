//! Poisson solvers: fast diagonalization for separable problems on the grid box and a
//! matrix-free conjugate-gradient solver for everything else.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array3, Axis, Slice};

use super::{Grid, Location, StaggeredField};
use crate::error::{Error, Result};

/// One-dimensional second-difference operator `-d²/dx²` on an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisKind {
    /// Cell unknowns, zero flux at both ends.
    NeumannCell,
    /// Interior node unknowns, zero value at the end nodes.
    DirichletNode,
    /// Cell unknowns, zero value at the walls via odd reflection.
    MirrorCell,
    /// Cell unknowns, periodic.
    Periodic,
}

#[derive(Clone, Debug)]
struct AxisEigen {
    n: usize,
    /// Row `k` is the `k`-th orthonormal eigenvector.
    vectors: Vec<f64>,
    values: Vec<f64>,
}

impl AxisEigen {
    fn new(kind: AxisKind, n: usize, h: f64) -> Self {
        let mut m = DMatrix::<f64>::zeros(n, n);
        let s = 1.0 / (h * h);
        for i in 0..n {
            m[(i, i)] = 2.0 * s;
            if i + 1 < n {
                m[(i, i + 1)] = -s;
                m[(i + 1, i)] = -s;
            }
        }
        match kind {
            AxisKind::NeumannCell => {
                m[(0, 0)] = s;
                m[(n - 1, n - 1)] += -s;
                if n == 1 {
                    m[(0, 0)] = 0.0;
                }
            }
            AxisKind::DirichletNode => {}
            AxisKind::MirrorCell => {
                m[(0, 0)] = 3.0 * s;
                m[(n - 1, n - 1)] = if n == 1 { 4.0 * s } else { 3.0 * s };
            }
            AxisKind::Periodic => {
                if n > 2 {
                    m[(0, n - 1)] = -s;
                    m[(n - 1, 0)] = -s;
                }
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut vectors = vec![0.0; n * n];
        let mut values = vec![0.0; n];
        let tiny = 1e-10 * s;
        for k in 0..n {
            let lam = eig.eigenvalues[k];
            values[k] = if lam.abs() < tiny { 0.0 } else { lam };
            for i in 0..n {
                vectors[k * n + i] = eig.eigenvectors[(i, k)];
            }
        }
        Self { n, vectors, values }
    }
}

/// Solves `-Δ_h x = b` on a tensor-product index box by diagonalizing each axis.
#[derive(Clone, Debug)]
pub struct FastPoisson {
    axes: [AxisEigen; 3],
}

impl FastPoisson {
    pub fn new(kinds: [AxisKind; 3], n: [usize; 3], h: [f64; 3]) -> Self {
        Self { axes: [0, 1, 2].map(|a| AxisEigen::new(kinds[a], n[a], h[a])) }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].n, self.axes[1].n, self.axes[2].n]
    }

    /// Applies the inverse on the complement of the null space; null modes map to zero.
    pub fn solve(&self, b: &Array3<f64>) -> Array3<f64> {
        assert_eq!(b.shape(), self.shape());
        let mut x = b.to_owned();
        for a in 0..3 {
            transform(&mut x, a, &self.axes[a], false);
        }
        let [l0, l1, l2] = [0, 1, 2].map(|a| &self.axes[a].values);
        x.indexed_iter_mut().for_each(|((i, j, k), v)| {
            let lam = l0[i] + l1[j] + l2[k];
            *v = if lam == 0.0 { 0.0 } else { *v / lam };
        });
        for a in 0..3 {
            transform(&mut x, a, &self.axes[a], true);
        }
        x
    }

    /// Applies the operator itself (spectral form), for checks.
    pub fn apply(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut y = x.to_owned();
        for a in 0..3 {
            transform(&mut y, a, &self.axes[a], false);
        }
        let [l0, l1, l2] = [0, 1, 2].map(|a| &self.axes[a].values);
        y.indexed_iter_mut().for_each(|((i, j, k), v)| *v *= l0[i] + l1[j] + l2[k]);
        for a in 0..3 {
            transform(&mut y, a, &self.axes[a], true);
        }
        y
    }
}

/// Multiplies every lane along `axis` by the eigenvector matrix (or its transpose).
fn transform(x: &mut Array3<f64>, axis: usize, e: &AxisEigen, inverse: bool) {
    let n = e.n;
    let mut buf = vec![0.0; n];
    for mut lane in x.lanes_mut(Axis(axis)) {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = 0.0;
            for i in 0..n {
                let q = if inverse { e.vectors[i * n + k] } else { e.vectors[k * n + i] };
                *b += q * lane[i];
            }
        }
        for (l, b) in lane.iter_mut().zip(&buf) {
            *l = *b;
        }
    }
}

/// Inverse of the componentwise vector Laplacian for Dirichlet face fields
/// (zero normal values on walls, odd reflection of tangential components).
#[derive(Clone, Debug)]
pub struct VectorLaplacian {
    comps: [FastPoisson; 3],
}

impl VectorLaplacian {
    pub fn new(grid: &Grid) -> Self {
        let comps = [0, 1, 2].map(|c| {
            let kinds = [0, 1, 2].map(|a| if a == c { AxisKind::DirichletNode } else { AxisKind::MirrorCell });
            let n = [0, 1, 2].map(|a| if a == c { grid.cells[a] - 1 } else { grid.cells[a] });
            FastPoisson::new(kinds, n, grid.spacing)
        });
        Self { comps }
    }

    pub fn solve(&self, f: &StaggeredField) -> StaggeredField {
        self.map_interior(f, |p, b| p.solve(b))
    }

    pub fn apply(&self, f: &StaggeredField) -> StaggeredField {
        self.map_interior(f, |p, b| p.apply(b))
    }

    fn map_interior(
        &self,
        f: &StaggeredField,
        op: impl Fn(&FastPoisson, &Array3<f64>) -> Array3<f64>,
    ) -> StaggeredField {
        let mut out = f.clone();
        for c in 0..3 {
            let n = f.comps[c].len_of(Axis(c));
            let inner = f.comps[c].slice_axis(Axis(c), Slice::from(1..n - 1)).to_owned();
            let sol = op(&self.comps[c], &inner);
            out.comps[c].slice_axis_mut(Axis(c), Slice::from(1..n - 1)).assign(&sol);
        }
        out.clear_boundary();
        debug_assert_eq!(out.location, Location::Faces);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive (semi)definite operator.
///
/// Stops when `|r| <= tol * |b|`; an exactly zero right-hand side returns `x = 0`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    for i in 0..n {
        r[i] = b[i] - ax[i];
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok(CgStats { iterations: it, relative_residual: rel });
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel <= tol {
        Ok(CgStats { iterations: max_iter, relative_residual: rel })
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: rel })
    }
}

/// Seven-point Neumann Laplacian `-div grad` on cells restricted to `mask` (cells outside
/// the mask are inactive and faces to them carry no flux).
pub fn masked_neumann_apply(grid: &Grid, mask: &[bool], x: &[f64], y: &mut [f64]) {
    let n = grid.cells;
    let inv_h2 = grid.spacing.map(|h| 1.0 / (h * h));
    let stride = [n[1] * n[2], n[2], 1];
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let idx = i * stride[0] + j * stride[1] + k;
                if !mask[idx] {
                    y[idx] = 0.0;
                    continue;
                }
                let pos = [i, j, k];
                let mut acc = 0.0;
                for a in 0..3 {
                    if pos[a] > 0 && mask[idx - stride[a]] {
                        acc += (x[idx] - x[idx - stride[a]]) * inv_h2[a];
                    }
                    if pos[a] + 1 < n[a] && mask[idx + stride[a]] {
                        acc += (x[idx] - x[idx + stride[a]]) * inv_h2[a];
                    }
                }
                y[idx] = acc;
            }
        }
    }
}
