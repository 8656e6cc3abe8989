//! MAC-staggered fields and the discrete calculus on them.
//!
//! Layout on a grid with `n = [nx, ny, nz]` cells (indices are `[i, j, k]`):
//! - cell-centred scalars: `n` entries;
//! - face velocities: component `a` is node-aligned along axis `a` (`n[a] + 1` entries);
//! - edge fields (curl output): component `a` is cell-aligned along axis `a` and
//!   node-aligned along the other two axes.
//!
//! Homogeneous Dirichlet data is built in: normal face values on walls are stored (and are
//! zero for admissible fields) and tangential components use odd ghost reflection.

pub mod io;
pub mod norms;
pub mod ops;
pub mod poisson;
pub mod projection;
pub mod stencil;
pub mod subcell;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, DomainSpec};

pub use norms::{norm, FieldRef, NormSpec};
pub use ops::{
    convective_divergence, convective_rotational, convective_standard, curl, div, grad,
    kinetic_gradient, sym_grad, SymTensorField,
};
pub use projection::{leray_project, Projector};

/// Uniform grid on the bounding box of a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: DomainSpec,
    pub cells: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(domain: DomainSpec, cells: [usize; 3]) -> Result<Self> {
        domain.validate()?;
        if domain.dim != 3 {
            return Err(Error::InvalidDomain("grids are three-dimensional".into()));
        }
        if cells.iter().any(|&c| c < 4) {
            return Err(Error::InvalidParams(format!("need at least 4 cells per axis, got {cells:?}")));
        }
        let (lo, hi) = domain.bounding_box();
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            spacing[a] = (hi[a] - lo[a]) / cells[a] as f64;
            origin[a] = lo[a];
        }
        Ok(Self { domain, cells, spacing, origin })
    }

    /// Unit cube with `n` cells per axis.
    pub fn unit_cube(n: usize) -> Result<Self> {
        Self::new(DomainSpec::unit_cube(), [n; 3])
    }

    /// Same domain with twice the cells per axis.
    pub fn refined(&self) -> Self {
        let cells = self.cells.map(|c| 2 * c);
        Self::new(self.domain.clone(), cells).expect("refinement of a valid grid is valid")
    }

    pub fn is_box(&self) -> bool {
        self.domain.kind == DomainKind::Box
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Array shape for a component with the given node alignment per axis.
    pub fn shape(&self, stagger: [bool; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| self.cells[a] + stagger[a] as usize)
    }

    /// Physical position of entry `idx` of an array with the given alignment.
    pub fn position(&self, stagger: [bool; 3], idx: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| {
            let off = if stagger[a] { 0.0 } else { 0.5 };
            self.origin[a] + (idx[a] as f64 + off) * self.spacing[a]
        })
    }

    pub fn cell_center(&self, idx: [usize; 3]) -> [f64; 3] {
        self.position([false; 3], idx)
    }

    /// Largest spacing.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }
}

/// Where the components of a [`StaggeredField`] live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Faces,
    Edges,
}

impl Location {
    /// Node alignment of component `comp`.
    pub fn stagger(self, comp: usize) -> [bool; 3] {
        match self {
            Location::Faces => [0, 1, 2].map(|a| a == comp),
            Location::Edges => [0, 1, 2].map(|a| a != comp),
        }
    }
}

/// Three-component field on faces (velocities) or edges (curls, potentials).
#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredField {
    pub location: Location,
    pub comps: [Array3<f64>; 3],
}

impl StaggeredField {
    pub fn zeros(grid: &Grid, location: Location) -> Self {
        let comps = [0, 1, 2].map(|c| Array3::zeros(grid.shape(location.stagger(c))));
        Self { location, comps }
    }

    /// Samples `f(x)[c]` at the position of every entry of component `c`.
    pub fn from_fn(grid: &Grid, location: Location, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid, location);
        for c in 0..3 {
            let stag = location.stagger(c);
            out.comps[c].indexed_iter_mut().for_each(|((i, j, k), v)| {
                *v = f(grid.position(stag, [i, j, k]))[c];
            });
        }
        out
    }

    pub fn check(&self, grid: &Grid, location: Location) -> Result<()> {
        if self.location != location {
            return Err(Error::Precondition(format!(
                "expected a field on {location:?}, found {:?}",
                self.location
            )));
        }
        for c in 0..3 {
            let expected = grid.shape(location.stagger(c));
            let found = self.comps[c].shape();
            if found != expected {
                return Err(Error::ShapeMismatch { expected: expected.to_vec(), found: found.to_vec() });
            }
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.location == other.location
            && (0..3).all(|c| self.comps[c].shape() == other.comps[c].shape())
    }

    /// Plain sum of products of all entries.
    pub fn raw_dot(&self, other: &Self) -> f64 {
        (0..3)
            .map(|c| self.comps[c].iter().zip(other.comps[c].iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Discrete `L²` inner product with cell-volume weights.
    pub fn dot(&self, other: &Self, grid: &Grid) -> f64 {
        self.raw_dot(other) * grid.cell_volume()
    }

    pub fn norm_l2(&self, grid: &Grid) -> f64 {
        self.dot(self, grid).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flat_map(|a| a.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { location: self.location, comps: self.comps.clone().map(|a| a * s) }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) {
        for c in 0..3 {
            self.comps[c].scaled_add(s, &other.comps[c]);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Largest normal value on the walls (faces only).
    pub fn boundary_max(&self) -> f64 {
        if self.location != Location::Faces {
            return 0.0;
        }
        let mut m: f64 = 0.0;
        for c in 0..3 {
            let a = &self.comps[c];
            let n = a.len_of(ndarray::Axis(c));
            for idx in [0, n - 1] {
                m = a.index_axis(ndarray::Axis(c), idx).iter().fold(m, |m, v| m.max(v.abs()));
            }
        }
        m
    }

    /// Zeroes the normal values on the walls (faces only).
    pub fn clear_boundary(&mut self) {
        if self.location != Location::Faces {
            return;
        }
        for c in 0..3 {
            let n = self.comps[c].len_of(ndarray::Axis(c));
            for idx in [0, n - 1] {
                self.comps[c].index_axis_mut(ndarray::Axis(c), idx).fill(0.0);
            }
        }
    }
}

/// Cell-centred scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub data: Array3<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { data: Array3::zeros(grid.cells) }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        out.data
            .indexed_iter_mut()
            .for_each(|((i, j, k), v)| *v = f(grid.cell_center([i, j, k])));
        out
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.data.shape() != grid.cells {
            return Err(Error::ShapeMismatch {
                expected: grid.cells.to_vec(),
                found: self.data.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self, grid: &Grid) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume()
    }

    pub fn norm_l2(&self, grid: &Grid) -> f64 {
        self.dot(self, grid).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }
}
