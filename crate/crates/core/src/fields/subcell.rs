//! Corner-subcell collocation.
//!
//! Every cell is split into eight corner subcells of volume `V/8`. A staggered array is
//! sampled in the subcell at corner `(a, b, c)` of cell `(i, j, k)` by taking, along each
//! node-aligned axis, the node on that corner's side. Integrals of nonlinear pointwise
//! expressions are evaluated with one point per subcell; `scatter` is the exact transpose
//! of `gather`, so energies assembled this way have exact discrete gradients.

use ndarray::Array3;

use super::Grid;
use crate::geometry::DomainSpec;

pub const CORNERS: usize = 8;

#[inline]
pub fn corner_offsets(corner: usize) -> [usize; 3] {
    [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1]
}

/// Samples `arr` (alignment `stagger`) at every (cell, corner); layout `cell * 8 + corner`
/// with cells in row-major order.
pub fn gather(arr: &Array3<f64>, stagger: [bool; 3], cells: [usize; 3]) -> Vec<f64> {
    let shape = arr.shape();
    let data = arr.as_slice().expect("standard layout");
    let (d1, d2) = (shape[1], shape[2]);
    let s = stagger.map(|b| b as usize);
    let mut out = Vec::with_capacity(cells.iter().product::<usize>() * CORNERS);
    for i in 0..cells[0] {
        for j in 0..cells[1] {
            for k in 0..cells[2] {
                for corner in 0..CORNERS {
                    let [a, b, c] = corner_offsets(corner);
                    let idx = ((i + a * s[0]) * d1 + (j + b * s[1])) * d2 + (k + c * s[2]);
                    out.push(data[idx]);
                }
            }
        }
    }
    out
}

/// Transpose of [`gather`]: sums corner values into the array.
pub fn scatter(vals: &[f64], stagger: [bool; 3], cells: [usize; 3]) -> Array3<f64> {
    let shape = [0, 1, 2].map(|a| cells[a] + stagger[a] as usize);
    let mut out = Array3::<f64>::zeros(shape);
    {
        let data = out.as_slice_mut().expect("standard layout");
        let (d1, d2) = (shape[1], shape[2]);
        let s = stagger.map(|b| b as usize);
        let mut n = 0;
        for i in 0..cells[0] {
            for j in 0..cells[1] {
                for k in 0..cells[2] {
                    for corner in 0..CORNERS {
                        let [a, b, c] = corner_offsets(corner);
                        let idx = ((i + a * s[0]) * d1 + (j + b * s[1])) * d2 + (k + c * s[2]);
                        data[idx] += vals[n];
                        n += 1;
                    }
                }
            }
        }
    }
    out
}

/// Centre of every corner subcell, same layout as [`gather`].
pub fn subcell_centers(grid: &Grid) -> Vec<[f64; 3]> {
    let n = grid.cells;
    let h = grid.spacing;
    let mut out = Vec::with_capacity(grid.n_cells() * CORNERS);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let c = grid.cell_center([i, j, k]);
                for corner in 0..CORNERS {
                    let o = corner_offsets(corner);
                    out.push([0, 1, 2].map(|a| c[a] + (o[a] as f64 - 0.5) * 0.5 * h[a]));
                }
            }
        }
    }
    out
}

/// Boundary distance at every subcell centre.
pub fn subcell_distances(grid: &Grid, domain: &DomainSpec) -> Vec<f64> {
    subcell_centers(grid).iter().map(|x| domain.distance_clamped(x)).collect()
}

/// Quadrature weight of one subcell.
pub fn subcell_volume(grid: &Grid) -> f64 {
    grid.cell_volume() / CORNERS as f64
}

/// Subcell mean of corner values per cell.
pub fn cell_means(vals: &[f64], cells: [usize; 3]) -> Array3<f64> {
    let mut out = Array3::zeros(cells);
    for (v, chunk) in out.iter_mut().zip(vals.chunks(CORNERS)) {
        *v = chunk.iter().sum::<f64>() / CORNERS as f64;
    }
    out
}
