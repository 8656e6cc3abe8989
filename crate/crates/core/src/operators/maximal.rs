//! Centred Hardy–Littlewood maximal function over dyadic cube half-widths.

use ndarray::Array3;

use crate::error::Result;
use crate::fields::{Grid, ScalarField};

/// Summed-area table with a leading zero plane on every axis.
fn prefix_sums(g: &Array3<f64>) -> Array3<f64> {
    let (n0, n1, n2) = g.dim();
    let mut s = Array3::<f64>::zeros((n0 + 1, n1 + 1, n2 + 1));
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                s[[i + 1, j + 1, k + 1]] = g[[i, j, k]].abs() + s[[i, j + 1, k + 1]] + s[[i + 1, j, k + 1]]
                    + s[[i + 1, j + 1, k]]
                    - s[[i, j, k + 1]]
                    - s[[i, j + 1, k]]
                    - s[[i + 1, j, k]]
                    + s[[i, j, k]];
            }
        }
    }
    s
}

fn box_sum(s: &Array3<f64>, lo: [usize; 3], hi: [usize; 3]) -> f64 {
    s[[hi[0], hi[1], hi[2]]] - s[[lo[0], hi[1], hi[2]]] - s[[hi[0], lo[1], hi[2]]] - s[[hi[0], hi[1], lo[2]]]
        + s[[lo[0], lo[1], hi[2]]]
        + s[[lo[0], hi[1], lo[2]]]
        + s[[hi[0], lo[1], lo[2]]]
        - s[[lo[0], lo[1], lo[2]]]
}

/// `Mg(x) = max_r |Q_r(x)|^-1 int_{Q_r(x)} |g|` over cubes of `2r + 1` cells with
/// `r in {0, 1, 2, 4, ...}` and `g` extended by zero outside the grid.
pub fn maximal_function(grid: &Grid, g: &ScalarField) -> Result<ScalarField> {
    g.check(grid)?;
    let n = grid.cells;
    let s = prefix_sums(&g.data);
    let nmax = *n.iter().max().expect("three axes");
    let mut radii = vec![0usize];
    let mut r = 1;
    while r < 2 * nmax {
        radii.push(r);
        r *= 2;
    }
    let mut out = Array3::<f64>::zeros(n);
    for ((i, j, k), m) in out.indexed_iter_mut() {
        let c = [i, j, k];
        let mut best = 0.0f64;
        for &r in &radii {
            let lo = [0, 1, 2].map(|a| c[a].saturating_sub(r));
            let hi = [0, 1, 2].map(|a| (c[a] + r + 1).min(n[a]));
            let count = ((2 * r + 1) as f64).powi(3);
            best = best.max(box_sum(&s, lo, hi) / count);
        }
        *m = best;
    }
    Ok(ScalarField { data: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_fixed() {
        let grid = Grid::unit_cube(8).unwrap();
        let g = ScalarField::from_fn(&grid, |_| -2.5);
        let m = maximal_function(&grid, &g).unwrap();
        assert!(m.data.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn box_sums_match_direct_sums() {
        let grid = Grid::unit_cube(5).unwrap();
        let g = ScalarField::from_fn(&grid, |x| (7.0 * x[0] + 3.0 * x[1] * x[2]).sin());
        let s = prefix_sums(&g.data);
        let direct: f64 = g.data.slice(ndarray::s![1..4, 0..2, 2..5]).iter().map(|v| v.abs()).sum();
        assert!((box_sum(&s, [1, 0, 2], [4, 2, 5]) - direct).abs() < 1e-12);
    }

    #[test]
    fn point_mass_decays_like_inverse_volume() {
        let grid = Grid::unit_cube(16).unwrap();
        let mut g = ScalarField::zeros(&grid);
        g.data[[8, 8, 8]] = 1.0;
        let m = maximal_function(&grid, &g).unwrap();
        assert_eq!(m.data[[8, 8, 8]], 1.0);
        // Distance 3 cells: smallest admissible dyadic radius is 4.
        assert!((m.data[[11, 8, 8]] - 1.0 / 729.0).abs() < 1e-15);
    }
}
