//! One-axis difference and averaging stencils between cell- and node-aligned arrays.
//!
//! Boundary handling for the cell-to-node direction:
//! - `Mirror`: odd reflection (homogeneous Dirichlet for tangential components);
//! - `Zero`: wall entries set to zero (Neumann scalars, wall-normal gradients);
//! - `Periodic`: wrap-around, the last node duplicates the first.

use ndarray::{Array3, ArrayView3, Axis, Slice};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    Mirror,
    Zero,
    Periodic,
}

fn with_len(a: &ArrayView3<f64>, axis: usize, len: usize) -> Array3<f64> {
    let mut shape = a.raw_dim();
    shape[axis] = len;
    Array3::zeros(shape)
}

/// Cell-aligned to node-aligned difference along `axis`.
pub fn d_to_node(a: ArrayView3<f64>, axis: usize, h: f64, bc: Bc) -> Array3<f64> {
    let ax = Axis(axis);
    let n = a.len_of(ax);
    let mut out = with_len(&a, axis, n + 1);
    let inner = &a.slice_axis(ax, Slice::from(1..n)) - &a.slice_axis(ax, Slice::from(0..n - 1));
    out.slice_axis_mut(ax, Slice::from(1..n)).assign(&(inner / h));
    match bc {
        Bc::Mirror => {
            out.index_axis_mut(ax, 0).assign(&(&a.index_axis(ax, 0) * (2.0 / h)));
            out.index_axis_mut(ax, n).assign(&(&a.index_axis(ax, n - 1) * (-2.0 / h)));
        }
        Bc::Zero => {}
        Bc::Periodic => {
            let edge = (&a.index_axis(ax, 0) - &a.index_axis(ax, n - 1)) / h;
            out.index_axis_mut(ax, 0).assign(&edge);
            out.index_axis_mut(ax, n).assign(&edge);
        }
    }
    out
}

/// Exact transpose of [`d_to_node`] for `Mirror` and `Zero`.
pub fn d_to_node_t(b: ArrayView3<f64>, axis: usize, h: f64, bc: Bc) -> Array3<f64> {
    assert!(bc != Bc::Periodic, "periodic transpose is not provided");
    let ax = Axis(axis);
    let n = b.len_of(ax) - 1;
    let mut out = with_len(&b, axis, n);
    // Interior nodes 1..n-1 contribute +b[m]/h to a[m] and -b[m]/h to a[m-1].
    out.slice_axis_mut(ax, Slice::from(1..n))
        .scaled_add(1.0 / h, &b.slice_axis(ax, Slice::from(1..n)));
    out.slice_axis_mut(ax, Slice::from(0..n - 1))
        .scaled_add(-1.0 / h, &b.slice_axis(ax, Slice::from(1..n)));
    if bc == Bc::Mirror {
        out.index_axis_mut(ax, 0).scaled_add(2.0 / h, &b.index_axis(ax, 0));
        out.index_axis_mut(ax, n - 1).scaled_add(-2.0 / h, &b.index_axis(ax, n));
    }
    out
}

/// Node-aligned to cell-aligned difference along `axis`.
pub fn d_to_cell(a: ArrayView3<f64>, axis: usize, h: f64) -> Array3<f64> {
    let ax = Axis(axis);
    let n = a.len_of(ax) - 1;
    (&a.slice_axis(ax, Slice::from(1..n + 1)) - &a.slice_axis(ax, Slice::from(0..n))) / h
}

/// Exact transpose of [`d_to_cell`].
pub fn d_to_cell_t(b: ArrayView3<f64>, axis: usize, h: f64) -> Array3<f64> {
    let ax = Axis(axis);
    let n = b.len_of(ax);
    let mut out = with_len(&b, axis, n + 1);
    out.slice_axis_mut(ax, Slice::from(1..n + 1)).scaled_add(1.0 / h, &b);
    out.slice_axis_mut(ax, Slice::from(0..n)).scaled_add(-1.0 / h, &b);
    out
}

/// Cell-aligned to node-aligned average along `axis`.
pub fn avg_to_node(a: ArrayView3<f64>, axis: usize, bc: Bc) -> Array3<f64> {
    let ax = Axis(axis);
    let n = a.len_of(ax);
    let mut out = with_len(&a, axis, n + 1);
    let inner = (&a.slice_axis(ax, Slice::from(1..n)) + &a.slice_axis(ax, Slice::from(0..n - 1))) * 0.5;
    out.slice_axis_mut(ax, Slice::from(1..n)).assign(&inner);
    if bc == Bc::Periodic {
        let edge = (&a.index_axis(ax, 0) + &a.index_axis(ax, n - 1)) * 0.5;
        out.index_axis_mut(ax, 0).assign(&edge);
        out.index_axis_mut(ax, n).assign(&edge);
    }
    out
}

/// Node-aligned to cell-aligned average along `axis`.
pub fn avg_to_cell(a: ArrayView3<f64>, axis: usize) -> Array3<f64> {
    let ax = Axis(axis);
    let n = a.len_of(ax) - 1;
    (&a.slice_axis(ax, Slice::from(1..n + 1)) + &a.slice_axis(ax, Slice::from(0..n))) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 3], rng: &mut ChaCha8Rng) -> Array3<f64> {
        Array3::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn dot(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn transposes_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for axis in 0..3 {
            let mut cell = [4, 5, 6];
            let a = random(cell, &mut rng);
            cell[axis] += 1;
            let b = random(cell, &mut rng);
            for bc in [Bc::Mirror, Bc::Zero] {
                let lhs = dot(&d_to_node(a.view(), axis, 0.3, bc), &b);
                let rhs = dot(&a, &d_to_node_t(b.view(), axis, 0.3, bc));
                assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            }
            let lhs = dot(&d_to_cell(b.view(), axis, 0.3), &a);
            let rhs = dot(&b, &d_to_cell_t(a.view(), axis, 0.3));
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn mirror_difference_sees_zero_wall_value() {
        // a = 1 on every cell: the wall derivative is (1 - (-1)) / h.
        let a = Array3::from_elem([3, 1, 1], 1.0);
        let d = d_to_node(a.view(), 0, 0.5, Bc::Mirror);
        assert_eq!(d.iter().cloned().collect::<Vec<_>>(), vec![4.0, 0.0, 0.0, -4.0]);
    }

    #[test]
    fn periodic_difference_wraps() {
        let a = Array3::from_shape_vec([4, 1, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let d = d_to_node(a.view(), 0, 1.0, Bc::Periodic);
        assert_eq!(d.iter().cloned().collect::<Vec<_>>(), vec![-3.0, 1.0, 1.0, 1.0, -3.0]);
    }
}
