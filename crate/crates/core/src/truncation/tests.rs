use super::*;

#[test]
fn brackets_are_the_stated_powers() {
    assert_eq!(bracket(0), (2.0, 2.0));
    assert_eq!(bracket(1), (4.0, 8.0));
    assert_eq!(bracket(2), (16.0, 128.0));
    assert_eq!(bracket(3), (256.0, 32768.0));
}

#[test]
fn thresholds_outside_their_bracket_are_refused() {
    assert!(TruncationLevels::new(1, vec![4.0, 16.0]).is_ok());
    assert!(TruncationLevels::new(1, vec![3.0, 16.0]).is_err());
    assert!(TruncationLevels::new(1, vec![8.0, 256.0]).is_err());
    assert!(TruncationLevels::new(0, vec![]).is_err());
    assert!(TruncationLevels::lowest(2, 1).is_err());
    assert!(serde_json::from_str::<TruncationLevels>(r#"{"j0":0,"thresholds":[2.0],"x":1}"#).is_err());
}

#[test]
fn zero_field_has_zero_potential() {
    let grid = Grid::unit_cube(8).unwrap();
    let u = StaggeredField::zeros(&grid, Location::Faces);
    let a = curl_inverse(&grid, &u).unwrap();
    assert_eq!(a.max_abs(), 0.0);
}

fn edge_field(grid: &Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> StaggeredField {
    StaggeredField::from_fn(grid, Location::Edges, f)
}

#[test]
fn second_gradient_of_quadratics_is_exact_away_from_walls() {
    let grid = Grid::unit_cube(12).unwrap();
    // A = (x y, 0, z^2 / 2): entries d_x d_y A_x = d_y d_x A_x = 1, d_z d_z A_z = 1.
    let a = edge_field(&grid, |x| [x[0] * x[1], 0.0, 0.5 * x[2] * x[2]]);
    let g = second_gradient_magnitude(&grid, &a).unwrap();
    let expected = 3f64.sqrt();
    for ((i, j, k), v) in g.data.indexed_iter() {
        if [i, j, k].iter().all(|&c| (2..10).contains(&c)) {
            assert!((v - expected).abs() < 1e-9, "{v} at {:?}", (i, j, k));
        }
    }
}

#[test]
fn selected_threshold_minimises_the_weighted_measure() {
    let grid = Grid::unit_cube(8).unwrap();
    // Maximal-function stand-in with values spread over several brackets.
    let m = ScalarField::from_fn(&grid, |x| 2f64.powf(1.0 + 12.0 * x[0] * x[1]));
    let s = 2.0;
    let levels = TruncationLevels::select_from(&grid, &m, 0, 3, s).unwrap();
    let vol = grid.cell_volume();
    let cost = |lam: f64| lam.powf(s) * m.data.iter().filter(|v| **v > lam).count() as f64 * vol;
    for j in levels.levels() {
        let chosen = levels.threshold(j).unwrap();
        let (lo, hi) = bracket(j);
        assert!(chosen >= lo && chosen <= hi);
        let mut lam = lo;
        while lam <= hi {
            assert!(cost(chosen) <= cost(lam));
            lam *= 2.0;
        }
    }
}

#[test]
fn bad_sets_are_nested_in_the_threshold() {
    let grid = Grid::unit_cube(8).unwrap();
    let m = ScalarField::from_fn(&grid, |x| 100.0 * (x[0] + x[1] * x[2]));
    let small = bad_set(&m, 1, 4.0);
    let large = bad_set(&m, 2, 16.0);
    assert!(large.count() <= small.count());
    assert!(small.mask.iter().zip(large.mask.iter()).all(|(s, l)| !*l || *s));
}

#[test]
fn cutoff_vanishes_near_bad_cells_and_is_one_far_away() {
    let grid = Grid::unit_cube(16).unwrap();
    let mut mask = Array3::from_elem(grid.cells, false);
    mask[[8, 8, 8]] = true;
    let centre = grid.cell_center([8, 8, 8]);
    assert_eq!(cutoff_at(&grid, &mask, centre), 0.0);
    let h = grid.h();
    let near = [centre[0] + 0.9 * h, centre[1], centre[2]];
    assert_eq!(cutoff_at(&grid, &mask, near), 0.0);
    let far = [centre[0] + (1.0 + COLLAR_CELLS + 0.01) * h, centre[1], centre[2]];
    assert_eq!(cutoff_at(&grid, &mask, far), 1.0);
    let mid = [centre[0] + (1.0 + 0.5 * COLLAR_CELLS) * h, centre[1], centre[2]];
    let z = cutoff_at(&grid, &mask, mid);
    assert!(z > 0.0 && z < 1.0);
}
