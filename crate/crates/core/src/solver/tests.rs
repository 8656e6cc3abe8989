use super::*;
use crate::fields::div;

fn smooth_solenoidal(grid: &Grid, seed: u64) -> StaggeredField {
    sample_field(grid, SampleKind::SolenoidalDirichlet, seed).unwrap()
}

#[test]
fn zero_velocity_zero_forcing_has_zero_residual() {
    let grid = Grid::unit_cube(6).unwrap();
    let params = ModelParams::degenerate(3.0, 1.0, 1e-2);
    let v = StaggeredField::zeros(&grid, Location::Faces);
    let r = residual(&params, &Forcing::zero(&grid), &grid, &v).unwrap();
    assert_eq!(r.max_abs(), 0.0);
}

#[test]
fn manufactured_forcing_is_reproduced() {
    let grid = Grid::unit_cube(8).unwrap();
    for params in [
        ModelParams::degenerate(3.0, 1.0, 1e-2),
        ModelParams::viscous(3.0, 2.0, 1.0),
        ModelParams { convective_form: ConvectiveForm::Divergence, ..ModelParams::degenerate(2.5, 1.2, 1e-1) },
        ModelParams { reg_flavor: RegFlavor::ShiftedWeight, ..ModelParams::degenerate(3.0, 1.0, 1e-1) },
    ] {
        let v = smooth_solenoidal(&grid, 5);
        let f = operator_terms(&params, &grid, &v).unwrap().total();
        let forcing = Forcing::from_body(&grid, f.clone()).unwrap();
        let r = residual(&params, &forcing, &grid, &v).unwrap();
        assert!(r.max_abs() <= 1e-10 * f.max_abs().max(1.0), "{params:?}: {}", r.max_abs());
    }
}

#[test]
fn invalid_models_are_refused() {
    assert!(ModelParams::degenerate(3.0, 1.0, 0.0).validate().is_err());
    assert!(ModelParams::degenerate(3.0, 1.6, 1e-2).validate().is_err());
    let div_form = ModelParams { convective_form: ConvectiveForm::Divergence, ..ModelParams::degenerate(3.0, 1.8, 1e-2) };
    assert!(div_form.validate().is_ok());
    assert!(ModelParams { alpha: 2.0, ..div_form }.validate().is_err());
    assert!(ModelParams::viscous(3.0, 2.0, 1.0).validate().is_ok());
    assert!(serde_json::from_str::<ModelParams>(r#"{"p": 3, "alpha": 1, "eps": 0.1, "bogus": 1}"#).is_err());
}

#[test]
fn zero_forcing_gives_rest() {
    let grid = Grid::unit_cube(6).unwrap();
    let params = ModelParams::degenerate(3.0, 1.0, 1e-2);
    let rep = solve(&params, &Forcing::zero(&grid), &grid, &SolverConfig::default()).unwrap();
    assert!(rep.summary.converged);
    assert_eq!(rep.velocity.max_abs(), 0.0);
    let l = &rep.summary.ledger;
    assert_eq!([l.regularization, l.weighted_vorticity, l.viscous, l.forcing_work, l.lhs], [0.0; 5]);
    assert!(l.gradient_norms.iter().all(|(_, v)| *v == 0.0));
}

#[test]
fn converged_solution_is_solenoidal() {
    let grid = Grid::unit_cube(8).unwrap();
    let params = ModelParams::viscous(3.0, 2.0, 1.0);
    let forcing = Forcing::resolve(&ForcingSpec::Bumps { scale: 0.5, seed: 2 }, &grid).unwrap();
    let rep = solve(&params, &forcing, &grid, &SolverConfig::default()).unwrap();
    assert!(rep.summary.converged, "{:?}", rep.summary.residual_history);
    assert!(div(&grid, &rep.velocity).unwrap().max_abs() < 1e-9);
    assert!(rep.velocity.boundary_max() == 0.0);
}

#[test]
fn potential_forcing_matches_its_weak_form() {
    let grid = Grid::unit_cube(6).unwrap();
    let forcing = Forcing::resolve(&ForcingSpec::Potential { scale: 1.0, seed: 3 }, &grid).unwrap();
    let phi = smooth_solenoidal(&grid, 9);
    let g = crate::fields::ops::corner_gradient(&grid, &phi);
    let f = forcing.potential.as_ref().unwrap();
    let direct: f64 = (0..g[0][0].len())
        .map(|q| (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| f[i][j][q] * g[i][j][q]).sum::<f64>())
        .sum::<f64>()
        * subcell_volume(&grid);
    assert!((forcing.body.dot(&phi, &grid) + direct).abs() < 1e-12 * direct.abs().max(1e-300) + 1e-14);
}
