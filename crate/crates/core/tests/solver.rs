use dclab::fields::ops::convective_rotational;
use dclab::fields::{div, Grid, Location, StaggeredField};
use dclab::inequalities::{sample_field, SampleKind};
use dclab::solver::{
    continuation, localization_diagnostic, operator_terms, solve, weak_form_check, ConvectiveForm, Forcing,
    ForcingSpec, LocalBall, ModelParams, SolverConfig,
};
use proptest::prelude::*;

// g(t) = t^2 (1 - t)^2 and its derivatives.
fn g0(t: f64) -> f64 {
    t * t * (1.0 - t) * (1.0 - t)
}
fn g1(t: f64) -> f64 {
    2.0 * t - 6.0 * t * t + 4.0 * t * t * t
}
fn g2(t: f64) -> f64 {
    2.0 - 12.0 * t + 12.0 * t * t
}
fn g3(t: f64) -> f64 {
    -12.0 + 24.0 * t
}

/// `v = curl(0, 0, g(x) g(y) g(z))`, which vanishes on every wall.
fn velocity(x: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = x;
    [g0(a) * g1(b) * g0(c), -g1(a) * g0(b) * g0(c), 0.0]
}

fn vorticity(x: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = x;
    [g1(a) * g0(b) * g1(c), g0(a) * g1(b) * g1(c), -(g2(a) * g0(b) + g0(a) * g2(b)) * g0(c)]
}

fn minus_laplacian(x: [f64; 3]) -> [f64; 3] {
    let [a, b, c] = x;
    [
        -(g2(a) * g1(b) * g0(c) + g0(a) * g3(b) * g0(c) + g0(a) * g1(b) * g2(c)),
        g3(a) * g0(b) * g0(c) + g1(a) * g2(b) * g0(c) + g1(a) * g0(b) * g2(c),
        0.0,
    ]
}

fn cross(w: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [w[1] * v[2] - w[2] * v[1], w[2] * v[0] - w[0] * v[2], w[0] * v[1] - w[1] * v[0]]
}

/// Max error over faces at distance at least 1/4 from every wall.
fn interior_error(grid: &Grid, computed: &StaggeredField, exact: impl Fn([f64; 3]) -> [f64; 3]) -> f64 {
    let mut err = 0.0f64;
    for c in 0..3 {
        let stagger = Location::Faces.stagger(c);
        for ((i, j, k), v) in computed.comps[c].indexed_iter() {
            let x = grid.position(stagger, [i, j, k]);
            if x.iter().any(|&t| !(0.25..=0.75).contains(&t)) {
                continue;
            }
            err = err.max((v - exact(x)[c]).abs());
        }
    }
    err
}

#[test]
fn linear_terms_match_a_polynomial_flow_at_second_order() {
    // p = 2 and alpha = 0: the stress term is curl curl v = -Laplace v, the viscous term
    // -nu0 div Dv = -nu0/2 Laplace v, and the rotational term omega x v.
    let params = ModelParams::viscous(2.0, 0.0, 1.0);
    let errors: Vec<[f64; 3]> = [16, 32]
        .iter()
        .map(|&n| {
            let grid = Grid::unit_cube(n).unwrap();
            let v = StaggeredField::from_fn(&grid, Location::Faces, velocity);
            let t = operator_terms(&params, &grid, &v).unwrap();
            [
                interior_error(&grid, &t.stress, minus_laplacian),
                interior_error(&grid, &t.viscous, |x| minus_laplacian(x).map(|c| 0.5 * c)),
                interior_error(&grid, &t.convective, |x| cross(vorticity(x), velocity(x))),
            ]
        })
        .collect();
    for term in 0..3 {
        let order = (errors[0][term] / errors[1][term]).log2();
        assert!(order >= 1.8, "term {term}: errors {:?}, order {order}", errors.iter().map(|e| e[term]).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rotational_convection_does_no_work(seed in 0u64..10_000, scale in 0.1f64..100.0) {
        let grid = Grid::unit_cube(8).unwrap();
        let v = sample_field(&grid, SampleKind::SolenoidalDirichlet, seed).unwrap().scaled(scale);
        let c = convective_rotational(&grid, &v).unwrap();
        let work = c.dot(&v, &grid);
        let vv = v.dot(&v, &grid);
        prop_assert!(work.abs() <= 1e-10 * vv * (1.0 + v.max_abs()), "work {work}, |v|^2 {vv}");
    }

    #[test]
    fn operator_is_monotone_without_convection(seed in 0u64..10_000, alpha in 0.0f64..1.4, eps in 1e-3f64..1e-1) {
        // <A(u) - A(w), u - w> >= 0 for the stress and regularization terms.
        let grid = Grid::unit_cube(6).unwrap();
        let params = ModelParams::degenerate(3.0, alpha, eps);
        let u = sample_field(&grid, SampleKind::SolenoidalDirichlet, seed).unwrap();
        let w = sample_field(&grid, SampleKind::SolenoidalDirichlet, seed + 1).unwrap().scaled(0.5);
        let tu = operator_terms(&params, &grid, &u).unwrap();
        let tw = operator_terms(&params, &grid, &w).unwrap();
        let du = u.sub(&w);
        let gap = tu.stress.add(&tu.regularization).sub(&tw.stress.add(&tw.regularization)).dot(&du, &grid);
        prop_assert!(gap >= -1e-12 * tu.stress.dot(&u, &grid).abs().max(1e-300));
    }
}

fn small_forcing(grid: &Grid, scale: f64) -> Forcing {
    Forcing::resolve(&ForcingSpec::Potential { scale, seed: 11 }, grid).unwrap()
}

#[test]
fn convective_forms_give_close_velocities() {
    let grid = Grid::unit_cube(8).unwrap();
    let forcing = small_forcing(&grid, 0.5);
    let cfg = SolverConfig::default();
    let rot = ModelParams::degenerate(3.0, 1.0, 1e-2);
    let dv = ModelParams { convective_form: ConvectiveForm::Divergence, ..rot };
    let a = solve(&rot, &forcing, &grid, &cfg).unwrap();
    let b = solve(&dv, &forcing, &grid, &cfg).unwrap();
    assert!(a.summary.converged && b.summary.converged);
    let rel = a.velocity.sub(&b.velocity).norm_l2(&grid) / a.velocity.norm_l2(&grid);
    assert!(rel <= 0.1, "relative velocity difference {rel}");
    let wf = weak_form_check(&dv, &forcing, &grid, &b.velocity, 5, 3).unwrap();
    assert!(wf.max_relative <= 1e-6, "{wf:?}");
}

#[test]
fn smaller_data_need_fewer_iterations() {
    let grid = Grid::unit_cube(8).unwrap();
    let params = ModelParams { kappa: 0.5, ..ModelParams::viscous(3.0, 1.0, 1.0) };
    // Full steps, so the count reflects the contraction rate and not the damping.
    let cfg = SolverConfig { damping: 1.0, ..Default::default() };
    let iterations: Vec<usize> = [2.0, 0.5, 0.05]
        .iter()
        .map(|&s| {
            let rep = solve(&params, &small_forcing(&grid, s), &grid, &cfg).unwrap();
            assert!(rep.summary.converged, "scale {s}: {:?}", rep.summary.residual_history);
            rep.summary.iterations
        })
        .collect();
    assert!(iterations.windows(2).all(|w| w[1] <= w[0]), "{iterations:?}");
    assert!(iterations[2] < iterations[0], "{iterations:?}");
}

#[test]
fn continuation_reduces_the_regularization_share() {
    let grid = Grid::unit_cube(8).unwrap();
    let params = ModelParams::degenerate(3.0, 1.0, 1.0);
    let forcing = small_forcing(&grid, 0.5);
    let schedule = [4e-2, 2e-2, 1e-2, 5e-3];
    let rep = continuation(&params, &forcing, &grid, &schedule, &SolverConfig::default()).unwrap();
    assert!(rep.complete);
    assert_eq!(rep.stages.len(), schedule.len());
    let shares = rep.shares();
    assert!(shares.windows(2).all(|w| w[1] < w[0]), "{shares:?}");
    assert!(rep.stages[0].vorticity_increments.is_empty());
    let inc = rep.vorticity_increments(4.0);
    assert_eq!(inc.len(), schedule.len() - 1);
    assert!(inc.last().unwrap() < inc.first().unwrap(), "{inc:?}");
    // Schedules must decrease strictly.
    assert!(continuation(&params, &forcing, &grid, &[1e-2, 1e-2], &SolverConfig::default()).is_err());
}

#[test]
fn localization_of_identical_solutions_vanishes() {
    let grid = Grid::unit_cube(12).unwrap();
    let params = ModelParams::degenerate(3.0, 1.0, 1e-2);
    let v = sample_field(&grid, SampleKind::SolenoidalDirichlet, 4).unwrap();
    let ball = LocalBall { center: [0.5; 3], radius: 0.2 };
    let r = localization_diagnostic(&grid, &params, &v, &params, &v, &ball).unwrap();
    assert_eq!(r.gap, 0.0);
    assert!(r.terms.iter().all(|t| t.abs() <= 1e-14));
    assert!(r.divergence_max <= 1e-7);
    let outside = LocalBall { center: [0.5; 3], radius: 0.3 };
    assert!(localization_diagnostic(&grid, &params, &v, &params, &v, &outside).is_err());
    let other = ModelParams { alpha: 0.5, ..params };
    assert!(localization_diagnostic(&grid, &params, &v, &other, &v, &ball).is_err());
}

#[test]
fn localization_closes_for_converged_solutions() {
    let grid = Grid::unit_cube(12).unwrap();
    let forcing = small_forcing(&grid, 0.5);
    let cfg = SolverConfig::default();
    let stage = ModelParams::degenerate(3.0, 1.0, 4e-2);
    let limit = stage.with_eps(1e-2);
    let a = solve(&stage, &forcing, &grid, &cfg).unwrap();
    let b = solve(&limit, &forcing, &grid, &cfg).unwrap();
    assert!(a.summary.converged && b.summary.converged);
    let ball = LocalBall { center: [0.5; 3], radius: 0.2 };
    let r = localization_diagnostic(&grid, &stage, &a.velocity, &limit, &b.velocity, &ball).unwrap();
    assert!(r.gap > 0.0);
    assert!(r.divergence_max <= 1e-7);
    assert!(r.closure.abs() <= 1e-4 * r.gap, "{r:?}");
}

#[test]
fn energy_constant_is_stable_across_eps() {
    let grid = Grid::unit_cube(8).unwrap();
    let forcing = small_forcing(&grid, 0.5);
    let constants: Vec<f64> = [2e-2, 5e-3]
        .iter()
        .map(|&eps| {
            let rep = solve(&ModelParams::degenerate(3.0, 1.0, eps), &forcing, &grid, &SolverConfig::default()).unwrap();
            assert!(rep.summary.converged);
            rep.summary.ledger.constant.unwrap()
        })
        .collect();
    let drift = (constants[0] - constants[1]).abs() / constants[0];
    assert!(drift < 0.2, "{constants:?}");
}

#[test]
fn solution_is_solenoidal_with_a_consistent_pressure() {
    let grid = Grid::unit_cube(8).unwrap();
    let rep = solve(&ModelParams::viscous(3.0, 2.0, 1.0), &small_forcing(&grid, 0.5), &grid, &SolverConfig::default())
        .unwrap();
    assert!(rep.summary.converged);
    assert!(div(&grid, &rep.velocity).unwrap().max_abs() <= 1e-9);
    assert!(rep.pressure.sum().abs() <= 1e-9 * (1.0 + rep.pressure.max_abs()) * grid.n_cells() as f64);
}
