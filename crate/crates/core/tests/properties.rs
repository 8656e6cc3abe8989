use dclab::fields::norms::{gradient_magnitude, FieldRef};
use dclab::fields::{div, Grid};
use dclab::geometry::{distance, power, DomainSpec, PowerWeight};
use dclab::inequalities::{
    check, sample_field, subcell_integral, sym_gradient_magnitude, vorticity_magnitude, Ensemble, InequalityCase,
    InequalityName, InequalityParams, SampleKind,
};
use dclab::operators::{monotonicity_integrand, p_stokes_operator, stress_value, StressParams};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-10.0f64..10.0)
}

fn norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stress_is_monotone(p in 1.2f64..4.0, kappa in 0.0f64..2.0, weight in 0.0f64..3.0, a in vec3(), b in vec3()) {
        let params = StressParams::new(p, 0.0, kappa).unwrap();
        let m = monotonicity_integrand(&params, weight, a, b);
        let scale = weight * (kappa + norm(a) + norm(b)).powf(p);
        prop_assert!(m >= -1e-12 * scale.max(1e-300), "integrand {m}");
    }

    #[test]
    fn stress_is_odd_and_has_the_power_law_size(p in 1.2f64..4.0, kappa in 0.0f64..2.0, weight in 0.0f64..3.0, a in vec3()) {
        let params = StressParams::new(p, 0.0, kappa).unwrap();
        let s = stress_value(&params, weight, a);
        let t = stress_value(&params, weight, a.map(|x| -x));
        for c in 0..3 {
            prop_assert_eq!(s[c], -t[c]);
        }
        // Independent evaluation of the magnitude weight (kappa + |a|)^(p-2) |a|.
        let m = norm(a);
        let expect = weight * (kappa + m).powf(p - 2.0) * m;
        prop_assert!((norm(s) - expect).abs() <= 1e-12 * expect.max(1e-300));
    }

    #[test]
    fn potential_grows_like_the_stress(p in 1.2f64..4.0, kappa in 0.0f64..2.0, m in 1e-3f64..10.0) {
        // d/dm Phi(m) = (kappa + m)^(p-2) m, checked by a central difference.
        let params = StressParams::new(p, 0.0, kappa).unwrap();
        let h = 1e-5 * m;
        let fd = (params.potential(1.0, m + h) - params.potential(1.0, m - h)) / (2.0 * h);
        let exact = (kappa + m).powf(p - 2.0) * m;
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.max(1e-12), "{fd} vs {exact}");
    }

    #[test]
    fn distance_is_one_lipschitz(x in prop::array::uniform3(0.0f64..1.0), y in prop::array::uniform3(0.0f64..1.0), r in 0.2f64..2.0) {
        let cube = DomainSpec::unit_cube();
        let dx = distance(&cube, &x).unwrap();
        let dy = distance(&cube, &y).unwrap();
        let gap = norm([x[0] - y[0], x[1] - y[1], x[2] - y[2]]);
        prop_assert!((dx - dy).abs() <= gap + 1e-15);
        // Independent oracle for the cube: the smallest coordinate gap to a face.
        let oracle = x.iter().map(|t| t.min(1.0 - t)).fold(f64::INFINITY, f64::min);
        prop_assert!((dx - oracle).abs() <= 1e-15);
        let ball = DomainSpec::ball(r, 3).unwrap();
        let bx = x.map(|t| (t - 0.5) * r);
        let by = y.map(|t| (t - 0.5) * r);
        if ball.contains(&bx) && ball.contains(&by) {
            let d1 = distance(&ball, &bx).unwrap();
            let d2 = distance(&ball, &by).unwrap();
            prop_assert!((d1 - d2).abs() <= norm([bx[0] - by[0], bx[1] - by[1], bx[2] - by[2]]) + 1e-14);
            prop_assert!((d1 - (r - norm(bx))).abs() <= 1e-14);
        }
    }

    #[test]
    fn weight_power_is_multiplicative(d in 1e-3f64..10.0, e in 1e-3f64..10.0, a in -0.9f64..3.0) {
        let lhs = power(d * e, a);
        prop_assert!((lhs - power(d, a) * power(e, a)).abs() <= 1e-12 * lhs);
        let w = PowerWeight::new(a, DomainSpec::unit_cube());
        prop_assert!((w.at(&[0.5, 0.5, 0.5]) - 0.5f64.powf(a)).abs() <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn p_stokes_operator_is_coercive(seed in 0u64..10_000, p_reg in 1.5f64..4.0, eps in 1e-3f64..1.0, scale in 0.1f64..10.0) {
        // <A(v), v> = eps sum (V/8) |Dv|^p exactly, since A is the gradient of a p-homogeneous energy.
        let grid = Grid::unit_cube(6).unwrap();
        let v = sample_field(&grid, SampleKind::Dirichlet, seed).unwrap().scaled(scale);
        let a = p_stokes_operator(&grid, &v, p_reg, eps).unwrap();
        let pairing = a.dot(&v, &grid);
        let energy = eps * subcell_integral(&grid, &sym_gradient_magnitude(&grid, &v), 0.0, p_reg);
        prop_assert!(pairing > 0.0);
        prop_assert!((pairing - energy).abs() <= 1e-10 * energy, "{pairing} vs {energy}");
    }

    #[test]
    fn unweighted_grad_curl_matches_the_div_curl_identity(seed in 0u64..10_000) {
        // For solenoidal fields vanishing on the walls, |grad v|_2 = |curl v|_2.
        let grid = Grid::unit_cube(8).unwrap();
        let v = sample_field(&grid, SampleKind::SolenoidalDirichlet, seed).unwrap();
        prop_assert!(div(&grid, &v).unwrap().max_abs() <= 1e-10);
        let g = subcell_integral(&grid, &gradient_magnitude(&grid, FieldRef::Vector(&v)).unwrap(), 0.0, 2.0);
        let w = subcell_integral(&grid, &vorticity_magnitude(&grid, &v), 0.0, 2.0);
        prop_assert!((g - w).abs() <= 1e-10 * g, "{g} vs {w}");
        let case = InequalityCase {
            name: InequalityName::GradCurlWeighted,
            params: InequalityParams { alpha: Some(0.0), ..InequalityParams::p(2.0) },
            ensemble: Ensemble { samples: 1, seed },
            hypothesis_demo: false,
        };
        let report = check(&case, &grid).unwrap();
        prop_assert!((report.max_ratio - 1.0).abs() <= 1e-10);
    }
}
