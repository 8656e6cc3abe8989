use dclab::geometry::{ap_constant, ap_refinement, ap_sampled, sample_power, DomainSpec, DyadicCubeFamily, PowerWeight};
use proptest::prelude::*;

#[test]
fn constant_weight_has_unit_constant() {
    for p in [1.5, 2.0, 3.0, 6.0] {
        let w = PowerWeight::new(0.0, DomainSpec::unit_cube());
        for v in ap_refinement(&w, p, &[0, 2, 4], 2).unwrap() {
            assert_eq!(v, 1.0);
        }
    }
}

#[test]
fn constant_is_non_decreasing_in_the_level_at_and_beyond_criticality() {
    for alpha in [2.0, 2.5, 3.0] {
        let w = PowerWeight::new(alpha, DomainSpec::unit_cube());
        let a = ap_refinement(&w, 3.0, &[1, 2, 3, 4, 5], 2).unwrap();
        assert!(a.windows(2).all(|w| w[1] >= w[0]), "alpha {alpha}: {a:?}");
        assert!(a[4] > 1.2 * a[3], "alpha {alpha}: no growth in {a:?}");
    }
}

#[test]
fn subcritical_constant_settles() {
    for alpha in [-0.5, 0.5, 1.0] {
        let w = PowerWeight::new(alpha, DomainSpec::unit_cube());
        let a = ap_refinement(&w, 3.0, &[4, 5, 6], 2).unwrap();
        assert!((a[2] - a[1]).abs() < 0.01 * a[1], "alpha {alpha}: {a:?}");
    }
}

#[test]
fn one_dimensional_constant_matches_the_exact_integral() {
    // On [0,1] with d = min(x, 1-x) the whole-interval product is
    // (int d^alpha)(int d^(-alpha/2))^2 = 2^(-alpha)/(alpha+1) * (2^(alpha/2)/(1-alpha/2))^2.
    let alpha = 1.0;
    let exact = 2f64.powf(-alpha) / (alpha + 1.0) * (2f64.powf(alpha / 2.0) / (1.0 - alpha / 2.0)).powi(2);
    let w = PowerWeight::new(alpha, DomainSpec::unit_interval());
    for q in [2, 4, 8] {
        let v = ap_constant(&w, &DyadicCubeFamily::covering(&w.domain, 0), 3.0, q).unwrap();
        assert!((v - exact).abs() < 1e-12 * exact, "q {q}: {v} vs {exact}");
    }
}

#[test]
fn ball_and_invalid_arguments() {
    let w = PowerWeight::new(1.0, DomainSpec::ball(1.0, 3).unwrap());
    let v = ap_constant(&w, &DyadicCubeFamily::covering(&w.domain, 2), 3.0, 2).unwrap();
    assert!(v.is_finite() && v >= 1.0);
    assert!(ap_constant(&w, &DyadicCubeFamily::covering(&w.domain, 2), 1.0, 2).is_err());
    assert!(ap_constant(&w, &DyadicCubeFamily::covering(&w.domain, 2), 3.0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_power_is_the_interval_average(d in 0.01f64..2.0, half in 0.001f64..0.5, beta in -0.95f64..3.0) {
        // Independent oracle: midpoint rule after the graded substitution t = lo + (hi - lo) s^20,
        // which removes the endpoint singularity.
        let lo = (d - half).max(0.0);
        let hi = d + half;
        let n = 20_000;
        let k = 20.0;
        let oracle = (0..n)
            .map(|i| {
                let s = (i as f64 + 0.5) / n as f64;
                (lo + (hi - lo) * s.powf(k)).powf(beta) * k * s.powf(k - 1.0)
            })
            .sum::<f64>()
            / n as f64;
        let v = sample_power(d, half, beta);
        prop_assert!((v - oracle).abs() <= 1e-6 * oracle, "{v} vs {oracle}");
    }

    #[test]
    fn box_fast_path_agrees_with_sampling(alpha in -0.9f64..3.0, level in 0usize..3, q in 2usize..4) {
        let w = PowerWeight::new(alpha, DomainSpec::cuboid(&[1.0, 0.75, 0.5]).unwrap());
        let fam = DyadicCubeFamily::covering(&w.domain, level);
        let fast = ap_constant(&w, &fam, 3.0, q).unwrap();
        let slow = ap_sampled(&w, &fam, 3.0, q).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-10 * slow);
    }
}
