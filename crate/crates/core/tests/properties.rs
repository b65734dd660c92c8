use proptest::prelude::*;

use spin7_core::critical::{alc_point, type1_point};
use spin7_core::dynamics::{eval_g, vector_field};
use spin7_core::integrator::{integrate, monotone_check_values, parse_csv, to_csv, IntegratorSettings};
use spin7_core::phase::{conservation_expr, project_full, project_trace, residuals, trace_expr};
use spin7_core::verify::surface_point;
use spin7_core::{validate_pair, Branch, CoprimePair, Error, Orbit, PhasePoint};

fn pair_strategy() -> impl Strategy<Value = CoprimePair> {
    prop_oneof![Just((2, 1)), Just((3, 1)), Just((3, 2)), Just((5, 2)), Just((1, 4))]
        .prop_map(|(k, l)| validate_pair(k, l).unwrap())
}

fn branch_strategy() -> impl Strategy<Value = Branch> {
    prop_oneof![Just(Branch::Plus), Just(Branch::Minus)]
}

fn point_strategy() -> impl Strategy<Value = PhasePoint> {
    prop::array::uniform8(-2.0f64..2.0).prop_map(PhasePoint::from_array)
}

fn euclid(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn trace_rate_is_linear_in_trace_and_conservation(p in point_strategy(), pair in pair_strategy()) {
        let f = vector_field(&p, &pair).derivative;
        let rate = 2.0 * (f[0] + f[1] + f[2]) + f[3];
        let expected = (eval_g(&p) - 1.0) * trace_expr(&p.x) + conservation_expr(&p.to_array(), &pair);
        let scale = 1.0 + p.inf_norm().powi(3);
        prop_assert!((rate - expected).abs() <= 1e-12 * scale, "rate {rate} expected {expected}");
    }

    #[test]
    fn vanishing_fiber_coordinates_stay_zero(p in point_strategy(), pair in pair_strategy(), i in 0usize..4) {
        let mut q = p;
        q.z[i] = 0.0;
        prop_assert_eq!(vector_field(&q, &pair).derivative[4 + i], 0.0);
    }

    #[test]
    fn trace_projection_is_idempotent(p in point_strategy()) {
        let q = project_trace(&p);
        prop_assert!(trace_expr(&q.x).abs() <= 1e-14);
        prop_assert_eq!(q.z, p.z);
        let r = project_trace(&q);
        for i in 0..4 {
            prop_assert!((r.x[i] - q.x[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn pair_validation_matches_gcd(k in -3i64..60, l in -3i64..60) {
        let valid = k > 0 && l > 0 && k != l && euclid(k, l) == 1;
        prop_assert_eq!(validate_pair(k, l).is_ok(), valid);
    }

    #[test]
    fn decreasing_sequences_never_flag(v in prop::collection::vec(0.01f64..0.99, 1..64)) {
        let mut values = vec![1.0];
        for f in &v {
            values.push(values.last().unwrap() * f);
        }
        let etas: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
        let rep = monotone_check_values(&values, &etas).unwrap();
        prop_assert!(rep.violations.is_empty());
        prop_assert_eq!(rep.checked, values.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, max_global_rejects: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn full_projection_returns_to_the_surface(
        z in prop::array::uniform3(0.05f64..0.6),
        kick in prop::array::uniform8(-1e-7f64..1e-7),
        pair in pair_strategy(),
        branch in branch_strategy(),
    ) {
        let on = surface_point(z, &pair, branch, 50.0);
        prop_assume!(on.is_some());
        let on = on.unwrap();
        let a = on.to_array();
        let off = PhasePoint::from_array(std::array::from_fn(|i| a[i] + kick[i]));
        let q = project_full(&off, &pair, branch);
        let r = residuals(&q, &pair, branch);
        prop_assert!(r.relative_norm() < 1e-12, "residual {:e}", r.relative_norm());
        prop_assert!(q.z.iter().all(|&v| v > 0.0));
        let again = project_full(&q, &pair, branch);
        prop_assert!(again.distance(&q) <= 1e-13 * (1.0 + q.inf_norm()));
    }
}

#[test]
fn pair_errors_are_classified() {
    assert!(matches!(validate_pair(-1, 2), Err(Error::NegativePair { .. })));
    assert!(matches!(validate_pair(4, 2), Err(Error::NotCoprime { gcd: 2, .. })));
    assert!(matches!(validate_pair(1, 1), Err(Error::Exceptional { .. })));
    assert!(matches!(validate_pair(0, 1), Err(Error::Exceptional { .. })));
}

#[test]
fn rest_points_have_zero_field() {
    let pair = validate_pair(2, 1).unwrap();
    assert!(vector_field(&alc_point().point, &pair).inf_norm() < 1e-15);
    for o in Orbit::ALL {
        assert!(vector_field(&type1_point(&pair, o).point, &pair).inf_norm() < 1e-14);
    }
}

fn short_run() -> spin7_core::integrator::Trajectory {
    let pair = validate_pair(2, 1).unwrap();
    let start = surface_point([0.2, 0.25, 0.3], &pair, Branch::Plus, 1e3).expect("surface point");
    let settings = IntegratorSettings {
        eta_max_span: 3.0,
        ..IntegratorSettings::default()
    };
    integrate(&start, &pair, Branch::Plus, &settings, &[], &[]).unwrap()
}

#[test]
fn integration_is_deterministic() {
    assert_eq!(short_run(), short_run());
}

#[test]
fn csv_round_trip_is_exact() {
    let t = short_run();
    let rows = parse_csv(&to_csv(&t)).unwrap();
    assert_eq!(rows.len(), t.samples.len());
    for (row, s) in rows.iter().zip(&t.samples) {
        assert_eq!(row.eta, s.eta);
        assert_eq!(row.point, s.point);
        assert_eq!(row.residuals.conservation, s.residuals.conservation);
        assert_eq!(row.residuals.spin7, s.residuals.spin7);
    }
}

#[test]
fn off_surface_start_is_rejected() {
    let pair = validate_pair(2, 1).unwrap();
    let p = PhasePoint::new([0.3, 0.1, 0.1, 0.2], [0.2, 0.2, 0.2, 1.0]);
    let r = integrate(&p, &pair, Branch::Plus, &IntegratorSettings::default(), &[], &[]);
    assert!(matches!(r, Err(Error::OffSurface { .. })));
}
