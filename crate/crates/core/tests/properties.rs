use std::f64::consts::PI;

use elastica_core::bvp::{double_integral_representation, solve_linear_bvp, POINCARE_EIGENVALUE};
use elastica_core::magneto::{energy, m_derivative, solve_state, solve_state_from, state_residual};
use elastica_core::mesh::{h1_seminorm, integral, l2_norm, sup_norm};
use elastica_core::{Control, FieldRole, Grid, ScalarField, SolveOptions};
use proptest::prelude::*;

const CELLS: usize = 100;

fn grid() -> Grid {
    Grid::new(CELLS).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, CELLS + 1)
}

fn clamped(role: FieldRole) -> impl Strategy<Value = ScalarField> {
    values().prop_map(move |mut v| {
        v[0] = 0.0;
        ScalarField::new(grid(), role, v).unwrap()
    })
}

/// `Σ c_k sin((k - ½) π s)`, smooth and left-clamped.
fn smooth(role: FieldRole, scale: f64) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-scale..scale, 4).prop_map(move |c| {
        ScalarField::from_fn(grid(), role, |s| {
            c.iter()
                .enumerate()
                .map(|(k, ck)| ck * ((k as f64 + 0.5) * PI * s).sin())
                .sum()
        })
        .unwrap()
    })
}

fn control(max: f64) -> impl Strategy<Value = Control> {
    (0.0..max, -PI..PI).prop_map(|(r, a)| Control::polar(r, a))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trapezoid_is_linear(f in values(), g in values(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let f = ScalarField::new(grid(), FieldRole::Generic, f).unwrap();
        let g = ScalarField::new(grid(), FieldRole::Generic, g).unwrap();
        let combo = f.zip_map(&g, |x, y| a * x + b * y).unwrap();
        let lhs = integral(&combo);
        let rhs = a * integral(&f) + b * integral(&g);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn trapezoid_is_monotone(f in values(), d in prop::collection::vec(0.0..1.0f64, CELLS + 1)) {
        let f = ScalarField::new(grid(), FieldRole::Generic, f).unwrap();
        let g = f.zip_map(&ScalarField::new(grid(), FieldRole::Generic, d).unwrap(), |x, y| x + y).unwrap();
        prop_assert!(integral(&f) <= integral(&g));
    }

    #[test]
    fn discrete_poincare_inequality(v in clamped(FieldRole::Generic)) {
        let ds2 = grid().spacing().powi(2);
        let bound = (1.0 + ds2) * h1_seminorm(&v).powi(2) / POINCARE_EIGENVALUE;
        prop_assert!(l2_norm(&v).powi(2) <= bound + 1e-14);
    }

    #[test]
    fn sup_bounded_by_seminorm(v in clamped(FieldRole::Generic)) {
        prop_assert!(sup_norm(&v).powi(2) <= h1_seminorm(&v).powi(2) * (1.0 + 1e-12));
    }

    #[test]
    fn csv_round_trip_is_exact(v in clamped(FieldRole::Shape)) {
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = ScalarField::read_csv(buf.as_slice(), FieldRole::Shape).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn magnetization_derivatives_are_unit_and_lipschitz(
        v1 in -10.0..10.0f64,
        v2 in -10.0..10.0f64,
        order in 0u32..6,
    ) {
        let d1 = m_derivative(v1, order);
        let d2 = m_derivative(v2, order);
        prop_assert!((d1[0].hypot(d1[1]) - 1.0).abs() < 1e-14);
        prop_assert!(dist(d1, d2) <= (v1 - v2).abs() + 1e-14);
    }

    #[test]
    fn pointwise_trig_bounds(
        h in control(5.0),
        ht in control(5.0),
        (a, at, t, tt) in (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64),
        (l, lt) in (-3.0..3.0f64, -3.0..3.0f64),
        order in 0u32..4,
    ) {
        let d = m_derivative(a + t, order);
        let dt = m_derivative(at + tt, order);
        let shift = (a - at).abs() + (t - tt).abs();
        let tol = 1e-12;
        let lhs = dist([l * d[0], l * d[1]], [lt * dt[0], lt * dt[1]]);
        prop_assert!(lhs <= (l - lt).abs() + lt.abs() * shift + tol);
        let hn = dist(h.as_array(), ht.as_array());
        let lhs = (h.dot(d) - ht.dot(dt)).abs();
        prop_assert!(lhs <= hn + ht.norm() * shift + tol);
        let lhs = (l * h.dot(d) - lt * ht.dot(dt)).abs();
        prop_assert!(lhs <= h.norm() * (l - lt).abs() + lt.abs() * hn + ht.norm() * lt.abs() * shift + tol);
    }

    #[test]
    fn state_residual_is_rotation_invariant(
        theta in clamped(FieldRole::Shape),
        alpha in smooth(FieldRole::Design, 2.0),
        h in control(5.0),
        c in -PI..PI,
    ) {
        let base = state_residual(&theta, &alpha, h).unwrap();
        let shifted = alpha.map(|a| a + c);
        let turned = state_residual(&theta, &shifted, h.rotated(c)).unwrap();
        prop_assert!((base - turned).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn linear_solve_matches_double_integral(rhs in values()) {
        let rhs = ScalarField::new(grid(), FieldRole::Generic, rhs).unwrap();
        let q = ScalarField::zeros(grid(), FieldRole::Generic);
        let u = solve_linear_bvp(&q, &rhs).unwrap();
        let w = double_integral_representation(&rhs);
        let scale = 1.0 + sup_norm(&w);
        prop_assert!(sup_norm(&u.sub(&w).unwrap()) <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn state_bound(h in control(0.99 * POINCARE_EIGENVALUE), alpha in smooth(FieldRole::Design, 2.0)) {
        let theta = solve_state(h, &alpha, &SolveOptions::default()).unwrap();
        prop_assert!(sup_norm(&theta) <= h.norm() + 1e-6);
    }

    #[test]
    fn unique_equilibrium_below_threshold(
        h in control(0.99 * POINCARE_EIGENVALUE),
        alpha in smooth(FieldRole::Design, 2.0),
        guess in smooth(FieldRole::Shape, 1.5),
    ) {
        let opts = SolveOptions::default();
        let base = solve_state(h, &alpha, &opts).unwrap();
        for init in [guess.clone(), guess.map(|x| -x), ScalarField::from_fn(grid(), FieldRole::Shape, |s| s).unwrap()] {
            let init = init.with_role(FieldRole::Shape).unwrap();
            let other = solve_state_from(h, &alpha, &opts, &init).unwrap();
            prop_assert!(sup_norm(&other.sub(&base).unwrap()) <= 1e-8);
        }
    }

    #[test]
    fn equilibrium_lowers_energy(h in control(0.99 * POINCARE_EIGENVALUE), alpha in smooth(FieldRole::Design, 2.0)) {
        let theta = solve_state(h, &alpha, &SolveOptions::default()).unwrap();
        let zero = ScalarField::zeros(grid(), FieldRole::Shape);
        prop_assert!(energy(&theta, &alpha, h).unwrap() <= energy(&zero, &alpha, h).unwrap() + 1e-12);
    }
}
