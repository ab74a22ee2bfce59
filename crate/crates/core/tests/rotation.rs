use std::f64::consts::TAU;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use phdyn_core::conley::{BoxGrid, Enclosure};
use phdyn_core::linear_models::IntegerMatrix;
use phdyn_core::maps::torus::FnDisplacement;
use phdyn_core::maps::{make_map, BuiltMap, DynamicalMap, MapSpec, TorusLiftMap};
use phdyn_core::rotation::{nonresonance_check, rotation_vector, transitivity_probe};
use phdyn_core::shadowing::uniform_points;

fn rho() -> [f64; 2] {
    [2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0]
}

fn pseudo_rotation() -> BuiltMap {
    let [a, b] = rho();
    make_map(&MapSpec::from_json(&format!(r#"{{"kind":"pseudo_rotation","rotation_numbers":[{a},{b}]}}"#)).unwrap()).unwrap()
}

fn enclosure(m: &dyn DynamicalMap) -> Enclosure {
    Enclosure::Componentwise(m.component_bound().unwrap())
}

/// Each coordinate follows `x ↦ x + 0.1·sin(2πx)`, which attracts to 1/2.
fn gradient_square() -> TorusLiftMap {
    let g = |x: f64| 0.1 * (TAU * x).sin();
    let dg = |x: f64| 0.1 * TAU * (TAU * x).cos();
    let phi = FnDisplacement {
        value: Box::new(move |x: &[f64]| vec![g(x[0]), g(x[1])]),
        jacobian: Box::new(move |x: &[f64]| DMatrix::from_row_slice(2, 2, &[dg(x[0]), 0.0, 0.0, dg(x[1])])),
        derivative_bound: DMatrix::from_element(2, 2, 0.0) + DMatrix::identity(2, 2) * (0.1 * TAU),
        sup_norm: 0.1 * 2f64.sqrt(),
    };
    TorusLiftMap::new(IntegerMatrix::identity(2), Arc::new(phi))
}

#[test]
fn translation_estimate_is_exact() {
    let m = TorusLiftMap::translation(vec![0.3, 0.55]);
    for n in [1, 7, 1000] {
        let est = rotation_vector(&m, &uniform_points(2, 5, 1), n, &[0, 0]).unwrap();
        assert_abs_diff_eq!(est.pooled[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(est.pooled[1], 0.55, epsilon = 1e-12);
        assert!(est.spread < 1e-12);
    }
}

#[test]
fn pseudo_rotation_estimate() {
    let built = pseudo_rotation();
    let m = built.torus().unwrap();
    let n = 20_000;
    let est = rotation_vector(m, &uniform_points(2, 8, 0), n, &[0, 0]).unwrap();
    let r = rho();
    assert!((est.pooled[0] - r[0]).abs() < 3.0 / n as f64);
    assert!((est.pooled[1] - r[1]).abs() < 3.0 / n as f64);
    assert!(est.spread < 5.0 / n as f64);
    assert!(!est.first_coordinate_only);
}

#[test]
fn lift_shift_moves_the_estimate_by_the_shift() {
    let built = pseudo_rotation();
    let m = built.torus().unwrap();
    let starts = uniform_points(2, 4, 2);
    let a = rotation_vector(m, &starts, 500, &[0, 0]).unwrap();
    let b = rotation_vector(m, &starts, 500, &[1, 0]).unwrap();
    assert_abs_diff_eq!(b.pooled[0] - a.pooled[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.pooled[1], a.pooled[1], epsilon = 1e-12);
    assert!(rotation_vector(m, &starts, 0, &[0, 0]).is_err());
    assert!(rotation_vector(m, &starts, 5, &[0]).is_err());
}

#[test]
fn dehn_twist_measures_the_first_coordinate() {
    let twist = TorusLiftMap::new(
        IntegerMatrix::new(vec![vec![1, 0], vec![1, 1]]).unwrap(),
        Arc::new(phdyn_core::maps::torus::ConstantDisplacement(vec![0.25, 0.0])),
    );
    let est = rotation_vector(&twist, &uniform_points(2, 3, 0), 100, &[0, 0]).unwrap();
    assert!(est.first_coordinate_only);
    assert_eq!(est.pooled.len(), 1);
    assert_abs_diff_eq!(est.pooled[0], 0.25, epsilon = 1e-12);
}

#[test]
fn nonresonance_examples() {
    let r = nonresonance_check(&[0.5, 1.0 / 3.0], 3, 1e-9).unwrap();
    assert!(!r.pass);
    assert_eq!(r.best_relation, vec![2, 0, -1]);
    assert!(nonresonance_check(&rho(), 50, 1e-9).unwrap().pass);
    let a = 2f64.sqrt() - 1.0;
    let r = nonresonance_check(&[a, a], 1, 1e-9).unwrap();
    assert!(!r.pass);
    assert_eq!(r.best_relation, vec![1, -1, 0]);
    assert!(nonresonance_check(&[0.5], 0, 1e-9).is_err());
}

#[test]
fn transitivity_of_translations_and_pseudo_rotation() {
    let grid = BoxGrid::torus(vec![64, 64]).unwrap();
    let t = TorusLiftMap::translation(rho().to_vec());
    assert!(transitivity_probe(&t, &grid, 1.0 / 64.0, enclosure(&t)).unwrap().single_class);
    let built = pseudo_rotation();
    let m = built.as_dynamical();
    let probe = transitivity_probe(m, &grid, 1.0 / 32.0, enclosure(m)).unwrap();
    assert!(probe.single_class);
    assert_eq!(probe.recurrent_fraction, 1.0);
}

#[test]
fn attracting_product_is_not_transitive() {
    let m = gradient_square();
    let grid = BoxGrid::torus(vec![32, 32]).unwrap();
    let probe = transitivity_probe(&m, &grid, 1.0 / 32.0, enclosure(&m)).unwrap();
    assert!(!probe.single_class);
    assert!(probe.class_count > 1);
}

#[test]
fn larger_epsilon_never_splits_a_single_class() {
    let t = TorusLiftMap::translation(rho().to_vec());
    let grid = BoxGrid::torus(vec![32, 32]).unwrap();
    let mut was_single = false;
    for k in 0..5 {
        let eps = k as f64 / 64.0;
        let single = transitivity_probe(&t, &grid, eps, enclosure(&t)).unwrap().single_class;
        assert!(!was_single || single, "split at eps = {eps}");
        was_single = single;
    }
    assert!(was_single);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn translations_are_exact_at_every_length(v in prop::collection::vec(-1.0f64..1.0, 2), n in 1usize..300) {
        let m = TorusLiftMap::translation(v.clone());
        let est = rotation_vector(&m, &uniform_points(2, 3, n as u64), n, &[0, 0]).unwrap();
        for k in 0..2 {
            prop_assert!((est.pooled[k] - v[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_shifts_are_exact(g in prop::collection::vec(-3i64..=3, 2), seed in any::<u64>()) {
        let m = TorusLiftMap::translation(rho().to_vec());
        let starts = uniform_points(2, 2, seed);
        let a = rotation_vector(&m, &starts, 50, &[0, 0]).unwrap();
        let b = rotation_vector(&m, &starts, 50, &g).unwrap();
        for k in 0..2 {
            prop_assert!((b.pooled[k] - a.pooled[k] - g[k] as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn raising_the_bound_never_turns_fail_into_pass((p, q) in (1i64..12).prop_flat_map(|q| (0..q, Just(q))), x in 0.0f64..1.0, q0 in 1i64..10, extra in 1i64..10) {
        let v = [p as f64 / q as f64, x];
        let small = nonresonance_check(&v, q0, 1e-9).unwrap();
        let large = nonresonance_check(&v, q0 + extra, 1e-9).unwrap();
        prop_assert!(small.pass || !large.pass);
        if q0 >= q {
            prop_assert!(!small.pass);
        }
    }
}
