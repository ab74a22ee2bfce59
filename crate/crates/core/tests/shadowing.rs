use std::sync::LazyLock;

use proptest::prelude::*;

use phdyn_core::linear_models::IntegerMatrix;
use phdyn_core::maps::{make_map, BuiltMap, MapSpec, TorusLiftMap};
use phdyn_core::shadowing::{
    build_semiconjugacy, eval_h, eval_h_map, fiber_probe, unstable_arc_monotone, uniform_points, verify_equivariance,
    Semiconjugacy,
};

static DA: LazyLock<BuiltMap> = LazyLock::new(|| {
    make_map(&MapSpec::from_json(r#"{"kind":"da","matrix":[[1,1,0],[0,0,1],[1,0,0]],"delta":0.2,"stable_eigenvalues":[0.8,1.3]}"#).unwrap())
        .unwrap()
});

static SEMI: LazyLock<Semiconjugacy> = LazyLock::new(|| build_semiconjugacy(DA.torus().unwrap(), 1e-8).unwrap());

fn da_matrix() -> IntegerMatrix {
    IntegerMatrix::new(vec![vec![1, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).unwrap()
}

#[test]
fn linear_map_gives_identity() {
    let semi = build_semiconjugacy(&TorusLiftMap::linear(da_matrix()), 1e-8).unwrap();
    assert_eq!(semi.depth, 0);
    assert_eq!(semi.tail_bound, 0.0);
    for x in uniform_points(3, 20, 3) {
        assert_eq!(eval_h_map(&semi, &x).unwrap(), x);
    }
    let rep = verify_equivariance(&semi, 100, 0).unwrap();
    assert_eq!(rep.max_residual, 0.0);
    let fib = fiber_probe(&semi, &[0.3, 0.2, 0.1], 8, 1e-3, 0).unwrap();
    assert!(fib.diameter <= 1e-12, "{}", fib.diameter);
}

#[test]
fn depth_matches_geometric_series() {
    let semi = &*SEMI;
    let c0 = DA.torus().unwrap().c0_bound();
    assert!(semi.tail_bound <= 1e-8);
    assert!(semi.depth > 0);
    // one level shallower must miss the tolerance
    let shallower = Semiconjugacy::series_bound(semi.kappa, c0, semi.mu, semi.depth - 1);
    assert!(shallower > 1e-8);
    assert!(semi.mu < 1.0);
}

#[test]
fn equivariance_and_shadow_bound() {
    let rep = verify_equivariance(&SEMI, 1000, 0).unwrap();
    assert!(rep.max_residual <= 5e-8, "{}", rep.max_residual);
    assert!(rep.max_residual <= rep.residual_bound);
    assert!(rep.max_shadow_distance <= rep.shadow_bound);
    let again = verify_equivariance(&SEMI, 1000, 0).unwrap();
    assert_eq!(rep.max_residual.to_bits(), again.max_residual.to_bits());
}

#[test]
fn h_at_q_stays_within_the_shadow_bound() {
    let h = eval_h(&SEMI, &[0.0; 3]).unwrap();
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < SEMI.shadow_bound);
}

#[test]
fn fiber_through_q_is_nontrivial() {
    let semi = &*SEMI;
    let y = eval_h_map(semi, &[0.0; 3]).unwrap();
    let fib = fiber_probe(semi, &y, 24, 3e-7, 0).unwrap();
    assert!(fib.hits >= 2);
    assert!(fib.diameter > 10.0 * semi.tail_bound, "diameter {}", fib.diameter);
    assert!(fib.diameter <= 2.0 * semi.shadow_bound);
}

#[test]
fn generic_fiber_is_small_and_leaves_injective() {
    let semi = &*SEMI;
    let x = [0.41, 0.63, 0.27];
    let y = eval_h_map(semi, &x).unwrap();
    let fib = fiber_probe(semi, &y, 16, 3e-7, 1).unwrap();
    assert!(fib.diameter <= 2.0 * semi.shadow_bound);
    assert!(fib.unstable_injective);
    let centres = uniform_points(3, 5, 9);
    assert!(unstable_arc_monotone(semi, &centres, 0.05, 11).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn h_is_periodic(x in prop::collection::vec(0.0f64..1.0, 3), g in prop::collection::vec(-3i64..=3, 3)) {
        let xg: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + *b as f64).collect();
        let a = eval_h_map(&SEMI, &x).unwrap();
        let b = eval_h_map(&SEMI, &xg).unwrap();
        for k in 0..3 {
            prop_assert!((b[k] - a[k] - g[k] as f64).abs() < 1e-12);
        }
    }
}
