use std::f64::consts::{FRAC_PI_2, LN_2};

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phdyn_core::cocycles::{
    check_domination_cocycle, cocycle_distance, equalize_2d, exponents, lyapunov_diameter, steer_vector, PeriodicCocycle,
};

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
}

fn rot(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
}

fn col(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

fn random_matrices(d: usize, n: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| DMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0))).collect()
}

/// Random 2×2 matrices with determinant 0.8: orientation preserving and contracting.
fn contracting(n: usize, seed: u64) -> Vec<DMatrix<f64>> {
    random_matrices(2, n, seed)
        .into_iter()
        .map(|mut a| {
            if a.determinant() < 0.0 {
                a.swap_columns(0, 1);
            }
            let s = (0.8 / a.determinant()).sqrt();
            a * s
        })
        .collect()
}

#[test]
fn diagonal_and_rotation_exponents() {
    let e = exponents(&PeriodicCocycle::new(vec![diag(2.0, 0.5)]).unwrap());
    assert_eq!(e.sigma, vec![-LN_2, LN_2]);
    let e = exponents(&PeriodicCocycle::new(vec![rot(FRAC_PI_2), rot(FRAC_PI_2)]).unwrap());
    assert!(e.sigma.iter().all(|s| s.abs() < 1e-15));
}

#[test]
fn random_period_three_matches_product_eigenvalues() {
    let mats = random_matrices(3, 3, 7);
    let c = PeriodicCocycle::new(mats.clone()).unwrap();
    let m = &mats[2] * &mats[1] * &mats[0];
    let mut oracle: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm().ln() / 3.0).collect();
    oracle.sort_by(f64::total_cmp);
    let e = exponents(&c);
    for (a, b) in e.sigma.iter().zip(&oracle) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }
}

#[test]
fn diagonal_domination() {
    let c = PeriodicCocycle::new(vec![diag(2.0, 0.5)]).unwrap();
    let (e1, e2) = (col(&[1.0, 0.0]), col(&[0.0, 1.0]));
    let d = check_domination_cocycle(&c, &e2, &e1, 1).unwrap();
    assert!(d.pass);
    assert_abs_diff_eq!(d.margin, 0.5, epsilon = 1e-15);
    assert!(!check_domination_cocycle(&c, &e1, &e2, 1).unwrap().pass);
    assert!(check_domination_cocycle(&c, &col(&[1.0, 1.0]), &e1, 1).is_err());
}

#[test]
fn minimal_domination_length_matches_scan() {
    // diag(1.2, 1) in a skewed basis: F = P·e1 expands by 1.2, E = P·e2 is neutral
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.0, 0.4]);
    let m = &p * diag(1.2, 1.0) * p.clone().try_inverse().unwrap();
    let c = PeriodicCocycle::new(vec![m.clone()]).unwrap();
    let (f, e) = (p.columns(0, 1).into_owned(), p.columns(1, 1).into_owned());
    let oracle = (1..=20)
        .find(|&l| {
            let ml = m.pow(l as u32);
            0.5 * (&ml * &f).norm() / f.norm() > (&ml * &e).norm() / e.norm()
        })
        .unwrap();
    let found = (1..=20).find(|&l| check_domination_cocycle(&c, &e, &f, l).unwrap().pass).unwrap();
    assert_eq!(found, oracle);
    assert!(oracle > 1);
}

#[test]
fn lyapunov_diameter_examples() {
    let iso: Vec<PeriodicCocycle> = (1..=6).map(|p| PeriodicCocycle::constant(rot(0.3), p).unwrap()).collect();
    assert!(lyapunov_diameter(&iso).unwrap().estimate.abs() < 1e-12);
    let hyp: Vec<PeriodicCocycle> = (1..=6).map(|p| PeriodicCocycle::constant(diag(2.0, 0.5), p).unwrap()).collect();
    assert_abs_diff_eq!(lyapunov_diameter(&hyp).unwrap().estimate, 2.0 * LN_2, epsilon = 1e-12);
    assert!(lyapunov_diameter(&hyp[..2]).is_err());
    let equalized: Vec<PeriodicCocycle> = (1..=6)
        .map(|p| {
            let c = PeriodicCocycle::new(contracting(p, 100 + p as u64)).unwrap();
            equalize_2d(&c, 0.05).unwrap().steps.pop().unwrap()
        })
        .collect();
    assert!(lyapunov_diameter(&equalized).unwrap().estimate < 1e-6);
}

#[test]
fn equalize_diagonal_closed_form() {
    let c = PeriodicCocycle::new(vec![diag(2.0, 1.0 / 3.0)]).unwrap();
    let path = equalize_2d(&c, 0.05).unwrap();
    assert_abs_diff_eq!(path.theta_star.cos().powi(2), 24.0 / 49.0, epsilon = 1e-10);
    for m in &path.endpoint_moduli {
        assert_abs_diff_eq!(*m, (2.0f64 / 3.0).sqrt(), epsilon = 1e-8);
    }
    for s in &path.steps {
        assert_abs_diff_eq!(s.product().determinant(), 2.0 / 3.0, epsilon = 1e-14);
    }
    assert!(path.index_preserved);
    let finer = equalize_2d(&c, 0.025).unwrap();
    assert!(finer.diameter <= path.diameter + 1e-12);
}

#[test]
fn equalize_rotation_is_a_zero_length_path() {
    let c = PeriodicCocycle::new(vec![rot(0.7), rot(1.1)]).unwrap();
    let path = equalize_2d(&c, 0.05).unwrap();
    assert_eq!(path.theta_star, 0.0);
    assert_eq!(path.steps.len(), 1);
    assert_eq!(path.diameter, 0.0);
}

#[test]
fn equalize_random_contracting_period_ten() {
    let c = PeriodicCocycle::new(contracting(10, 11)).unwrap();
    let path = equalize_2d(&c, 0.05).unwrap();
    let target = path.abs_det.sqrt();
    assert_abs_diff_eq!(path.abs_det, 0.8f64.powi(10), epsilon = 1e-12);
    for m in &path.endpoint_moduli {
        assert_abs_diff_eq!(*m, target, epsilon = 1e-8);
    }
    for s in &path.steps {
        let m = s.product();
        let moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        assert!(moduli.iter().map(|v| v.ln()).fold(f64::INFINITY, f64::min) < 0.0);
        assert_abs_diff_eq!(m.determinant().abs(), path.abs_det, epsilon = 1e-10 * path.abs_det.max(1e-300));
    }
    assert!(path.index_preserved);
    let worst = path.steps.iter().map(|s| cocycle_distance(&c, s).unwrap()).fold(0.0, f64::max);
    assert_eq!(worst, path.diameter);
}

#[test]
fn equalize_rejects_expanding_input() {
    let c = PeriodicCocycle::new(vec![diag(3.0, 1.0)]).unwrap();
    assert!(equalize_2d(&c, 0.05).is_err());
}

fn compose_check(mats: &[DMatrix<f64>], v: &[f64], w: &[f64], angles: &[f64]) -> f64 {
    let mut steered = DVector::from_column_slice(w);
    let mut plain = DVector::from_column_slice(v);
    for (a, t) in mats.iter().zip(angles) {
        steered = rot(*t) * a * steered;
        plain = a * plain;
    }
    let (s, p) = (steered.normalize(), plain.normalize());
    (s[0] * p[1] - s[1] * p[0]).abs()
}

#[test]
fn steer_identity_with_enough_budget() {
    let gap: f64 = 0.7;
    let eps = 0.1;
    let ell = (gap / eps).ceil() as usize;
    let mats = vec![DMatrix::identity(2, 2); ell];
    let out = steer_vector(&mats, &[1.0, 0.0], &[gap.cos(), gap.sin()], eps).unwrap();
    assert!(out.success);
    assert!(out.angles.iter().all(|a| a.abs() <= eps + 1e-15));
    assert!(compose_check(&mats, &[1.0, 0.0], &[gap.cos(), gap.sin()], &out.angles) < 1e-9);
    let short = steer_vector(&mats[..ell - 2], &[1.0, 0.0], &[gap.cos(), gap.sin()], eps).unwrap();
    assert!(!short.success);
}

#[test]
fn steer_same_vector_needs_no_rotation() {
    let mats = random_matrices(2, 5, 3);
    let out = steer_vector(&mats, &[0.3, 0.4], &[0.3, 0.4], 0.1).unwrap();
    assert!(out.success);
    assert!(out.angles.iter().all(|a| *a == 0.0));
}

#[test]
fn steer_through_hyperbolic_matrices() {
    let mats = vec![diag(2.0, 0.5); 40];
    let (v, w) = ([1.0, 0.0], [1.0, 1.0]);
    let out = steer_vector(&mats, &v, &w, 0.1).unwrap();
    assert!(out.success);
    assert!(out.residual < 1e-9);
    assert!(out.growth_hypothesis);
    assert!(compose_check(&mats, &v, &w, &out.angles) < 1e-9);
}

fn cocycle(d: usize) -> impl Strategy<Value = PeriodicCocycle> {
    (1usize..8, any::<u64>()).prop_filter_map("singular", move |(p, seed)| PeriodicCocycle::new(random_matrices(d, p, seed)).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exponents_are_invariant_under_cyclic_shift(c in cocycle(3), k in 0usize..8) {
        let a = exponents(&c);
        let b = exponents(&c.rotated(k % c.period()));
        prop_assume!(!a.clustered);
        for (x, y) in a.sigma.iter().zip(&b.sigma) {
            prop_assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn exponents_sum_to_log_det(c in cocycle(3)) {
        let e = exponents(&c);
        let sum: f64 = e.sigma.iter().sum();
        prop_assert!((sum - c.log_abs_det() / c.period() as f64).abs() < 1e-10);
    }

    #[test]
    fn equalize_preserves_determinant(p in 1usize..6, seed in any::<u64>()) {
        let c = PeriodicCocycle::new(contracting(p, seed)).unwrap();
        let path = equalize_2d(&c, 0.05).unwrap();
        for s in &path.steps {
            for (a, b) in s.matrices().iter().zip(c.matrices()) {
                prop_assert!((a.determinant() - b.determinant()).abs() < 1e-12);
            }
        }
        let last = exponents(path.steps.last().unwrap());
        prop_assert!(last.spread() < 1e-6);
    }

    #[test]
    fn steer_outcome_composes(seed in any::<u64>(), ell in 1usize..30, eps in 0.05f64..0.5) {
        let mats = contracting(ell, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let (a, b): (f64, f64) = (rng.random_range(0.0..3.14), rng.random_range(0.0..3.14));
        let (v, w) = ([a.cos(), a.sin()], [b.cos(), b.sin()]);
        let out = steer_vector(&mats, &v, &w, eps).unwrap();
        prop_assert!(out.angles.iter().all(|t| t.abs() <= eps + 1e-15));
        if out.success {
            prop_assert!(compose_check(&mats, &v, &w, &out.angles) < 1e-9);
        }
    }
}
