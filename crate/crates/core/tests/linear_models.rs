use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use phdyn_core::linear_models::{char_poly, invariant_splitting, spectral_classify, Classification, IntegerMatrix, Label};

fn da_matrix() -> IntegerMatrix {
    IntegerMatrix::new(vec![vec![1, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).unwrap()
}

#[test]
fn da_matrix_spectrum() {
    let s = spectral_classify(&da_matrix()).unwrap();
    assert_eq!(s.char_poly, vec![1, 0, 1, -1]);
    assert_eq!(s.classification, Classification::AnosovComplexPair);
    assert!(s.irreducible_over_rationals);
    assert_abs_diff_eq!(s.moduli[0], 0.826031357654, epsilon = 1e-9);
    assert_abs_diff_eq!(s.moduli[1], 0.826031357654, epsilon = 1e-9);
    assert_abs_diff_eq!(s.moduli[2], 1.465571231877, epsilon = 1e-9);
}

#[test]
fn cat_map_spectrum() {
    let m = IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap();
    let s = spectral_classify(&m).unwrap();
    assert_eq!(s.classification, Classification::AnosovReal);
    let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
    assert_abs_diff_eq!(s.moduli[0], 1.0 / phi2, epsilon = 1e-12);
    assert_abs_diff_eq!(s.moduli[1], phi2, epsilon = 1e-12);
}

#[test]
fn center_and_degenerate_cases() {
    let center = IntegerMatrix::new(vec![vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]).unwrap();
    assert_eq!(spectral_classify(&center).unwrap().classification, Classification::PartiallyHyperbolicCenter);
    let id = IntegerMatrix::identity(3);
    assert_eq!(spectral_classify(&id).unwrap().classification, Classification::NonPartiallyHyperbolic);
    assert!(IntegerMatrix::new(vec![vec![2, 0], vec![0, 1]]).is_err());
    assert!(IntegerMatrix::new(vec![vec![1, 2, 3], vec![4, 5, 6]]).is_err());
}

#[test]
fn splitting_of_da_matrix() {
    let m = da_matrix();
    let s = spectral_classify(&m).unwrap();
    let sp = invariant_splitting(&s, &m).unwrap();
    assert_eq!(sp.dim_of(Label::Stable), 2);
    assert_eq!(sp.dim_of(Label::Center), 0);
    assert_eq!(sp.dim_of(Label::Unstable), 1);
    let a = m.to_real();
    let ps = sp.projector(Label::Stable).unwrap();
    let pu = sp.projector(Label::Unstable).unwrap();
    let id = DMatrix::<f64>::identity(3, 3);
    assert!((ps * ps - ps).norm() < 1e-10);
    assert!((pu * pu - pu).norm() < 1e-10);
    assert!((ps * pu).norm() < 1e-10);
    assert!((ps + pu - &id).norm() < 1e-10);
    assert!((&a * ps - ps * &a).norm() < 1e-10);
    assert!(sp.basis_condition < 1e8);
}

/// Products of integer shears `I + s·e_i e_jᵀ`, optionally with one sign flip.
fn unimodular(d: usize) -> impl Strategy<Value = IntegerMatrix> {
    let shear = (0..d, 1..d, -2i64..=2).prop_map(move |(i, k, s)| (i, (i + k) % d, s));
    (prop::collection::vec(shear, 1..7), any::<bool>()).prop_map(move |(ops, flip)| {
        let mut m = IntegerMatrix::identity(d);
        for (i, j, s) in ops {
            let mut rows = IntegerMatrix::identity(d).rows();
            rows[i][j] = s;
            m = IntegerMatrix::new(rows).unwrap().mul(&m).unwrap();
        }
        if flip {
            let mut rows = m.rows();
            rows[0].iter_mut().for_each(|v| *v = -*v);
            m = IntegerMatrix::new(rows).unwrap();
        }
        m
    })
}

fn unimodular_3x3() -> impl Strategy<Value = IntegerMatrix> {
    unimodular(3)
}

fn unimodular_2x2() -> impl Strategy<Value = IntegerMatrix> {
    unimodular(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn product_of_moduli_is_one(m in unimodular_3x3()) {
        let s = spectral_classify(&m).unwrap();
        let prod: f64 = s.moduli.iter().product();
        prop_assert!((prod - 1.0).abs() < 1e-8, "product {prod}");
    }

    #[test]
    fn char_poly_is_monic_with_unit_constant(m in unimodular_3x3()) {
        let cp = char_poly(&m);
        prop_assert_eq!(cp.len(), 4);
        prop_assert_eq!(cp[3].abs(), 1);
        prop_assert_eq!(cp[0].abs(), 1);
    }

    #[test]
    fn anosov_is_stable_under_powers(m in unimodular_2x2(), k in 2u32..=3) {
        let base = spectral_classify(&m).unwrap().classification.is_anosov();
        let pow = spectral_classify(&m.pow(k).unwrap()).unwrap().classification.is_anosov();
        prop_assert_eq!(base, pow);
    }

    #[test]
    fn anosov_is_stable_under_powers_3d(m in unimodular_3x3(), k in 2u32..=3) {
        let s = spectral_classify(&m).unwrap();
        let pow = spectral_classify(&m.pow(k).unwrap()).unwrap().classification.is_anosov();
        prop_assert_eq!(s.classification.is_anosov(), pow);
    }

    #[test]
    fn projectors_are_idempotent_and_commute(m in unimodular_3x3()) {
        let s = spectral_classify(&m).unwrap();
        prop_assume!(s.classification != Classification::NonPartiallyHyperbolic);
        let Ok(sp) = invariant_splitting(&s, &m) else { return Ok(()) };
        let a = m.to_real();
        let mut sum = DMatrix::<f64>::zeros(3, 3);
        for (_, p) in &sp.projectors {
            let scale = sp.basis_condition.max(1.0);
            prop_assert!((p * p - p).norm() < 1e-9 * scale);
            prop_assert!((&a * p - p * &a).norm() < 1e-9 * scale * a.norm());
            sum += p;
        }
        prop_assert!((sum - DMatrix::<f64>::identity(3, 3)).norm() < 1e-9 * sp.basis_condition.max(1.0));
    }

    #[test]
    fn inverse_is_exact(m in unimodular_3x3()) {
        prop_assert_eq!(m.mul(&m.inverse()).unwrap(), IntegerMatrix::identity(3));
    }
}
