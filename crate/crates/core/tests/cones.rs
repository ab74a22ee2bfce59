use std::sync::LazyLock;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use phdyn_core::cones::{
    finite_time_exponents, ph_classify, verify_cone_invariance, verify_domination, verify_uniformity, Bundle, Check,
    ConeField, PhLabel, Samples, SplittingEvidence, VerificationReport,
};
use phdyn_core::linear_models::{invariant_splitting, spectral_classify, IntegerMatrix, Label};
use phdyn_core::maps::{make_map, BuiltMap, DynamicalMap, MapSpec, TorusLiftMap};

const PHI: f64 = 1.618033988749895;
const LU: f64 = PHI * PHI;

static DA: LazyLock<BuiltMap> = LazyLock::new(|| {
    make_map(&MapSpec::from_json(r#"{"kind":"da","matrix":[[1,1,0],[0,0,1],[1,0,0]],"delta":0.2,"stable_eigenvalues":[0.8,1.3]}"#).unwrap())
        .unwrap()
});

fn cat() -> TorusLiftMap {
    TorusLiftMap::linear(IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap())
}

fn cat_lines() -> (Bundle, Bundle) {
    let s = DMatrix::from_column_slice(2, 1, &[-1.0, PHI]);
    let u = DMatrix::from_column_slice(2, 1, &[PHI, 1.0]);
    (Bundle::constant(&s).unwrap(), Bundle::constant(&u).unwrap())
}

fn da_bundles() -> (DMatrix<f64>, DMatrix<f64>) {
    let a = IntegerMatrix::new(vec![vec![1, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).unwrap();
    let sp = invariant_splitting(&spectral_classify(&a).unwrap(), &a).unwrap();
    (sp.subspace(Label::Stable).unwrap().clone(), sp.subspace(Label::Unstable).unwrap().clone())
}

#[test]
fn cat_cones() {
    let m = cat();
    let u = DMatrix::from_column_slice(2, 1, &[PHI, 1.0]);
    let s = DMatrix::from_column_slice(2, 1, &[-1.0, PHI]);
    let a = verify_cone_invariance(&m, &ConeField::constant(&u, 0.2).unwrap(), &Samples::uniform(m.domain(), 10_000, 1)).unwrap();
    let b = verify_cone_invariance(&m, &ConeField::constant(&u, 0.2).unwrap(), &Samples::uniform(m.domain(), 10_000, 2)).unwrap();
    assert!(a.pass);
    assert_abs_diff_eq!(a.worst_margin, b.worst_margin, epsilon = 1e-3);
    let stable = verify_cone_invariance(&m, &ConeField::constant(&s, 0.2).unwrap(), &Samples::uniform(m.domain(), 100, 1)).unwrap();
    assert!(!stable.pass);
    assert!(stable.witness.is_some());
}

#[test]
fn cat_domination_and_uniformity_margins() {
    let m = cat();
    let (s, u) = cat_lines();
    let samples = Samples::uniform(m.domain(), 200, 4);
    let dom = verify_domination(&m, &s, &u, 1, &samples).unwrap();
    assert!(dom.pass);
    assert_abs_diff_eq!(dom.worst_margin, 0.5 * LU - 1.0 / LU, epsilon = 1e-8);
    assert!(!verify_domination(&m, &u, &s, 1, &samples).unwrap().pass);

    let contract = verify_uniformity(&m, &s, 1, Check::Contract, &samples).unwrap();
    assert!(contract.pass);
    assert_abs_diff_eq!(contract.worst_margin, 0.5 - 1.0 / LU, epsilon = 1e-8);
    assert!(!verify_uniformity(&m, &s, 1, Check::Expand, &samples).unwrap().pass);
    let expand = verify_uniformity(&m, &u, 1, Check::Expand, &samples).unwrap();
    assert_abs_diff_eq!(expand.worst_margin, LU - 2.0, epsilon = 1e-8);
    let vol = verify_uniformity(&m, &u, 2, Check::VolExpand, &samples).unwrap();
    assert_abs_diff_eq!(vol.worst_margin, LU * LU - 2.0, epsilon = 1e-8);
    assert!(verify_uniformity(&m, &u, 1, Check::Domination, &samples).is_err());
    assert!(verify_domination(&m, &s, &u, 0, &samples).is_err());
}

#[test]
fn cat_splitting_is_hyperbolic() {
    let m = cat();
    let (s, u) = cat_lines();
    let samples = Samples::uniform(m.domain(), 100, 0);
    let ev = SplittingEvidence {
        dims: vec![1, 1],
        uniformity: vec![
            (0..1, verify_uniformity(&m, &s, 1, Check::Contract, &samples).unwrap()),
            (1..2, verify_uniformity(&m, &u, 1, Check::Expand, &samples).unwrap()),
        ],
        domination: vec![(1, verify_domination(&m, &s, &u, 1, &samples).unwrap())],
    };
    assert_eq!(ph_classify(&ev).unwrap().label, PhLabel::Hyperbolic);
}

#[test]
fn cat_and_identity_exponents() {
    let est = finite_time_exponents(&cat(), &[0.3, 0.1], 100).unwrap();
    assert_abs_diff_eq!(est.exponents[0], LU.ln(), epsilon = 1e-9);
    assert_abs_diff_eq!(est.exponents[1], -LU.ln(), epsilon = 1e-9);
    let id = TorusLiftMap::linear(IntegerMatrix::identity(3));
    let est = finite_time_exponents(&id, &[0.3, 0.1, 0.2], 50).unwrap();
    assert!(est.exponents.iter().all(|e| e.abs() < 1e-15));
}

#[test]
fn da_unstable_cone_is_invariant() {
    let m = DA.as_dynamical();
    let (_, eu) = da_bundles();
    let rep = verify_cone_invariance(m, &ConeField::constant(&eu, 0.5).unwrap(), &Samples::uniform(m.domain(), 10_000, 0)).unwrap();
    assert!(rep.pass, "margin {}", rep.worst_margin);
}

#[test]
fn da_stable_plane_is_dominated() {
    let m = DA.as_dynamical();
    let (es, eu) = da_bundles();
    let (es, eu) = (Bundle::constant(&es).unwrap(), Bundle::constant(&eu).unwrap());
    let samples = Samples::uniform(m.domain(), 1000, 0);
    let rep = verify_domination(m, &es, &eu, 3, &samples).unwrap();
    assert!(rep.pass, "margin {}", rep.worst_margin);
}

#[test]
fn da_stable_plane_is_not_volume_contracted_at_q() {
    let m = DA.as_dynamical();
    let (es, _) = da_bundles();
    let BuiltMap::Da(d) = &*DA else { unreachable!() };
    let frame = Bundle::constant(&d.stable_frame).unwrap();
    let at_q = Samples::from_points(vec![vec![0.0; 3]]);
    let rep = verify_uniformity(m, &frame, 1, Check::VolContract, &at_q).unwrap();
    assert!(!rep.pass);
    assert_abs_diff_eq!(rep.worst_margin, 0.5 - 0.8 * 1.3, epsilon = 1e-9);
    let linear_plane = verify_uniformity(m, &Bundle::constant(&es).unwrap(), 1, Check::Contract, &at_q).unwrap();
    assert!(!linear_plane.pass);
}

/// `Df(q)` is not normal, so singular-value rates of its powers approach the
/// log-moduli only like `1/n`.
#[test]
fn da_exponents_at_q_approach_log_moduli() {
    let target = [1.465571231877f64.ln(), 1.3f64.ln(), 0.8f64.ln()];
    let err = |n: usize| {
        let est = finite_time_exponents(DA.as_dynamical(), &[0.0; 3], n).unwrap();
        est.exponents.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e100, e400) = (err(100), err(400));
    assert!(e100 < 5e-3, "{e100}");
    assert!(e400 < 0.3 * e100, "{e400} vs {e100}");
}

fn report(mode: Check, pass: bool) -> VerificationReport {
    VerificationReport {
        mode,
        iterates: 1,
        samples: 1,
        seed: 0,
        evaluated: 1,
        skipped: 0,
        masked: 0,
        worst_margin: if pass { 1.0 } else { -1.0 },
        witness: None,
        pass,
    }
}

#[test]
fn labels_from_report_patterns() {
    let da_like = SplittingEvidence {
        dims: vec![2, 1],
        uniformity: vec![
            (0..1, report(Check::Contract, false)),
            (0..1, report(Check::VolContract, false)),
            (1..2, report(Check::Expand, true)),
        ],
        domination: vec![(1, report(Check::Domination, true))],
    };
    assert_eq!(ph_classify(&da_like).unwrap().label, PhLabel::PartiallyHyperbolic);
    let all_fail = SplittingEvidence {
        dims: vec![2, 1],
        uniformity: vec![(0..1, report(Check::Contract, false)), (1..2, report(Check::Expand, false))],
        domination: vec![(1, report(Check::Domination, false))],
    };
    assert_eq!(ph_classify(&all_fail).unwrap().label, PhLabel::None);
    let bad = SplittingEvidence { dims: vec![2, 1], uniformity: vec![], domination: vec![(2, report(Check::Domination, true))] };
    assert!(ph_classify(&bad).is_err());
}

fn hyperbolic_2x2() -> impl Strategy<Value = TorusLiftMap> {
    // [[a, 1], [a·b − 1, b]] has determinant 1 and trace a + b
    (1i64..=4, 1i64..=4)
        .prop_filter("hyperbolic", |(a, b)| a + b > 2)
        .prop_map(|(a, b)| TorusLiftMap::linear(IntegerMatrix::new(vec![vec![a, 1], vec![a * b - 1, b]]).unwrap()))
}

fn eigen_bundles(m: &TorusLiftMap) -> (Bundle, Bundle) {
    let a = m.linear_part();
    let sp = invariant_splitting(&spectral_classify(a).unwrap(), a).unwrap();
    (
        Bundle::constant(sp.subspace(Label::Stable).unwrap()).unwrap(),
        Bundle::constant(sp.subspace(Label::Unstable).unwrap()).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponents_sum_to_log_det(x in prop::collection::vec(0.0f64..1.0, 3), n in 10usize..80) {
        let est = finite_time_exponents(DA.as_dynamical(), &x, n).unwrap();
        prop_assert!((est.exponents.iter().sum::<f64>() - est.log_det_average).abs() < 1e-6);
        prop_assert!(est.exponents.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn adding_samples_never_creates_a_pass(seed in 0u64..1000, keep in 10usize..200) {
        let m = DA.as_dynamical();
        let (es, eu) = da_bundles();
        let (es, eu) = (Bundle::constant(&es).unwrap(), Bundle::constant(&eu).unwrap());
        let all = Samples::uniform(m.domain(), 200, seed);
        let sub = Samples::from_points(all.points[..keep].to_vec());
        let big = verify_domination(m, &es, &eu, 1, &all).unwrap();
        let small = verify_domination(m, &es, &eu, 1, &sub).unwrap();
        prop_assert!(small.worst_margin >= big.worst_margin);
        prop_assert!(!big.pass || small.pass);
    }

    #[test]
    fn domination_persists_when_doubling_ell(m in hyperbolic_2x2(), ell in 1usize..4) {
        let (s, u) = eigen_bundles(&m);
        let samples = Samples::uniform(m.domain(), 20, 0);
        let once = verify_domination(&m, &s, &u, ell, &samples).unwrap();
        let twice = verify_domination(&m, &s, &u, 2 * ell, &samples).unwrap();
        prop_assert!(!once.pass || twice.pass);
    }

    #[test]
    fn linear_margins_match_eigenvalues(m in hyperbolic_2x2()) {
        let (s, u) = eigen_bundles(&m);
        let a = m.linear_part();
        let lam = spectral_classify(a).unwrap().moduli[1];
        let samples = Samples::uniform(m.domain(), 10, 0);
        let dom = verify_domination(&m, &s, &u, 1, &samples).unwrap();
        prop_assert!((dom.worst_margin - (0.5 * lam - 1.0 / lam)).abs() < 1e-8);
        let c = verify_uniformity(&m, &s, 1, Check::Contract, &samples).unwrap();
        prop_assert!((c.worst_margin - (0.5 - 1.0 / lam)).abs() < 1e-8);
    }
}
