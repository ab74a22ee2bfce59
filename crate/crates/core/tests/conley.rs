use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;

use phdyn_core::conley::{
    basin_fraction, build_graph, certify_trapping, chain_classes, pseudo_orbit_path, quasi_attractors, BoxGrid,
    ChainDecomposition, Enclosure, TransitionGraph, DEFAULT_EDGE_BUDGET,
};
use phdyn_core::linear_models::IntegerMatrix;
use phdyn_core::maps::torus::FnDisplacement;
use phdyn_core::maps::{make_map, DynamicalMap, HorseshoeMap, HorseshoeSkewSpec, MapSpec, TorusLiftMap};
use phdyn_core::shadowing::uniform_points;

fn cat() -> TorusLiftMap {
    TorusLiftMap::linear(IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap())
}

/// `x ↦ x + a·sin(2πkx)` on the circle.
fn gradient_circle(a: f64, k: f64) -> TorusLiftMap {
    let phi = FnDisplacement {
        value: Box::new(move |x: &[f64]| vec![a * (TAU * k * x[0]).sin()]),
        jacobian: Box::new(move |x: &[f64]| DMatrix::from_element(1, 1, a * TAU * k * (TAU * k * x[0]).cos())),
        derivative_bound: DMatrix::from_element(1, 1, a * TAU * k),
        sup_norm: a,
    };
    TorusLiftMap::new(IntegerMatrix::identity(1), Arc::new(phi))
}

/// Two attracting circles `{1/4} × T` and `{3/4} × T`: a gradient map in the
/// first coordinate times an irrational rotation in the second.
fn two_circles() -> TorusLiftMap {
    let rot = 5f64.sqrt() - 2.0;
    let phi = FnDisplacement {
        value: Box::new(move |x: &[f64]| vec![0.1 * (2.0 * TAU * x[0]).sin(), rot]),
        jacobian: Box::new(move |x: &[f64]| {
            DMatrix::from_row_slice(2, 2, &[0.2 * TAU * (2.0 * TAU * x[0]).cos(), 0.0, 0.0, 0.0])
        }),
        derivative_bound: DMatrix::from_row_slice(2, 2, &[0.2 * TAU, 0.0, 0.0, 0.0]),
        sup_norm: 0.1f64.hypot(rot),
    };
    TorusLiftMap::new(IntegerMatrix::identity(2), Arc::new(phi))
}

fn componentwise(map: &dyn DynamicalMap) -> Enclosure {
    Enclosure::Componentwise(map.component_bound().unwrap())
}

fn graph(map: &dyn DynamicalMap, n: usize, eps: f64) -> TransitionGraph {
    let grid = BoxGrid::for_domain(map.domain(), n).unwrap();
    build_graph(map, &grid, eps, componentwise(map), DEFAULT_EDGE_BUDGET).unwrap()
}

fn class_value(d: &ChainDecomposition, c: u32) -> f64 {
    d.lyapunov[d.members(c)[0]]
}

fn assert_lyapunov_monotone(d: &ChainDecomposition) {
    for c in 0..d.class_count as u32 {
        let members = d.members(c);
        let v = d.lyapunov[members[0]];
        assert!(members.iter().all(|&i| d.lyapunov[i] == v));
        for &s in &d.dag[c as usize] {
            assert!(v > class_value(d, s), "class {c} -> {s}");
        }
    }
}

#[test]
fn cat_map_graph_is_one_recurrent_class() {
    let m = cat();
    let g = graph(&m, 64, 1.0 / 64.0);
    let d = chain_classes(&g);
    assert_eq!(d.class_count, 1);
    assert!(d.recurrent.iter().all(|&r| r));
    assert!(d.lyapunov.iter().all(|&v| v == 0.0));
    for x in uniform_points(2, 500, 7) {
        let y = m.image(&x).point().unwrap();
        let (a, b) = (g.grid.locate(&x).unwrap(), g.grid.locate(&y).unwrap());
        assert!(g.has_edge(a, b), "orbit step {x:?} -> {y:?} has no edge");
    }
    assert!(pseudo_orbit_path(&g, 0, 4095).is_some());
    assert!(pseudo_orbit_path(&g, 17, 17).is_some());
    let qa = quasi_attractors(&d, &m, &g.grid, g.enclosure.lipschitz(), 20);
    assert_eq!(qa.len(), 1);
    assert!(qa[0].certificate.pass);
}

#[test]
fn outer_approximation_for_nonlinear_maps() {
    let da = make_map(&MapSpec::from_json(r#"{"kind":"da","matrix":[[1,1,0],[0,0,1],[1,0,0]],"delta":0.2,"stable_eigenvalues":[0.8,1.3]}"#).unwrap()).unwrap();
    let two = two_circles();
    let maps: [(&dyn DynamicalMap, usize); 2] = [(da.as_dynamical(), 12), (&two, 32)];
    for (m, n) in maps {
        let g = graph(m, n, 0.0);
        for x in uniform_points(m.dim(), 1000, 11) {
            let y = m.image(&x).point().unwrap();
            assert!(g.has_edge(g.grid.locate(&x).unwrap(), g.grid.locate(&y).unwrap()));
        }
    }
}

#[test]
fn identity_boxes_are_all_recurrent() {
    let id = TorusLiftMap::linear(IntegerMatrix::identity(2));
    let g = graph(&id, 16, 0.0);
    let d = chain_classes(&g);
    let mut nb = Vec::new();
    for i in 0..g.grid.len() {
        assert!(g.has_edge(i, i));
        assert!(d.recurrent[i]);
        nb.clear();
        g.grid.neighbours(i, &mut nb);
        nb.push(i);
        assert!(g.successors(i).iter().all(|&j| nb.contains(&(j as usize))));
    }
}

#[test]
fn horseshoe_graph_has_absorbing_exterior() {
    let h = HorseshoeMap::new(HorseshoeSkewSpec::default()).unwrap();
    let g = graph(&h, 8, 0.0);
    let e = g.exterior().unwrap();
    assert_eq!(g.successors(e), &[e as u32]);
    let d = chain_classes(&g);
    let ext = d.exterior_class.unwrap();
    assert!(d.terminal_classes().contains(&ext));
}

/// Boxes whose displacement lies within one box width of the self-loop
/// threshold carry a self-loop but no edge back, so the outer approximation
/// also reports singleton recurrent boxes next to each fixed point.
#[test]
fn gradient_circle_has_source_and_sink() {
    let m = gradient_circle(0.1, 1.0);
    let g = graph(&m, 64, 1.0 / 64.0);
    let d = chain_classes(&g);
    let recurrent: Vec<u32> = (0..d.class_count as u32).filter(|&c| d.class_recurrent[c as usize]).collect();
    let clusters: Vec<u32> = recurrent.iter().copied().filter(|&c| d.members(c).len() > 1).collect();
    assert_eq!(clusters.len(), 2);
    let source = d.class_of[g.grid.locate(&[0.0]).unwrap()];
    let sink = d.class_of[g.grid.locate(&[0.5]).unwrap()];
    assert_eq!(clusters, vec![source, sink]);
    assert_eq!(d.terminal_classes(), vec![sink]);
    assert!(class_value(&d, source) > class_value(&d, sink));
    let circ = |a: usize, b: usize| a.abs_diff(b).min(64 - a.abs_diff(b));
    for c in recurrent.into_iter().filter(|c| !clusters.contains(c)) {
        let [i] = d.members(c)[..] else { panic!("spurious class {c} is not a single box") };
        assert!(g.has_edge(i, i));
        let near = |k: u32| d.members(k).iter().any(|&j| circ(i, j) <= 3);
        assert!(near(source) || near(sink), "box {i} is far from both fixed points");
    }
    assert_lyapunov_monotone(&d);
    let a = g.grid.locate(&[0.0]).unwrap();
    let b = g.grid.locate(&[0.5]).unwrap();
    assert!(pseudo_orbit_path(&g, a, b).is_some());
    assert!(pseudo_orbit_path(&g, b, a).is_none());
}

#[test]
fn two_attracting_circles_are_two_certified_quasi_attractors() {
    let m = two_circles();
    let g = graph(&m, 64, 0.0);
    let d = chain_classes(&g);
    let terminal = d.terminal_classes();
    assert_eq!(terminal.len(), 2);
    let at = |x: f64| d.class_of[g.grid.locate(&[x, 0.3]).unwrap()];
    let expect: BTreeSet<u32> = [at(0.25), at(0.75)].into();
    assert_eq!(terminal.iter().copied().collect::<BTreeSet<_>>(), expect);
    let qa = quasi_attractors(&d, &m, &g.grid, g.enclosure.lipschitz(), 20);
    assert_eq!(qa.len(), 2);
    assert!(qa.iter().all(|q| q.certificate.pass));
    assert_lyapunov_monotone(&d);
}

#[test]
fn trapping_certificates() {
    let m = cat();
    let grid = BoxGrid::torus(vec![32, 32]).unwrap();
    let all: Vec<usize> = (0..grid.len()).collect();
    let whole = certify_trapping(&m, &grid, &all, m.lipschitz_hint());
    assert!(whole.pass);
    assert_eq!(whole.margin, f64::INFINITY);

    let da = make_map(&MapSpec::from_json(r#"{"kind":"da","matrix":[[1,1,0],[0,0,1],[1,0,0]],"delta":0.2,"stable_eigenvalues":[0.8,1.3]}"#).unwrap()).unwrap();
    let m = da.as_dynamical();
    let grid = BoxGrid::torus(vec![32; 3]).unwrap();
    let mut ball = Vec::new();
    grid.boxes_meeting_ball(&[0.0; 3], 0.1, &mut ball);
    let cert = certify_trapping(m, &grid, &ball, m.lipschitz_hint());
    assert!(!cert.pass);
}

#[test]
fn basin_fractions() {
    let m = cat();
    let grid = BoxGrid::torus(vec![16, 16]).unwrap();
    let all: Vec<usize> = (0..grid.len()).collect();
    assert_eq!(basin_fraction(&m, &grid, &all, 500, 40, 10, 1).unwrap().fraction, 1.0);

    let (left, right): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| grid.multi_index(i)[0] < 8);
    let a = basin_fraction(&m, &grid, &left, 2000, 40, 10, 5).unwrap();
    let b = basin_fraction(&m, &grid, &right, 2000, 40, 10, 5).unwrap();
    assert!(a.fraction > 0.0 && a.fraction < 1.0);
    assert!(a.fraction + b.fraction <= 1.0 + 1.0 / 2000.0);
    let again = basin_fraction(&m, &grid, &left, 2000, 40, 10, 5).unwrap();
    assert_eq!(a.hits, again.hits);
    assert!(basin_fraction(&m, &grid, &left, 10, 5, 5, 0).is_err());
}

#[test]
fn refinement_stays_inside_the_inflated_coarse_recurrent_set() {
    let m = gradient_circle(0.1, 1.0);
    let coarse = graph(&m, 64, 1.0 / 64.0);
    let fine = graph(&m, 128, 1.0 / 128.0);
    let dc = chain_classes(&coarse);
    let df = chain_classes(&fine);
    let mut inflated = vec![false; coarse.grid.len()];
    let mut nb = Vec::new();
    for i in (0..coarse.grid.len()).filter(|&i| dc.recurrent[i]) {
        inflated[i] = true;
        nb.clear();
        coarse.grid.neighbours(i, &mut nb);
        nb.iter().for_each(|&j| inflated[j] = true);
    }
    for i in (0..fine.grid.len()).filter(|&i| df.recurrent[i]) {
        let c = coarse.grid.locate(&fine.grid.center(i)).unwrap();
        assert!(inflated[c], "fine box {i} escapes the coarse recurrent set");
    }
}

#[test]
fn epsilon_only_adds_edges() {
    let m = two_circles();
    let g0 = graph(&m, 32, 0.0);
    let g1 = graph(&m, 32, 1.0 / 32.0);
    for i in 0..g0.grid.len() {
        assert!(g0.successors(i).iter().all(|&j| g1.has_edge(i, j as usize)));
    }
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<Vec<u32>>)> {
    (2usize..40).prop_flat_map(|n| {
        let succ = prop::collection::vec(0..n as u32, 0..4);
        (Just(n), prop::collection::vec(succ, n))
    })
}

fn from_adjacency(n: usize, adj: Vec<Vec<u32>>) -> TransitionGraph {
    let grid = BoxGrid::torus(vec![n]).unwrap();
    TransitionGraph::from_adjacency(grid, 0.0, Enclosure::Lipschitz(1.0), adj)
}

fn partition(d: &ChainDecomposition) -> BTreeSet<BTreeSet<usize>> {
    (0..d.class_count as u32).map(|c| d.members(c).into_iter().collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lyapunov_decreases_along_condensation_edges((n, adj) in random_graph()) {
        let d = chain_classes(&from_adjacency(n, adj));
        assert_lyapunov_monotone(&d);
        for c in d.terminal_classes() {
            prop_assert_eq!(class_value(&d, c), 0.0);
        }
    }

    #[test]
    fn classes_do_not_depend_on_labelling((n, adj) in random_graph(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut permuted = vec![Vec::new(); n];
        for (i, succ) in adj.iter().enumerate() {
            permuted[perm[i]] = succ.iter().map(|&j| perm[j as usize] as u32).collect();
        }
        let a = chain_classes(&from_adjacency(n, adj));
        let b = chain_classes(&from_adjacency(n, permuted));
        let mapped: BTreeSet<BTreeSet<usize>> =
            partition(&a).into_iter().map(|c| c.into_iter().map(|i| perm[i]).collect()).collect();
        prop_assert_eq!(mapped, partition(&b));
        for i in 0..n {
            prop_assert_eq!(a.lyapunov[i], b.lyapunov[perm[i]]);
            prop_assert_eq!(a.recurrent[i], b.recurrent[perm[i]]);
        }
    }

    #[test]
    fn trapping_soundness_on_random_sets(mask in prop::collection::vec(any::<bool>(), 64)) {
        let m = gradient_circle(0.1, 1.0);
        let g = graph(&m, 64, 0.0);
        let d = chain_classes(&g);
        let set: Vec<usize> = (0..64).filter(|&i| mask[i]).collect();
        let cert = certify_trapping(&m, &g.grid, &set, g.enclosure.lipschitz());
        if cert.pass {
            for c in (0..d.class_count as u32).filter(|&c| d.class_recurrent[c as usize]) {
                let members = d.members(c);
                if members.iter().any(|i| mask[*i]) {
                    prop_assert!(members.iter().all(|i| mask[*i]));
                }
            }
        }
    }
}
