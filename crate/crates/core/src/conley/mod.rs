//! Set-oriented chain-recurrence analysis on box grids.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{Domain, DynamicalMap, Image};

pub mod graph;
pub mod grid;
pub mod scc;

pub use graph::{build_graph, Enclosure, TransitionGraph, DEFAULT_EDGE_BUDGET};
pub use grid::BoxGrid;

/// SCC decomposition of a transition graph.
#[derive(Clone, Debug)]
pub struct ChainDecomposition {
    /// Class of every node, numbered by smallest member index.
    pub class_of: Vec<u32>,
    pub class_count: usize,
    /// Node lies in a nontrivial class or carries a self-loop.
    pub recurrent: Vec<bool>,
    pub class_recurrent: Vec<bool>,
    /// Sorted successor classes in the condensation (no self-edges).
    pub dag: Vec<Vec<u32>>,
    pub lyapunov: Vec<f64>,
    /// Class holding the exterior node, for region grids.
    pub exterior_class: Option<u32>,
}

impl ChainDecomposition {
    pub fn members(&self, class: u32) -> Vec<usize> {
        (0..self.class_of.len()).filter(|&i| self.class_of[i] == class).collect()
    }

    pub fn terminal_classes(&self) -> Vec<u32> {
        (0..self.class_count as u32).filter(|&c| self.dag[c as usize].is_empty()).collect()
    }

    pub fn recurrent_class_count(&self) -> usize {
        self.class_recurrent.iter().filter(|r| **r).count()
    }
}

pub fn chain_classes(graph: &TransitionGraph) -> ChainDecomposition {
    let n = graph.node_count();
    let (raw, ncomp) = scc::tarjan(graph);
    // renumber by smallest member
    let mut first = vec![u32::MAX; ncomp];
    for i in 0..n {
        let c = raw[i] as usize;
        if first[c] == u32::MAX {
            first[c] = i as u32;
        }
    }
    let mut order: Vec<usize> = (0..ncomp).collect();
    order.sort_by_key(|&c| first[c]);
    let mut rename = vec![0u32; ncomp];
    for (new, &old) in order.iter().enumerate() {
        rename[old] = new as u32;
    }
    let class_of: Vec<u32> = raw.iter().map(|&c| rename[c as usize]).collect();
    let mut size = vec![0usize; ncomp];
    for &c in &class_of {
        size[c as usize] += 1;
    }
    let recurrent: Vec<bool> = (0..n).map(|i| size[class_of[i] as usize] > 1 || graph.has_edge(i, i)).collect();
    let mut class_recurrent = vec![false; ncomp];
    let mut dag: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for i in 0..n {
        let ci = class_of[i];
        if recurrent[i] {
            class_recurrent[ci as usize] = true;
        }
        for &j in graph.successors(i) {
            let cj = class_of[j as usize];
            if cj != ci {
                dag[ci as usize].push(cj);
            }
        }
    }
    for succ in dag.iter_mut() {
        succ.sort_unstable();
        succ.dedup();
    }
    let heights = class_heights(&dag);
    let top = heights.iter().copied().max().unwrap_or(0) as f64;
    let lyapunov = class_of.iter().map(|&c| heights[c as usize] as f64 / (top + 1.0)).collect();
    let exterior_class = graph.exterior().map(|e| class_of[e]);
    ChainDecomposition { class_of, class_count: ncomp, recurrent, class_recurrent, dag, lyapunov, exterior_class }
}

/// Longest path from each class to a sink of the condensation.
fn class_heights(dag: &[Vec<u32>]) -> Vec<usize> {
    let n = dag.len();
    let mut indeg = vec![0usize; n];
    for succ in dag {
        for &s in succ {
            indeg[s as usize] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&c| indeg[c] == 0).collect();
    let mut topo = Vec::with_capacity(n);
    while let Some(c) = queue.pop_front() {
        topo.push(c);
        for &s in &dag[c] {
            indeg[s as usize] -= 1;
            if indeg[s as usize] == 0 {
                queue.push_back(s as usize);
            }
        }
    }
    debug_assert_eq!(topo.len(), n, "condensation must be acyclic");
    let mut height = vec![0usize; n];
    for &c in topo.iter().rev() {
        height[c] = dag[c].iter().map(|&s| height[s as usize] + 1).max().unwrap_or(0);
    }
    height
}

/// Combinatorial Lyapunov function: `height/(max height + 1)` where the
/// height of a class is its longest path to a terminal class. Constant on
/// classes, strictly decreasing along condensation edges, zero on terminal
/// classes.
pub fn lyapunov_levels(decomp: &ChainDecomposition) -> Vec<f64> {
    decomp.lyapunov.clone()
}

#[derive(Clone, Debug, Serialize)]
pub struct TrappingCertificate {
    pub boxes: usize,
    /// `min` over boxes of (distance from the image centre to the nearest
    /// box outside `U`) minus the enclosure radius. Infinite when `U` has no
    /// complement.
    #[serde(serialize_with = "crate::output::ser_real")]
    pub margin: f64,
    pub pass: bool,
    /// Box attaining the margin.
    pub witness: Option<usize>,
    pub inconclusive: bool,
    pub rounds: usize,
}

/// Checks `F(closure(box)) ⊂ U` for every box of `U` using a Lipschitz ball
/// of radius `L·diam/2` around the centre image.
pub fn certify_trapping(map: &dyn DynamicalMap, grid: &BoxGrid, set: &[usize], lipschitz: f64) -> TrappingCertificate {
    let mut inside = vec![false; grid.len()];
    for &i in set {
        if i < grid.len() {
            inside[i] = true;
        }
    }
    let count = inside.iter().filter(|v| **v).count();
    let complement_empty = count == grid.len() && grid.is_torus();
    if complement_empty {
        return TrappingCertificate { boxes: count, margin: f64::INFINITY, pass: true, witness: None, inconclusive: false, rounds: 0 };
    }
    let radius = lipschitz * grid.diameter() / 2.0;
    let members: Vec<usize> = (0..grid.len()).filter(|&i| inside[i]).collect();
    let margins: Vec<(f64, usize)> = members
        .par_iter()
        .map(|&i| {
            let c = grid.center(i);
            let m = match map.image(&c) {
                Image::Escape => f64::NEG_INFINITY,
                Image::Point(y) => nearest_outside(grid, &inside, &y) - radius,
            };
            (m, i)
        })
        .collect();
    let (margin, witness) = margins
        .into_iter()
        .fold((f64::INFINITY, None), |(m, w), (v, i)| if v < m { (v, Some(i)) } else { (m, w) });
    TrappingCertificate { boxes: count, margin, pass: margin > 0.0, witness, inconclusive: false, rounds: 0 }
}

/// Distance from `y` to the nearest point not covered by `inside` boxes
/// (including the outside of a region).
fn nearest_outside(grid: &BoxGrid, inside: &[bool], y: &[f64]) -> f64 {
    let d = grid.dim();
    let mut best = f64::INFINITY;
    if !grid.is_torus() {
        let lo = grid.lower();
        let hi = grid.upper();
        for k in 0..d {
            best = best.min((y[k] - lo[k]).max(0.0).min((hi[k] - y[k]).max(0.0)));
            if y[k] < lo[k] || y[k] >= hi[k] {
                return 0.0;
            }
        }
    }
    let hmin = grid.cell().iter().copied().fold(f64::INFINITY, f64::min);
    let mut r = hmin;
    let mut out = Vec::new();
    loop {
        out.clear();
        grid.boxes_meeting_ball(y, r, &mut out);
        let found = out
            .iter()
            .filter(|&&j| !inside[j])
            .map(|&j| grid.distance_to_box(y, j))
            .fold(f64::INFINITY, f64::min);
        if found <= r || found < best {
            return best.min(found);
        }
        if r >= best || r > 2.0 * grid.diameter() * grid.resolution().iter().copied().max().unwrap_or(1) as f64 {
            return best;
        }
        r *= 2.0;
    }
}

/// Terminal recurrent class with its trapping certificate.
#[derive(Clone, Debug, Serialize)]
pub struct QuasiAttractor {
    pub class: u32,
    pub boxes: Vec<usize>,
    pub exterior: bool,
    pub certificate: TrappingCertificate,
}

pub const MAX_GROWTH_ROUNDS: usize = 20;

/// Terminal classes of the condensation, each with a trapping certificate
/// for its box set grown by one ring per round (at most `rounds` rounds).
pub fn quasi_attractors(decomp: &ChainDecomposition, map: &dyn DynamicalMap, grid: &BoxGrid, lipschitz: f64, rounds: usize) -> Vec<QuasiAttractor> {
    let mut out = Vec::new();
    for c in decomp.terminal_classes() {
        if !decomp.class_recurrent[c as usize] {
            continue;
        }
        let exterior = decomp.exterior_class == Some(c);
        let boxes: Vec<usize> = decomp.members(c).into_iter().filter(|&i| i < grid.len()).collect();
        if exterior {
            let certificate = TrappingCertificate { boxes: 0, margin: f64::INFINITY, pass: true, witness: None, inconclusive: false, rounds: 0 };
            out.push(QuasiAttractor { class: c, boxes, exterior, certificate });
            continue;
        }
        let mut set = vec![false; grid.len()];
        for &i in &boxes {
            set[i] = true;
        }
        let mut round = 0;
        let certificate = loop {
            let members: Vec<usize> = (0..grid.len()).filter(|&i| set[i]).collect();
            let mut cert = certify_trapping(map, grid, &members, lipschitz);
            cert.rounds = round;
            if cert.pass {
                break cert;
            }
            if round == rounds {
                cert.inconclusive = true;
                break cert;
            }
            let mut nb = Vec::new();
            for &i in &members {
                grid.neighbours(i, &mut nb);
            }
            for j in nb {
                set[j] = true;
            }
            round += 1;
        };
        out.push(QuasiAttractor { class: c, boxes, exterior, certificate });
    }
    out
}

/// Shortest box path from `a` to `b` (a cycle when `a == b`) as box
/// centres. Consecutive centres form an `ε + L·diam` pseudo-orbit when the
/// enclosure is valid and `L ≥ 1`.
pub fn pseudo_orbit_path(graph: &TransitionGraph, a: usize, b: usize) -> Option<Vec<Vec<f64>>> {
    let n = graph.grid.len();
    if a >= n || b >= n {
        return None;
    }
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &s in graph.successors(a) {
        let s = s as usize;
        if s < n && prev[s] == usize::MAX {
            prev[s] = a;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        if v == b {
            let mut path = vec![b];
            let mut cur = b;
            loop {
                let p = prev[cur];
                path.push(p);
                if p == a {
                    break;
                }
                cur = p;
            }
            path.reverse();
            return Some(path.into_iter().map(|i| graph.grid.center(i)).collect());
        }
        for &s in graph.successors(v) {
            let s = s as usize;
            if s < n && prev[s] == usize::MAX {
                prev[s] = v;
                queue.push_back(s);
            }
        }
    }
    None
}

pub const BASIN_CHUNK: usize = 1024;

#[derive(Clone, Debug, Serialize)]
pub struct BasinEstimate {
    pub samples: usize,
    pub hits: usize,
    pub fraction: f64,
    pub horizon: usize,
    pub settle: usize,
    pub seed: u64,
}

/// Fraction of uniform starts whose orbit stays in `target` during the last
/// `settle` of `horizon` steps. Chunk `k` of the samples draws from stream
/// `k` of a ChaCha8 generator seeded with `seed`, so the estimate does not
/// depend on scheduling.
pub fn basin_fraction(map: &dyn DynamicalMap, grid: &BoxGrid, target: &[usize], n_samples: usize, horizon: usize, settle: usize, seed: u64) -> Result<BasinEstimate> {
    if !(horizon > settle && settle >= 1) {
        return Err(Error::InvalidInput("basin estimation needs horizon > settle >= 1".into()));
    }
    let mut in_target = vec![false; grid.node_count()];
    for &i in target {
        if i < in_target.len() {
            in_target[i] = true;
        }
    }
    let (lo, hi) = match map.domain() {
        Domain::Torus { dim } => (vec![0.0; *dim], vec![1.0; *dim]),
        Domain::Region { bounds, .. } => (bounds.lower.clone(), bounds.upper.clone()),
    };
    let torus = map.domain().is_torus();
    let chunks = n_samples.div_ceil(BASIN_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let m = BASIN_CHUNK.min(n_samples - k * BASIN_CHUNK);
            let mut count = 0;
            for _ in 0..m {
                let mut x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
                let mut ok = true;
                for step in 1..=horizon {
                    match map.image(&x) {
                        Image::Point(y) => x = if torus { crate::maps::torus::reduce(&y) } else { y },
                        Image::Escape => {
                            ok = false;
                            break;
                        }
                    }
                    if step > horizon - settle {
                        let node = grid.locate(&x).or(grid.exterior());
                        if !node.is_some_and(|j| in_target[j]) {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    count += 1;
                }
            }
            count
        })
        .sum();
    Ok(BasinEstimate {
        samples: n_samples,
        hits,
        fraction: if n_samples == 0 { 0.0 } else { hits as f64 / n_samples as f64 },
        horizon,
        settle,
        seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphStats {
    pub boxes: usize,
    pub nodes: usize,
    pub edges: usize,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub classes: usize,
    pub recurrent_classes: usize,
    pub recurrent_boxes: usize,
    pub terminal_classes: usize,
}

pub fn graph_stats(graph: &TransitionGraph, decomp: &ChainDecomposition) -> GraphStats {
    GraphStats {
        boxes: graph.grid.len(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        epsilon: graph.epsilon,
        lipschitz: graph.enclosure.lipschitz(),
        classes: decomp.class_count,
        recurrent_classes: decomp.recurrent_class_count(),
        recurrent_boxes: (0..graph.grid.len()).filter(|&i| decomp.recurrent[i]).count(),
        terminal_classes: decomp.terminal_classes().len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_graph() -> TransitionGraph {
        // 0 -> 1 <-> 2 -> 3 (self-loop), 4 isolated with self-loop
        let grid = BoxGrid::torus(vec![5]).unwrap();
        let adj = vec![vec![1], vec![2], vec![1, 3], vec![3], vec![4]];
        TransitionGraph::from_adjacency(grid, 0.0, Enclosure::Lipschitz(1.0), adj)
    }

    #[test]
    fn classes_and_levels() {
        let d = chain_classes(&chain_graph());
        assert_eq!(d.class_of, vec![0, 1, 1, 2, 3]);
        assert_eq!(d.recurrent, vec![false, true, true, true, true]);
        assert_eq!(d.terminal_classes(), vec![2, 3]);
        assert!(d.lyapunov[0] > d.lyapunov[1]);
        assert!(d.lyapunov[1] > d.lyapunov[3]);
        assert_eq!(d.lyapunov[3], 0.0);
        assert_eq!(d.lyapunov[1], d.lyapunov[2]);
    }

    #[test]
    fn paths() {
        let g = chain_graph();
        assert_eq!(pseudo_orbit_path(&g, 0, 3).unwrap().len(), 4);
        assert!(pseudo_orbit_path(&g, 3, 0).is_none());
        assert_eq!(pseudo_orbit_path(&g, 4, 4).unwrap().len(), 2);
    }
}
