use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::grid::BoxGrid;
use crate::error::{Error, Result};
use crate::maps::{Domain, DynamicalMap, Image};

pub const DEFAULT_EDGE_BUDGET: usize = 50_000_000;

/// How the image of a box is enclosed.
#[derive(Clone, Debug, PartialEq)]
pub enum Enclosure {
    /// Ball around the centre image of radius `L·diam/2 + ε`.
    Lipschitz(f64),
    /// Rectangle around the centre image with half-widths
    /// `Σ_j M_kj·w_j + ε`, where `w` are the box half-widths and `M` bounds
    /// the Jacobian entrywise.
    Componentwise(DMatrix<f64>),
}

impl Enclosure {
    /// Lipschitz constant implied by the enclosure.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Enclosure::Lipschitz(l) => *l,
            Enclosure::Componentwise(m) => crate::linalg::op_norm(m),
        }
    }
}

/// Box transition graph in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct TransitionGraph {
    pub grid: BoxGrid,
    pub epsilon: f64,
    pub enclosure: Enclosure,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl TransitionGraph {
    /// Assembles a graph from explicit successor lists (sorted and
    /// deduplicated here).
    pub fn from_adjacency(grid: BoxGrid, epsilon: f64, enclosure: Enclosure, mut adj: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(adj.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Self { grid, epsilon, enclosure, offsets, targets }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn successors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.successors(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn exterior(&self) -> Option<usize> {
        self.grid.exterior()
    }
}

fn push_enclosure(grid: &BoxGrid, centre: &[f64], half: &[f64], enclosure: &Enclosure, epsilon: f64, out: &mut Vec<usize>) -> bool {
    match enclosure {
        Enclosure::Lipschitz(l) => {
            let diam = 2.0 * half.iter().map(|h| h * h).sum::<f64>().sqrt();
            grid.boxes_meeting_ball(centre, l * diam / 2.0 + epsilon, out)
        }
        Enclosure::Componentwise(m) => {
            let d = centre.len();
            let pad: Vec<f64> = (0..d).map(|k| (0..d).map(|j| m[(k, j)] * half[j]).sum::<f64>() + epsilon).collect();
            let lo: Vec<f64> = (0..d).map(|k| centre[k] - pad[k]).collect();
            let hi: Vec<f64> = (0..d).map(|k| centre[k] + pad[k]).collect();
            grid.boxes_meeting_rect(&lo, &hi, out)
        }
    }
}

/// Successors of box `i`: boxes meeting the enclosure of the image, plus the
/// exterior for region grids whenever part of the box escapes.
fn box_successors(map: &dyn DynamicalMap, grid: &BoxGrid, i: usize, epsilon: f64, enclosure: &Enclosure) -> Vec<u32> {
    let (lo, hi) = grid.bounds(i);
    let d = grid.dim();
    let mut out = Vec::new();
    let mut escapes = false;
    // sub-boxes where the map is defined
    let pieces: Vec<(Vec<f64>, Vec<f64>)> = match map.domain() {
        Domain::Torus { .. } => vec![(lo.clone(), hi.clone())],
        Domain::Region { pieces, .. } => {
            let mut parts = Vec::new();
            let mut covered = 0.0;
            let volume: f64 = (0..d).map(|k| hi[k] - lo[k]).product();
            for p in pieces {
                let a: Vec<f64> = (0..d).map(|k| lo[k].max(p.lower[k])).collect();
                let b: Vec<f64> = (0..d).map(|k| hi[k].min(p.upper[k])).collect();
                if (0..d).all(|k| a[k] < b[k]) {
                    covered += (0..d).map(|k| b[k] - a[k]).product::<f64>();
                    parts.push((a, b));
                }
            }
            if covered < volume * (1.0 - 1e-12) {
                escapes = true;
            }
            parts
        }
    };
    for (a, b) in pieces {
        let centre: Vec<f64> = (0..d).map(|k| 0.5 * (a[k] + b[k])).collect();
        let half: Vec<f64> = (0..d).map(|k| 0.5 * (b[k] - a[k])).collect();
        match map.image(&centre) {
            Image::Point(y) => {
                if push_enclosure(grid, &y, &half, enclosure, epsilon, &mut out) {
                    escapes = true;
                }
            }
            Image::Escape => escapes = true,
        }
    }
    let mut v: Vec<u32> = out.into_iter().map(|j| j as u32).collect();
    if escapes {
        if let Some(e) = grid.exterior() {
            v.push(e as u32);
        }
    }
    v.sort_unstable();
    v.dedup();
    v
}

/// Builds the ε-transition graph of `map` on `grid`.
///
/// If the enclosure is valid (a true Lipschitz constant, or a true entrywise
/// Jacobian bound), every step of an ε-pseudo-orbit between boxes is an
/// edge. Fails with a capacity error past `edge_budget` edges.
pub fn build_graph(map: &dyn DynamicalMap, grid: &BoxGrid, epsilon: f64, enclosure: Enclosure, edge_budget: usize) -> Result<TransitionGraph> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidInput("epsilon must be non-negative".into()));
    }
    if map.dim() != grid.dim() {
        return Err(Error::InvalidInput("map and grid dimensions differ".into()));
    }
    if let Enclosure::Lipschitz(l) = enclosure {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::InvalidInput("Lipschitz constant must be finite and non-negative".into()));
        }
    }
    let count = AtomicUsize::new(0);
    let n = grid.len();
    let lists: Vec<Option<Vec<u32>>> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            if count.load(Ordering::Relaxed) > edge_budget {
                return None;
            }
            let v = box_successors(map, grid, i, epsilon, &enclosure);
            count.fetch_add(v.len(), Ordering::Relaxed);
            Some(v)
        })
        .collect();
    let total = count.load(Ordering::Relaxed);
    if total > edge_budget || lists.iter().any(|l| l.is_none()) {
        return Err(Error::Capacity(format!(
            "transition graph exceeds the edge budget of {edge_budget} ({} boxes)",
            grid.len()
        )));
    }
    let mut adj: Vec<Vec<u32>> = lists.into_iter().map(|l| l.expect("checked")).collect();
    if let Some(e) = grid.exterior() {
        adj.push(vec![e as u32]);
    }
    Ok(TransitionGraph::from_adjacency(grid.clone(), epsilon, enclosure, adj))
}
