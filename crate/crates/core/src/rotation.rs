//! Rotation vectors of torus lifts, non-resonance of frequency vectors, and
//! box-level chain transitivity.

use rayon::prelude::*;
use serde::Serialize;

use crate::conley::{build_graph, chain_classes, BoxGrid, Enclosure, DEFAULT_EDGE_BUDGET};
use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::{DynamicalMap, TorusLiftMap};

#[derive(Clone, Debug, Serialize)]
pub struct RotationEstimate {
    pub n: usize,
    pub starts: Vec<Vec<f64>>,
    /// `(F^n(z) − z)/n` per start.
    pub per_start: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    /// Max pairwise distance between per-start estimates.
    pub spread: f64,
    /// `sup ‖F(x) − A·x‖` over the sampled orbit points.
    pub displacement_bound: f64,
    /// Integer vector added to the lift.
    pub lift_shift: Vec<i64>,
    /// Only the first coordinate is measured (linear part is not the identity).
    pub first_coordinate_only: bool,
}

/// Mean displacement of the lift `F + γ` along orbits of length `n`.
///
/// For a linear part other than the identity (e.g. a Dehn twist) only the
/// first coordinate is averaged.
pub fn rotation_vector(map: &TorusLiftMap, starts: &[Vec<f64>], n: usize, lift_shift: &[i64]) -> Result<RotationEstimate> {
    let d = map.dim();
    if n == 0 || starts.is_empty() {
        return Err(Error::InvalidInput("rotation_vector needs n >= 1 and at least one start".into()));
    }
    if lift_shift.len() != d || starts.iter().any(|s| s.len() != d) {
        return Err(Error::InvalidInput("dimension mismatch in starts or lift shift".into()));
    }
    let a = map.linear_part();
    let first_only = *a != crate::linear_models::IntegerMatrix::identity(d);
    let shift: Vec<f64> = lift_shift.iter().map(|&g| g as f64).collect();

    let rows: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|z| {
            let mut x = z.clone();
            let mut disp: f64 = 0.0;
            for _ in 0..n {
                let mut y = map.lift(&x);
                let ax = a.apply(&x);
                disp = disp.max(linalg::dist(&y, &ax));
                for (yi, s) in y.iter_mut().zip(&shift) {
                    *yi += s;
                }
                x = y;
            }
            let est: Vec<f64> = if first_only {
                vec![(x[0] - z[0]) / n as f64]
            } else {
                x.iter().zip(z).map(|(a, b)| (a - b) / n as f64).collect()
            };
            (est, disp)
        })
        .collect();

    let per_start: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let displacement_bound = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let m = per_start[0].len();
    let pooled: Vec<f64> = (0..m).map(|k| per_start.iter().map(|e| e[k]).sum::<f64>() / per_start.len() as f64).collect();
    let mut spread: f64 = 0.0;
    for i in 0..per_start.len() {
        for j in i + 1..per_start.len() {
            spread = spread.max(linalg::dist(&per_start[i], &per_start[j]));
        }
    }
    Ok(RotationEstimate {
        n,
        starts: starts.to_vec(),
        per_start,
        pooled,
        spread,
        displacement_bound,
        lift_shift: lift_shift.to_vec(),
        first_coordinate_only: first_only,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct NonresonanceReport {
    pub pass: bool,
    pub bound: i64,
    pub tol: f64,
    /// Coefficients `(p, q, r)` of the best relation `p·α + q·β + r`,
    /// one coefficient per frequency followed by the constant.
    pub best_relation: Vec<i64>,
    pub best_residual: f64,
}

/// Exhaustive search for an integer relation `Σ k_i·v_i + r ≈ 0` with all
/// coefficients bounded by `bound` in absolute value and not all zero.
pub fn nonresonance_check(v: &[f64], bound: i64, tol: f64) -> Result<NonresonanceReport> {
    if bound < 1 {
        return Err(Error::InvalidInput("denominator bound must be >= 1".into()));
    }
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("frequency vector must be finite and non-empty".into()));
    }
    let m = v.len();
    let mut coeffs = vec![-bound; m];
    let mut closest = (f64::INFINITY, vec![0i64; m + 1]);
    // among relations within tol, the one with smallest (max, sum) of |coefficients|
    let mut simplest: Option<((i64, i64), f64, Vec<i64>)> = None;
    loop {
        // all-zero frequency coefficients leave |r| >= 1
        if coeffs.iter().any(|&c| c != 0) {
            let s: f64 = coeffs.iter().zip(v).map(|(&k, x)| k as f64 * x).sum();
            let r = (-s).round().clamp(-bound as f64, bound as f64);
            let res = (s + r).abs();
            let mut rel = coeffs.clone();
            rel.push(r as i64);
            if res <= tol {
                let key = (rel.iter().map(|c| c.abs()).max().unwrap_or(0), rel.iter().map(|c| c.abs()).sum());
                if simplest.as_ref().is_none_or(|(k, _, _)| key < *k) {
                    simplest = Some((key, res, rel.clone()));
                }
            }
            if res < closest.0 {
                closest = (res, rel);
            }
        }
        let mut k = 0;
        loop {
            if k == m {
                let (best_residual, best_relation) = match simplest {
                    Some((_, res, rel)) => (res, rel),
                    None => closest,
                };
                return Ok(NonresonanceReport {
                    pass: best_residual > tol,
                    bound,
                    tol,
                    best_relation: canonical_sign(best_relation),
                    best_residual,
                });
            }
            coeffs[k] += 1;
            if coeffs[k] > bound {
                coeffs[k] = -bound;
                k += 1;
            } else {
                break;
            }
        }
    }
}

fn canonical_sign(mut rel: Vec<i64>) -> Vec<i64> {
    if let Some(&first) = rel.iter().find(|&&c| c != 0) {
        if first < 0 {
            rel.iter_mut().for_each(|c| *c = -*c);
        }
    }
    rel
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitivityProbe {
    pub single_class: bool,
    pub class_count: usize,
    pub recurrent_fraction: f64,
    pub resolution: Vec<usize>,
    pub epsilon: f64,
    pub lipschitz: f64,
    pub edges: usize,
}

/// All boxes in one recurrent class of the ε-transition graph.
pub fn transitivity_probe(map: &dyn DynamicalMap, grid: &BoxGrid, epsilon: f64, enclosure: Enclosure) -> Result<TransitivityProbe> {
    if !map.domain().is_torus() {
        return Err(Error::InvalidInput("transitivity probe needs a torus map".into()));
    }
    let lipschitz = enclosure.lipschitz();
    let graph = build_graph(map, grid, epsilon, enclosure, DEFAULT_EDGE_BUDGET)?;
    let decomp = chain_classes(&graph);
    let recurrent = decomp.recurrent.iter().filter(|r| **r).count();
    Ok(TransitivityProbe {
        single_class: decomp.class_count == 1 && decomp.class_recurrent[0],
        class_count: decomp.class_count,
        recurrent_fraction: recurrent as f64 / decomp.recurrent.len() as f64,
        resolution: grid.resolution().to_vec(),
        epsilon,
        lipschitz,
        edges: graph.edge_count(),
    })
}
