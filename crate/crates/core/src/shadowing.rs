//! The shadowing semiconjugacy `H = id + h` with `H∘F = A∘H`.
//!
//! With `φ = F − A` periodic, `h` is the bounded solution of
//! `h∘F − A·h = −φ`, split along the spectral projectors:
//!
//! ```text
//! h_u(x) =  Σ_{n≥0} A^{-(n+1)} P_u φ(F^n x)
//! h_s(x) = −Σ_{n≥1} A^{n-1}   P_s φ(F^{-n} x)
//! ```
//!
//! Both series are evaluated in the real eigenbasis, where `A` is block
//! diagonal, so that powers never mix the two blocks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::linear_models::{invariant_splitting, spectral_classify, Label, Splitting};
use crate::maps::torus::{reduce, TorusLiftMap};

#[derive(Clone, Debug)]
pub struct Semiconjugacy {
    map: TorusLiftMap,
    pub splitting: Splitting,
    /// Largest of `max |λ_s|` and `max 1/|λ_u|`: the adapted-norm rate.
    pub mu: f64,
    /// Condition number of the eigenbasis, inflating adapted-norm bounds.
    pub kappa: f64,
    pub depth: usize,
    pub tail_bound: f64,
    /// Bound on `sup ‖H − id‖`.
    pub shadow_bound: f64,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    stable_idx: Vec<usize>,
    unstable_idx: Vec<usize>,
    stable_block: DMatrix<f64>,
    unstable_block_inv: DMatrix<f64>,
}

impl Semiconjugacy {
    pub fn map(&self) -> &TorusLiftMap {
        &self.map
    }

    /// `K₁ ≥ ‖h‖` for a given rate, condition and `sup ‖φ‖`.
    pub fn series_bound(kappa: f64, c0: f64, mu: f64, depth: usize) -> f64 {
        kappa * c0 * (1.0 + mu) * mu.powi(depth as i32) / (1.0 - mu)
    }
}

/// Builds `H` truncated at the smallest depth whose tail bound is `≤ tol`.
pub fn build_semiconjugacy(map: &TorusLiftMap, tol: f64) -> Result<Semiconjugacy> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let a = map.linear_part();
    let spec = spectral_classify(a)?;
    if !spec.classification.is_anosov() {
        return Err(Error::Construction(format!(
            "linear part is {}; shadowing needs a hyperbolic matrix",
            spec.classification.as_str()
        )));
    }
    let splitting = invariant_splitting(&spec, a)?;
    let mu = splitting
        .column_labels
        .iter()
        .map(|(l, m)| if *l == Label::Stable { *m } else { 1.0 / m })
        .fold(0.0, f64::max);
    if !(mu < 1.0) {
        return Err(Error::Construction(format!("adapted contraction rate {mu} is not below 1")));
    }
    let basis = splitting.adapted_basis.clone();
    let basis_inv = basis.clone().try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let kappa = splitting.basis_condition;
    let lam = &basis_inv * map.linear_real() * &basis;
    let d = a.dim();
    let stable_idx: Vec<usize> = (0..d).filter(|&i| splitting.column_labels[i].0 == Label::Stable).collect();
    let unstable_idx: Vec<usize> = (0..d).filter(|&i| splitting.column_labels[i].0 == Label::Unstable).collect();
    let stable_block = lam.select_rows(&stable_idx).select_columns(&stable_idx);
    let unstable_block_inv = lam
        .select_rows(&unstable_idx)
        .select_columns(&unstable_idx)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular unstable block".into()))?;
    let c0 = map.c0_bound();
    let (depth, tail_bound) = if c0 == 0.0 {
        (0, 0.0)
    } else {
        let mut n = 0usize;
        while Semiconjugacy::series_bound(kappa, c0, mu, n) > tol {
            n += 1;
            if n > 100_000 {
                return Err(Error::Numeric("truncation depth exceeds 100000".into()));
            }
        }
        (n, Semiconjugacy::series_bound(kappa, c0, mu, n))
    };
    Ok(Semiconjugacy {
        map: map.clone(),
        splitting,
        mu,
        kappa,
        depth,
        tail_bound,
        shadow_bound: Semiconjugacy::series_bound(kappa, c0, mu, 0),
        basis,
        basis_inv,
        stable_idx,
        unstable_idx,
        stable_block,
        unstable_block_inv,
    })
}

fn horner(block: &DMatrix<f64>, terms: &[DVector<f64>]) -> DVector<f64> {
    // Σ_k block^k · terms[k]
    let mut acc = DVector::zeros(block.nrows());
    for t in terms.iter().rev() {
        acc = block * acc + t;
    }
    acc
}

/// `h(x)` for the truncated series.
pub fn eval_h(semi: &Semiconjugacy, x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    if semi.depth == 0 || semi.map.has_zero_displacement() {
        return Ok(vec![0.0; d]);
    }
    let adapted = |p: &[f64]| &semi.basis_inv * DVector::from_vec(semi.map.displacement(p));
    let n = semi.depth;
    let mut fwd = Vec::with_capacity(n);
    let mut p = reduce(x);
    for _ in 0..n {
        let v = adapted(&p);
        fwd.push(semi.unstable_block_inv.clone() * DVector::from_iterator(semi.unstable_idx.len(), semi.unstable_idx.iter().map(|&i| v[i])));
        p = reduce(&semi.map.lift(&p));
    }
    let mut bwd = Vec::with_capacity(n);
    let mut p = reduce(x);
    for _ in 0..n {
        p = reduce(&semi.map.inverse_lift(&p)?);
        let v = adapted(&p);
        bwd.push(-DVector::from_iterator(semi.stable_idx.len(), semi.stable_idx.iter().map(|&i| v[i])));
    }
    let hu = horner(&semi.unstable_block_inv, &fwd);
    let hs = horner(&semi.stable_block, &bwd);
    let mut coords = DVector::zeros(d);
    for (k, &i) in semi.unstable_idx.iter().enumerate() {
        coords[i] = hu[k];
    }
    for (k, &i) in semi.stable_idx.iter().enumerate() {
        coords[i] = hs[k];
    }
    Ok((&semi.basis * coords).iter().copied().collect())
}

/// `H(x) = x + h(x)` on covering space.
pub fn eval_h_map(semi: &Semiconjugacy, x: &[f64]) -> Result<Vec<f64>> {
    let h = eval_h(semi, x)?;
    Ok(x.iter().zip(h).map(|(a, b)| a + b).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivarianceRow {
    pub index: usize,
    pub x: Vec<f64>,
    pub hx: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivarianceReport {
    pub samples: usize,
    pub seed: u64,
    pub depth: usize,
    pub tail_bound: f64,
    pub max_residual: f64,
    /// `(1 + ‖A‖)·tail_bound`.
    pub residual_bound: f64,
    pub max_shadow_distance: f64,
    pub shadow_bound: f64,
    #[serde(skip)]
    pub rows: Vec<EquivarianceRow>,
}

pub fn uniform_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Max of `‖H(F(x)) − A·H(x)‖` over seeded uniform samples of `[0,1)^d`.
pub fn verify_equivariance(semi: &Semiconjugacy, n_samples: usize, seed: u64) -> Result<EquivarianceReport> {
    let d = semi.map.linear_part().dim();
    let pts = uniform_points(d, n_samples, seed);
    let rows: Vec<Result<EquivarianceRow>> = pts
        .into_par_iter()
        .enumerate()
        .map(|(index, x)| {
            let hx = eval_h_map(semi, &x)?;
            let hfx = eval_h_map(semi, &semi.map.lift(&x))?;
            let ahx = semi.map.linear_part().apply(&hx);
            Ok(EquivarianceRow { index, residual: linalg::dist(&hfx, &ahx), x, hx })
        })
        .collect();
    let rows: Vec<EquivarianceRow> = rows.into_iter().collect::<Result<_>>()?;
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let max_shadow_distance = rows.iter().map(|r| linalg::dist(&r.x, &r.hx)).fold(0.0, f64::max);
    Ok(EquivarianceReport {
        samples: n_samples,
        seed,
        depth: semi.depth,
        tail_bound: semi.tail_bound,
        max_residual,
        residual_bound: (1.0 + linalg::op_norm(semi.map.linear_real())) * semi.tail_bound,
        max_shadow_distance,
        shadow_bound: semi.shadow_bound,
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberReport {
    pub samples: usize,
    pub hits: usize,
    pub diameter: f64,
    pub residual_threshold: f64,
    /// `H` restricted to sampled unstable arcs is strictly monotone along
    /// the unstable direction of `A`, with steps above `2·tail_bound`.
    pub unstable_injective: bool,
    pub hit_points: Vec<Vec<f64>>,
}

/// Estimates the diameter of `H⁻¹(y)` from samples in a ball around `y`.
///
/// Each sample is refined toward the fibre (see [`refine_preimage`]) and
/// counted as a hit when the final residual is below
/// `tail_bound + radius/n^(1/d)`.
pub fn fiber_probe(semi: &Semiconjugacy, y: &[f64], n_samples: usize, radius: f64, seed: u64) -> Result<FiberReport> {
    let d = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = Vec::with_capacity(n_samples);
    while starts.len() < n_samples {
        let v: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        if linalg::norm(&v) <= 1.0 {
            starts.push(y.iter().zip(&v).map(|(a, b)| a + radius * b).collect::<Vec<f64>>());
        }
    }
    let grid_step = radius / (n_samples as f64).powf(1.0 / d as f64);
    let threshold = semi.tail_bound + grid_step;
    let refined: Vec<Result<Option<Vec<f64>>>> = starts
        .into_par_iter()
        .map(|x| {
            let (x, res) = refine_preimage(semi, y, x, radius)?;
            Ok((res <= threshold).then_some(x))
        })
        .collect();
    let mut hits = Vec::new();
    for r in refined {
        if let Some(x) = r? {
            hits.push(x);
        }
    }
    if hits.is_empty() {
        return Err(Error::EmptyFiber(format!("no preimage of {y:?} within radius {radius}")));
    }
    let mut diameter = 0.0f64;
    for i in 0..hits.len() {
        for j in i + 1..hits.len() {
            diameter = diameter.max(linalg::dist(&hits[i], &hits[j]));
        }
    }
    let unstable_injective = unstable_arc_monotone(semi, &hits[..hits.len().min(8)], radius, 64)?;
    Ok(FiberReport { samples: n_samples, hits: hits.len(), diameter, residual_threshold: threshold, unstable_injective, hit_points: hits })
}

/// Drives `‖H(x) − y‖` down. Near a nontrivial fibre `H` is only Hölder,
/// so derivative-based steps are useless there; each round first tries the
/// correction `x + (y − H(x))` and falls back to a compass search along the
/// coordinate axes and the spectral directions, halving the step when no
/// direction improves. Returns the final point and residual.
fn refine_preimage(semi: &Semiconjugacy, y: &[f64], mut x: Vec<f64>, radius: f64) -> Result<(Vec<f64>, f64)> {
    let d = y.len();
    let resid = |p: &[f64]| -> Result<(Vec<f64>, f64)> {
        let hp = eval_h_map(semi, p)?;
        let r: Vec<f64> = y.iter().zip(&hp).map(|(a, b)| a - b).collect();
        let n = linalg::norm(&r);
        Ok((r, n))
    };
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            e
        })
        .collect();
    for (_, b) in &semi.splitting.subspaces {
        for c in b.column_iter() {
            dirs.push(c.iter().copied().collect());
        }
    }
    let (mut r, mut rn) = resid(&x)?;
    let floor = 0.1 * semi.tail_bound.max(1e-15);
    let mut step = (0.25 * radius).min(rn.max(1e-15));
    let mut evals = 0usize;
    while rn > floor && evals < 2000 {
        let cand: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a + b).collect();
        let (rc, rcn) = resid(&cand)?;
        evals += 1;
        if rcn < 0.5 * rn {
            x = cand;
            r = rc;
            rn = rcn;
            step = step.max(rn);
            continue;
        }
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for e in &dirs {
            for sign in [1.0, -1.0] {
                let p: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + sign * step * b).collect();
                let (rp, rpn) = resid(&p)?;
                evals += 1;
                if rpn < best.as_ref().map_or(rn, |b| b.2) {
                    best = Some((p, rp, rpn));
                }
            }
        }
        match best {
            Some((p, rp, rpn)) => {
                x = p;
                r = rp;
                rn = rpn;
            }
            None => {
                step *= 0.5;
                if step < 1e-17 * (1.0 + linalg::norm(&x)) {
                    break;
                }
            }
        }
    }
    Ok((x, rn))
}

/// Checks that `H` moves strictly forward along the unstable direction of
/// `A` on arcs `x + s·e_u`, `|s| ≤ half_length`, through each centre.
pub fn unstable_arc_monotone(semi: &Semiconjugacy, centres: &[Vec<f64>], half_length: f64, points: usize) -> Result<bool> {
    let Some(eu) = semi.splitting.subspace(Label::Unstable) else {
        return Ok(true);
    };
    if eu.ncols() != 1 {
        // monotonicity only makes sense along a line
        return Ok(true);
    }
    let eu: Vec<f64> = eu.column(0).iter().copied().collect();
    // coordinate along E^u in the spectral decomposition
    let pu = semi.splitting.projector(Label::Unstable).expect("unstable projector");
    // arc steps must exceed the resolution 2·tail_bound of the check
    let spacing = (2.0 * half_length / (points - 1) as f64).max(4.0 * semi.tail_bound);
    let half_length = 0.5 * spacing * (points - 1) as f64;
    for c in centres {
        let mut prev: Option<f64> = None;
        for k in 0..points {
            let s = -half_length + spacing * k as f64;
            let x: Vec<f64> = c.iter().zip(&eu).map(|(a, e)| a + s * e).collect();
            let hx = eval_h_map(semi, &x)?;
            let coord = (pu * DVector::from_vec(hx)).dot(&DVector::from_column_slice(&eu));
            if let Some(p) = prev {
                if coord - p <= 2.0 * semi.tail_bound {
                    return Ok(false);
                }
            }
            prev = Some(coord);
        }
    }
    Ok(true)
}
