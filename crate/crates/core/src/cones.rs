//! Sample-based checks of cone invariance, domination and uniform or volume
//! contraction/expansion, finite-time exponents, and the resulting
//! partial-hyperbolicity label.
//!
//! Every check is a universal claim over a finite sample set: a report
//! passes when the margin is positive at every evaluated sample, and carries
//! the seed, sample counts and worst witness so the run can be reproduced.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::maps::torus::reduce;
use crate::maps::{Domain, DynamicalMap, Image};

pub type BasisFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ApertureFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// A field of k-dimensional subspaces `x -> E(x)`, given by orthonormal bases.
#[derive(Clone)]
pub struct Bundle {
    dim: usize,
    rank: usize,
    basis: BasisFn,
}

impl std::fmt::Debug for Bundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bundle").field("dim", &self.dim).field("rank", &self.rank).finish()
    }
}

impl Bundle {
    /// Constant bundle spanned by the columns of `span` (orthonormalized here).
    pub fn constant(span: &DMatrix<f64>) -> Result<Self> {
        let (d, k) = span.shape();
        if k == 0 || k > d {
            return Err(Error::InvalidInput(format!("bundle of rank {k} in dimension {d}")));
        }
        if linalg::singular_extremes(span).1 < 1e-12 {
            return Err(Error::InvalidInput("bundle span is degenerate".into()));
        }
        let q = linalg::orthonormalize(span);
        Ok(Self { dim: d, rank: k, basis: Arc::new(move |_| q.clone()) })
    }

    /// Point-dependent bundle. The evaluator must return a `dim × rank`
    /// matrix with orthonormal columns; this is checked at every use.
    pub fn from_fn(dim: usize, rank: usize, basis: BasisFn) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::InvalidInput(format!("bundle of rank {rank} in dimension {dim}")));
        }
        Ok(Self { dim, rank, basis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let b = (self.basis)(x);
        if b.shape() != (self.dim, self.rank) {
            return Err(Error::InvalidInput(format!(
                "bundle basis has shape {:?}, expected {:?}",
                b.shape(),
                (self.dim, self.rank)
            )));
        }
        let gram = b.transpose() * &b - DMatrix::identity(self.rank, self.rank);
        if gram.amax() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("bundle basis not orthonormal at {x:?}")));
        }
        Ok(b)
    }
}

/// The cone `{u + w : u ∈ E(x), w ⊥ E(x), |w| ≤ α(x)|u|}`.
#[derive(Clone, Debug)]
pub struct ConeField {
    pub bundle: Bundle,
    aperture: ApertureWrap,
}

#[derive(Clone)]
struct ApertureWrap(ApertureFn);

impl std::fmt::Debug for ApertureWrap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("<aperture>")
    }
}

impl ConeField {
    pub fn new(bundle: Bundle, aperture: ApertureFn) -> Self {
        Self { bundle, aperture: ApertureWrap(aperture) }
    }

    pub fn constant(span: &DMatrix<f64>, aperture: f64) -> Result<Self> {
        if !(aperture > 0.0 && aperture.is_finite()) {
            return Err(Error::InvalidInput(format!("cone aperture must be positive, got {aperture}")));
        }
        Ok(Self::new(Bundle::constant(span)?, Arc::new(move |_| aperture)))
    }

    pub fn aperture(&self, x: &[f64]) -> Result<f64> {
        let a = (self.aperture.0)(x);
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(Error::InvalidInput(format!("cone aperture {a} at {x:?}")))
        }
    }
}

/// Sample points for a verification run.
#[derive(Clone, Debug)]
pub struct Samples {
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    /// Points dropped by a mask.
    pub masked: usize,
}

impl Samples {
    /// Uniform samples of the fundamental domain (torus) or bounding box (region).
    pub fn uniform(domain: &Domain, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = match domain {
            Domain::Torus { dim } => (vec![0.0; *dim], vec![1.0; *dim]),
            Domain::Region { bounds, .. } => (bounds.lower.clone(), bounds.upper.clone()),
        };
        let points = (0..n)
            .map(|_| lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect())
            .collect();
        Self { points, seed, masked: 0 }
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        Self { points, seed: 0, masked: 0 }
    }

    /// Keep only points where `keep` holds, e.g. to restrict to a
    /// neighbourhood of an invariant set.
    pub fn masked(mut self, keep: impl Fn(&[f64]) -> bool) -> Self {
        let before = self.points.len();
        self.points.retain(|p| keep(p));
        self.masked += before - self.points.len();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ConeInvariance,
    Domination,
    Contract,
    Expand,
    VolContract,
    VolExpand,
}

impl Check {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "cone_invariance" => Check::ConeInvariance,
            "domination" => Check::Domination,
            "contract" => Check::Contract,
            "expand" => Check::Expand,
            "vol_contract" => Check::VolContract,
            "vol_expand" => Check::VolExpand,
            other => return Err(Error::InvalidInput(format!("unknown check '{other}'"))),
        })
    }

    fn is_uniformity(self) -> bool {
        matches!(self, Check::Contract | Check::Expand | Check::VolContract | Check::VolExpand)
    }
}

/// Outcome of one sample-based check.
#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub mode: Check,
    /// Iterates composed along each orbit (`ℓ` or `N`); 1 for cone invariance.
    pub iterates: usize,
    pub samples: usize,
    pub seed: u64,
    pub evaluated: usize,
    /// Samples whose orbit left the region.
    pub skipped: usize,
    pub masked: usize,
    #[serde(serialize_with = "crate::output::ser_real")]
    pub worst_margin: f64,
    pub witness: Option<Vec<f64>>,
    pub pass: bool,
}

pub type DominationReport = VerificationReport;

fn reduce_margins(
    mode: Check,
    iterates: usize,
    samples: &Samples,
    margins: Vec<Result<Option<f64>>>,
) -> Result<VerificationReport> {
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut evaluated = 0;
    let mut skipped = 0;
    for (i, m) in margins.into_iter().enumerate() {
        match m? {
            Some(m) => {
                evaluated += 1;
                if m < worst || witness.is_none() {
                    worst = m;
                    witness = Some(samples.points[i].clone());
                }
            }
            None => skipped += 1,
        }
    }
    Ok(VerificationReport {
        mode,
        iterates,
        samples: samples.len(),
        seed: samples.seed,
        evaluated,
        skipped,
        masked: samples.masked,
        worst_margin: worst,
        witness,
        pass: evaluated > 0 && worst > 0.0,
    })
}

fn canonical(map: &dyn DynamicalMap, x: Vec<f64>) -> Vec<f64> {
    if map.domain().is_torus() {
        reduce(&x)
    } else {
        x
    }
}

/// Jacobian of `f^n` at `x` and the endpoint `f^n(x)`; `None` on escape.
pub fn orbit_jacobian(map: &dyn DynamicalMap, x: &[f64], n: usize) -> Option<(DMatrix<f64>, Vec<f64>)> {
    let d = map.dim();
    let mut j = DMatrix::identity(d, d);
    let mut p = x.to_vec();
    for _ in 0..n {
        let step = map.jacobian(&p)?;
        j = step * j;
        p = canonical(map, map.image(&p).point()?);
    }
    Some((j, p))
}

/// Deterministic directions on the unit sphere of `R^m`.
fn sphere_directions(m: usize) -> Vec<DVector<f64>> {
    match m {
        0 => vec![],
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..96)
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / 96.0;
                DVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let mut out = Vec::new();
            for i in 0..m {
                for s in [1.0, -1.0] {
                    let mut v = DVector::zeros(m);
                    v[i] = s;
                    out.push(v);
                }
            }
            while out.len() < 64 * m {
                let v = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);
                let n = v.norm();
                if n > 1e-3 {
                    out.push(v / n);
                }
            }
            out
        }
    }
}

/// Checks `Df(C(x)) ⊂ Int C(f(x))` on the samples. The margin at a sample is
/// the smallest angular gap `atan α(f(x)) − atan(|w'|/|u'|)` over images of
/// boundary vectors `u + α(x)·w` with `u ∈ E(x)`, `w ⊥ E(x)` unit.
pub fn verify_cone_invariance(map: &dyn DynamicalMap, cone: &ConeField, samples: &Samples) -> Result<VerificationReport> {
    let d = map.dim();
    if cone.bundle.dim() != d {
        return Err(Error::InvalidInput(format!("cone in dimension {} for a map of dimension {d}", cone.bundle.dim())));
    }
    let k = cone.bundle.rank();
    let u_dirs = sphere_directions(k);
    let w_dirs = sphere_directions(d - k);
    let margins: Vec<Result<Option<f64>>> = samples
        .points
        .par_iter()
        .map(|x| {
            let Some(j) = map.jacobian(x) else { return Ok(None) };
            let Image::Point(y) = map.image(x) else { return Ok(None) };
            let y = canonical(map, y);
            let e = cone.bundle.at(x)?;
            let alpha = cone.aperture(x)?;
            let ey = cone.bundle.at(&y)?;
            let alpha_y = cone.aperture(&y)?;
            if k == d {
                return Ok(Some(alpha_y.atan()));
            }
            let perp = linalg::orthogonal_complement(&e);
            let mut worst_ratio: f64 = 0.0;
            for u in &u_dirs {
                let eu = &e * u;
                for w in &w_dirs {
                    let v = &eu + (&perp * w) * alpha;
                    let jv = &j * v;
                    let along = ey.transpose() * &jv;
                    let across = &jv - &ey * &along;
                    let a = along.norm();
                    let ratio = if a > 0.0 { across.norm() / a } else { f64::INFINITY };
                    worst_ratio = worst_ratio.max(ratio);
                }
            }
            Ok(Some(alpha_y.atan() - worst_ratio.atan()))
        })
        .collect();
    reduce_margins(Check::ConeInvariance, 1, samples, margins)
}

/// Pointwise `ℓ`-domination `E ≺ F`: margin
/// `½·m(Df^ℓ|F) − ‖Df^ℓ|E‖` with the extremal vectors read off singular values.
pub fn verify_domination(
    map: &dyn DynamicalMap,
    weak: &Bundle,
    strong: &Bundle,
    ell: usize,
    samples: &Samples,
) -> Result<DominationReport> {
    let d = map.dim();
    if ell == 0 {
        return Err(Error::InvalidInput("domination needs ell >= 1".into()));
    }
    if weak.dim() != d || strong.dim() != d || weak.rank() + strong.rank() != d {
        return Err(Error::InvalidInput(format!(
            "bundles of ranks {} and {} do not split dimension {d}",
            weak.rank(),
            strong.rank()
        )));
    }
    let margins: Vec<Result<Option<f64>>> = samples
        .points
        .par_iter()
        .map(|x| {
            let Some((j, _)) = orbit_jacobian(map, x, ell) else { return Ok(None) };
            let (e_max, _) = linalg::singular_extremes(&(&j * weak.at(x)?));
            let (_, f_min) = linalg::singular_extremes(&(&j * strong.at(x)?));
            Ok(Some(0.5 * f_min - e_max))
        })
        .collect();
    reduce_margins(Check::Domination, ell, samples, margins)
}

/// Uniform (volume) contraction or expansion of a bundle after `n` iterates.
pub fn verify_uniformity(
    map: &dyn DynamicalMap,
    bundle: &Bundle,
    n: usize,
    mode: Check,
    samples: &Samples,
) -> Result<VerificationReport> {
    if n == 0 {
        return Err(Error::InvalidInput("uniformity needs N >= 1".into()));
    }
    if !mode.is_uniformity() {
        return Err(Error::InvalidInput(format!("{mode:?} is not a uniformity mode")));
    }
    if bundle.dim() != map.dim() {
        return Err(Error::InvalidInput("bundle dimension does not match the map".into()));
    }
    let margins: Vec<Result<Option<f64>>> = samples
        .points
        .par_iter()
        .map(|x| {
            let Some((j, _)) = orbit_jacobian(map, x, n) else { return Ok(None) };
            let image = &j * bundle.at(x)?;
            let m = match mode {
                Check::Contract => 0.5 - linalg::singular_extremes(&image).0,
                Check::Expand => linalg::singular_extremes(&image).1 - 2.0,
                Check::VolContract => 0.5 - linalg::column_volume(&image),
                Check::VolExpand => linalg::column_volume(&image) - 2.0,
                _ => unreachable!(),
            };
            Ok(Some(m))
        })
        .collect();
    reduce_margins(mode, n, samples, margins)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentEstimate {
    /// Iterates actually used.
    pub n: usize,
    pub requested: usize,
    pub truncated: bool,
    /// Descending.
    pub exponents: Vec<f64>,
    /// `max |QᵀQ − I|` over the pushed frames.
    pub residual: f64,
    /// `(1/n) Σ log|det Df|` along the orbit.
    pub log_det_average: f64,
}

/// Finite-time exponents `(1/n) log σ_i(Df^n(x))`.
///
/// A backward pass over the transposed Jacobians gives the right singular
/// frame of the product; pushing that frame forward with repeated QR makes
/// the log diagonal growth equal the log singular values without the
/// transient of an arbitrary initial frame.
pub fn finite_time_exponents(map: &dyn DynamicalMap, x: &[f64], n: usize) -> Result<ExponentEstimate> {
    let d = map.dim();
    if n == 0 {
        return Err(Error::InvalidInput("orbit length must be positive".into()));
    }
    let mut jacs = Vec::with_capacity(n);
    let mut p = x.to_vec();
    let mut log_det = 0.0;
    for _ in 0..n {
        let Some(j) = map.jacobian(&p) else { break };
        let det = j.determinant().abs();
        if !(det >= 1e-300) {
            return Err(Error::Numeric(format!("degenerate Jacobian (|det| = {det:e}) at {p:?}")));
        }
        log_det += det.ln();
        jacs.push(j);
        match map.image(&p) {
            Image::Point(y) => p = canonical(map, y),
            Image::Escape => break,
        }
    }
    let used = jacs.len();
    if used == 0 {
        return Err(Error::InvalidInput(format!("orbit of {x:?} leaves the region immediately")));
    }

    let mut frame = DMatrix::identity(d, d);
    for j in jacs.iter().rev() {
        frame = (j.transpose() * frame).qr().q();
    }
    let mut sums = vec![0.0; d];
    let mut residual: f64 = 0.0;
    for j in &jacs {
        let (q, r) = (j * &frame).qr().unpack();
        for (i, s) in sums.iter_mut().enumerate() {
            *s += r[(i, i)].abs().ln();
        }
        residual = residual.max((q.transpose() * &q - DMatrix::identity(d, d)).amax());
        frame = q;
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / used as f64).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(ExponentEstimate {
        n: used,
        requested: n,
        truncated: used < n,
        exponents,
        residual,
        log_det_average: log_det / used as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhLabel {
    None,
    VolumePartiallyHyperbolic,
    PartiallyHyperbolic,
    VolumeHyperbolic,
    StrongPartiallyHyperbolic,
    Hyperbolic,
}

impl PhLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhLabel::None => "none",
            PhLabel::VolumePartiallyHyperbolic => "volume_partially_hyperbolic",
            PhLabel::PartiallyHyperbolic => "partially_hyperbolic",
            PhLabel::VolumeHyperbolic => "volume_hyperbolic",
            PhLabel::StrongPartiallyHyperbolic => "strong_partially_hyperbolic",
            PhLabel::Hyperbolic => "hyperbolic",
        }
    }
}

/// Reports over one splitting `E_1 ⊕ … ⊕ E_k`.
///
/// Uniformity reports apply to the sum of the bundles in their range.
/// Domination reports are indexed by the split point `i`, meaning
/// `E_1 ⊕ … ⊕ E_i ≺ E_{i+1} ⊕ … ⊕ E_k`.
#[derive(Clone, Debug, Default)]
pub struct SplittingEvidence {
    pub dims: Vec<usize>,
    pub uniformity: Vec<(Range<usize>, VerificationReport)>,
    pub domination: Vec<(usize, VerificationReport)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhClassification {
    pub label: PhLabel,
    pub dominated: bool,
    pub hyperbolic: bool,
    pub strong_partially_hyperbolic: bool,
    pub partially_hyperbolic: bool,
    pub volume_partially_hyperbolic: bool,
    pub volume_hyperbolic: bool,
}

/// Label a splitting from its reports at sample resolution.
pub fn ph_classify(ev: &SplittingEvidence) -> Result<PhClassification> {
    let k = ev.dims.len();
    if k == 0 || ev.dims.contains(&0) {
        return Err(Error::InvalidInput("splitting needs at least one nonzero bundle".into()));
    }
    for (r, rep) in &ev.uniformity {
        if r.start >= r.end || r.end > k {
            return Err(Error::InvalidInput(format!("bundle range {r:?} outside a splitting of {k} bundles")));
        }
        if !rep.mode.is_uniformity() {
            return Err(Error::InvalidInput(format!("{:?} report filed as uniformity", rep.mode)));
        }
    }
    for (i, rep) in &ev.domination {
        if *i == 0 || *i >= k {
            return Err(Error::InvalidInput(format!("split point {i} invalid for {k} bundles")));
        }
        if rep.mode != Check::Domination {
            return Err(Error::InvalidInput(format!("{:?} report filed as domination", rep.mode)));
        }
    }

    let dim_of = |r: &Range<usize>| ev.dims[r.clone()].iter().sum::<usize>();
    let contains = |outer: &Range<usize>, inner: &Range<usize>| outer.start <= inner.start && inner.end <= outer.end;
    // contraction or expansion of a sum restricts to every sub-bundle
    let norm_pass = |target: &Range<usize>, mode: Check| {
        ev.uniformity.iter().any(|(r, rep)| {
            rep.pass
                && ((rep.mode == mode && contains(r, target))
                    || (r == target && dim_of(r) == 1 && rep.mode == volume_of(mode)))
        })
    };
    let vol_pass = |target: &Range<usize>, mode: Check| {
        ev.uniformity.iter().any(|(r, rep)| {
            rep.pass && r == target && (rep.mode == mode || rep.mode == norm_of(mode))
        })
    };

    let dominated = (1..k).all(|i| ev.domination.iter().any(|(s, rep)| *s == i && rep.pass));
    let first = 0..1;
    let last = k - 1..k;
    let hyperbolic = if k == 1 {
        norm_pass(&first, Check::Contract) || norm_pass(&first, Check::Expand)
    } else {
        dominated && (1..k).any(|j| norm_pass(&(0..j), Check::Contract) && norm_pass(&(j..k), Check::Expand))
    };
    let strong = k > 1 && dominated && norm_pass(&first, Check::Contract) && norm_pass(&last, Check::Expand);
    let partial = (k == 1 || dominated) && (norm_pass(&first, Check::Contract) || norm_pass(&last, Check::Expand));
    let vol_partial = k > 1 && dominated && vol_pass(&first, Check::VolContract) && vol_pass(&last, Check::VolExpand);
    let vol_hyp = vol_partial && partial;

    let label = if hyperbolic {
        PhLabel::Hyperbolic
    } else if strong {
        PhLabel::StrongPartiallyHyperbolic
    } else if vol_hyp {
        PhLabel::VolumeHyperbolic
    } else if partial {
        PhLabel::PartiallyHyperbolic
    } else if vol_partial {
        PhLabel::VolumePartiallyHyperbolic
    } else {
        PhLabel::None
    };
    Ok(PhClassification {
        label,
        dominated,
        hyperbolic,
        strong_partially_hyperbolic: strong || (hyperbolic && k > 1),
        partially_hyperbolic: partial || hyperbolic,
        volume_partially_hyperbolic: vol_partial || strong || (hyperbolic && k > 1),
        volume_hyperbolic: vol_hyp || strong || (hyperbolic && k > 1),
    })
}

fn volume_of(mode: Check) -> Check {
    match mode {
        Check::Contract => Check::VolContract,
        Check::Expand => Check::VolExpand,
        m => m,
    }
}

fn norm_of(mode: Check) -> Check {
    match mode {
        Check::VolContract => Check::Contract,
        Check::VolExpand => Check::Expand,
        m => m,
    }
}
