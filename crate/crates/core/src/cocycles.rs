//! Periodic linear cocycles: exponents, domination, Lyapunov diameter, and
//! rotation-based perturbations in dimension two.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const MIN_ABS_DET: f64 = 1e-12;
const INVARIANCE_TOL: f64 = 1e-8;
const CLUSTER_TOL: f64 = 1e-6;

/// A periodic orbit of matrices `A_0, …, A_{π−1}` with return product
/// `M = A_{π−1} ⋯ A_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Vec<f64>>>", into = "Vec<Vec<Vec<f64>>>")]
pub struct PeriodicCocycle {
    matrices: Vec<DMatrix<f64>>,
    bound: f64,
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for PeriodicCocycle {
    type Error = Error;

    fn try_from(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut mats = Vec::with_capacity(rows.len());
        for m in rows {
            let d = m.len();
            if m.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidInput("cocycle matrices must be square".into()));
            }
            mats.push(DMatrix::from_row_iterator(d, d, m.into_iter().flatten()));
        }
        Self::new(mats)
    }
}

impl From<PeriodicCocycle> for Vec<Vec<Vec<f64>>> {
    fn from(c: PeriodicCocycle) -> Self {
        c.matrices
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect()
    }
}

impl PeriodicCocycle {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidInput("cocycle needs period >= 1".into()));
        };
        let d = first.nrows();
        let mut bound: f64 = 0.0;
        for (i, a) in matrices.iter().enumerate() {
            if a.shape() != (d, d) || d == 0 {
                return Err(Error::InvalidInput(format!("matrix {i} is not {d}x{d}")));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(a.iter().copied().collect()));
            }
            if a.determinant().abs() <= MIN_ABS_DET {
                return Err(Error::InvalidInput(format!("matrix {i} is singular")));
            }
            let inv = a.clone().try_inverse().ok_or_else(|| Error::InvalidInput(format!("matrix {i} is singular")))?;
            bound = bound.max(linalg::op_norm(a)).max(linalg::op_norm(&inv));
        }
        Ok(Self { matrices, bound })
    }

    pub fn constant(a: DMatrix<f64>, period: usize) -> Result<Self> {
        Self::new(vec![a; period.max(1)])
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// `max ‖A_i‖, ‖A_i^{-1}‖`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i % self.period()]
    }

    /// `A_{i+n−1} ⋯ A_i`, positions taken mod the period.
    pub fn product_from(&self, i: usize, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut p = DMatrix::identity(d, d);
        for k in 0..n {
            p = self.matrix(i + k) * p;
        }
        p
    }

    pub fn product(&self) -> DMatrix<f64> {
        self.product_from(0, self.period())
    }

    /// `Σ log|det A_i|`, i.e. `log|det M|` without forming `M`.
    pub fn log_abs_det(&self) -> f64 {
        self.matrices.iter().map(|a| a.determinant().abs().ln()).sum()
    }

    /// Cyclic shift so that position `k` becomes position 0.
    pub fn rotated(&self, k: usize) -> Self {
        let p = self.period();
        let matrices = (0..p).map(|i| self.matrices[(i + k) % p].clone()).collect();
        Self { matrices, bound: self.bound }
    }

    /// Every matrix left-multiplied by `r`.
    pub fn left_multiplied(&self, r: &DMatrix<f64>) -> Result<Self> {
        Self::new(self.matrices.iter().map(|a| r * a).collect())
    }
}

/// Sup over positions of the operator-norm deviations of `A_i` and `A_i^{-1}`.
pub fn cocycle_distance(a: &PeriodicCocycle, b: &PeriodicCocycle) -> Result<f64> {
    if a.period() != b.period() || a.dim() != b.dim() {
        return Err(Error::InvalidInput("cocycles differ in period or dimension".into()));
    }
    let mut d: f64 = 0.0;
    for (x, y) in a.matrices.iter().zip(&b.matrices) {
        let xi = x.clone().try_inverse().expect("checked invertible");
        let yi = y.clone().try_inverse().expect("checked invertible");
        d = d.max(linalg::op_norm(&(x - y))).max(linalg::op_norm(&(xi - yi)));
    }
    Ok(d)
}

/// Exponents `σ^j = log|λ_j(M)| / π`, ascending.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentVector {
    pub sigma: Vec<f64>,
    /// Two eigenvalues of `M` closer than the cluster tolerance; moduli may be
    /// inaccurate when the cluster is defective.
    pub clustered: bool,
}

impl ExponentVector {
    pub fn spread(&self) -> f64 {
        self.sigma[self.sigma.len() - 1] - self.sigma[0]
    }
}

pub fn exponents(c: &PeriodicCocycle) -> ExponentVector {
    let d = c.dim();
    let p = c.period() as f64;
    // normalized product with the scale kept in logs
    let mut m = DMatrix::identity(d, d);
    let mut log_scale = 0.0;
    for a in &c.matrices {
        m = a * m;
        let s = m.amax();
        m /= s;
        log_scale += s.ln();
    }
    let log_det = c.log_abs_det();
    let eig: Vec<Complex<f64>> = if d == 2 {
        let tr = m.trace();
        let det = m.determinant();
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let big = 0.5 * (tr + tr.signum() * disc.sqrt());
            let big = if big == 0.0 { 0.5 * disc.sqrt() } else { big };
            vec![Complex::new(big, 0.0), Complex::new(det / big, 0.0)]
        } else {
            let im = 0.5 * (-disc).sqrt();
            vec![Complex::new(0.5 * tr, im), Complex::new(0.5 * tr, -im)]
        }
    } else {
        m.complex_eigenvalues().iter().copied().collect()
    };
    let mut logs: Vec<f64> = eig.iter().map(|z| z.norm().ln() + log_scale).collect();
    if d == 2 {
        // pin the smaller exponent to the exact determinant
        logs.sort_by(|a, b| b.total_cmp(a));
        logs[1] = log_det - logs[0];
    }
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut clustered = false;
    for i in 0..eig.len() {
        for j in i + 1..eig.len() {
            if (eig[i] - eig[j]).norm() < CLUSTER_TOL * scale {
                clustered = true;
            }
        }
    }
    let mut sigma: Vec<f64> = logs.iter().map(|l| l / p).collect();
    sigma.sort_by(|a, b| a.total_cmp(b));
    ExponentVector { sigma, clustered }
}

#[derive(Clone, Debug, Serialize)]
pub struct CocycleDomination {
    pub ell: usize,
    pub pass: bool,
    /// `min_i ½·m(A^ℓ|F_i) − ‖A^ℓ|E_i‖`.
    #[serde(serialize_with = "crate::output::ser_real")]
    pub margin: f64,
    pub worst_index: usize,
}

/// Checks that `F` ℓ-dominates `E` at every position of the orbit. Both
/// bundles are given at position 0 and pushed forward by the cocycle.
pub fn check_domination_cocycle(
    c: &PeriodicCocycle,
    weak: &DMatrix<f64>,
    strong: &DMatrix<f64>,
    ell: usize,
) -> Result<CocycleDomination> {
    let d = c.dim();
    if ell == 0 {
        return Err(Error::InvalidInput("ell must be positive".into()));
    }
    if weak.nrows() != d || strong.nrows() != d || weak.ncols() + strong.ncols() != d || weak.ncols() == 0 || strong.ncols() == 0 {
        return Err(Error::InvalidInput("E and F must split the fiber into positive dimensions".into()));
    }
    let propagate = |start: &DMatrix<f64>, name: &str| -> Result<Vec<DMatrix<f64>>> {
        let mut frames = vec![linalg::orthonormalize(start)];
        for i in 0..c.period() {
            let next = linalg::orthonormalize(&(c.matrix(i) * &frames[i]));
            frames.push(next);
        }
        let back = frames.pop().expect("non-empty");
        let drift = linalg::subspace_angle(&back, &frames[0]);
        if !(drift <= INVARIANCE_TOL) {
            return Err(Error::InvalidInput(format!(
                "bundle {name} is not invariant: returns to index 0 at angle {drift:.3e}"
            )));
        }
        Ok(frames)
    };
    let e = propagate(weak, "E")?;
    let f = propagate(strong, "F")?;
    let mut margin = f64::INFINITY;
    let mut worst_index = 0;
    for i in 0..c.period() {
        let p = c.product_from(i, ell);
        let (e_max, _) = linalg::singular_extremes(&(&p * &e[i]));
        let (_, f_min) = linalg::singular_extremes(&(&p * &f[i]));
        let m = 0.5 * f_min - e_max;
        if m < margin {
            margin = m;
            worst_index = i;
        }
    }
    Ok(CocycleDomination { ell, pass: margin > 0.0, margin, worst_index })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiameterRow {
    pub period: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub spread: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovDiameter {
    pub estimate: f64,
    pub table: Vec<DiameterRow>,
}

/// Estimate of `liminf_{π→∞} (σ^d − σ^1)`: the smallest spread among
/// members whose period lies in the top third of the distinct periods.
pub fn lyapunov_diameter(family: &[PeriodicCocycle]) -> Result<LyapunovDiameter> {
    let mut periods: Vec<usize> = family.iter().map(|c| c.period()).collect();
    periods.sort_unstable();
    periods.dedup();
    if periods.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 distinct periods, got {}", periods.len())));
    }
    let cut = periods[periods.len() - periods.len().div_ceil(3)];
    let mut table: Vec<DiameterRow> = family
        .iter()
        .map(|c| {
            let e = exponents(c);
            DiameterRow { period: c.period(), sigma_min: e.sigma[0], sigma_max: e.sigma[e.sigma.len() - 1], spread: e.spread() }
        })
        .collect();
    table.sort_by_key(|r| r.period);
    let estimate = table.iter().filter(|r| r.period >= cut).map(|r| r.spread).fold(f64::INFINITY, f64::min);
    Ok(LyapunovDiameter { estimate, table })
}

/// A path of cocycles from the input to a perturbed endpoint.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationPath {
    pub steps: Vec<PeriodicCocycle>,
    /// Rotation parameter of each step.
    pub thetas: Vec<f64>,
    pub theta_star: f64,
    /// Max distance of a step to the input.
    pub diameter: f64,
    pub preserved_index: usize,
    pub abs_det: f64,
    pub endpoint_moduli: Vec<f64>,
    pub exponents: Vec<Vec<f64>>,
    /// `σ^1 < 0` at every step (checked only when `|det M| < 1`).
    pub index_preserved: bool,
}

fn rotated_product(c: &PeriodicCocycle, theta: f64) -> DMatrix<f64> {
    let r = linalg::rotation2(theta);
    let mut m = DMatrix::identity(2, 2);
    for a in &c.matrices {
        m = &r * a * m;
        let s = m.amax();
        m /= s;
    }
    m
}

/// Zero of this function marks equal moduli of the product's eigenvalues:
/// the discriminant for orientation-preserving products, the trace otherwise.
fn equal_moduli_gap(c: &PeriodicCocycle, theta: f64, orientation: f64) -> f64 {
    let m = rotated_product(c, theta);
    let tr = m.trace();
    if orientation > 0.0 {
        tr * tr - 4.0 * m.determinant()
    } else {
        tr
    }
}

/// Composes every `A_i` with one rotation `R_θ`, raising `θ` from 0 until
/// the eigenvalues of the product have equal moduli `|det M|^{1/2}`.
/// Determinants are unchanged since `det R_θ = 1`.
pub fn equalize_2d(c: &PeriodicCocycle, step_cap: f64) -> Result<PerturbationPath> {
    if c.dim() != 2 {
        return Err(Error::InvalidInput("equalize_2d needs a two-dimensional cocycle".into()));
    }
    if !(step_cap > 0.0) {
        return Err(Error::InvalidInput("step cap must be positive".into()));
    }
    let log_det = c.log_abs_det();
    if log_det > 1e-12 {
        return Err(Error::Precondition(format!("|det M| = {:.6} exceeds 1", log_det.exp())));
    }
    let orientation = c.matrices.iter().map(|a| a.determinant().signum()).product::<f64>();
    let gap0 = equal_moduli_gap(c, 0.0, orientation);
    let theta_star = if (orientation > 0.0 && gap0 <= 0.0) || (orientation < 0.0 && gap0 == 0.0) {
        0.0
    } else {
        let nodes = 4096.max(256 * c.period());
        let h = std::f64::consts::PI / nodes as f64;
        let crossed = |g: f64| if orientation > 0.0 { g <= 0.0 } else { g.signum() != gap0.signum() };
        let j = (1..=nodes)
            .find(|&j| crossed(equal_moduli_gap(c, j as f64 * h, orientation)))
            .ok_or_else(|| Error::Numeric("no equal-modulus rotation angle in [0, pi]".into()))?;
        let (mut lo, mut hi) = ((j - 1) as f64 * h, j as f64 * h);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if crossed(equal_moduli_gap(c, mid, orientation)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let substeps = if theta_star == 0.0 { 0 } else { (theta_star / step_cap).ceil() as usize };
    let mut steps = vec![c.clone()];
    let mut thetas = vec![0.0];
    for k in 1..=substeps {
        let t = theta_star * k as f64 / substeps as f64;
        steps.push(c.left_multiplied(&linalg::rotation2(t))?);
        thetas.push(t);
    }
    let mut diameter: f64 = 0.0;
    let mut exps = Vec::with_capacity(steps.len());
    for s in &steps {
        diameter = diameter.max(cocycle_distance(c, s)?);
        exps.push(exponents(s).sigma);
    }
    let contracting = log_det < 0.0;
    let index_preserved = !contracting || exps.iter().all(|e| e[0] < 0.0);
    let last = exponents(steps.last().expect("non-empty"));
    let p = c.period() as f64;
    let endpoint_moduli = last.sigma.iter().map(|s| (s * p).exp()).collect();
    Ok(PerturbationPath {
        steps,
        thetas,
        theta_star,
        diameter,
        preserved_index: usize::from(contracting),
        abs_det: log_det.exp(),
        endpoint_moduli,
        exponents: exps,
        index_preserved,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SteerOutcome {
    pub success: bool,
    /// Rotation angle applied after each matrix.
    pub angles: Vec<f64>,
    /// Angle between the steered line and the target line, by direct composition.
    pub residual: f64,
    /// `‖A_ℓ⋯A_1 v‖ ≥ ½‖A_ℓ⋯A_1 w‖`.
    pub growth_hypothesis: bool,
}

/// Rotations `R_1 … R_ℓ` of angle at most `eps` with
/// `R_ℓA_ℓ⋯R_1A_1·ℝw = A_ℓ⋯A_1·ℝv`, chosen greedily: after each matrix the
/// current line turns toward the pushed target by `min(gap, eps)`.
pub fn steer_vector(mats: &[DMatrix<f64>], v: &[f64], w: &[f64], eps: f64) -> Result<SteerOutcome> {
    if mats.iter().any(|a| a.shape() != (2, 2)) || v.len() != 2 || w.len() != 2 {
        return Err(Error::InvalidInput("steer_vector works with 2x2 matrices and planar vectors".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("eps must be positive".into()));
    }
    let v = DVector::from_column_slice(v).normalize();
    let w = DVector::from_column_slice(w).normalize();

    let mut prod = DMatrix::identity(2, 2);
    for a in mats {
        prod = a * prod;
    }
    let growth_hypothesis = (&prod * &v).norm() >= 0.5 * (&prod * &w).norm();

    let mut cur = w.clone();
    let mut target = v.clone();
    let mut angles = Vec::with_capacity(mats.len());
    for a in mats {
        cur = (a * &cur).normalize();
        target = (a * &target).normalize();
        let gap = linalg::line_gap(linalg::line_angle(&cur), linalg::line_angle(&target));
        let turn = gap.clamp(-eps, eps);
        cur = linalg::rotation2(turn) * cur;
        angles.push(turn);
    }

    let mut steered = w;
    let mut plain = v;
    for (a, t) in mats.iter().zip(&angles) {
        steered = (linalg::rotation2(*t) * a * steered).normalize();
        plain = (a * plain).normalize();
    }
    let residual = linalg::line_gap(linalg::line_angle(&steered), linalg::line_angle(&plain)).abs();
    Ok(SteerOutcome { success: residual <= 1e-9, angles, residual, growth_hypothesis })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    #[test]
    fn diagonal_exponents() {
        let c = PeriodicCocycle::constant(diag(2.0, 0.5), 1).unwrap();
        let e = exponents(&c);
        assert!((e.sigma[0] + 2f64.ln()).abs() < 1e-12);
        assert!((e.sigma[1] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn equalize_closed_form() {
        let c = PeriodicCocycle::constant(diag(2.0, 1.0 / 3.0), 1).unwrap();
        let path = equalize_2d(&c, 0.05).unwrap();
        assert!((path.theta_star.cos().powi(2) - 24.0 / 49.0).abs() < 1e-10);
        for m in &path.endpoint_moduli {
            assert!((m - (2.0f64 / 3.0).sqrt()).abs() < 1e-8);
        }
        assert!(path.thetas.windows(2).all(|w| w[1] - w[0] <= 0.05 + 1e-15));
    }

    #[test]
    fn steering_identity_budget() {
        let mats = vec![DMatrix::identity(2, 2); 10];
        let out = steer_vector(&mats, &[1.0, 0.0], &[0.5f64.cos(), 0.5f64.sin()], 0.1).unwrap();
        assert!(out.success);
        assert!(out.angles.iter().all(|a| a.abs() <= 0.1));
    }
}
