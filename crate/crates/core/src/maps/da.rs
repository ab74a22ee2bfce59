//! Derived-from-Anosov deformation of a hyperbolic automorphism of `T^3`.
//!
//! The lift is `F(x) = A·x + ρ(|x − q|)·D·(x − q)` near `q` (nearest lattice
//! translate), where `D = (S − A)·P_s`, `P_s` is the spectral projector onto
//! the stable plane and `S` acts on that plane with real eigenvalues `a, b`
//! along an orthonormal frame. Then `DF(q) = B = A + D`, `F = A` outside the
//! δ-ball, and the foliation by translates of the stable plane is preserved.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::torus::{Displacement, TorusLiftMap};
use crate::error::{Error, Result};
use crate::linalg;
use crate::linear_models::{invariant_splitting, spectral_classify, IntegerMatrix, Label};

/// Radial cut-off profile, equal to 1 near the centre and 0 beyond δ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BumpProfile {
    /// Quintic smoothstep in `u = r/δ` over `[1/2, 1]`.
    Radial,
    /// Quintic smoothstep in `s = 1 + ln(r/δ)/k` over `[1/2, 1]`. The
    /// transition is spread over `k/2` e-folds of radius, which keeps
    /// `r·|ρ'(r)| ≤ 3.75/k` small.
    LogRadial { k: f64 },
}

impl Default for BumpProfile {
    fn default() -> Self {
        BumpProfile::LogRadial { k: 40.0 }
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn smoothstep_deriv(t: f64) -> f64 {
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

impl BumpProfile {
    /// `(ρ(r), ρ'(r))` for a bump of outer radius `delta`.
    pub fn eval(&self, r: f64, delta: f64) -> (f64, f64) {
        if r >= delta {
            return (0.0, 0.0);
        }
        match *self {
            BumpProfile::Radial => {
                let u = r / delta;
                if u <= 0.5 {
                    (1.0, 0.0)
                } else {
                    let t = 2.0 * u - 1.0;
                    (1.0 - smoothstep(t), -smoothstep_deriv(t) * 2.0 / delta)
                }
            }
            BumpProfile::LogRadial { k } => {
                if r <= 0.0 {
                    return (1.0, 0.0);
                }
                let s = 1.0 + (r / delta).ln() / k;
                if s <= 0.5 {
                    (1.0, 0.0)
                } else {
                    let t = 2.0 * s - 1.0;
                    (1.0 - smoothstep(t), -smoothstep_deriv(t) * 2.0 / (k * r))
                }
            }
        }
    }

    /// `sup r·|ρ'(r)|`.
    pub fn radial_slope_bound(&self) -> f64 {
        match *self {
            BumpProfile::Radial => 3.75,
            BumpProfile::LogRadial { k } => 3.75 / k,
        }
    }

    /// Radius below which `ρ ≡ 1`.
    pub fn core_radius(&self, delta: f64) -> f64 {
        match *self {
            BumpProfile::Radial => 0.5 * delta,
            BumpProfile::LogRadial { k } => delta * (-0.5 * k).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaParams {
    pub matrix: IntegerMatrix,
    pub q: Vec<f64>,
    pub delta: f64,
    /// Target eigenvalues `(a, b)` of the local matrix on the stable plane.
    pub stable_eigenvalues: (f64, f64),
    #[serde(default)]
    pub profile: BumpProfile,
}

impl DaParams {
    /// The standard example: the matrix with characteristic polynomial
    /// `1 + λ² − λ³`, `q = 0`, `δ = 0.2` and stable eigenvalues `0.8, 1.3`.
    pub fn standard() -> Self {
        DaParams {
            matrix: IntegerMatrix::new(vec![vec![1, 1, 0], vec![0, 0, 1], vec![1, 0, 0]]).expect("unimodular"),
            q: vec![0.0; 3],
            delta: 0.2,
            stable_eigenvalues: (0.8, 1.3),
            profile: BumpProfile::default(),
        }
    }
}

pub struct DaBump {
    pub q: Vec<f64>,
    pub delta: f64,
    pub profile: BumpProfile,
    /// `D = B − A`.
    pub deformation: DMatrix<f64>,
    sup_norm: f64,
}

impl DaBump {
    fn offset(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.q)
            .map(|(a, b)| {
                let z = a - b;
                z - z.round()
            })
            .collect()
    }
}

impl Displacement for DaBump {
    fn value(&self, x: &[f64]) -> Vec<f64> {
        let z = self.offset(x);
        let r = linalg::norm(&z);
        let (rho, _) = self.profile.eval(r, self.delta);
        if rho == 0.0 {
            return vec![0.0; z.len()];
        }
        let dz = &self.deformation * DVector::from_column_slice(&z);
        dz.iter().map(|v| rho * v).collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let z = self.offset(x);
        let d = z.len();
        let r = linalg::norm(&z);
        let (rho, drho) = self.profile.eval(r, self.delta);
        if rho == 0.0 && drho == 0.0 {
            return DMatrix::zeros(d, d);
        }
        let zv = DVector::from_column_slice(&z);
        let mut j = &self.deformation * rho;
        if drho != 0.0 {
            let dz = &self.deformation * &zv;
            j += dz * (zv.transpose() * (drho / r));
        }
        j
    }

    fn derivative_bound(&self) -> DMatrix<f64> {
        let abs = self.deformation.abs();
        let slope = self.profile.radial_slope_bound();
        let d = abs.nrows();
        let mut m = abs.clone();
        for i in 0..d {
            let row: f64 = abs.row(i).sum();
            for j in 0..d {
                m[(i, j)] += slope * row;
            }
        }
        m
    }

    fn sup_norm_bound(&self) -> f64 {
        self.sup_norm
    }
}

/// `sup_r ρ(r)·r` by a dense scan, padded by the scan step times the
/// Lipschitz constant `1 + sup r|ρ'|` of `r ↦ ρ(r)·r`.
fn radial_moment_bound(profile: &BumpProfile, delta: f64) -> f64 {
    const NODES: usize = 1_000_000;
    let h = delta / NODES as f64;
    let mut best = 0.0f64;
    for i in 0..=NODES {
        let r = i as f64 * h;
        best = best.max(profile.eval(r, delta).0 * r);
    }
    best + h * (1.0 + profile.radial_slope_bound())
}

/// Report from building a DA map.
#[derive(Clone, Debug)]
pub struct DaMap {
    pub map: TorusLiftMap,
    pub params: DaParams,
    /// Local matrix `B = DF(q)`.
    pub local_matrix: DMatrix<f64>,
    /// Orthonormal frame of the stable plane along which `B` has eigenvalues `a, b`.
    pub stable_frame: DMatrix<f64>,
    /// Smallest `|det DF|` seen on the verification grid.
    pub min_abs_det: f64,
}

/// Points of the verification grid: `q`, then shells at radii spaced in
/// the profile's natural variable, each with Fibonacci-sphere directions.
pub fn verification_grid(params: &DaParams, shells: usize, per_shell: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![params.q.clone()];
    let core = params.profile.core_radius(params.delta);
    for i in 0..shells {
        let s = (i as f64 + 0.5) / shells as f64;
        let r = match params.profile {
            BumpProfile::Radial => params.delta * s,
            BumpProfile::LogRadial { .. } => core * (params.delta / core).powf(s),
        };
        for j in 0..per_shell {
            let zc = 1.0 - 2.0 * (j as f64 + 0.5) / per_shell as f64;
            let rad = (1.0 - zc * zc).sqrt();
            let phi = j as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let dir = [rad * phi.cos(), rad * phi.sin(), zc];
            pts.push((0..3).map(|k| params.q[k] + r * dir[k]).collect());
        }
    }
    pts
}

pub fn build_da(params: &DaParams) -> Result<DaMap> {
    let a = &params.matrix;
    if a.dim() != 3 {
        return Err(Error::Construction("DA deformation needs d = 3".into()));
    }
    if params.q.len() != 3 || params.q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("q must be a finite point of R^3".into()));
    }
    if !(params.delta > 0.0 && params.delta < 0.25) {
        return Err(Error::Construction(format!("delta must lie in (0, 1/4), got {}", params.delta)));
    }
    let (ea, eb) = params.stable_eigenvalues;
    if !(ea > 0.0 && ea < 1.0 && eb > 1.0 && ea * eb > 1.0) {
        return Err(Error::Construction(format!(
            "stable-block eigenvalues must satisfy 0 < a < 1 < b and a·b > 1, got ({ea}, {eb})"
        )));
    }
    if let BumpProfile::LogRadial { k } = params.profile {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Construction("log-radial profile needs k > 0".into()));
        }
    }
    let spec = spectral_classify(a)?;
    if !spec.classification.is_anosov() {
        return Err(Error::Construction(format!(
            "linear part is {}, not hyperbolic",
            spec.classification.as_str()
        )));
    }
    let split = invariant_splitting(&spec, a)?;
    if split.dim_of(Label::Stable) != 2 {
        return Err(Error::Construction("linear part needs a two-dimensional stable plane".into()));
    }
    let es = split.subspace(Label::Stable).expect("stable plane").clone();
    let ps = split.projector(Label::Stable).expect("stable projector").clone();
    let e1 = es.column(0);
    let e2 = es.column(1);
    let s = e1 * e1.transpose() * ea + e2 * e2.transpose() * eb;
    let ar = a.to_real();
    let deformation = (&s - &ar) * &ps;
    let local_matrix = &ar + &deformation;
    let bump = DaBump {
        q: params.q.clone(),
        delta: params.delta,
        profile: params.profile,
        sup_norm: linalg::op_norm(&deformation) * radial_moment_bound(&params.profile, params.delta),
        deformation,
    };
    let map = TorusLiftMap::new(a.clone(), Arc::new(bump));
    let mut min_abs_det = f64::INFINITY;
    let mut max_norm = linalg::op_norm(&ar);
    for p in verification_grid(params, 96, 256) {
        let j = map.lift_jacobian(&p);
        let det = j.determinant().abs();
        if det < min_abs_det {
            min_abs_det = det;
            if det < 1e-6 {
                return Err(Error::Construction(format!(
                    "deformation is not invertible: |det DF| = {det:.3e} at {p:?}"
                )));
            }
        }
        max_norm = max_norm.max(linalg::op_norm(&j));
    }
    let map = map.with_lipschitz_hint(max_norm * 1.05);
    Ok(DaMap { map, params: params.clone(), local_matrix, stable_frame: es, min_abs_det })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::DynamicalMap;

    #[test]
    fn profile_limits() {
        for p in [BumpProfile::Radial, BumpProfile::LogRadial { k: 40.0 }] {
            assert_eq!(p.eval(0.0, 0.2).0, 1.0);
            assert_eq!(p.eval(0.2, 0.2).0, 0.0);
            assert_eq!(p.eval(p.core_radius(0.2) * 0.99, 0.2), (1.0, 0.0));
        }
    }

    #[test]
    fn profile_derivative_matches_difference() {
        let p = BumpProfile::LogRadial { k: 40.0 };
        let r = 0.01;
        let h = 1e-8;
        let fd = (p.eval(r + h, 0.2).0 - p.eval(r - h, 0.2).0) / (2.0 * h);
        assert!((fd - p.eval(r, 0.2).1).abs() < 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn local_matrix_at_q() {
        let da = build_da(&DaParams::standard()).unwrap();
        let j = da.map.jacobian(&[0.0, 0.0, 0.0]).unwrap();
        assert!((&j - &da.local_matrix).norm() < 1e-12);
        let mut ev: Vec<f64> = j.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 0.8).abs() < 1e-10);
        assert!((ev[1] - 1.3).abs() < 1e-10);
        assert!((ev[2] - 1.465571231877).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut p = DaParams::standard();
        p.delta = 0.3;
        assert!(build_da(&p).is_err());
        let mut p = DaParams::standard();
        p.stable_eigenvalues = (0.7, 1.2);
        assert!(build_da(&p).is_err());
    }
}
