//! Denjoy circle homeomorphisms and the pseudo-rotation skew product of `T^2`.
//!
//! A Denjoy map with rotation number `ρ` is obtained from the rotation by
//! inserting an interval `I_n` of length `ℓ_n = c·r^|n|` at each orbit point
//! `nρ`. The orbit is truncated at `|n| ≤ N` once the remaining mass drops
//! below `tail_tol`; the truncated map is a homeomorphism up to jumps of
//! size at most `tail_tol`.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::torus::TorusLiftMap;
use crate::error::{Error, Result};
use crate::linear_models::IntegerMatrix;

#[derive(Clone, Debug)]
pub struct DenjoyCircle {
    rho: f64,
    ratio: f64,
    scale: f64,
    n_max: i64,
    tail_tol: f64,
    /// Mass of the non-inserted part, `1 − Σ ℓ_n`.
    m0: f64,
    // Inserted intervals sorted by base angle.
    theta: Vec<f64>,
    start: Vec<f64>,
    length: Vec<f64>,
    index: Vec<i64>,
    prefix: Vec<f64>,
    // position in the sorted arrays of orbit index n, offset by n_max
    position: Vec<usize>,
}

enum Locus {
    Interval { k: usize, u: f64 },
    Gap { theta: f64 },
}

impl DenjoyCircle {
    /// Builds the map with total inserted mass 1/2 (`c = (1−r)/(2(1+r))`).
    pub fn new(rho: f64, ratio: f64, tail_tol: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidInput(format!("rotation number must lie in (0,1), got {rho}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidInput(format!("length ratio must lie in (0,1), got {ratio}")));
        }
        if !(tail_tol > 0.0 && tail_tol < 1e-3) {
            return Err(Error::InvalidInput(format!("tail tolerance must lie in (0, 1e-3), got {tail_tol}")));
        }
        let scale = (1.0 - ratio) / (2.0 * (1.0 + ratio));
        // tail beyond N on both sides: 2c·r^{N+1}/(1−r)
        let mut n_max: i64 = 0;
        while 2.0 * scale * ratio.powi(n_max as i32 + 1) / (1.0 - ratio) >= tail_tol {
            n_max += 1;
        }
        let mut entries: Vec<(f64, i64)> = (-n_max..=n_max)
            .map(|n| {
                let t = (n as f64 * rho).rem_euclid(1.0);
                (if t >= 1.0 { 0.0 } else { t }, n)
            })
            .collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("rotation number has a short rational orbit".into()));
        }
        let length_of = |n: i64| scale * ratio.powi(n.unsigned_abs() as i32);
        let total: f64 = entries.iter().map(|e| length_of(e.1)).sum();
        let m0 = 1.0 - total;
        let mut prefix = Vec::with_capacity(entries.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for e in &entries {
            acc += length_of(e.1);
            prefix.push(acc);
        }
        let theta: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let length: Vec<f64> = entries.iter().map(|e| length_of(e.1)).collect();
        let index: Vec<i64> = entries.iter().map(|e| e.1).collect();
        let start: Vec<f64> = (0..entries.len()).map(|k| m0 * theta[k] + prefix[k]).collect();
        let mut position = vec![0; entries.len()];
        for (k, &n) in index.iter().enumerate() {
            position[(n + n_max) as usize] = k;
        }
        Ok(Self { rho, ratio, scale, n_max, tail_tol, m0, theta, start, length, index, prefix, position })
    }

    pub fn rotation_number(&self) -> f64 {
        self.rho
    }

    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }

    pub fn truncation(&self) -> i64 {
        self.n_max
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// `ℓ_n`, zero beyond the truncation.
    pub fn inserted_length(&self, n: i64) -> f64 {
        if n.abs() > self.n_max {
            0.0
        } else {
            self.scale * self.ratio.powi(n.unsigned_abs() as i32)
        }
    }

    /// The inserted interval `I_n` as `[start, start + ℓ_n)` in `[0,1)`.
    pub fn interval(&self, n: i64) -> Option<(f64, f64)> {
        if n.abs() > self.n_max {
            return None;
        }
        let k = self.position[(n + self.n_max) as usize];
        Some((self.start[k], self.start[k] + self.length[k]))
    }

    /// Lift of the collapsing semiconjugacy `θ ↦ x` from the rotation circle.
    pub fn insert_lift(&self, theta: f64) -> f64 {
        let w = theta.floor();
        let f = theta - w;
        let k = self.theta.partition_point(|&t| t < f);
        w + self.m0 * f + self.prefix[k]
    }

    fn locate(&self, x: f64) -> Locus {
        let k = self.start.partition_point(|&s| s <= x);
        if k > 0 && x < self.start[k - 1] + self.length[k - 1] {
            let k = k - 1;
            return Locus::Interval { k, u: (x - self.start[k]) / self.length[k] };
        }
        Locus::Gap { theta: ((x - self.prefix[k]) / self.m0).clamp(0.0, 1.0) }
    }

    /// Lift `G` with `G(x + 1) = G(x) + 1`.
    pub fn lift(&self, x: f64) -> f64 {
        let w = x.floor();
        let f = x - w;
        w + match self.locate(f) {
            Locus::Interval { k, u } => {
                let n = self.index[k];
                if n == self.n_max {
                    self.insert_lift(self.theta[k] + self.rho)
                } else {
                    let k2 = self.position[(n + 1 + self.n_max) as usize];
                    let wrap = if self.theta[k2] < self.theta[k] { 1.0 } else { 0.0 };
                    wrap + self.start[k2] + u * self.length[k2]
                }
            }
            Locus::Gap { theta } => self.insert_lift(theta + self.rho),
        }
    }

    pub fn inverse_lift(&self, y: f64) -> f64 {
        let w = y.floor();
        let f = y - w;
        w + match self.locate(f) {
            Locus::Interval { k, u } => {
                let n = self.index[k];
                if n == -self.n_max {
                    self.insert_lift(self.theta[k] - self.rho)
                } else {
                    let k2 = self.position[(n - 1 + self.n_max) as usize];
                    let wrap = if self.theta[k2] > self.theta[k] { -1.0 } else { 0.0 };
                    wrap + self.start[k2] + u * self.length[k2]
                }
            }
            Locus::Gap { theta } => self.insert_lift(theta - self.rho),
        }
    }

    /// `G'(x)`: `ℓ_{n+1}/ℓ_n` on `I_n`, 1 on the complement.
    pub fn derivative(&self, x: f64) -> f64 {
        let f = x - x.floor();
        match self.locate(f) {
            Locus::Interval { k, .. } => {
                let n = self.index[k];
                self.inserted_length(n + 1) / self.length[k]
            }
            Locus::Gap { .. } => 1.0,
        }
    }

    /// Largest value of `G'`.
    pub fn max_derivative(&self) -> f64 {
        1.0 / self.ratio
    }

    /// Bound on `|G(x) − x|`.
    pub fn displacement_bound(&self) -> f64 {
        self.m0 * self.rho + (1.0 - self.m0)
    }
}

/// The circle map as a one-dimensional torus map.
pub fn circle_as_torus_map(circle: Arc<DenjoyCircle>) -> TorusLiftMap {
    let c = circle.clone();
    let c2 = circle.clone();
    let bound = DMatrix::from_element(1, 1, circle.max_derivative());
    let disp = super::torus::FnDisplacement {
        value: Box::new(move |x| vec![c.lift(x[0]) - x[0]]),
        jacobian: Box::new(move |x| DMatrix::from_element(1, 1, c2.derivative(x[0]) - 1.0)),
        derivative_bound: DMatrix::from_element(1, 1, 1.0),
        sup_norm: circle.displacement_bound(),
    };
    TorusLiftMap::new(IntegerMatrix::identity(1), Arc::new(disp))
        .with_component_bound(bound.clone())
        .with_lipschitz_hint(bound[(0, 0)])
}

/// Skew product `F(s, t) = (G₁(s), a(s) + G₂(t))` over a Denjoy base, where
/// the twist `a` is a C² bump supported in the middle half of the base
/// interval `I_0`, so that the fibre map is `G₂` over the base minimal set.
pub struct PseudoRotation {
    pub base: Arc<DenjoyCircle>,
    pub fiber: Arc<DenjoyCircle>,
    pub twist_amplitude: f64,
    twist_center: f64,
    twist_halfwidth: f64,
}

impl PseudoRotation {
    pub fn new(base: Arc<DenjoyCircle>, fiber: Arc<DenjoyCircle>, twist_amplitude: f64) -> Result<Self> {
        if !twist_amplitude.is_finite() {
            return Err(Error::InvalidInput("twist amplitude must be finite".into()));
        }
        let (lo, hi) = base.interval(0).expect("I_0 always inserted");
        Ok(Self {
            base,
            fiber,
            twist_amplitude,
            twist_center: 0.5 * (lo + hi),
            twist_halfwidth: 0.25 * (hi - lo),
        })
    }

    /// `(a(s), a'(s))`.
    pub fn twist(&self, s: f64) -> (f64, f64) {
        let f = s - s.floor();
        let u = (f - self.twist_center) / self.twist_halfwidth;
        if u.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let g = 1.0 - u * u;
        (
            self.twist_amplitude * g * g * g,
            self.twist_amplitude * 3.0 * g * g * (-2.0 * u) / self.twist_halfwidth,
        )
    }

    /// `sup |a'|`, attained at `u = 1/√5`.
    pub fn twist_slope_bound(&self) -> f64 {
        let u = 1.0 / 5f64.sqrt();
        let g = 1.0 - u * u;
        self.twist_amplitude.abs() * 6.0 * u * g * g / self.twist_halfwidth
    }

    pub fn into_torus_map(self) -> TorusLiftMap {
        let me = Arc::new(self);
        let bound = DMatrix::from_row_slice(
            2,
            2,
            &[me.base.max_derivative(), 0.0, me.twist_slope_bound(), me.fiber.max_derivative()],
        );
        let sup = (me.base.displacement_bound().powi(2)
            + (me.twist_amplitude.abs() + me.fiber.displacement_bound()).powi(2))
        .sqrt();
        let v = me.clone();
        let j = me.clone();
        let disp = super::torus::FnDisplacement {
            value: Box::new(move |x| {
                vec![v.base.lift(x[0]) - x[0], v.twist(x[0]).0 + v.fiber.lift(x[1]) - x[1]]
            }),
            jacobian: Box::new(move |x| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[j.base.derivative(x[0]) - 1.0, 0.0, j.twist(x[0]).1, j.fiber.derivative(x[1]) - 1.0],
                )
            }),
            derivative_bound: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, me.twist_slope_bound(), 1.0]),
            sup_norm: sup,
        };
        let lip = crate::linalg::op_norm(&bound);
        TorusLiftMap::new(IntegerMatrix::identity(2), Arc::new(disp))
            .with_component_bound(bound)
            .with_lipschitz_hint(lip)
    }
}
