use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Domain, DynamicalMap, Image};
use crate::error::{Error, Result};
use crate::linalg;
use crate::linear_models::IntegerMatrix;

/// The periodic part `φ(x) = F(x) − A·x` of a torus lift.
pub trait Displacement: Send + Sync {
    fn value(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    /// Entrywise bound on `|∂φ_i/∂x_j|`.
    fn derivative_bound(&self) -> DMatrix<f64>;
    /// Rigorous bound on `sup ‖φ‖`.
    fn sup_norm_bound(&self) -> f64;
    fn is_zero(&self) -> bool {
        false
    }
}

pub struct ZeroDisplacement(pub usize);

impl Displacement for ZeroDisplacement {
    fn value(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.0]
    }
    fn jacobian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.0, self.0)
    }
    fn derivative_bound(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.0, self.0)
    }
    fn sup_norm_bound(&self) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// Constant displacement: with `A = I` this is a rigid translation.
pub struct ConstantDisplacement(pub Vec<f64>);

impl Displacement for ConstantDisplacement {
    fn value(&self, _: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
    fn jacobian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.0.len(), self.0.len())
    }
    fn derivative_bound(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.0.len(), self.0.len())
    }
    fn sup_norm_bound(&self) -> f64 {
        linalg::norm(&self.0)
    }
}

type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type MatFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Displacement from closures; bounds are supplied by the caller.
pub struct FnDisplacement {
    pub value: Box<VecFn>,
    pub jacobian: Box<MatFn>,
    pub derivative_bound: DMatrix<f64>,
    pub sup_norm: f64,
}

impl Displacement for FnDisplacement {
    fn value(&self, x: &[f64]) -> Vec<f64> {
        (self.value)(x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(x)
    }
    fn derivative_bound(&self) -> DMatrix<f64> {
        self.derivative_bound.clone()
    }
    fn sup_norm_bound(&self) -> f64 {
        self.sup_norm
    }
}

/// Torus map given by a lift `F(x) = A·x + φ(x)` with `φ` periodic.
#[derive(Clone)]
pub struct TorusLiftMap {
    linear: IntegerMatrix,
    linear_real: DMatrix<f64>,
    linear_inverse: IntegerMatrix,
    displacement: Arc<dyn Displacement>,
    lipschitz_hint: f64,
    c0_bound: f64,
    component_bound: Option<DMatrix<f64>>,
    domain: Domain,
}

impl std::fmt::Debug for TorusLiftMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusLiftMap")
            .field("linear", &self.linear)
            .field("lipschitz_hint", &self.lipschitz_hint)
            .field("c0_bound", &self.c0_bound)
            .finish()
    }
}

impl TorusLiftMap {
    pub fn new(linear: IntegerMatrix, displacement: Arc<dyn Displacement>) -> Self {
        let d = linear.dim();
        let linear_real = linear.to_real();
        let bound = linear_real.abs() + displacement.derivative_bound();
        let lipschitz_hint = linalg::op_norm(&bound).max(linalg::op_norm(&linear_real));
        let c0_bound = displacement.sup_norm_bound();
        Self {
            linear_inverse: linear.inverse(),
            linear,
            linear_real,
            displacement,
            lipschitz_hint,
            c0_bound,
            component_bound: None,
            domain: Domain::Torus { dim: d },
        }
    }

    pub fn linear(linear: IntegerMatrix) -> Self {
        let d = linear.dim();
        Self::new(linear, Arc::new(ZeroDisplacement(d)))
    }

    pub fn translation(vector: Vec<f64>) -> Self {
        let d = vector.len();
        Self::new(IntegerMatrix::identity(d), Arc::new(ConstantDisplacement(vector)))
    }

    /// Overrides the Lipschitz hint (for instance with a sampled estimate).
    pub fn with_lipschitz_hint(mut self, l: f64) -> Self {
        self.lipschitz_hint = l;
        self
    }

    /// Replaces the derived entrywise derivative bound `|A| + |Dφ|` with a
    /// sharper one known to the caller.
    pub fn with_component_bound(mut self, m: DMatrix<f64>) -> Self {
        self.component_bound = Some(m);
        self
    }

    pub fn linear_part(&self) -> &IntegerMatrix {
        &self.linear
    }

    pub fn linear_real(&self) -> &DMatrix<f64> {
        &self.linear_real
    }

    pub fn c0_bound(&self) -> f64 {
        self.c0_bound
    }

    pub fn has_zero_displacement(&self) -> bool {
        self.displacement.is_zero()
    }

    pub fn displacement(&self, x: &[f64]) -> Vec<f64> {
        self.displacement.value(x)
    }

    pub fn displacement_field(&self) -> &Arc<dyn Displacement> {
        &self.displacement
    }

    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.linear.apply(x);
        if !self.displacement.is_zero() {
            for (yi, pi) in y.iter_mut().zip(self.displacement.value(x)) {
                *yi += pi;
            }
        }
        y
    }

    pub fn lift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        if self.displacement.is_zero() {
            self.linear_real.clone()
        } else {
            &self.linear_real + self.displacement.jacobian(x)
        }
    }

    /// Solves `F(x) = y` by Newton's method started at `A⁻¹·y`.
    pub fn inverse_lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.linear_inverse.apply(y);
        if self.displacement.is_zero() {
            return Ok(x);
        }
        for _ in 0..50 {
            let fx = self.lift(&x);
            let r: Vec<f64> = fx.iter().zip(y).map(|(a, b)| a - b).collect();
            let rn = linalg::norm(&r);
            if rn <= 1e-15 * (1.0 + linalg::norm(y)) {
                return Ok(x);
            }
            let j = self.lift_jacobian(&x);
            let step = j
                .lu()
                .solve(&linalg::to_dvec(&r))
                .ok_or_else(|| Error::Numeric(format!("singular Jacobian while inverting at {y:?}")))?;
            for (xi, s) in x.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
            if step.norm() <= 1e-16 * (1.0 + linalg::norm(&x)) {
                return Ok(x);
            }
        }
        let fx = self.lift(&x);
        if linalg::dist(&fx, y) < 1e-11 {
            Ok(x)
        } else {
            Err(Error::Numeric(format!("inverse did not converge at {y:?}")))
        }
    }
}

impl DynamicalMap for TorusLiftMap {
    fn dim(&self) -> usize {
        self.linear.dim()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn image(&self, x: &[f64]) -> Image {
        Image::Point(self.lift(x))
    }
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.lift_jacobian(x))
    }
    fn lipschitz_hint(&self) -> f64 {
        self.lipschitz_hint
    }
    fn component_bound(&self) -> Option<DMatrix<f64>> {
        Some(
            self.component_bound
                .clone()
                .unwrap_or_else(|| self.linear_real.abs() + self.displacement.derivative_bound()),
        )
    }
}

/// Reduces a covering-space point to `[0,1)^d`.
pub fn reduce(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let r = v - v.floor();
            if r >= 1.0 {
                0.0
            } else {
                r
            }
        })
        .collect()
}
