//! Example maps behind one lift-based interface.
//!
//! Torus maps are evaluated on covering space: `image` returns the lift
//! `F(x) = A·x + φ(x)` without reduction mod `Z^d`. Region maps (the
//! horseshoe) return [`Image::Escape`] outside their domain of definition.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub mod da;
pub mod denjoy;
pub mod horseshoe;
pub mod spec;
pub mod torus;

pub use da::{BumpProfile, DaBump, DaParams};
pub use denjoy::{DenjoyCircle, PseudoRotation};
pub use horseshoe::{HorseshoeMap, HorseshoeSkewSpec};
pub use spec::{make_map, BuiltMap, MapSpec};
pub use torus::{Displacement, TorusLiftMap};

/// Axis-aligned box `[lower, upper)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rect {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v < *hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// The flat torus `R^d / Z^d`, fundamental domain `[0,1)^d`.
    Torus { dim: usize },
    /// A rectangular region. The map is defined on the union of `pieces`;
    /// everything else escapes.
    Region { bounds: Rect, pieces: Vec<Rect> },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Torus { dim } => *dim,
            Domain::Region { bounds, .. } => bounds.lower.len(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Image {
    Point(Vec<f64>),
    Escape,
}

impl Image {
    pub fn point(self) -> Option<Vec<f64>> {
        match self {
            Image::Point(p) => Some(p),
            Image::Escape => None,
        }
    }
}

/// Image and Jacobian at one point.
#[derive(Clone, Debug)]
pub enum Evaluation {
    Point { image: Vec<f64>, jacobian: DMatrix<f64> },
    Escape,
}

pub trait DynamicalMap: Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> &Domain;
    fn image(&self, x: &[f64]) -> Image;
    /// `None` where the map is undefined (escape).
    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>>;
    /// A Lipschitz constant for the map on its domain. Heuristic unless the
    /// implementation says otherwise.
    fn lipschitz_hint(&self) -> f64;
    /// Entrywise bound `M` with `|∂F_i/∂x_j| ≤ M_ij` on the domain, when known.
    fn component_bound(&self) -> Option<DMatrix<f64>> {
        None
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(x.to_vec()));
        }
        match (self.image(x), self.jacobian(x)) {
            (Image::Point(image), Some(jacobian)) => {
                if image.iter().any(|v| !v.is_finite()) || jacobian.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(x.to_vec()));
                }
                Ok(Evaluation::Point { image, jacobian })
            }
            _ => Ok(Evaluation::Escape),
        }
    }
}

/// Central finite-difference Jacobian, used by tests and verifiers.
pub fn finite_difference_jacobian(map: &dyn DynamicalMap, x: &[f64], h: f64) -> Option<DMatrix<f64>> {
    let d = map.dim();
    let mut j = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for c in 0..d {
        xp[c] = x[c] + h;
        xm[c] = x[c] - h;
        let fp = map.image(&xp).point()?;
        let fm = map.image(&xm).point()?;
        for r in 0..d {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
        xp[c] = x[c];
        xm[c] = x[c];
    }
    Some(j)
}
