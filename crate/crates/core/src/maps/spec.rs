//! JSON map specifications.
//!
//! Reals may be given as decimal strings (preferred) or JSON numbers.

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::da::{build_da, BumpProfile, DaMap, DaParams};
use super::denjoy::{circle_as_torus_map, DenjoyCircle, PseudoRotation};
use super::horseshoe::{HorseshoeMap, HorseshoeSkewSpec, DEFAULT_OFFSETS};
use super::torus::TorusLiftMap;
use super::DynamicalMap;
use crate::error::{Error, Result};
use crate::linear_models::IntegerMatrix;

/// A real number that serializes as a decimal string.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}", self.0))
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let v = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Str(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("not a decimal real: {s:?}")))?,
        };
        if !v.is_finite() {
            return Err(serde::de::Error::custom("real must be finite"));
        }
        Ok(Real(v))
    }
}

fn reals(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

fn default_ratio() -> Real {
    Real(0.9)
}
fn default_tail() -> Real {
    Real(1e-12)
}
fn default_twist() -> Real {
    Real(0.05)
}
fn default_offsets() -> [Real; 4] {
    DEFAULT_OFFSETS.map(Real)
}
fn default_eta() -> [Real; 4] {
    [Real(0.008); 4]
}
fn default_one() -> Real {
    Real(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Radial,
    LogRadial { k: Real },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Linear {
        matrix: IntegerMatrix,
    },
    /// Rigid translation of `T^d`.
    Translation {
        vector: Vec<Real>,
    },
    Da {
        matrix: IntegerMatrix,
        #[serde(default)]
        q: Option<Vec<Real>>,
        delta: Real,
        stable_eigenvalues: [Real; 2],
        #[serde(default)]
        profile: Option<ProfileSpec>,
    },
    Denjoy {
        rotation_number: Real,
        #[serde(default = "default_ratio")]
        ratio: Real,
        #[serde(default = "default_tail")]
        tail_tol: Real,
    },
    PseudoRotation {
        rotation_numbers: [Real; 2],
        #[serde(default = "default_ratio")]
        ratio: Real,
        #[serde(default = "default_tail")]
        tail_tol: Real,
        #[serde(default = "default_twist")]
        twist_amplitude: Real,
    },
    Horseshoe {
        #[serde(default = "default_offsets")]
        band_offsets: [Real; 4],
        #[serde(default = "default_offsets")]
        strip_offsets: [Real; 4],
        #[serde(default = "default_eta")]
        eta: [Real; 4],
        #[serde(default = "default_one")]
        normalizer: Real,
    },
}

pub enum BuiltMap {
    Torus(TorusLiftMap),
    Da(Box<DaMap>),
    Circle { circle: Arc<DenjoyCircle>, map: TorusLiftMap },
    PseudoRotation(TorusLiftMap),
    Horseshoe(HorseshoeMap),
}

impl BuiltMap {
    pub fn as_dynamical(&self) -> &dyn DynamicalMap {
        match self {
            BuiltMap::Torus(m) | BuiltMap::PseudoRotation(m) => m,
            BuiltMap::Da(d) => &d.map,
            BuiltMap::Circle { map, .. } => map,
            BuiltMap::Horseshoe(h) => h,
        }
    }

    pub fn torus(&self) -> Option<&TorusLiftMap> {
        match self {
            BuiltMap::Torus(m) | BuiltMap::PseudoRotation(m) => Some(m),
            BuiltMap::Da(d) => Some(&d.map),
            BuiltMap::Circle { map, .. } => Some(map),
            BuiltMap::Horseshoe(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BuiltMap::Torus(_) => "torus",
            BuiltMap::Da(_) => "da",
            BuiltMap::Circle { .. } => "denjoy",
            BuiltMap::PseudoRotation(_) => "pseudo_rotation",
            BuiltMap::Horseshoe(_) => "horseshoe",
        }
    }
}

impl MapSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn make_map(spec: &MapSpec) -> Result<BuiltMap> {
    match spec {
        MapSpec::Linear { matrix } => Ok(BuiltMap::Torus(TorusLiftMap::linear(matrix.clone()))),
        MapSpec::Translation { vector } => {
            if vector.is_empty() {
                return Err(Error::InvalidInput("translation vector is empty".into()));
            }
            Ok(BuiltMap::Torus(TorusLiftMap::translation(reals(vector))))
        }
        MapSpec::Da { matrix, q, delta, stable_eigenvalues, profile } => {
            let profile = match profile {
                None => BumpProfile::default(),
                Some(ProfileSpec::Radial) => BumpProfile::Radial,
                Some(ProfileSpec::LogRadial { k }) => BumpProfile::LogRadial { k: k.0 },
            };
            let params = DaParams {
                matrix: matrix.clone(),
                q: q.as_ref().map(|v| reals(v)).unwrap_or_else(|| vec![0.0; matrix.dim()]),
                delta: delta.0,
                stable_eigenvalues: (stable_eigenvalues[0].0, stable_eigenvalues[1].0),
                profile,
            };
            Ok(BuiltMap::Da(Box::new(build_da(&params)?)))
        }
        MapSpec::Denjoy { rotation_number, ratio, tail_tol } => {
            let circle = Arc::new(DenjoyCircle::new(rotation_number.0, ratio.0, tail_tol.0)?);
            let map = circle_as_torus_map(circle.clone());
            Ok(BuiltMap::Circle { circle, map })
        }
        MapSpec::PseudoRotation { rotation_numbers, ratio, tail_tol, twist_amplitude } => {
            let base = Arc::new(DenjoyCircle::new(rotation_numbers[0].0, ratio.0, tail_tol.0)?);
            let fiber = Arc::new(DenjoyCircle::new(rotation_numbers[1].0, ratio.0, tail_tol.0)?);
            let pr = PseudoRotation::new(base, fiber, twist_amplitude.0)?;
            Ok(BuiltMap::PseudoRotation(pr.into_torus_map()))
        }
        MapSpec::Horseshoe { band_offsets, strip_offsets, eta, normalizer } => {
            let spec = HorseshoeSkewSpec {
                band_offsets: band_offsets.map(|r| r.0),
                strip_offsets: strip_offsets.map(|r| r.0),
                eta: eta.map(|r| r.0),
                normalizer: normalizer.0,
            };
            Ok(BuiltMap::Horseshoe(HorseshoeMap::new(spec)?))
        }
    }
}
