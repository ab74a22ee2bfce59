//! Four-band affine horseshoe on `C = [0,5]²` crossed with band-dependent
//! fibre maps on `[−1, 6]`.
//!
//! Branch `i` sends the horizontal strip `y ∈ [b_i, b_i + 1)` onto the
//! vertical band `I_i = [c_i, c_i + 1) × [0, 5)` by
//! `(x, y) ↦ (x/5 + c_i, 5(y − b_i))` and acts on the fibre by
//! `g_i(t) = t + η_i·P_i(t)/C`. Points outside every strip escape.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Domain, DynamicalMap, Image, Rect};
use crate::error::{Error, Result};

pub const BASE_CONTRACTION: f64 = 0.2;
pub const BASE_EXPANSION: f64 = 5.0;
pub const FIBER_LOW: f64 = -1.0;
pub const FIBER_HIGH: f64 = 6.0;
pub const DEFAULT_OFFSETS: [f64; 4] = [1.0 / 6.0, 5.0 / 4.0, 11.0 / 4.0, 23.0 / 6.0];

/// Vertex of the band-4 shape, and the half-widths left and right of it.
const P4_VERTEX: f64 = 1.45;
const P4_LEFT: f64 = 0.45;
const P4_RIGHT: f64 = 3.55;
/// Band 1 uses the mirror image: vertex at 3.55, zeros at 0 and 4.
const P1_VERTEX: f64 = 3.55;
const P1_LEFT: f64 = 3.55;
const P1_RIGHT: f64 = 0.45;

/// Fixed points of each fibre map inside `[−1, 6]`.
pub const FIBER_FIXED_POINTS: [[f64; 2]; 4] = [[0.0, 4.0], [3.0, 4.0], [1.0, 2.0], [1.0, 5.0]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeSkewSpec {
    /// Left edges `c_i` of the image bands.
    pub band_offsets: [f64; 4],
    /// Lower edges `b_i` of the strips mapped onto the bands.
    pub strip_offsets: [f64; 4],
    pub eta: [f64; 4],
    pub normalizer: f64,
}

impl Default for HorseshoeSkewSpec {
    fn default() -> Self {
        Self { band_offsets: DEFAULT_OFFSETS, strip_offsets: DEFAULT_OFFSETS, eta: [0.008; 4], normalizer: 1.0 }
    }
}

/// Shape function `P_i` and its derivative (bands numbered from 0).
///
/// Bands 1 and 4 use vertex-matched piecewise quadratics (C¹ at the vertex)
/// so that `g'` stays below 1 on `[−1, 3.5]` for band 1 and above 1 on
/// `[1.5, 6]` for band 4; bands 2 and 3 are plain quadratics.
pub fn shape(band: usize, t: f64) -> (f64, f64) {
    match band {
        0 => {
            let w = if t <= P1_VERTEX { P1_LEFT } else { P1_RIGHT };
            let u = (t - P1_VERTEX) / w;
            (u * u - 1.0, 2.0 * u / w)
        }
        1 => ((t - 3.0) * (t - 4.0), 2.0 * t - 7.0),
        2 => ((t - 1.0) * (t - 2.0), 2.0 * t - 3.0),
        3 => {
            let w = if t <= P4_VERTEX { P4_LEFT } else { P4_RIGHT };
            let u = (t - P4_VERTEX) / w;
            (u * u - 1.0, 2.0 * u / w)
        }
        _ => panic!("band index out of range"),
    }
}

/// Outcome of checking the fibre-map clauses.
#[derive(Clone, Debug, Serialize)]
pub struct FiberVerification {
    /// Per band: min and max of `g_i'` over the grid.
    pub derivative_range: Vec<(f64, f64)>,
    /// Per band: fixed points located in `[−1, 6]`.
    pub fixed_points: Vec<Vec<f64>>,
    /// Per band: `sup |η_i·P_i'|/C`.
    pub amplitude: Vec<f64>,
    /// Violated clauses, empty when everything holds.
    pub violations: Vec<String>,
    /// Per band: `max g'` on `[−1, 3.5]` for bands 1, 2 and `min g'` on
    /// `[1.5, 6]` for bands 3, 4. Informational: the side conditions ask
    /// for values below (resp. above) 1.
    pub side_condition: Vec<f64>,
}

impl HorseshoeSkewSpec {
    pub fn fiber(&self, band: usize, t: f64) -> f64 {
        t + self.eta[band] * shape(band, t).0 / self.normalizer
    }

    pub fn fiber_derivative(&self, band: usize, t: f64) -> f64 {
        1.0 + self.eta[band] * shape(band, t).1 / self.normalizer
    }

    pub fn with_eta(&self, band: usize, eta: f64) -> Self {
        let mut s = self.clone();
        s.eta[band] = eta;
        s
    }

    pub fn strip_of(&self, y: f64) -> Option<usize> {
        (0..4).find(|&i| y >= self.strip_offsets[i] && y < self.strip_offsets[i] + 1.0)
    }

    /// Base branch `i` applied to `(x, y)`.
    pub fn base(&self, band: usize, x: f64, y: f64) -> (f64, f64) {
        (BASE_CONTRACTION * x + self.band_offsets[band], BASE_EXPANSION * (y - self.strip_offsets[band]))
    }

    /// Checks the slope window `4/5 < g' < 6/5` and the amplitude bound on a
    /// grid of `grid` points, and that each fibre map has exactly its two
    /// prescribed fixed points in `[−1, 6]`, located to 1e-10.
    pub fn verify(&self, grid: usize) -> FiberVerification {
        let mut out = FiberVerification {
            derivative_range: Vec::new(),
            fixed_points: Vec::new(),
            amplitude: Vec::new(),
            violations: Vec::new(),
            side_condition: Vec::new(),
        };
        if !(self.normalizer > 0.0) || self.eta.iter().any(|e| !(*e > 0.0)) {
            out.violations.push("amplitudes and normalizer must be positive".into());
            return out;
        }
        for i in 0..4 {
            let xs: Vec<f64> = (0..grid)
                .map(|k| FIBER_LOW + (FIBER_HIGH - FIBER_LOW) * k as f64 / (grid - 1) as f64)
                .collect();
            let (mut lo, mut hi, mut amp) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
            for &t in &xs {
                let d = self.fiber_derivative(i, t);
                lo = lo.min(d);
                hi = hi.max(d);
                amp = amp.max((d - 1.0).abs());
            }
            let side = if i < 2 {
                [-1.0, 3.5].map(|t| self.fiber_derivative(i, t)).into_iter().fold(f64::NEG_INFINITY, f64::max)
            } else {
                [1.5, 6.0].map(|t| self.fiber_derivative(i, t)).into_iter().fold(f64::INFINITY, f64::min)
            };
            if !(lo > 0.8 && hi < 1.2) {
                out.violations.push(format!("band {}: slope window 4/5 < g' < 6/5 fails ([{lo:.6}, {hi:.6}])", i + 1));
            }
            if amp > 0.2 {
                out.violations.push(format!("band {}: amplitude sup|η P'|/C = {amp:.6} exceeds 1/5", i + 1));
            }
            // fixed points = zeros of P_i, bracketed on the grid then bisected
            let mut fixed = Vec::new();
            let p = |t: f64| shape(i, t).0;
            for w in xs.windows(2) {
                let (a, b) = (w[0], w[1]);
                let (pa, pb) = (p(a), p(b));
                if pa == 0.0 {
                    fixed.push(a);
                } else if pa * pb < 0.0 {
                    fixed.push(bisect(p, a, b, 1e-13));
                }
            }
            if p(FIBER_HIGH) == 0.0 {
                fixed.push(FIBER_HIGH);
            }
            let expected = FIBER_FIXED_POINTS[i];
            let ok = fixed.len() == 2 && fixed.iter().zip(expected).all(|(f, e)| (f - e).abs() <= 1e-10);
            if !ok {
                out.violations.push(format!(
                    "band {}: fixed points {fixed:?} differ from {expected:?}",
                    i + 1
                ));
            }
            out.derivative_range.push((lo, hi));
            out.amplitude.push(amp);
            out.fixed_points.push(fixed);
            out.side_condition.push(side);
        }
        let bands: Vec<(f64, f64)> = self.band_offsets.iter().map(|c| (*c, c + 1.0)).collect();
        let strips: Vec<(f64, f64)> = self.strip_offsets.iter().map(|c| (*c, c + 1.0)).collect();
        for (name, set) in [("band", &bands), ("strip", &strips)] {
            for a in 0..4 {
                for b in a + 1..4 {
                    if set[a].0 < set[b].1 && set[b].0 < set[a].1 {
                        out.violations.push(format!("{name}s {} and {} overlap", a + 1, b + 1));
                    }
                }
                if set[a].0 <= 0.0 || set[a].1 >= 5.0 {
                    out.violations.push(format!("{name} {} leaves (0, 5)", a + 1));
                }
            }
        }
        if !(bands[0].1 < 7.0 / 3.0 && bands[1].1 < 7.0 / 3.0 && bands[2].0 > 8.0 / 3.0 && bands[3].0 > 8.0 / 3.0) {
            out.violations.push("bands 1, 2 must lie left of 7/3 and bands 3, 4 right of 8/3".into());
        }
        out
    }
}

pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Clone, Debug)]
pub struct HorseshoeMap {
    pub spec: HorseshoeSkewSpec,
    pub verification: FiberVerification,
    domain: Domain,
}

impl HorseshoeMap {
    /// Builds the map after verifying the fibre clauses on a 10⁴-point grid.
    pub fn new(spec: HorseshoeSkewSpec) -> Result<Self> {
        let verification = spec.verify(10_000);
        if !verification.violations.is_empty() {
            return Err(Error::Construction(verification.violations.join("; ")));
        }
        let pieces = spec
            .strip_offsets
            .iter()
            .map(|b| Rect { lower: vec![0.0, *b, FIBER_LOW], upper: vec![5.0, b + 1.0, FIBER_HIGH] })
            .collect();
        let domain = Domain::Region {
            bounds: Rect { lower: vec![0.0, 0.0, FIBER_LOW], upper: vec![5.0, 5.0, FIBER_HIGH] },
            pieces,
        };
        Ok(Self { spec, verification, domain })
    }

    fn piece(&self, x: &[f64]) -> Option<usize> {
        if !(x[0] >= 0.0 && x[0] < 5.0 && x[2] >= FIBER_LOW && x[2] < FIBER_HIGH) {
            return None;
        }
        self.spec.strip_of(x[1])
    }
}

impl DynamicalMap for HorseshoeMap {
    fn dim(&self) -> usize {
        3
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn image(&self, x: &[f64]) -> Image {
        match self.piece(x) {
            Some(i) => {
                let (u, v) = self.spec.base(i, x[0], x[1]);
                Image::Point(vec![u, v, self.spec.fiber(i, x[2])])
            }
            None => Image::Escape,
        }
    }

    fn jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let i = self.piece(x)?;
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            BASE_CONTRACTION,
            BASE_EXPANSION,
            self.spec.fiber_derivative(i, x[2]),
        ])))
    }

    fn lipschitz_hint(&self) -> f64 {
        BASE_EXPANSION
    }

    fn component_bound(&self) -> Option<DMatrix<f64>> {
        let hi = self.verification.derivative_range.iter().map(|r| r.1).fold(0.0, f64::max);
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![BASE_CONTRACTION, BASE_EXPANSION, hi])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_passes_verifier() {
        let v = HorseshoeSkewSpec::default().verify(10_000);
        assert!(v.violations.is_empty(), "{:?}", v.violations);
        assert!(v.side_condition[0] < 1.0);
        assert!(v.side_condition[3] > 1.0);
        // plain quadratics touch 1 at the end of the interval
        assert!((v.side_condition[1] - 1.0).abs() < 1e-15);
        assert!((v.side_condition[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn large_amplitude_is_rejected() {
        let s = HorseshoeSkewSpec::default().with_eta(3, 0.01);
        let err = HorseshoeMap::new(s).unwrap_err().to_string();
        assert!(err.contains("band 4"), "{err}");
    }

    #[test]
    fn escape_outside_strips() {
        let m = HorseshoeMap::new(HorseshoeSkewSpec::default()).unwrap();
        assert_eq!(m.image(&[1.0, 0.1, 0.0]), Image::Escape);
        assert_eq!(m.image(&[1.0, 2.5, 0.0]), Image::Escape);
        let y = m.image(&[5.0 / 24.0, 5.0 / 24.0, 0.0]).point().unwrap();
        assert!((y[0] - 5.0 / 24.0).abs() < 1e-15 && (y[1] - 5.0 / 24.0).abs() < 1e-15);
        assert_eq!(y[2], 0.0);
    }

    #[test]
    fn band2_reach_from_zero() {
        let s = HorseshoeSkewSpec::default().with_eta(1, 0.01);
        assert!((s.fiber(1, 0.0) - 0.12).abs() < 1e-15);
    }
}
