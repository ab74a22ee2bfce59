use crate::error::{Error, Result};
use crate::maps::Domain;

/// Uniform box grid over the torus `[0,1)^d` or a rectangular region.
///
/// Boxes are half-open, `[lo + k·h, lo + (k+1)·h)` along each axis, and are
/// numbered row-major (last axis fastest). Region grids carry one extra
/// node, the exterior, numbered `len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    cell: Vec<f64>,
    strides: Vec<usize>,
    torus: bool,
    len: usize,
}

impl BoxGrid {
    pub fn torus(resolution: Vec<usize>) -> Result<Self> {
        let d = resolution.len();
        Self::build(vec![0.0; d], vec![1.0; d], resolution, true)
    }

    pub fn region(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidInput("region bounds must satisfy lower < upper".into()));
        }
        Self::build(lower, upper, resolution, false)
    }

    /// Grid matching a map's domain with `n` boxes per axis.
    pub fn for_domain(domain: &Domain, n: usize) -> Result<Self> {
        match domain {
            Domain::Torus { dim } => Self::torus(vec![n; *dim]),
            Domain::Region { bounds, .. } => Self::region(bounds.lower.clone(), bounds.upper.clone(), vec![n; bounds.lower.len()]),
        }
    }

    fn build(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>, torus: bool) -> Result<Self> {
        let d = resolution.len();
        if d == 0 || resolution.contains(&0) || lower.len() != d {
            return Err(Error::InvalidInput("resolution must be positive on every axis".into()));
        }
        let len = resolution.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r));
        let len = match len {
            Some(l) if l < u32::MAX as usize => l,
            _ => return Err(Error::Capacity("grid has more than 2^32 boxes".into())),
        };
        let cell = (0..d).map(|i| (upper[i] - lower[i]) / resolution[i] as f64).collect();
        let mut strides = vec![1; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * resolution[i + 1];
        }
        Ok(Self { lower, upper, resolution, cell, strides, torus, len })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    /// Number of boxes, excluding the exterior node.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_torus(&self) -> bool {
        self.torus
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cell(&self) -> &[f64] {
        &self.cell
    }

    pub fn exterior(&self) -> Option<usize> {
        (!self.torus).then_some(self.len)
    }

    pub fn node_count(&self) -> usize {
        self.len + usize::from(!self.torus)
    }

    /// Euclidean diagonal of one box.
    pub fn diameter(&self) -> f64 {
        self.cell.iter().map(|h| h * h).sum::<f64>().sqrt()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = i / s;
            i %= s;
        }
        out
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Box containing `x`; torus points are reduced first, region points
    /// outside the bounds give `None`.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for k in 0..self.dim() {
            let t = (x[k] - self.lower[k]) / self.cell[k];
            if !t.is_finite() {
                return None;
            }
            let mut c = t.floor() as i64;
            let r = self.resolution[k] as i64;
            if self.torus {
                c = c.rem_euclid(r);
            } else if c < 0 || c >= r {
                return None;
            }
            idx += c as usize * self.strides[k];
        }
        Some(idx)
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(k, &m)| self.lower[k] + (m as f64 + 0.5) * self.cell[k])
            .collect()
    }

    pub fn bounds(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let m = self.multi_index(i);
        let lo: Vec<f64> = (0..self.dim()).map(|k| self.lower[k] + m[k] as f64 * self.cell[k]).collect();
        let hi: Vec<f64> = (0..self.dim()).map(|k| lo[k] + self.cell[k]).collect();
        (lo, hi)
    }

    /// Distance from `x` to the closed box `i`, with torus wrap-around.
    pub fn distance_to_box(&self, x: &[f64], i: usize) -> f64 {
        let (lo, hi) = self.bounds(i);
        let mut s = 0.0;
        for k in 0..self.dim() {
            let mut v = x[k];
            if self.torus {
                // bring v to the copy nearest the box centre
                let c = 0.5 * (lo[k] + hi[k]);
                v -= (v - c).round();
            }
            let g = if v < lo[k] {
                lo[k] - v
            } else if v > hi[k] {
                v - hi[k]
            } else {
                0.0
            };
            s += g * g;
        }
        s.sqrt()
    }

    /// Axis index ranges of boxes meeting `[lo, hi]`. Returns `false` as the
    /// second value when part of the rectangle lies outside a region grid.
    fn axis_ranges(&self, lo: &[f64], hi: &[f64]) -> (Vec<Vec<usize>>, bool) {
        let mut inside = true;
        let ranges = (0..self.dim())
            .map(|k| {
                let r = self.resolution[k] as i64;
                let a = ((lo[k] - self.lower[k]) / self.cell[k]).floor() as i64;
                let b = ((hi[k] - self.lower[k]) / self.cell[k]).floor() as i64;
                if self.torus {
                    if b - a + 1 >= r {
                        (0..r as usize).collect()
                    } else {
                        (a..=b).map(|c| c.rem_euclid(r) as usize).collect()
                    }
                } else {
                    if lo[k] < self.lower[k] || hi[k] >= self.upper[k] {
                        inside = false;
                    }
                    let a = a.max(0);
                    let b = b.min(r - 1);
                    (a..=b).map(|c| c as usize).collect::<Vec<_>>()
                }
            })
            .collect();
        (ranges, inside)
    }

    fn for_each_product(&self, ranges: &[Vec<usize>], mut f: impl FnMut(usize)) {
        if ranges.iter().any(|r| r.is_empty()) {
            return;
        }
        let d = ranges.len();
        let mut pos = vec![0usize; d];
        loop {
            let idx: usize = (0..d).map(|k| ranges[k][pos[k]] * self.strides[k]).sum();
            f(idx);
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                pos[k] += 1;
                if pos[k] < ranges[k].len() {
                    break;
                }
                pos[k] = 0;
            }
        }
    }

    /// Appends boxes meeting the closed rectangle `[lo, hi]`; returns whether
    /// the rectangle leaves a region grid.
    pub fn boxes_meeting_rect(&self, lo: &[f64], hi: &[f64], out: &mut Vec<usize>) -> bool {
        let (ranges, inside) = self.axis_ranges(lo, hi);
        self.for_each_product(&ranges, |i| out.push(i));
        !inside
    }

    /// Appends boxes meeting the closed ball `B(c, r)`; returns whether the
    /// ball leaves a region grid.
    pub fn boxes_meeting_ball(&self, c: &[f64], r: f64, out: &mut Vec<usize>) -> bool {
        let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
        let (ranges, inside) = self.axis_ranges(&lo, &hi);
        self.for_each_product(&ranges, |i| {
            // slack keeps ties on the inclusive side (outer approximation)
            if self.distance_to_box(c, i) <= r * (1.0 + 1e-12) + 1e-15 {
                out.push(i);
            }
        });
        !inside
    }

    /// Boxes sharing at least a corner with box `i` (excluding `i`).
    pub fn neighbours(&self, i: usize, out: &mut Vec<usize>) {
        let m = self.multi_index(i);
        let ranges: Vec<Vec<usize>> = (0..self.dim())
            .map(|k| {
                let r = self.resolution[k] as i64;
                let c = m[k] as i64;
                let mut v: Vec<usize> = if self.torus {
                    (c - 1..=c + 1).map(|x| x.rem_euclid(r) as usize).collect()
                } else {
                    (c - 1..=c + 1).filter(|x| *x >= 0 && *x < r).map(|x| x as usize).collect()
                };
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        self.for_each_product(&ranges, |j| {
            if j != i {
                out.push(j)
            }
        });
    }
}
