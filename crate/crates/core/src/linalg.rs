//! Small dense linear-algebra helpers shared by the analyses.

use nalgebra::{DMatrix, DVector};

pub fn to_dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance on the flat torus `R^d / Z^d`.
pub fn torus_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            let d = d - d.round();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Largest and smallest singular values.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    (sv.max(), sv.min())
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let (hi, lo) = singular_extremes(m);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthonormal basis of the column span (modified Gram–Schmidt, two passes).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let n = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / n);
    }
    q
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `basis`.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let k = basis.ncols();
    let proj = basis * basis.transpose();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for e in 0..d {
        if cols.len() == d - k {
            break;
        }
        let mut v = DVector::zeros(d);
        v[e] = 1.0;
        let mut w = &v - &proj * &v;
        for c in &cols {
            let p = c.dot(&w);
            w.axpy(-p, c, 1.0);
        }
        let n = w.norm();
        if n > 1e-8 {
            cols.push(w / n);
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(d, 0);
    }
    DMatrix::from_columns(&cols)
}

/// k-dimensional volume spanned by the columns of `m`.
pub fn column_volume(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    g.determinant().abs().sqrt()
}

/// Largest principal angle between two subspaces given by orthonormal bases
/// of equal dimension.
pub fn subspace_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * b;
    let smin = m.svd(false, false).singular_values.min().clamp(-1.0, 1.0);
    smin.acos()
}

pub fn rotation2(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Angle of a line through the origin in the plane, in `[0, pi)`.
pub fn line_angle(v: &DVector<f64>) -> f64 {
    let a = v[1].atan2(v[0]);
    a.rem_euclid(std::f64::consts::PI)
}

/// Signed angle from line `from` to line `to`, reduced to `(-pi/2, pi/2]`.
pub fn line_gap(from: f64, to: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut d = (to - from).rem_euclid(PI);
    if d > FRAC_PI_2 {
        d -= PI;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_is_orthogonal() {
        let b = orthonormalize(&DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 2.0]));
        let c = orthogonal_complement(&b);
        assert_eq!(c.ncols(), 2);
        let m = b.transpose() * &c;
        assert!(m.norm() < 1e-12);
        let g = c.transpose() * &c;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn line_gap_wraps() {
        use std::f64::consts::PI;
        assert!((line_gap(0.1, PI - 0.1) + 0.2).abs() < 1e-12);
        assert!((line_gap(PI - 0.1, 0.1) - 0.2).abs() < 1e-12);
    }
}
