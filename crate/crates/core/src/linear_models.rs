//! Spectral analysis of unimodular integer matrices.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Moduli closer than this to 1 count as neutral.
pub const UNIT_MODULUS_TOL: f64 = 1e-9;
/// Eigenbases worse conditioned than this are rejected.
pub const MAX_BASIS_CONDITION: f64 = 1e8;

/// Square integer matrix with determinant ±1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntegerMatrix {
    d: usize,
    entries: Vec<i64>,
    det: i64,
}

impl IntegerMatrix {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("matrix rows must all have length d".into()));
        }
        let entries: Vec<i64> = rows.into_iter().flatten().collect();
        if entries.iter().any(|v| v.unsigned_abs() > 1 << 20) {
            return Err(Error::InvalidInput("entries exceed 2^20 in magnitude".into()));
        }
        let det = bareiss_det(d, &entries);
        if det.abs() != 1 {
            return Err(Error::NotUnimodular(det));
        }
        Ok(Self { d, entries, det })
    }

    pub fn identity(d: usize) -> Self {
        let mut entries = vec![0; d * d];
        for i in 0..d {
            entries[i * d + i] = 1;
        }
        Self { d, entries, det: 1 }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn det(&self) -> i64 {
        self.det
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.d).map(|r| r.to_vec()).collect()
    }

    pub fn to_real(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.d, self.d, self.entries.iter().map(|&v| v as f64))
    }

    /// `A·x` in floating point.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|i| (0..d).map(|j| self.entries[i * d + j] as f64 * x[j]).sum())
            .collect()
    }

    /// `A·γ` for an integer vector.
    pub fn apply_int(&self, g: &[i64]) -> Vec<i64> {
        let d = self.d;
        (0..d)
            .map(|i| (0..d).map(|j| self.entries[i * d + j] * g[j]).sum())
            .collect()
    }

    pub fn mul(&self, other: &IntegerMatrix) -> Result<IntegerMatrix> {
        if self.d != other.d {
            return Err(Error::InvalidInput("dimension mismatch".into()));
        }
        let d = self.d;
        let mut rows = vec![vec![0i64; d]; d];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..d).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        IntegerMatrix::new(rows)
    }

    pub fn pow(&self, k: u32) -> Result<IntegerMatrix> {
        let mut out = IntegerMatrix::identity(self.d);
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Exact inverse (the adjugate scaled by `det = ±1`).
    pub fn inverse(&self) -> IntegerMatrix {
        let d = self.d;
        let mut rows = vec![vec![0i64; d]; d];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                // adj[i][j] = (-1)^{i+j} minor(j, i)
                let minor: Vec<i64> = (0..d)
                    .filter(|&r| r != j)
                    .flat_map(|r| (0..d).filter(move |&c| c != i).map(move |c| (r, c)))
                    .map(|(r, c)| self.get(r, c))
                    .collect();
                let m = if d == 1 { 1 } else { bareiss_det(d - 1, &minor) };
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                *v = sign * m * self.det;
            }
        }
        IntegerMatrix { d, entries: rows.into_iter().flatten().collect(), det: self.det }
    }
}

impl TryFrom<Vec<Vec<i64>>> for IntegerMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        IntegerMatrix::new(rows)
    }
}

impl From<IntegerMatrix> for Vec<Vec<i64>> {
    fn from(m: IntegerMatrix) -> Self {
        m.rows()
    }
}

impl fmt::Display for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows())
    }
}

/// Fraction-free Gaussian elimination.
fn bareiss_det(d: usize, entries: &[i64]) -> i64 {
    let mut a: Vec<i128> = entries.iter().map(|&v| v as i128).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..d {
        if a[k * d + k] == 0 {
            let Some(p) = (k + 1..d).find(|&r| a[r * d + k] != 0) else {
                return 0;
            };
            for c in 0..d {
                a.swap(k * d + c, p * d + c);
            }
            sign = -sign;
        }
        for i in k + 1..d {
            for j in k + 1..d {
                a[i * d + j] = (a[i * d + j] * a[k * d + k] - a[i * d + k] * a[k * d + j]) / prev;
            }
        }
        prev = a[k * d + k];
    }
    (sign * a[d * d - 1]) as i64
}

/// Coefficients of `det(M − λI)`, constant term first.
///
/// Computed with the Faddeev–LeVerrier recursion in exact integers.
pub fn char_poly(m: &IntegerMatrix) -> Vec<i64> {
    let n = m.d;
    let a: Vec<i128> = m.entries.iter().map(|&v| v as i128).collect();
    let matmul = |x: &[i128], y: &[i128]| -> Vec<i128> {
        let mut out = vec![0i128; n * n];
        for i in 0..n {
            for k in 0..n {
                let xik = x[i * n + k];
                if xik == 0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += xik * y[k * n + j];
                }
            }
        }
        out
    };
    // c[k] is the coefficient of λ^k in det(λI − M)
    let mut c = vec![0i128; n + 1];
    c[n] = 1;
    let mut mk = vec![0i128; n * n];
    for k in 1..=n {
        let mut next = matmul(&a, &mk);
        for i in 0..n {
            next[i * n + i] += c[n - k + 1];
        }
        mk = next;
        let am = matmul(&a, &mk);
        let tr: i128 = (0..n).map(|i| am[i * n + i]).sum();
        c[n - k] = -tr / k as i128;
    }
    let sign = if n % 2 == 0 { 1 } else { -1 };
    c.into_iter().map(|v| (sign * v) as i64).collect()
}

pub fn eval_poly(coeffs: &[i64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c as f64)
}

fn eval_poly_deriv(coeffs: &[i64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, (k, &c)| acc * z + (k as f64) * c as f64)
}

/// Divides out `λ − r` for an exact integer root `r`.
fn deflate(coeffs: &[i64], r: i64) -> Option<Vec<i64>> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return None;
    }
    let mut q = vec![0i128; n];
    let mut carry = 0i128;
    for k in (1..=n).rev() {
        carry = carry * r as i128 + coeffs[k] as i128;
        q[k - 1] = carry;
    }
    (carry * r as i128 + coeffs[0] as i128 == 0).then(|| q.into_iter().map(|v| v as i64).collect())
}

/// Polynomial roots. Roots at ±1 are removed exactly first, since repeated
/// unit roots are badly conditioned numerically; the rest come from
/// companion-matrix seeds polished by Newton steps.
pub fn poly_roots(coeffs: &[i64]) -> Vec<Complex64> {
    let mut rest = coeffs.to_vec();
    let mut exact = Vec::new();
    for r in [1i64, -1] {
        while let Some(q) = deflate(&rest, r) {
            exact.push(Complex64::new(r as f64, 0.0));
            rest = q;
        }
    }
    let mut roots = numeric_roots(&rest);
    roots.extend(exact);
    roots
}

fn numeric_roots(coeffs: &[i64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = coeffs[n] as f64;
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -(coeffs[i] as f64) / lead;
    }
    let seeds = comp.complex_eigenvalues();
    seeds
        .iter()
        .map(|&z0| {
            let mut z = z0;
            let mut best = (eval_poly(coeffs, z).norm(), z);
            for _ in 0..60 {
                let dp = eval_poly_deriv(coeffs, z);
                if dp.norm() == 0.0 {
                    break;
                }
                let step = eval_poly(coeffs, z) / dp;
                z -= step;
                let r = eval_poly(coeffs, z).norm();
                if r < best.0 {
                    best = (r, z);
                }
                if step.norm() <= 1e-16 * z.norm().max(1.0) {
                    break;
                }
            }
            let mut z = best.1;
            // real inputs: snap numerically real roots onto the axis
            if z.im.abs() < 1e-12 * z.norm().max(1.0) {
                z.im = 0.0;
            }
            z
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    AnosovReal,
    AnosovComplexPair,
    PartiallyHyperbolicCenter,
    NonPartiallyHyperbolic,
}

impl Classification {
    pub fn is_anosov(self) -> bool {
        matches!(self, Classification::AnosovReal | Classification::AnosovComplexPair)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::AnosovReal => "anosov_real",
            Classification::AnosovComplexPair => "anosov_complex_pair",
            Classification::PartiallyHyperbolicCenter => "partially_hyperbolic_center",
            Classification::NonPartiallyHyperbolic => "non_partially_hyperbolic",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub char_poly: Vec<i64>,
    /// Sorted by modulus, then by real and imaginary part.
    #[serde(serialize_with = "ser_complex_vec")]
    pub eigenvalues: Vec<Complex64>,
    pub moduli: Vec<f64>,
    pub classification: Classification,
    pub irreducible_over_rationals: bool,
}

fn ser_complex_vec<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Eigenvalues, moduli, irreducibility and the hyperbolicity class of `m`.
///
/// Classification is only defined for `d ∈ {2, 3}`.
pub fn spectral_classify(m: &IntegerMatrix) -> Result<SpectralData> {
    let d = m.dim();
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidInput(format!("classification needs d = 2 or 3, got {d}")));
    }
    let cp = char_poly(m);
    let mut eig = poly_roots(&cp);
    eig.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then(a.re.total_cmp(&b.re))
            .then(a.im.total_cmp(&b.im))
    });
    let moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    let neutral: Vec<usize> =
        (0..d).filter(|&i| (moduli[i] - 1.0).abs() <= UNIT_MODULUS_TOL).collect();
    let has_complex = eig.iter().any(|z| z.im != 0.0);
    let classification = if neutral.is_empty() {
        if has_complex {
            Classification::AnosovComplexPair
        } else {
            Classification::AnosovReal
        }
    } else if d == 3 && neutral.len() == 1 && eig[neutral[0]].im == 0.0 {
        Classification::PartiallyHyperbolicCenter
    } else {
        Classification::NonPartiallyHyperbolic
    };
    // Monic up to sign with constant term ±1: the only rational candidates are ±1.
    let one = eval_poly(&cp, Complex64::new(1.0, 0.0)).re;
    let minus_one = eval_poly(&cp, Complex64::new(-1.0, 0.0)).re;
    let irreducible = one != 0.0 && minus_one != 0.0;
    Ok(SpectralData { char_poly: cp, eigenvalues: eig, moduli, classification, irreducible_over_rationals: irreducible })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Stable,
    Center,
    Unstable,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Stable, Label::Center, Label::Unstable];

    pub fn of_modulus(m: f64) -> Label {
        if (m - 1.0).abs() <= UNIT_MODULUS_TOL {
            Label::Center
        } else if m < 1.0 {
            Label::Stable
        } else {
            Label::Unstable
        }
    }
}

/// Invariant decomposition of `R^d` under an integer matrix.
#[derive(Clone, Debug)]
pub struct Splitting {
    /// Orthonormal basis of each present subspace.
    pub subspaces: Vec<(Label, DMatrix<f64>)>,
    /// Spectral projectors, one per present label.
    pub projectors: Vec<(Label, DMatrix<f64>)>,
    /// Condition number of [`Splitting::adapted_basis`].
    pub basis_condition: f64,
    /// Real eigenbasis, columns grouped by label in the order stable, center,
    /// unstable. Complex pairs contribute the real and imaginary part of one
    /// eigenvector, so the matrix acts on each such pair as a rotation scaled
    /// by the modulus.
    pub adapted_basis: DMatrix<f64>,
    /// Label and modulus of each adapted basis column.
    pub column_labels: Vec<(Label, f64)>,
}

impl Splitting {
    pub fn subspace(&self, label: Label) -> Option<&DMatrix<f64>> {
        self.subspaces.iter().find(|(l, _)| *l == label).map(|(_, b)| b)
    }

    pub fn projector(&self, label: Label) -> Option<&DMatrix<f64>> {
        self.projectors.iter().find(|(l, _)| *l == label).map(|(_, p)| p)
    }

    pub fn dim_of(&self, label: Label) -> usize {
        self.subspace(label).map_or(0, |b| b.ncols())
    }
}

fn null_vector(m: DMatrix<Complex64>) -> DVector<Complex64> {
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    vt.row(k).transpose().map(|z| z.conj())
}

/// Real invariant subspaces and spectral projectors of `m`.
pub fn invariant_splitting(s: &SpectralData, m: &IntegerMatrix) -> Result<Splitting> {
    if s.classification == Classification::NonPartiallyHyperbolic {
        return Err(Error::Precondition("no invariant splitting for a non partially hyperbolic matrix".into()));
    }
    let d = m.dim();
    let a = m.to_real().map(|v| Complex64::new(v, 0.0));
    let mut cols: Vec<(Label, f64, DVector<f64>)> = Vec::with_capacity(d);
    for lam in &s.eigenvalues {
        if lam.im < 0.0 {
            continue;
        }
        let shifted = &a - DMatrix::<Complex64>::identity(d, d) * *lam;
        let v = null_vector(shifted);
        let label = Label::of_modulus(lam.norm());
        if lam.im == 0.0 {
            let re = v.map(|z| z.re);
            let im = v.map(|z| z.im);
            let w = if re.norm() >= im.norm() { re } else { im };
            let w = &w / w.norm();
            // sign convention: largest-magnitude entry positive
            let imax = w.iamax();
            let w = if w[imax] < 0.0 { -w } else { w };
            cols.push((label, lam.norm(), w));
        } else {
            let x = v.map(|z| z.re);
            let y = v.map(|z| z.im);
            let phi = 0.5 * (-2.0 * x.dot(&y)).atan2(x.norm_squared() - y.norm_squared());
            let (sn, cs) = phi.sin_cos();
            let re = &x * cs - &y * sn;
            let im = &x * sn + &y * cs;
            let scale = re.norm();
            cols.push((label, lam.norm(), re / scale));
            cols.push((label, lam.norm(), im / scale));
        }
    }
    cols.sort_by(|p, q| p.0.cmp(&q.0));
    let t = DMatrix::from_columns(&cols.iter().map(|c| c.2.clone()).collect::<Vec<_>>());
    let cond = linalg::condition_number(&t);
    if !cond.is_finite() || cond > MAX_BASIS_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let tinv = t.clone().try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let mut subspaces = Vec::new();
    let mut projectors = Vec::new();
    for label in Label::ALL {
        let idx: Vec<usize> = (0..d).filter(|&i| cols[i].0 == label).collect();
        if idx.is_empty() {
            continue;
        }
        let block = t.select_columns(&idx);
        let rows = tinv.select_rows(&idx);
        projectors.push((label, &block * rows));
        subspaces.push((label, linalg::orthonormalize(&block)));
    }
    Ok(Splitting {
        subspaces,
        projectors,
        basis_condition: cond,
        adapted_basis: t,
        column_labels: cols.iter().map(|c| (c.0, c.1)).collect(),
    })
}
