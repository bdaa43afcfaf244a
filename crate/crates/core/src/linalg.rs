//! Dense kernels for the small square matrices that show up in the model:
//! Jacobians (6×6) and next-generation blocks (3×3).

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots at or below this magnitude make [`Lu::solve`] fail.
pub const PIVOT_TOL: f64 = 1e-13;

/// Relative subdiagonal size at which the QR iteration deflates.
pub const DEFLATION_TOL: f64 = 1e-12;

/// Square real matrix of dimension at most [`Matrix::MAX_DIM`], row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub const MAX_DIM: usize = 8;

    pub fn zeros(n: usize) -> Self {
        assert!((1..=Self::MAX_DIM).contains(&n), "matrix dimension {n} outside 1..={}", Self::MAX_DIM);
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from rows, checking shape and finiteness.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > Self::MAX_DIM {
            return Err(Error::Domain(format!("matrix dimension {n} outside 1..={}", Self::MAX_DIM)));
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::Domain(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("matrix entry ({i},{j}) = {v}")));
                }
                m[(i, j)] = *v;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        Matrix::from_fn(self.n, |i, j| (0..self.n).map(|k| self[(i, k)] * other[(k, j)]).sum())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// `xᵀ A` as a vector.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|j| (0..self.n).map(|i| x[i] * self[(i, j)]).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn determinant(&self) -> f64 {
        Lu::factor(self).determinant()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries((0..self.n).map(|i| self.row(i))).finish()
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factor `a`. Never fails; singularity is reported by [`Lu::solve`].
    pub fn factor(a: &Matrix) -> Lu {
        let n = a.dim();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| lu[(x, k)].abs().total_cmp(&lu[(y, k)].abs()))
                .unwrap_or(k);
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    lu[(i, j)] -= factor * lu[(k, j)];
                }
            }
        }
        Lu { lu, perm, sign }
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.dim()).fold(self.sign, |d, i| d * self.lu[(i, i)])
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.dim();
        assert_eq!(b.len(), n);
        for k in 0..n {
            let magnitude = self.lu[(k, k)].abs();
            if magnitude <= PIVOT_TOL {
                return Err(Error::Singular { pivot: k, magnitude });
            }
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }
}

/// Solve `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    Lu::factor(a).solve(b)
}

/// Eigenvalues of a real matrix with per-value convergence flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex64>,
    pub converged: Vec<bool>,
}

fn serialize_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
}

impl Spectrum {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }

    fn check(&self) -> Result<()> {
        let unconverged = self.converged.iter().filter(|c| !**c).count();
        if unconverged > 0 {
            return Err(Error::NoConvergence { unconverged, dimension: self.eigenvalues.len() });
        }
        Ok(())
    }

    /// Largest real part.
    pub fn abscissa(&self) -> Result<f64> {
        self.check()?;
        Ok(self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Largest modulus.
    pub fn radius(&self) -> Result<f64> {
        self.check()?;
        Ok(self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    /// Eigenvalues sorted by real part, then imaginary part.
    pub fn sorted(&self) -> Vec<Complex64> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    pub fn count_near_zero(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|z| z.norm() < tol).count()
    }
}

/// Householder reduction to upper Hessenberg form.
fn hessenberg(a: &Matrix) -> Matrix {
    let n = a.dim();
    let mut h = a.clone();
    let mut ort = vec![0.0; n];
    let high = n - 1;
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let f = (m..=high).rev().map(|i| ort[i] * h[(i, j)]).sum::<f64>() / hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let f = (m..=high).rev().map(|j| ort[j] * h[(i, j)]).sum::<f64>() / hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }
    for i in 2..n {
        for j in 0..i - 1 {
            h[(i, j)] = 0.0;
        }
    }
    h
}

/// Eigenvalues by Hessenberg reduction and Francis double-shift QR.
///
/// Deflation happens when a subdiagonal entry drops below
/// `DEFLATION_TOL · (|h_ii| + |h_jj|)`. After `100 n²` iterations the
/// remaining diagonal block is returned with `converged = false`.
pub fn eigenvalues(a: &Matrix) -> Spectrum {
    let nn = a.dim();
    let mut wr = vec![0.0; nn];
    let mut wi = vec![0.0; nn];
    let mut converged = vec![true; nn];

    let norm: f64 = (0..nn).map(|i| (i.saturating_sub(1)..nn).map(|j| a[(i, j)].abs()).sum::<f64>()).sum();
    if norm == 0.0 {
        return Spectrum { eigenvalues: vec![Complex64::new(0.0, 0.0); nn], converged };
    }

    let mut h = hessenberg(a);
    let low = 0usize;
    let mut n = nn as isize - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut x, mut y, mut w);
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let max_iter = 100 * nn * nn;
    let eps = f64::EPSILON;

    while n >= low as isize {
        let nu = n as usize;
        // Find a negligible subdiagonal entry.
        let mut l = nu;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() <= DEFLATION_TOL * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            wr[nu] = h[(nu, nu)] + exshift;
            wi[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            x = h[(nu, nu)] + exshift;
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                wr[nu - 1] = x + z;
                wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                wi[nu - 1] = 0.0;
                wi[nu] = 0.0;
            } else {
                wr[nu - 1] = x + p;
                wr[nu] = x + p;
                wi[nu - 1] = z;
                wi[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            if total_iter >= max_iter {
                for i in low..=nu {
                    wr[i] = h[(i, i)] + exshift;
                    wi[i] = 0.0;
                    converged[i] = false;
                }
                break;
            }
            x = h[(nu, nu)];
            y = h[(nu - 1, nu - 1)];
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];

            // Exceptional shifts break cycles.
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;

            // Look for two consecutive small subdiagonal entries.
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            pp += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= pp * z;
                        }
                        h[(k, j)] -= pp * x;
                        h[(k + 1, j)] -= pp * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            pp += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= pp * r;
                        }
                        h[(i, k)] -= pp;
                        h[(i, k + 1)] -= pp * q;
                    }
                }
            }
        }
    }

    Spectrum {
        eigenvalues: wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect(),
        converged,
    }
}

pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    eigenvalues(a).abscissa()
}

pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    eigenvalues(a).radius()
}

/// Right and left null vectors of a matrix with a simple zero eigenvalue,
/// scaled so that `left · right = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullVectors {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
}

/// Default threshold for "zero" eigenvalues: `1e-7 · ‖A‖∞`.
pub fn default_zero_tol(a: &Matrix) -> f64 {
    1e-7 * a.norm_inf().max(f64::MIN_POSITIVE)
}

/// Null vectors by inverse iteration.
///
/// The shift sits a hair off zero so the factorization stays regular even
/// when the zero eigenvalue is exact; it is small enough relative to the
/// zero-eigenvalue tolerance that convergence is immediate.
pub fn null_vectors(a: &Matrix, tol: Option<f64>) -> Result<NullVectors> {
    let n = a.dim();
    let norm = a.norm_inf();
    let tol = tol.unwrap_or_else(|| default_zero_tol(a));
    let spectrum = eigenvalues(a);
    spectrum.check()?;
    let count = spectrum.count_near_zero(tol);
    if count != 1 {
        return Err(Error::ZeroEigenvalueCount { count });
    }

    let shift = 1e-9 * norm.max(1.0);
    let residual_tol = 1e-8 * norm.max(f64::MIN_POSITIVE);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let right = inverse_iteration(a, &shifted, residual_tol, 0x5eed_0001)?;
    let at = a.transpose();
    let shifted_t = shifted.transpose();
    let mut left = inverse_iteration(&at, &shifted_t, residual_tol, 0x5eed_0002)?;

    let dot: f64 = left.iter().zip(&right).map(|(a, b)| a * b).sum();
    if dot.abs() < 1e-12 {
        // Orthogonal left/right vectors: the zero eigenvalue is defective.
        return Err(Error::ZeroEigenvalueCount { count: 2 });
    }
    for v in &mut left {
        *v /= dot;
    }
    Ok(NullVectors { right, left })
}

fn inverse_iteration(a: &Matrix, shifted: &Matrix, residual_tol: f64, seed: u64) -> Result<Vec<f64>> {
    let n = a.dim();
    let lu = Lu::factor(shifted);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    normalize(&mut x);
    for iteration in 0..20 {
        x = lu.solve(&x)?;
        normalize(&mut x);
        let res = a.mul_vec(&x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if iteration >= 1 && res <= residual_tol {
            break;
        }
    }
    orient(&mut x);
    Ok(x)
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

/// Flip so the largest-magnitude component is positive.
fn orient(x: &mut [f64]) {
    let big = x.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if big < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Serializable eigenvalue pair for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Eigenvalue {
    fn from(z: Complex64) -> Self {
        Eigenvalue { re: z.re, im: z.im }
    }
}
