//! Dense complex matrices and the bipartite primitives (tensor product,
//! partial trace, partial transpose, Jordan product) the rest of the crate
//! is written in.
//!
//! Bipartite indices follow `(i, k) -> i * dB + k`, so subsystem A is the
//! slowest-varying factor. Multipartite helpers use the same convention with
//! slot 0 slowest.

use std::fmt;
use std::ops::{Add, AddAssign, Deref, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute deviation from Hermiticity absorbed by [`HermitianMatrix::new`],
/// relative to the matrix scale once that exceeds one.
pub const HERMITIAN_TOL: f64 = 1e-12;

const JACOBI_REL_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 64;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub(crate) fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>9.5}{:+.5}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::default(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = re(1.0);
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real matrix given as row slices.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let cols = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, cols, |i, j| re(rows[i][j]))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { re(diag[i]) } else { C64::default() })
    }

    /// `|u><v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(re(s))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius inner product `Tr[self^* other]`.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = C64::default();
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul of {}x{} by {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![C64::default(); n * p];
        for i in 0..n {
            let row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Self {
            rows: n,
            cols: p,
            data: out,
        }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `(M + M^*) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    /// Largest entrywise deviation from `M = M^*`.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Mul<f64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: f64) -> ComplexMatrix {
        self.scale_re(rhs)
    }
}

impl Mul<C64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: C64) -> ComplexMatrix {
        self.scale(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_re(-1.0)
    }
}

/// Square matrix equal to its adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Symmetrizes `m`, rejecting it if the deviation from Hermiticity is
    /// above [`HERMITIAN_TOL`] (scaled by the matrix size when larger than 1).
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite);
        }
        let dev = m.hermiticity_error();
        if dev > HERMITIAN_TOL * m.max_abs().max(1.0) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self(m.hermitian_part()))
    }

    /// Hermitian part `(M + M^*)/2` with no tolerance check.
    pub fn from_hermitian_part(m: &ComplexMatrix) -> Self {
        Self(m.hermitian_part())
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_diag(diag))
    }

    /// `|v><v|`.
    pub fn projector(v: &[C64]) -> Self {
        Self::from_hermitian_part(&ComplexMatrix::outer(v, v))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    /// `Tr[self * other]`, real for Hermitian pairs.
    pub fn trace_with(&self, other: &HermitianMatrix) -> f64 {
        self.0.trace_product(&other.0).re
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> HermitianMatrix {
        Self(self.0.scale_re(s))
    }

    /// `U H U^*`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> HermitianMatrix {
        Self::from_hermitian_part(&(&(u * &self.0) * &u.adjoint()))
    }

    pub fn transpose(&self) -> HermitianMatrix {
        Self(self.0.transpose())
    }
}

impl Deref for HermitianMatrix {
    type Target = ComplexMatrix;
    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Spectral decomposition `H = U diag(lambda) U^*` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `U diag(f(lambda)) U^*`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let u = &self.eigenvectors;
        let n = u.rows();
        let fl: Vec<C64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut scaled = u.clone();
        for i in 0..n {
            for k in 0..n {
                scaled[(i, k)] *= fl[k];
            }
        }
        &scaled * &u.adjoint()
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        HermitianMatrix::from_hermitian_part(&self.map(re))
    }
}

/// Eigendecomposition by cyclic complex Jacobi rotations.
pub fn herm_eig(h: &HermitianMatrix) -> Result<EigenDecomposition> {
    if !h.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(herm_eig_from(h, None))
}

/// Jacobi iteration started from `start` (an approximate eigenbasis), which
/// cuts the sweep count when consecutive inputs are close.
pub(crate) fn herm_eig_from(h: &ComplexMatrix, start: Option<&ComplexMatrix>) -> EigenDecomposition {
    let n = h.rows();
    let (mut a, mut v) = match start {
        Some(v0) => ((&(&v0.adjoint() * h) * v0).into_vec(), v0.clone().into_vec()),
        None => (h.clone().into_vec(), ComplexMatrix::identity(n).into_vec()),
    };
    for i in 0..n {
        for j in 0..i {
            let avg = (a[i * n + j] + a[j * n + i].conj()) * 0.5;
            a[i * n + j] = avg;
            a[j * n + i] = avg.conj();
        }
        a[i * n + i] = re(a[i * n + i].re);
    }
    jacobi(&mut a, &mut v, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].re.total_cmp(&a[y * n + y].re));
    let eigenvalues = order.iter().map(|&k| a[k * n + k].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

fn jacobi(a: &mut [C64], v: &mut [C64], n: usize) {
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if total == 0.0 {
        return;
    }
    let threshold = JACOBI_REL_TOL * total;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i * n + j].norm_sqr();
                }
            }
        }
        if off.sqrt() < threshold {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let z = a[p * n + q];
                let r = z.norm();
                if r == 0.0 {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                let phase = (z / r).conj();
                let g_pp = re(cs);
                let g_pq = re(sn);
                let g_qp = phase * (-sn);
                let g_qq = phase * cs;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * g_pp + akq * g_qp;
                    a[k * n + q] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[q * n + k] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[p * n + q] = C64::default();
                a[q * n + p] = C64::default();
                a[p * n + p] = re(app - t * r);
                a[q * n + q] = re(aqq + t * r);
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * g_pp + vkq * g_qp;
                    v[k * n + q] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &HermitianMatrix) -> Result<f64> {
    Ok(herm_eig(h)?.min_eigenvalue())
}

/// Projection onto the PSD cone: `U diag(max(lambda, 0)) U^*`.
pub fn psd_project(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = herm_eig(h)?;
    Ok(HermitianMatrix::from_hermitian_part(&eig.map(|l| re(l.max(0.0)))))
}

/// Dimensions of a two-party system `H_A (x) H_B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BipartiteDims {
    pub d_a: usize,
    pub d_b: usize,
}

impl BipartiteDims {
    pub fn new(d_a: usize, d_b: usize) -> Result<Self> {
        if d_a == 0 || d_b == 0 {
            return Err(Error::InvalidArgument(format!(
                "subsystem dimensions must be positive, got ({d_a}, {d_b})"
            )));
        }
        Ok(Self { d_a, d_b })
    }

    pub fn square(d: usize) -> Result<Self> {
        Self::new(d, d)
    }

    pub fn total(&self) -> usize {
        self.d_a * self.d_b
    }

    pub fn swapped(&self) -> Self {
        Self {
            d_a: self.d_b,
            d_b: self.d_a,
        }
    }

    fn check(&self, m: &ComplexMatrix) -> Result<()> {
        let n = self.total();
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n}x{n} operator for dims ({}, {}), got {}x{}",
                self.d_a,
                self.d_b,
                m.rows(),
                m.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Kronecker product; entry `((i,k),(j,l))` equals `A_ij B_kl`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    ComplexMatrix::from_fn(ar * br, ac * bc, |r, s| a[(r / br, s / bc)] * b[(r % br, s % bc)])
}

pub fn tensor_vec(x: &[C64], y: &[C64]) -> Vec<C64> {
    x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
}

pub fn partial_trace(m: &ComplexMatrix, dims: BipartiteDims, over: Subsystem) -> Result<ComplexMatrix> {
    dims.check(m)?;
    let BipartiteDims { d_a, d_b } = dims;
    Ok(match over {
        Subsystem::B => ComplexMatrix::from_fn(d_a, d_a, |i, j| {
            (0..d_b).map(|k| m[(i * d_b + k, j * d_b + k)]).sum()
        }),
        Subsystem::A => ComplexMatrix::from_fn(d_b, d_b, |k, l| {
            (0..d_a).map(|i| m[(i * d_b + k, i * d_b + l)]).sum()
        }),
    })
}

pub fn partial_transpose(m: &ComplexMatrix, dims: BipartiteDims, over: Subsystem) -> Result<ComplexMatrix> {
    dims.check(m)?;
    let d_b = dims.d_b;
    let n = dims.total();
    Ok(ComplexMatrix::from_fn(n, n, |r, s| {
        let (i, k) = (r / d_b, r % d_b);
        let (j, l) = (s / d_b, s % d_b);
        match over {
            Subsystem::A => m[(j * d_b + k, i * d_b + l)],
            Subsystem::B => m[(i * d_b + l, j * d_b + k)],
        }
    }))
}

/// Jordan product `(AB + BA)/2` of two Hermitian matrices.
pub fn jordan(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(HermitianMatrix::from_hermitian_part(&jordan_general(a, b)?))
}

/// Jordan product of arbitrary square matrices of equal size.
pub fn jordan_general(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || a.rows() != b.rows() || b.rows() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "jordan product of {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok((&(a * b) + &(b * a)).scale_re(0.5))
}

/// `S = sum_ij |ij><ji|` on `C^d (x) C^d`.
pub fn swap_operator(d: usize) -> HermitianMatrix {
    let n = d * d;
    HermitianMatrix(ComplexMatrix::from_fn(n, n, |r, s| {
        let (i, k) = (r / d, r % d);
        let (j, l) = (s / d, s % d);
        if i == l && k == j {
            re(1.0)
        } else {
            C64::default()
        }
    }))
}

/// Unnormalized `|Phi+> = sum_i |ii>`.
pub fn max_entangled(d: usize) -> Vec<C64> {
    let mut v = vec![C64::default(); d * d];
    for i in 0..d {
        v[i * d + i] = re(1.0);
    }
    v
}

/// Real basis of the Hermitian `n x n` matrices: `|i><i|`, `|i><j| + |j><i|`
/// and `i|i><j| - i|j><i|` for `i < j`. Traces against it read off the
/// diagonal, twice the real parts and twice the imaginary parts.
pub fn hermitian_basis(n: usize) -> Vec<HermitianMatrix> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut m = ComplexMatrix::zeros(n, n);
        m[(i, i)] = re(1.0);
        out.push(HermitianMatrix(m));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut m = ComplexMatrix::zeros(n, n);
            m[(i, j)] = re(1.0);
            m[(j, i)] = re(1.0);
            out.push(HermitianMatrix(m));
            let mut m = ComplexMatrix::zeros(n, n);
            m[(i, j)] = c(0.0, 1.0);
            m[(j, i)] = c(0.0, -1.0);
            out.push(HermitianMatrix(m));
        }
    }
    out
}

fn check_multi(m: &ComplexMatrix, dims: &[usize]) -> Result<usize> {
    let n: usize = dims.iter().product();
    if m.rows() != n || m.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {n}x{n} operator for dims {dims:?}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(n)
}

fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for s in (0..dims.len()).rev() {
        out[s] = index % dims[s];
        index /= dims[s];
    }
}

fn undigits(ds: &[usize], dims: &[usize]) -> usize {
    ds.iter().zip(dims).fold(0, |acc, (d, n)| acc * n + d)
}

/// Traces out the listed slots of an operator on `dims[0] (x) dims[1] (x) ...`.
pub fn partial_trace_multi(m: &ComplexMatrix, dims: &[usize], traced: &[usize]) -> Result<ComplexMatrix> {
    let n = check_multi(m, dims)?;
    if traced.iter().any(|&t| t >= dims.len()) {
        return Err(Error::InvalidArgument(format!("slot out of range in {traced:?}")));
    }
    let kept: Vec<usize> = (0..dims.len()).filter(|s| !traced.contains(s)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&s| dims[s]).collect();
    let k: usize = kept_dims.iter().product();
    let mut out = ComplexMatrix::zeros(k, k);
    let (mut dr, mut dc) = (vec![0; dims.len()], vec![0; dims.len()]);
    for r in 0..n {
        digits(r, dims, &mut dr);
        for s in 0..n {
            digits(s, dims, &mut dc);
            if traced.iter().all(|&t| dr[t] == dc[t]) {
                let kr = kept.iter().fold(0, |acc, &q| acc * dims[q] + dr[q]);
                let kc = kept.iter().fold(0, |acc, &q| acc * dims[q] + dc[q]);
                out[(kr, kc)] += m[(r, s)];
            }
        }
    }
    Ok(out)
}

/// Reorders tensor factors: slot `k` of the result is slot `perm[k]` of the input.
pub fn permute_subsystems(m: &ComplexMatrix, dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix> {
    let n = check_multi(m, dims)?;
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of the slots")));
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let (mut dr, mut dc) = (vec![0; dims.len()], vec![0; dims.len()]);
    let (mut nr, mut nc) = (vec![0; dims.len()], vec![0; dims.len()]);
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        digits(r, dims, &mut dr);
        for (k, &p) in perm.iter().enumerate() {
            nr[k] = dr[p];
        }
        let rr = undigits(&nr, &new_dims);
        for s in 0..n {
            digits(s, dims, &mut dc);
            for (k, &p) in perm.iter().enumerate() {
                nc[k] = dc[p];
            }
            out[(rr, undigits(&nc, &new_dims))] = m[(r, s)];
        }
    }
    Ok(out)
}

/// Places `op` (acting on `slots`, in that order) into the full space, with
/// identities on every other slot.
pub fn embed(op: &ComplexMatrix, dims: &[usize], slots: &[usize]) -> Result<ComplexMatrix> {
    let sub_dims: Vec<usize> = slots.iter().map(|&s| dims[s]).collect();
    let sub: usize = sub_dims.iter().product();
    if op.rows() != sub || op.cols() != sub {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but slots {slots:?} span dimension {sub}",
            op.rows(),
            op.cols()
        )));
    }
    let n: usize = dims.iter().product();
    let (mut dr, mut dc) = (vec![0; dims.len()], vec![0; dims.len()]);
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        digits(r, dims, &mut dr);
        let sr = slots.iter().fold(0, |acc, &q| acc * dims[q] + dr[q]);
        for s in 0..n {
            digits(s, dims, &mut dc);
            let spectator_match = (0..dims.len()).all(|q| slots.contains(&q) || dr[q] == dc[q]);
            if spectator_match {
                let sc = slots.iter().fold(0, |acc, &q| acc * dims[q] + dc[q]);
                out[(r, s)] = op[(sr, sc)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
        (a - b).max_abs() < tol
    }

    #[test]
    fn identity_tensor_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(tensor(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn basis_projector_tensor() {
        let p0 = ComplexMatrix::from_diag(&[1.0, 0.0]);
        let p1 = ComplexMatrix::from_diag(&[0.0, 1.0]);
        let t = tensor(&p0, &p1);
        for r in 0..4 {
            for s in 0..4 {
                let want = if (r, s) == (1, 1) { 1.0 } else { 0.0 };
                assert_eq!(t[(r, s)], re(want));
            }
        }
    }

    #[test]
    fn tensor_trace_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = random_matrix(3, 3, &mut rng);
            let b = random_matrix(2, 2, &mut rng);
            let lhs = tensor(&a, &b).trace();
            assert!((lhs - a.trace() * b.trace()).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(3, 3, &mut rng);
        let b = random_matrix(2, 2, &mut rng);
        let dims = BipartiteDims::new(3, 2).unwrap();
        let ab = tensor(&a, &b);
        assert!(close(&partial_trace(&ab, dims, Subsystem::B).unwrap(), &a.scale(b.trace()), 1e-12));
        assert!(close(&partial_trace(&ab, dims, Subsystem::A).unwrap(), &b.scale(a.trace()), 1e-12));
    }

    #[test]
    fn partial_trace_of_swap_is_identity() {
        let s = swap_operator(2);
        let dims = BipartiteDims::square(2).unwrap();
        let tb = partial_trace(&s, dims, Subsystem::B).unwrap();
        // entrywise: sum_k <ik|S|jk> = sum_k delta_{ik}delta_{kj}
        let oracle = ComplexMatrix::from_fn(2, 2, |i, j| re(if i == j { 1.0 } else { 0.0 }));
        assert_eq!(tb, oracle);
    }

    #[test]
    fn partial_trace_rejects_wrong_size() {
        let dims = BipartiteDims::square(2).unwrap();
        assert!(partial_trace(&ComplexMatrix::identity(3), dims, Subsystem::A).is_err());
        assert!(partial_transpose(&ComplexMatrix::identity(3), dims, Subsystem::A).is_err());
    }

    #[test]
    fn partial_transpose_of_max_entangled_is_swap() {
        for d in 1..=4 {
            let phi = max_entangled(d);
            let proj = ComplexMatrix::outer(&phi, &phi);
            let dims = BipartiteDims::square(d).unwrap();
            let pt = partial_transpose(&proj, dims, Subsystem::A).unwrap();
            assert_eq!(&pt, swap_operator(d).matrix());
            let ptb = partial_transpose(&proj, dims, Subsystem::B).unwrap();
            assert_eq!(&ptb, swap_operator(d).matrix());
        }
    }

    #[test]
    fn partial_transpose_is_involution_and_self_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = BipartiteDims::new(2, 3).unwrap();
        for _ in 0..20 {
            let k = random_matrix(6, 6, &mut rng);
            let cm = random_matrix(6, 6, &mut rng);
            for over in [Subsystem::A, Subsystem::B] {
                let tk = partial_transpose(&k, dims, over).unwrap();
                assert_eq!(partial_transpose(&tk, dims, over).unwrap(), k);
                let lhs = tk.trace_product(&cm);
                let rhs = k.trace_product(&partial_transpose(&cm, dims, over).unwrap());
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_transpose_entry_map() {
        let dims = BipartiteDims::new(2, 3).unwrap();
        let m = ComplexMatrix::from_fn(6, 6, |r, s| c(r as f64, s as f64));
        let pt = partial_transpose(&m, dims, Subsystem::A).unwrap();
        for (i, k, j, l) in [(0, 1, 1, 2), (1, 0, 0, 0), (1, 2, 0, 1)] {
            assert_eq!(pt[(i * 3 + k, j * 3 + l)], m[(j * 3 + k, i * 3 + l)]);
        }
    }

    #[test]
    fn jordan_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_hermitian(3, &mut rng);
        let id = HermitianMatrix::identity(3);
        assert!(close(&jordan(&a, &id).unwrap(), &a, 1e-14));

        let d1 = HermitianMatrix::from_diag(&[1.0, -2.0, 0.5]);
        let d2 = HermitianMatrix::from_diag(&[3.0, 1.0, 4.0]);
        assert!(close(&jordan(&d1, &d2).unwrap(), &(&*d1 * &*d2), 1e-14));

        let sx = HermitianMatrix::new(ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let sz = HermitianMatrix::from_diag(&[1.0, -1.0]);
        assert!(jordan(&sx, &sz).unwrap().max_abs() < 1e-15);
        assert!(jordan(&sx, &id).is_err());
    }

    #[test]
    fn eig_of_diagonal_and_pauli() {
        let d = HermitianMatrix::from_diag(&[3.0, 1.0, 2.0]);
        let e = herm_eig(&d).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
        for j in 0..3 {
            let col = e.eigenvectors.column(j);
            assert_eq!(col.iter().filter(|z| z.norm() == 1.0).count(), 1);
        }

        let sx = HermitianMatrix::new(ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let e = herm_eig(&sx).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 3, 5, 8, 16, 30] {
            let h = random_hermitian(n, &mut rng);
            let e = herm_eig(&h).unwrap();
            let rec = e.reconstruct();
            assert!((&*rec - &*h).frobenius_norm() < 1e-10 * h.frobenius_norm().max(1.0));
            let u = &e.eigenvectors;
            let gram = &u.adjoint() * u;
            assert!(close(&gram, &ComplexMatrix::identity(n), 1e-10));
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_hermitian(7, &mut rng);
        let a = herm_eig(&h).unwrap();
        let b = herm_eig(&h).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.eigenvectors, b.eigenvectors);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let bad = HermitianMatrix(ComplexMatrix::from_diag(&[f64::NAN, 1.0]));
        assert!(matches!(herm_eig(&bad), Err(Error::NonFinite)));
    }

    #[test]
    fn warm_started_eig_matches_cold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(6, &mut rng);
        let cold = herm_eig(&h).unwrap();
        let pert = random_hermitian(6, &mut rng).scale(1e-3);
        let h2 = h.add(&pert);
        let warm = herm_eig_from(&h2, Some(&cold.eigenvectors));
        let fresh = herm_eig(&h2).unwrap();
        for (a, b) in warm.eigenvalues.iter().zip(&fresh.eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((&*warm.reconstruct() - &*h2).frobenius_norm() < 1e-10);
    }

    #[test]
    fn swap_operator_structure() {
        let s = swap_operator(2);
        let ones = [(0, 0), (3, 3), (1, 2), (2, 1)];
        for r in 0..4 {
            for col in 0..4 {
                let want = if ones.contains(&(r, col)) { 1.0 } else { 0.0 };
                assert_eq!(s[(r, col)], re(want));
            }
        }
        for d in 1..=4 {
            let s = swap_operator(d);
            assert_eq!(&(&*s * &*s), &ComplexMatrix::identity(d * d));
            assert_eq!(s.trace(), re(d as f64));
            let phi = max_entangled(d);
            assert_eq!(phi.iter().map(|z| z.norm_sqr()).sum::<f64>(), d as f64);
        }
    }

    #[test]
    fn swap_exchanges_product_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(3, 1, &mut rng).into_vec();
        let y = random_matrix(3, 1, &mut rng).into_vec();
        let lhs = swap_operator(3).mul_vec(&tensor_vec(&x, &y));
        let rhs = tensor_vec(&y, &x);
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn multipartite_helpers_agree_with_bipartite() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(6, 6, &mut rng);
        let dims = BipartiteDims::new(2, 3).unwrap();
        assert!(close(
            &partial_trace_multi(&m, &[2, 3], &[1]).unwrap(),
            &partial_trace(&m, dims, Subsystem::B).unwrap(),
            1e-14
        ));
        assert!(close(
            &partial_trace_multi(&m, &[2, 3], &[0]).unwrap(),
            &partial_trace(&m, dims, Subsystem::A).unwrap(),
            1e-14
        ));

        let a = random_matrix(2, 2, &mut rng);
        let b = random_matrix(3, 3, &mut rng);
        let cc = random_matrix(2, 2, &mut rng);
        let abc = tensor(&tensor(&a, &b), &cc);
        let cab = permute_subsystems(&abc, &[2, 3, 2], &[2, 0, 1]).unwrap();
        assert!(close(&cab, &tensor(&tensor(&cc, &a), &b), 1e-14));

        let ac = tensor(&a, &cc);
        let emb = embed(&ac, &[2, 3, 2], &[0, 2]).unwrap();
        assert!(close(&emb, &tensor(&tensor(&a, &ComplexMatrix::identity(3)), &cc), 1e-14));
        let emb_rev = embed(&tensor(&cc, &a), &[2, 3, 2], &[2, 0]).unwrap();
        assert!(close(&emb_rev, &emb, 1e-14));
    }
}
