//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Everything here is sized for dimensions up to 64: matrices are stored
//! densely in row-major order and the Hermitian eigensolver is a cyclic
//! Jacobi iteration.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QlaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("not a density operator: {0}")]
    NotDensity(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("non-finite entry")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, QlaError>;

/// Tolerances shared by the numerical layers. The defaults are the shipped
/// values; callers override individual fields when needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Maximum deviation from Hermiticity accepted before symmetrization.
    pub hermitian: f64,
    /// Lowest eigenvalue still considered positive semidefinite.
    pub psd: f64,
    /// Trace deviation accepted for density operators.
    pub trace: f64,
    /// Channel trace-preservation residual.
    pub trace_preserving: f64,
    /// Negative eigenvalues above `-sqrt_clip` are clipped to zero in matrix roots.
    pub sqrt_clip: f64,
    /// Eigenvector orthonormality target for the Jacobi solver.
    pub eig_orthonormality: f64,
    /// Jacobi sweep cap.
    pub eig_max_sweeps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermitian: 1e-12,
            psd: 1e-9,
            trace: 1e-9,
            trace_preserving: 1e-8,
            sqrt_clip: 1e-9,
            eig_orthonormality: 1e-10,
            eig_max_sweeps: 100,
        }
    }
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(QlaError::Dimension(format!(
                "{rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QlaError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let v: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&v)
    }

    /// Column vector.
    pub fn column(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// `|v><v|`.
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |r, c| v[r] * v[c].conj())
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

    pub fn col(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
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

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &CMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for r in 0..self.rows {
            let out_row = &mut out.data[r * n..(r + 1) * n];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (r1, c1, r2, c2) = (self.rows, self.cols, other.rows, other.cols);
        let mut out = CMatrix::zeros(r1 * r2, c1 * c2);
        for i in 0..r1 {
            for j in 0..c1 {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..r2 {
                    for l in 0..c2 {
                        out[(i * r2 + k, j * c2 + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// `Tr(A† B)`.
    pub fn inner(&self, other: &CMatrix) -> C64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.rows).all(|r| (0..self.cols).all(|c| r == c || self[(r, c)].norm() <= tol))
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        let mut out = self.clone();
        out.axpy(ONE, rhs);
        out
    }
}

impl Sub<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        let mut out = self.clone();
        out.axpy(-ONE, rhs);
        out
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Hermitian matrix. Construction symmetrizes, so the stored matrix equals
/// its conjugate transpose exactly.
#[derive(Clone, PartialEq)]
pub struct Hermitian(CMatrix);

impl fmt::Debug for Hermitian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hermitian({:?})", self.0)
    }
}

impl Hermitian {
    /// Checks Hermiticity within `tol` and then symmetrizes.
    pub fn new(m: CMatrix, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(QlaError::Dimension(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        let dev = m.hermitian_deviation();
        let scale = m.max_abs().max(1.0);
        if dev > tol * scale {
            return Err(QlaError::NotHermitian(dev));
        }
        Ok(Self::symmetrize(&m))
    }

    /// `(m + m†)/2` without any check.
    pub fn symmetrize(m: &CMatrix) -> Self {
        assert!(m.is_square());
        let n = m.rows;
        let mut out = CMatrix::zeros(n, n);
        for r in 0..n {
            out[(r, r)] = C64::new(m[(r, r)].re, 0.0);
            for c in r + 1..n {
                let v = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
                out[(r, c)] = v;
                out[(c, r)] = v.conj();
            }
        }
        Self(out)
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n))
    }

    pub fn from_real_diag(values: &[f64]) -> Self {
        Self(CMatrix::diag_real(values))
    }

    /// Projector onto a (not necessarily normalized) vector.
    pub fn projector(v: &[C64]) -> Self {
        Self::symmetrize(&CMatrix::outer(v))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale_real(s))
    }

    /// Real Frobenius inner product `Tr(A B)`.
    pub fn inner(&self, other: &Hermitian) -> f64 {
        self.0.inner(&other.0).re
    }

    pub fn kron(&self, other: &Hermitian) -> Hermitian {
        Self(self.0.kron(&other.0))
    }

    pub fn transpose(&self) -> Hermitian {
        Self(self.0.transpose())
    }

    /// `V† A V` for a (possibly rectangular) `V`.
    pub fn congruence(&self, v: &CMatrix) -> Hermitian {
        Self::symmetrize(&v.adjoint().matmul(&self.0).matmul(v))
    }

    /// `V A V†`.
    pub fn conjugate_by(&self, v: &CMatrix) -> Hermitian {
        Self::symmetrize(&v.matmul(&self.0).matmul(&v.adjoint()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    pub fn eig(&self) -> Result<Eigen> {
        eig_hermitian(self)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eig_hermitian(self)?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.last().copied().unwrap_or(0.0))
    }

    /// Apply a real function to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Result<Hermitian> {
        let e = self.eig()?;
        Ok(e.reconstruct_with(f))
    }

    /// Largest eigenvalue magnitude.
    pub fn operator_norm(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        Ok(ev.iter().map(|x| x.abs()).fold(0.0, f64::max))
    }

    pub fn trace_norm(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().map(|x| x.abs()).sum())
    }

    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }

    /// PSD square root; eigenvalues in `[-clip, 0)` are treated as zero.
    pub fn sqrt_psd(&self, clip: f64) -> Result<Hermitian> {
        let e = self.eig()?;
        if let Some(&lo) = e.values.first() {
            if lo < -clip {
                return Err(QlaError::NotDensity(format!(
                    "square root of matrix with eigenvalue {lo:.3e}"
                )));
            }
        }
        Ok(e.reconstruct_with(|x| x.max(0.0).sqrt()))
    }

    /// Orthonormal basis of the eigenspace with eigenvalues above `tol`.
    pub fn support(&self, tol: f64) -> Result<CMatrix> {
        let e = self.eig()?;
        let keep: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] > tol).collect();
        let n = self.dim();
        Ok(CMatrix::from_fn(n, keep.len(), |r, c| e.vectors[(r, keep[c])]))
    }

    /// Orthonormal basis of the eigenspace with eigenvalues at most `tol`.
    pub fn kernel(&self, tol: f64) -> Result<CMatrix> {
        let e = self.eig()?;
        let keep: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] <= tol).collect();
        let n = self.dim();
        Ok(CMatrix::from_fn(n, keep.len(), |r, c| e.vectors[(r, keep[c])]))
    }
}

impl Add<&Hermitian> for &Hermitian {
    type Output = Hermitian;
    fn add(self, rhs: &Hermitian) -> Hermitian {
        Hermitian(&self.0 + &rhs.0)
    }
}

impl Sub<&Hermitian> for &Hermitian {
    type Output = Hermitian;
    fn sub(self, rhs: &Hermitian) -> Hermitian {
        Hermitian(&self.0 - &rhs.0)
    }
}

impl Neg for &Hermitian {
    type Output = Hermitian;
    fn neg(self) -> Hermitian {
        self.scale(-1.0)
    }
}

/// Eigendecomposition: ascending eigenvalues, eigenvectors in the columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Hermitian {
        let n = self.values.len();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let vr = self.vectors[(r, k)] * w;
                if vr == ZERO {
                    continue;
                }
                for c in 0..n {
                    out[(r, c)] += vr * self.vectors[(c, k)].conj();
                }
            }
        }
        Hermitian::symmetrize(&out)
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.col(k)
    }
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn eig_hermitian(m: &Hermitian) -> Result<Eigen> {
    eig_hermitian_with(m, Tolerances::default().eig_max_sweeps)
}

pub fn eig_hermitian_with(m: &Hermitian, max_sweeps: usize) -> Result<Eigen> {
    let n = m.dim();
    let mut a = m.0.clone();
    let mut v = CMatrix::identity(n);
    if n <= 1 {
        let values = if n == 1 { vec![a[(0, 0)].re] } else { vec![] };
        return Ok(Eigen { values, vectors: v });
    }
    let total: f64 = a.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !total.is_finite() {
        return Err(QlaError::NonFinite);
    }
    if total == 0.0 {
        return Ok(Eigen {
            values: vec![0.0; n],
            vectors: v,
        });
    }
    let off_norm = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in r + 1..n {
                s += a[(r, c)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };
    let mut converged = false;
    for _sweep in 0..max_sweeps {
        if off_norm(&a) <= f64::EPSILON * total * 1e-2 {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE || mag <= 1e-300 * total {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Skip rotations that are below rounding of the diagonal.
                if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let phase = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = [[c, s e], [-s e*, c]] on (p, q); A <- G† A G, V <- V G.
                let g_pq = phase * s;
                let g_qp = -phase.conj() * s;
                // Columns: A <- A G.
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * c + arq * g_qp;
                    a[(r, q)] = arp * g_pq + arq * c;
                }
                // Rows: A <- G† A.
                for col in 0..n {
                    let apc = a[(p, col)];
                    let aqc = a[(q, col)];
                    a[(p, col)] = apc * c + aqc * g_qp.conj();
                    a[(q, col)] = apc * g_pq.conj() + aqc * c;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * c + vrq * g_qp;
                    v[(r, q)] = vrp * g_pq + vrq * c;
                }
            }
        }
    }
    if !converged && off_norm(&a) > 1e-13 * total {
        return Err(QlaError::NoConvergence(max_sweeps));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

/// Cholesky factor `L` (lower triangular) with `A = L L†`.
pub fn cholesky(m: &Hermitian) -> Result<CMatrix> {
    let n = m.dim();
    let a = &m.0;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(QlaError::NotPositiveDefinite);
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix.
pub fn lower_triangular_inverse(l: &CMatrix) -> CMatrix {
    let n = l.rows();
    let mut inv = CMatrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { ONE } else { ZERO };
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

/// Inverse of a Hermitian positive-definite matrix through its Cholesky factor.
pub fn hpd_inverse(m: &Hermitian) -> Result<Hermitian> {
    let l = cholesky(m)?;
    let li = lower_triangular_inverse(&l);
    Ok(Hermitian::symmetrize(&li.adjoint().matmul(&li)))
}

fn check_dims(n: usize, dims: &[usize]) -> Result<()> {
    let prod: usize = dims.iter().product();
    if prod != n || dims.contains(&0) {
        return Err(QlaError::Dimension(format!(
            "subsystem dims {dims:?} do not multiply to {n}"
        )));
    }
    Ok(())
}

fn multi_index(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

fn flat_index(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Partial trace over every subsystem not listed in `keep`.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(QlaError::Dimension("partial trace of non-square matrix".into()));
    }
    check_dims(m.rows(), dims)?;
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(QlaError::Dimension(format!(
            "keep {keep:?} out of range for {} subsystems",
            dims.len()
        )));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep_sorted.contains(k)).collect();
    let kdims: Vec<usize> = keep_sorted.iter().map(|&k| dims[k]).collect();
    let tdims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let dk: usize = kdims.iter().product();
    let dt: usize = tdims.iter().product();
    let mut out = CMatrix::zeros(dk, dk);
    let mut digits = vec![0usize; dims.len()];
    let mut kd = vec![0usize; kdims.len()];
    let mut td = vec![0usize; tdims.len()];
    // index of full system from (kept multi-index, traced multi-index)
    let compose = |kd: &[usize], td: &[usize], digits: &mut [usize]| -> usize {
        for (i, &k) in keep_sorted.iter().enumerate() {
            digits[k] = kd[i];
        }
        for (i, &t) in traced.iter().enumerate() {
            digits[t] = td[i];
        }
        flat_index(digits, dims)
    };
    let mut rows_full = vec![0usize; dk * dt];
    for a in 0..dk {
        multi_index(a, &kdims, &mut kd);
        for t in 0..dt {
            multi_index(t, &tdims, &mut td);
            rows_full[a * dt + t] = compose(&kd, &td, &mut digits);
        }
    }
    for a in 0..dk {
        for b in 0..dk {
            let mut s = ZERO;
            for t in 0..dt {
                s += m[(rows_full[a * dt + t], rows_full[b * dt + t])];
            }
            out[(a, b)] = s;
        }
    }
    Ok(out)
}

/// Transpose of the subsystems listed in `part`.
pub fn partial_transpose(m: &CMatrix, dims: &[usize], part: &[usize]) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(QlaError::Dimension("partial transpose of non-square matrix".into()));
    }
    check_dims(m.rows(), dims)?;
    if part.iter().any(|&k| k >= dims.len()) {
        return Err(QlaError::Dimension(format!(
            "part {part:?} out of range for {} subsystems",
            dims.len()
        )));
    }
    let n = m.rows();
    let mut out = CMatrix::zeros(n, n);
    let mut rd = vec![0usize; dims.len()];
    let mut cd = vec![0usize; dims.len()];
    for r in 0..n {
        multi_index(r, dims, &mut rd);
        for c in 0..n {
            multi_index(c, dims, &mut cd);
            let mut r2 = rd.clone();
            let mut c2 = cd.clone();
            for &k in part {
                std::mem::swap(&mut r2[k], &mut c2[k]);
            }
            out[(flat_index(&r2, dims), flat_index(&c2, dims))] = m[(r, c)];
        }
    }
    Ok(out)
}

/// Reorders subsystems: subsystem `perm[k]` of the input becomes subsystem `k`
/// of the output.
pub fn permute_subsystems(m: &CMatrix, dims: &[usize], perm: &[usize]) -> Result<CMatrix> {
    check_dims(m.rows(), dims)?;
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(QlaError::Dimension(format!("invalid permutation {perm:?}")));
    }
    let n = m.rows();
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    // map from new flat index to old flat index
    let mut map = vec![0usize; n];
    let mut nd = vec![0usize; dims.len()];
    let mut od = vec![0usize; dims.len()];
    for (i, slot) in map.iter_mut().enumerate() {
        multi_index(i, &new_dims, &mut nd);
        for k in 0..dims.len() {
            od[perm[k]] = nd[k];
        }
        *slot = flat_index(&od, dims);
    }
    Ok(CMatrix::from_fn(n, n, |r, c| m[(map[r], map[c])]))
}

impl Hermitian {
    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Hermitian> {
        Ok(Hermitian::symmetrize(&partial_trace(&self.0, dims, keep)?))
    }

    pub fn partial_transpose(&self, dims: &[usize], part: &[usize]) -> Result<Hermitian> {
        Ok(Hermitian::symmetrize(&partial_transpose(&self.0, dims, part)?))
    }

    pub fn permute_subsystems(&self, dims: &[usize], perm: &[usize]) -> Result<Hermitian> {
        Ok(Hermitian::symmetrize(&permute_subsystems(&self.0, dims, perm)?))
    }
}

/// A density operator together with its subsystem structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: Hermitian,
    dims: Vec<usize>,
}

impl DensityOperator {
    pub fn new(op: Hermitian, dims: Vec<usize>) -> Result<Self> {
        Self::with_tolerances(op, dims, &Tolerances::default())
    }

    pub fn with_tolerances(op: Hermitian, dims: Vec<usize>, tol: &Tolerances) -> Result<Self> {
        check_dims(op.dim(), &dims)?;
        let tr = op.trace();
        if (tr - 1.0).abs() > tol.trace {
            return Err(QlaError::NotDensity(format!("trace {tr}")));
        }
        let lo = op.min_eigenvalue()?;
        if lo < -tol.psd {
            return Err(QlaError::NotDensity(format!("min eigenvalue {lo:.3e}")));
        }
        Ok(Self { op, dims })
    }

    /// Single-system density operator.
    pub fn from_hermitian(op: Hermitian) -> Result<Self> {
        let d = op.dim();
        Self::new(op, vec![d])
    }

    /// Normalized pure state `|v><v| / <v|v>`.
    pub fn pure(v: &[C64]) -> Result<Self> {
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(QlaError::NotDensity("zero vector".into()));
        }
        let op = Hermitian::projector(v).scale(1.0 / norm);
        Self::from_hermitian(op)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            op: Hermitian::identity(d).scale(1.0 / d as f64),
            dims: vec![d],
        }
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Result<Self> {
        check_dims(self.op.dim(), &dims)?;
        self.dims = dims;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn op(&self) -> &Hermitian {
        &self.op
    }

    pub fn into_op(self) -> Hermitian {
        self.op
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityOperator {
            op: self.op.kron(&other.op),
            dims,
        }
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityOperator> {
        let op = self.op.partial_trace(&self.dims, keep)?;
        let mut k = keep.to_vec();
        k.sort_unstable();
        k.dedup();
        let dims = k.iter().map(|&i| self.dims[i]).collect();
        Ok(DensityOperator { op, dims })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        self.op.min_eigenvalue()
    }
}

/// Squared-convention fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn state_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    fidelity(rho.op(), sigma.op())
}

/// Squared-convention fidelity between PSD operators (not necessarily normalized).
pub fn fidelity(rho: &Hermitian, sigma: &Hermitian) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(QlaError::Dimension(format!(
            "fidelity between dimensions {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let clip = Tolerances::default().sqrt_clip;
    let sr = rho.sqrt_psd(clip)?;
    let inner = Hermitian::symmetrize(&sr.matrix().matmul(sigma.matrix()).matmul(sr.matrix()));
    let ev = inner.eigenvalues()?;
    // Rounding noise of size 1e-16 would contribute 1e-8 after the root.
    let floor = 1e-13 * ev.last().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let root: f64 = ev.iter().filter(|&&x| x > floor).map(|&x| x.sqrt()).sum();
    Ok((root * root).clamp(0.0, f64::INFINITY))
}

/// Normalized `|Phi+>` amplitudes scaled to `sum_i |ii>` (unnormalized).
pub fn max_entangled_vector(d: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d * d];
    for i in 0..d {
        v[i * d + i] = ONE;
    }
    v
}

/// Unnormalized `Phi+ = sum_ij |ii><jj|`.
pub fn max_entangled(d: usize) -> Hermitian {
    Hermitian::projector(&max_entangled_vector(d))
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).unwrap()
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

/// Deviation of `U†U` from the identity (Frobenius).
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (&u.adjoint().matmul(u) - &CMatrix::identity(u.rows())).frobenius_norm()
}

/// Haar-ish random unitary via Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = random_gaussian(d, d, rng);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
    for c in 0..d {
        let mut v = g.col(c);
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        cols.push(v);
    }
    CMatrix::from_fn(d, d, |r, c| cols[c][r])
}

pub fn random_gaussian<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Random density operator `G G† / Tr(G G†)` with a `d x rank` Gaussian `G`.
pub fn random_density<R: rand::Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityOperator {
    let g = random_gaussian(d, rank.max(1), rng);
    let m = g.matmul(&g.adjoint());
    let tr = m.trace().re;
    DensityOperator {
        op: Hermitian::symmetrize(&m.scale_real(1.0 / tr)),
        dims: vec![d],
    }
}

/// Random Hermitian with Gaussian entries.
pub fn random_hermitian<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> Hermitian {
    Hermitian::symmetrize(&random_gaussian(d, d, rng))
}

/// Random unit vector.
pub fn random_pure<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let g = random_gaussian(d, 1, rng).into_vec();
    let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.into_iter().map(|z| z / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn herm(rows: &[&[f64]]) -> Hermitian {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Hermitian::new(CMatrix::from_real(n, n, &flat).unwrap(), 1e-12).unwrap()
    }

    fn basis_proj(d: usize, k: usize) -> Hermitian {
        let mut v = vec![ZERO; d];
        v[k] = ONE;
        Hermitian::projector(&v)
    }

    #[test]
    fn kron_identity_and_projectors() {
        let i2 = Hermitian::identity(2);
        assert_eq!(i2.kron(&i2), Hermitian::identity(4));
        let p = basis_proj(2, 0).kron(&basis_proj(2, 1));
        assert_eq!(p, basis_proj(4, 1));
        let z = Hermitian::new(pauli_z(), 1e-12).unwrap();
        let ev = z.kron(&z).eigenvalues().unwrap();
        for (a, b) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kron_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian(2, &mut rng);
        let b = random_hermitian(3, &mut rng);
        let k = a.kron(&b);
        for i in 0..2 {
            for j in 0..2 {
                for x in 0..3 {
                    for y in 0..3 {
                        let lhs = k.matrix()[(i * 3 + x, j * 3 + y)];
                        let rhs = a.matrix()[(i, j)] * b.matrix()[(x, y)];
                        assert!((lhs - rhs).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(2, 2, &mut rng);
        let sigma = random_density(3, 3, &mut rng);
        let prod = rho.op().kron(sigma.op());
        let tr = prod.partial_trace(&[2, 3], &[0]).unwrap();
        assert!((&tr - rho.op()).frobenius_norm() < 1e-12);
        let phi = max_entangled(3).scale(1.0 / 3.0);
        let red = phi.partial_trace(&[3, 3], &[0]).unwrap();
        assert!((&red - &Hermitian::identity(3).scale(1.0 / 3.0)).frobenius_norm() < 1e-14);
        let err = partial_trace(prod.matrix(), &[2, 2], &[0]).unwrap_err();
        assert!(matches!(err, QlaError::Dimension(_)));
    }

    #[test]
    fn partial_trace_middle_subsystem() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density(2, 2, &mut rng);
        let b = random_density(3, 2, &mut rng);
        let c = random_density(2, 1, &mut rng);
        let abc = a.op().kron(b.op()).kron(c.op());
        let ac = abc.partial_trace(&[2, 3, 2], &[0, 2]).unwrap();
        assert!((&ac - &a.op().kron(c.op())).frobenius_norm() < 1e-12);
        let bb = abc.partial_trace(&[2, 3, 2], &[1]).unwrap();
        assert!((&bb - b.op()).frobenius_norm() < 1e-12);
    }

    #[test]
    fn partial_transpose_examples() {
        let phi = max_entangled(2).scale(0.5);
        let pt = phi.partial_transpose(&[2, 2], &[1]).unwrap();
        assert!((pt.min_eigenvalue().unwrap() + 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(6, &mut rng);
        let twice = h
            .partial_transpose(&[2, 3], &[1])
            .unwrap()
            .partial_transpose(&[2, 3], &[1])
            .unwrap();
        assert_eq!(twice, h);
        let rho = random_density(2, 2, &mut rng);
        let sigma = random_density(3, 2, &mut rng);
        let pt = rho.op().kron(sigma.op()).partial_transpose(&[2, 3], &[1]).unwrap();
        assert!((&pt - &rho.op().kron(&sigma.op().transpose())).frobenius_norm() < 1e-14);
        assert!(pt.is_psd(1e-12).unwrap());
    }

    #[test]
    fn permute_swaps_tensor_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(2, &mut rng);
        let b = random_hermitian(3, &mut rng);
        let ab = a.kron(&b);
        let ba = ab.permute_subsystems(&[2, 3], &[1, 0]).unwrap();
        assert!((&ba - &b.kron(&a)).frobenius_norm() < 1e-14);
    }

    #[test]
    fn eig_small_cases() {
        let d = herm(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let ev = d.eigenvalues().unwrap();
        assert_eq!(ev, vec![1.0, 2.0, 3.0]);
        let x = Hermitian::new(pauli_x(), 1e-12).unwrap();
        let ev = x.eigenvalues().unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    /// Roots of the characteristic cubic by the trigonometric method.
    fn cubic_roots(m: &Hermitian) -> [f64; 3] {
        let a = m.matrix();
        let tr = a.trace().re;
        let m2 = a.matmul(a);
        let c2 = 0.5 * (tr * tr - m2.trace().re);
        let det = (a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
            - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
            + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)]))
            .re;
        // x^3 - tr x^2 + c2 x - det = 0; shift x = t + tr/3
        let p = c2 - tr * tr / 3.0;
        let q = -2.0 * tr.powi(3) / 27.0 + tr * c2 / 3.0 - det;
        let r = (-p / 3.0).sqrt();
        let phi = ((-q / 2.0) / r.powi(3)).clamp(-1.0, 1.0).acos();
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            *root = 2.0 * r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + tr / 3.0;
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn eig_matches_cubic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let h = random_hermitian(3, &mut rng);
            let ev = h.eigenvalues().unwrap();
            let roots = cubic_roots(&h);
            for (a, b) in ev.iter().zip(roots) {
                assert!((a - b).abs() < 1e-9, "{ev:?} vs {roots:?}");
            }
        }
    }

    #[test]
    fn eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[2usize, 5, 16, 40, 64] {
            let h = random_hermitian(n, &mut rng);
            let e = h.eig().unwrap();
            let rec = e.reconstruct_with(|x| x);
            assert!((&rec - &h).frobenius_norm() <= 1e-9 * n as f64);
            let vv = e.vectors.adjoint().matmul(&e.vectors);
            assert!((&vv - &CMatrix::identity(n)).max_abs() < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eig_degenerate_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_unitary(6, &mut rng);
        let d = CMatrix::diag_real(&[1.0, 1.0, 1.0, 2.0, 2.0, -3.0]);
        let h = Hermitian::symmetrize(&u.matmul(&d).matmul(&u.adjoint()));
        let ev = h.eigenvalues().unwrap();
        let want = [-3.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let zero = DensityOperator::pure(&[ONE, ZERO]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityOperator::pure(&[C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap();
        let mixed = DensityOperator::maximally_mixed(2);
        assert!((state_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!((state_fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-12);
        assert!((state_fidelity(&mixed, &zero).unwrap() - 0.5).abs() < 1e-12);
        assert!((state_fidelity(&zero, &mixed).unwrap() - 0.5).abs() < 1e-12);
        let three = DensityOperator::maximally_mixed(3);
        assert!(state_fidelity(&zero, &three).is_err());
    }

    #[test]
    fn fidelity_pure_equals_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let v = random_pure(4, &mut rng);
            let phi = DensityOperator::pure(&v).unwrap();
            let sigma = random_density(4, 3, &mut rng);
            let overlap = phi.op().inner(sigma.op());
            let f1 = state_fidelity(&phi, &sigma).unwrap();
            let f2 = state_fidelity(&sigma, &phi).unwrap();
            assert!((f1 - overlap).abs() < 1e-9);
            assert!((f2 - overlap).abs() < 1e-9);
        }
    }

    #[test]
    fn cholesky_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = random_gaussian(5, 5, &mut rng);
        let a = Hermitian::symmetrize(&(&g.matmul(&g.adjoint()) + &CMatrix::identity(5)));
        let inv = hpd_inverse(&a).unwrap();
        let prod = a.matrix().matmul(inv.matrix());
        assert!((&prod - &CMatrix::identity(5)).max_abs() < 1e-12);
        assert!(cholesky(&Hermitian::from_real_diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::from_hermitian(Hermitian::from_real_diag(&[0.5, 0.6])).is_err());
        assert!(DensityOperator::from_hermitian(Hermitian::from_real_diag(&[1.2, -0.2])).is_err());
        assert!(DensityOperator::new(Hermitian::from_real_diag(&[0.5, 0.5]), vec![3]).is_err());
        assert!(Hermitian::new(CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap(), 1e-12).is_err());
    }

    #[test]
    fn norms() {
        let h = Hermitian::from_real_diag(&[-2.0, 0.5]);
        assert_eq!(h.operator_norm().unwrap(), 2.0);
        assert_eq!(h.trace_norm().unwrap(), 2.5);
        let s = Hermitian::from_real_diag(&[4.0, 0.0]).sqrt_psd(1e-9).unwrap();
        assert_eq!(s, Hermitian::from_real_diag(&[2.0, 0.0]));
    }
}
