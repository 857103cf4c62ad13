//! Dense complex linear algebra for the small matrices used throughout the
//! crate: Hamiltonians, density matrices, and basis changes.
//!
//! Storage is row-major. Dimensions here never exceed a few dozen, so the
//! routines favour determinism and simplicity over blocking or SIMD.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Default absolute tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Linear-independence tolerance for Gram–Schmidt.
pub const GRAM_SCHMIDT_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries. All entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at ({}, {})",
                k / cols.max(1),
                k % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.iter().flat_map(|row| row.iter().map(|&x| C64::new(x, 0.0))).collect())
    }

    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(r, c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    /// Square matrix with `diag` on the diagonal.
    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Shape("columns of unequal length".into()));
        }
        let mut m = Self::zeros(rows, cols);
        for (j, col) in columns.iter().enumerate() {
            for (i, &z) in col.iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        Ok(m)
    }

    /// Outer product |u⟩⟨v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, &ui) in u.iter().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                m[(i, j)] = ui * vj.conj();
            }
        }
        m
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

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if self.cols != v.len() {
            return Err(Error::Shape(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().into_iter().sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max |A − A†| over all entries; infinite for non-square input.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// (A + A†)/2.
    pub fn hermitian_part(&self) -> Self {
        let mut m = self.clone();
        let n = self.rows;
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        m
    }

    /// Largest entry modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.try_sub(other)?.max_abs())
    }

    /// Copy of the `rows × cols` block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        m
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Operator sugar for same-shape arithmetic; panics on shape mismatch like
// slice indexing would. Fallible variants are `try_add`/`try_sub`/`matmul`.
impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        self.try_add(rhs).expect("matrix shapes differ")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        self.try_sub(rhs).expect("matrix shapes differ")
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        self.matmul(rhs).expect("inner dimensions differ")
    }
}

/// Standard matrix product.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

/// Conjugate transpose.
pub fn adjoint(a: &ComplexMatrix) -> ComplexMatrix {
    a.adjoint()
}

/// ⟨u|v⟩, conjugate-linear in the first argument.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues ascending; eigenvectors stored as the matching columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.eigenvectors.column(k)
    }

    /// V · diag(λ) · V†.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for i in 0..n {
            for (k, &lam) in self.eigenvalues.iter().enumerate() {
                scaled[(i, k)] *= lam;
            }
        }
        &scaled * &self.eigenvectors.adjoint()
    }
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations.
///
/// The input must be square with `max |A − A†| ≤ tol`; the Hermitian part is
/// what gets diagonalised. Eigenvalues come back ascending and each
/// eigenvector has its largest-modulus component real and positive.
pub fn hermitian_eigen(a: &ComplexMatrix, tol: f64) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(Error::Shape(format!("eigendecomposition of {}x{} matrix", a.rows, a.cols)));
    }
    let defect = a.hermiticity_defect();
    if defect > tol {
        return Err(Error::Validation(format!(
            "matrix is not Hermitian: max |A - A^dagger| = {defect:e} exceeds {tol:e}"
        )));
    }
    let n = a.rows;
    let mut m = a.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm();

    let mut converged = n <= 1 || scale == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps (n = {n})"
            )));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q, scale);
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        converged = off <= 1e-15 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let eigenvalues = order.iter().map(|&k| m[(k, k)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        fix_phase(&mut col);
        for (i, z) in col.into_iter().enumerate() {
            vectors[(i, dst)] = z;
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors: vectors })
}

/// One complex Jacobi rotation annihilating `m[(p, q)]`.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize, scale: f64) {
    let apq = m[(p, q)];
    let r = apq.norm();
    if r <= 1e-300 || r < 1e-18 * scale {
        return;
    }
    let phase = apq / r;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau == 0.0 { 1.0 } else { tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt()) };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let ephi_c = phase.conj();
    let n = m.rows;

    // A <- A U with U = [[c, s], [-s e^{-iφ}, c e^{-iφ}]] on (p, q)
    for i in 0..n {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = x * c - y * ephi_c * s;
        m[(i, q)] = x * s + y * ephi_c * c;
    }
    // A <- U† A
    for j in 0..n {
        let x = m[(p, j)];
        let y = m[(q, j)];
        m[(p, j)] = x * c - y * phase * s;
        m[(q, j)] = x * s + y * phase * c;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = C64::new(app - t * r, 0.0);
    m[(q, q)] = C64::new(aqq + t * r, 0.0);

    for i in 0..n {
        let x = v[(i, p)];
        let y = v[(i, q)];
        v[(i, p)] = x * c - y * ephi_c * s;
        v[(i, q)] = x * s + y * ephi_c * c;
    }
}

fn fix_phase(col: &mut [C64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in col.iter().enumerate() {
        let mag = z.norm();
        if mag > best_mag {
            best = i;
            best_mag = mag;
        }
    }
    if best_mag > 0.0 {
        let rot = col[best].conj() / best_mag;
        for z in col.iter_mut() {
            *z *= rot;
        }
        col[best] = C64::new(col[best].re, 0.0);
    }
}

/// Orthonormalises `seeds` in order (classical Gram–Schmidt followed by one
/// re-orthogonalisation pass) and returns them as matrix columns.
///
/// Already-orthonormal leading vectors come back unchanged.
pub fn gram_schmidt(seeds: &[Vec<C64>]) -> Result<ComplexMatrix> {
    let dim = seeds.first().map_or(0, Vec::len);
    if seeds.iter().any(|s| s.len() != dim) {
        return Err(Error::Shape("seed vectors of unequal length".into()));
    }
    if seeds.len() > dim {
        return Err(Error::Validation(format!(
            "{} vectors cannot be independent in dimension {dim}",
            seeds.len()
        )));
    }
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(seeds.len());
    for (k, seed) in seeds.iter().enumerate() {
        let original = norm(seed);
        match orthogonalise(&basis, seed, GRAM_SCHMIDT_TOL * original.max(f64::MIN_POSITIVE)) {
            Some(w) => basis.push(w),
            None => {
                return Err(Error::Validation(format!(
                    "seed vector {k} is linearly dependent on its predecessors"
                )))
            }
        }
    }
    ComplexMatrix::from_columns(&basis)
}

/// Orthonormal basis for the span of `vectors`, silently dropping any vector
/// whose residual after projection falls below `rel_tol` times its norm.
pub(crate) fn span_basis(vectors: &[&[C64]], rel_tol: f64) -> Vec<Vec<C64>> {
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for v in vectors {
        let nv = norm(v);
        if nv == 0.0 {
            continue;
        }
        if let Some(w) = orthogonalise(&basis, v, rel_tol * nv) {
            basis.push(w);
        }
    }
    basis
}

fn orthogonalise(basis: &[Vec<C64>], v: &[C64], abs_tol: f64) -> Option<Vec<C64>> {
    let coeffs: Vec<C64> = basis.iter().map(|q| inner(q, v)).collect();
    let mut w = v.to_vec();
    for (q, c) in basis.iter().zip(&coeffs) {
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
    // second pass
    for q in basis {
        let c = inner(q, &w);
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
    let nw = norm(&w);
    if !(nw > abs_tol) {
        return None;
    }
    for wi in w.iter_mut() {
        *wi /= nw;
    }
    Some(w)
}
