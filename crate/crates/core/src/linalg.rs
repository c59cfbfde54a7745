//! Dense real linear algebra: a row-major matrix type, symmetric
//! eigendecomposition by cyclic Jacobi rotations, spectral norms by power
//! iteration, matrix polynomials, and the column-sum norm used by the
//! stability certificate.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting empty shapes and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} entries", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("matrix entry ({}, {})", pos / cols, pos % cols),
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Column vector (`len x 1`).
    pub fn column_vector(values: &[f64]) -> Self {
        DenseMatrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, alpha: f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                "axpy",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// `self * other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("inner dimension {}", self.cols),
                format!("{}x{} * {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm_acc(self, other, &mut out);
        Ok(out)
    }

    /// `selfᵀ * other`
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "t_matmul",
                format!("row count {}", self.rows),
                format!("{}x{}ᵀ * {}x{}", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let brow = other.row(k);
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * otherᵀ`
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "matmul_t",
                format!("column count {}", self.cols),
                format!("{}x{} * ({}x{})ᵀ", self.rows, self.cols, other.rows, other.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(arow, other.row(j));
            }
        }
        Ok(out)
    }

    /// `trace(selfᵀ · weight · self)`, the weighted squared Frobenius norm.
    pub fn weighted_sq_norm(&self, weight: &Self) -> Result<f64> {
        if weight.rows != self.rows || weight.cols != self.rows {
            return Err(Error::shape(
                "weighted_sq_norm",
                format!("{0}x{0} weight", self.rows),
                format!("{}x{}", weight.rows, weight.cols),
            ));
        }
        let wx = weight.matmul(self)?;
        Ok(dot(&self.data, &wx.data))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows.min(self.cols) {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square() && self.max_asymmetry() <= tol
    }

    /// Replaces the matrix by `(M + Mᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += a * b`, skipping exact zeros of `a` so that sparse shift
/// operators only touch neighbours.
#[inline]
pub(crate) fn gemm_acc(a: &DenseMatrix, b: &DenseMatrix, out: &mut DenseMatrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.rows, a.rows);
    debug_assert_eq!(out.cols, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let orow = &mut out.data[i * n..(i + 1) * n];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEigen {
    /// Sorted in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `eigenvalues`.
    pub eigenvectors: DenseMatrix,
}

impl SymmetricEigen {
    /// `V diag(values) Vᵀ` for an arbitrary spectrum on this eigenbasis.
    pub fn compose(&self, values: &[f64]) -> Result<DenseMatrix> {
        let n = self.eigenvectors.rows();
        if values.len() != n {
            return Err(Error::shape("compose", n, values.len()));
        }
        let v = &self.eigenvectors;
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for (k, lam) in values.iter().enumerate() {
                    acc += v[(i, k)] * lam * v[(j, k)];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.compose(&self.eigenvalues)
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(m: &DenseMatrix) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    let n = m.rows;
    let mut a = m.clone();
    a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius();
    let target = f64::EPSILON * 1e-2 * scale;

    let off_norm = |a: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "sym_eigen (Jacobi sweeps)",
                iterations: JACOBI_MAX_SWEEPS,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[(k, p)] = np;
                    a[(p, k)] = np;
                    a[(k, q)] = nq;
                    a[(q, k)] = nq;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_RTOL: f64 = 1e-12;

/// Largest singular value, by power iteration on `mᵀm`.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.data.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let n = m.cols;
    let start = vec![1.0 / (n as f64).sqrt(); n];
    // A structured start can be (nearly) orthogonal to the top singular
    // vector and stall on a smaller one, so a fixed pseudorandom start is
    // always tried as well.
    let mut s = Stream::new(0x5eed, "spectral_norm/restart");
    let mut v = s.normal_vec(n);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let a = power_iterate(m, start).unwrap_or(0.0);
    let b = power_iterate(m, v).unwrap_or(0.0);
    a.max(b).sqrt()
}

/// Returns the converged Rayleigh quotient `‖m v‖²`, or `None` if the
/// iteration collapsed to zero.
fn power_iterate(m: &DenseMatrix, mut v: Vec<f64>) -> Option<f64> {
    let mut w = vec![0.0; m.rows];
    let mut z = vec![0.0; m.cols];
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = dot(m.row(i), &v);
        }
        let q = dot(&w, &w);
        if q == 0.0 {
            return None;
        }
        if (q - prev).abs() <= POWER_RTOL * q {
            return Some(q);
        }
        prev = q;
        z.iter_mut().for_each(|x| *x = 0.0);
        for (i, wi) in w.iter().enumerate() {
            for (zj, mij) in z.iter_mut().zip(m.row(i)) {
                *zj += mij * wi;
            }
        }
        let zn = dot(&z, &z).sqrt();
        if zn == 0.0 {
            return None;
        }
        for (vj, zj) in v.iter_mut().zip(&z) {
            *vj = zj / zn;
        }
    }
    Some(prev)
}

/// `Σ_k coeffs[k] · s^k`, by Horner accumulation.
pub fn matrix_polynomial(s: &DenseMatrix, coeffs: &[f64]) -> Result<DenseMatrix> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            rows: s.rows,
            cols: s.cols,
        });
    }
    let (&last, rest) = coeffs
        .split_last()
        .ok_or_else(|| Error::InvalidArgument("polynomial needs at least one coefficient".into()))?;
    let n = s.rows;
    let mut acc = DenseMatrix::identity(n).scale(last);
    for &c in rest.iter().rev() {
        let mut next = DenseMatrix::zeros(n, n);
        gemm_acc(&acc, s, &mut next);
        for i in 0..n {
            next[(i, i)] += c;
        }
        acc = next;
    }
    Ok(acc)
}

/// `‖M‖₂,₁`: sum over columns of Euclidean column norms.
pub fn norm_21(m: &DenseMatrix) -> f64 {
    (0..m.cols)
        .map(|j| {
            (0..m.rows)
                .map(|i| m[(i, j)] * m[(i, j)])
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// A bijection on node indices. Row `i` of a permuted matrix is row
/// `self[i]` of the original.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &p in &map {
            if p >= map.len() || seen[p] {
                return Err(Error::InvalidPermutation(format!("{map:?} is not a bijection")));
            }
            seen[p] = true;
        }
        Ok(Permutation(map))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn random(n: usize, stream: &mut Stream) -> Self {
        let mut map: Vec<usize> = (0..n).collect();
        stream.shuffle(&mut map);
        Permutation(map)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Permutation(inv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermuteMode {
    Rows,
    Both,
}

pub fn apply_permutation(m: &DenseMatrix, perm: &Permutation, mode: PermuteMode) -> Result<DenseMatrix> {
    if perm.len() != m.rows {
        return Err(Error::InvalidPermutation(format!(
            "permutation of length {} applied to {} rows",
            perm.len(),
            m.rows
        )));
    }
    if mode == PermuteMode::Both && !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let p = perm.as_slice();
    let mut out = DenseMatrix::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        for j in 0..m.cols {
            let src_col = if mode == PermuteMode::Both { p[j] } else { j };
            out[(i, j)] = m[(p[i], src_col)];
        }
    }
    Ok(out)
}

/// Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        let n = m.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("pivot {j} = {d:e}")));
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `M X = rhs` column by column.
    pub fn solve(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.l.rows;
        if rhs.rows != n {
            return Err(Error::shape("cholesky solve", n, rhs.rows));
        }
        let l = &self.l;
        let mut x = rhs.clone();
        for c in 0..rhs.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut s = Stream::new(seed, "test/matrix");
        DenseMatrix::from_vec(rows, cols, s.normal_vec(rows * cols)).unwrap()
    }

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let g = random_matrix(n, n, seed);
        g.add(&g.transpose()).unwrap().scale(0.5)
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DenseMatrix::from_vec(0, 1, vec![]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0]).is_err());
        assert!(matches!(
            DenseMatrix::from_vec(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        let vtv = e.eigenvectors.t_matmul(&e.eigenvectors).unwrap();
        assert!(vtv.sub(&DenseMatrix::identity(3)).unwrap().frobenius() < 1e-10);
    }

    #[test]
    fn eigen_swap_matrix() {
        let m = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let e = sym_eigen(&m).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] + 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = &e.eigenvectors;
        // Eigenvectors are unique up to sign.
        let s0 = v[(0, 0)].signum();
        assert!((s0 * v[(0, 0)] - h).abs() < 1e-14 && (s0 * v[(1, 0)] - h).abs() < 1e-14);
        let s1 = v[(0, 1)].signum();
        assert!((s1 * v[(0, 1)] - h).abs() < 1e-14 && (s1 * v[(1, 1)] + h).abs() < 1e-14);
    }

    #[test]
    fn eigen_reconstructs_random() {
        for seed in 0..5 {
            let m = random_symmetric(5, seed);
            let e = sym_eigen(&m).unwrap();
            let rec = e.reconstruct().unwrap();
            assert!(rec.sub(&m).unwrap().frobenius() <= 1e-8 * m.frobenius());
            let vtv = e.eigenvectors.t_matmul(&e.eigenvectors).unwrap();
            assert!(vtv.sub(&DenseMatrix::identity(5)).unwrap().frobenius() < 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eigen_errors() {
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(sym_eigen(&rect), Err(Error::NotSquare { .. })));
        let asym = DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(sym_eigen(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn spectral_norm_cases() {
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2)), 0.0);
        let d = DenseMatrix::from_diag(&[3.0, -5.0]);
        assert!((spectral_norm(&d) - 5.0).abs() < 5e-9);
        let m = random_matrix(6, 4, 42);
        let e = sym_eigen(&m.t_matmul(&m).unwrap()).unwrap();
        assert!((spectral_norm(&m) - e.eigenvalues[0].sqrt()).abs() < 1e-8);
    }

    #[test]
    fn spectral_norm_restarts_on_orthogonal_start() {
        // The all-ones start lies in the kernel.
        let m = DenseMatrix::from_rows(&[&[1.0, -1.0], &[1.0, -1.0]]).unwrap();
        assert!((spectral_norm(&m) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn polynomial_cases() {
        let s = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(matrix_polynomial(&s, &[1.0]).unwrap(), DenseMatrix::identity(2));
        assert_eq!(matrix_polynomial(&s, &[0.0, 1.0]).unwrap(), s);

        let path = DenseMatrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]])
            .unwrap();
        let p2 = path.matmul(&path).unwrap();
        let mut expected = DenseMatrix::identity(3);
        expected.axpy(2.0, &path).unwrap();
        expected.axpy(3.0, &p2).unwrap();
        assert_eq!(matrix_polynomial(&path, &[1.0, 2.0, 3.0]).unwrap(), expected);
        assert!(matrix_polynomial(&path, &[]).is_err());
        assert!(matrix_polynomial(&DenseMatrix::zeros(2, 3), &[1.0]).is_err());
    }

    #[test]
    fn norm_21_cases() {
        assert_eq!(norm_21(&DenseMatrix::zeros(2, 2)), 0.0);
        assert_eq!(norm_21(&DenseMatrix::column_vector(&[3.0, 4.0])), 5.0);
        let m = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        assert_eq!(norm_21(&m), 3.0);
    }

    #[test]
    fn permutation_cases() {
        let col = DenseMatrix::column_vector(&[1.0, 2.0]);
        assert_eq!(
            apply_permutation(&col, &Permutation::identity(2), PermuteMode::Rows).unwrap(),
            col
        );
        let swap = Permutation::new(vec![1, 0]).unwrap();
        assert_eq!(
            apply_permutation(&col, &swap, PermuteMode::Rows).unwrap(),
            DenseMatrix::column_vector(&[2.0, 1.0])
        );
        let s = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(apply_permutation(&s, &swap, PermuteMode::Both).unwrap(), s);
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(apply_permutation(&col, &swap, PermuteMode::Both).is_err());
    }

    #[test]
    fn cholesky_solves() {
        let g = random_matrix(4, 4, 9);
        let mut m = g.t_matmul(&g).unwrap();
        for i in 0..4 {
            m[(i, i)] += 1.0;
        }
        let rhs = random_matrix(4, 2, 10);
        let x = Cholesky::new(&m).unwrap().solve(&rhs).unwrap();
        assert!(m.matmul(&x).unwrap().sub(&rhs).unwrap().frobenius() < 1e-10);
        let neg = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(Cholesky::new(&neg).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn submultiplicative(seed in 0u64..10_000) {
                let a = random_matrix(5, 4, seed);
                let b = random_matrix(4, 3, seed.wrapping_add(77));
                let ab = a.matmul(&b).unwrap();
                prop_assert!(spectral_norm(&ab) <= spectral_norm(&a) * spectral_norm(&b) + 1e-9);
            }

            #[test]
            fn norm_permutation_invariant(seed in 0u64..10_000) {
                let m = random_matrix(6, 6, seed);
                let mut s = Stream::new(seed, "test/perm");
                let p = Permutation::random(6, &mut s);
                let pm = apply_permutation(&m, &p, PermuteMode::Both).unwrap();
                prop_assert!((spectral_norm(&pm) - spectral_norm(&m)).abs() <= 1e-10 * spectral_norm(&m).max(1.0));
            }

            #[test]
            fn unit_coefficient_gives_power(seed in 0u64..10_000, k in 0usize..5) {
                let s = random_symmetric(4, seed).scale(0.5);
                let mut coeffs = vec![0.0; k + 1];
                coeffs[k] = 1.0;
                let poly = matrix_polynomial(&s, &coeffs).unwrap();
                let mut power = DenseMatrix::identity(4);
                for _ in 0..k {
                    power = power.matmul(&s).unwrap();
                }
                prop_assert!(poly.sub(&power).unwrap().max_abs() <= 1e-10);
            }
        }
    }
}
