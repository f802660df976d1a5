//! Dense complex Hermitian linear algebra.
//!
//! [`HermitianMatrix`] is the carrier type for every covariance-like quantity in
//! the crate. Constructors always store the Hermitian part `(A + A^H) / 2`, so
//! downstream code can rely on exact conjugate symmetry of the stored entries.
//! Factorizations are delegated to `faer`.

mod text;

pub use text::{format_complex, format_matrix, parse_complex, parse_matrix};

use std::fmt;
use std::ops::{Add, Mul, Sub};

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`HermitianMatrix::new`] before the input is
/// rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-8;

/// Eigenvalues below `-PSD_TOL * lambda_max` make a matrix indefinite.
pub const PSD_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense `m x m` complex Hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    mat: Mat<Complex64>,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix({}x{})\n{}", self.dim(), self.dim(), format_matrix(self.as_ref()))
    }
}

/// Largest `|a_ik - conj(a_ki)|` over the matrix.
pub fn max_asymmetry(a: MatRef<'_, Complex64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(a: MatRef<'_, Complex64>) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max(a[(i, j)].norm());
        }
    }
    worst
}

impl HermitianMatrix {
    /// Validates that `mat` is square and Hermitian up to [`HERMITIAN_TOL`]
    /// (relative to its largest entry) and stores its Hermitian part.
    pub fn new(mat: Mat<Complex64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.nrows() == 0 {
            return Err(Error::Dimension("matrix must have dimension >= 1".into()));
        }
        let asym = max_asymmetry(mat.as_ref());
        if !(asym <= HERMITIAN_TOL * max_abs(mat.as_ref()).max(1.0)) {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Self::hermitian_part(mat.as_ref()))
    }

    /// Hermitian part `(A + A^H) / 2` of a square matrix, without validation.
    ///
    /// Panics if `a` is not square or is empty.
    pub fn hermitian_part(a: MatRef<'_, Complex64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "hermitian_part needs a square matrix");
        assert!(a.nrows() > 0, "hermitian_part needs a non-empty matrix");
        let n = a.nrows();
        let mut out = Mat::<Complex64>::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                if i == j {
                    out[(i, i)] = Complex64::new(v.re, 0.0);
                } else {
                    out[(i, j)] = v;
                    out[(j, i)] = v.conj();
                }
            }
        }
        Self { mat: out }
    }

    /// Builds the matrix from its upper triangle (diagonal imaginary parts are dropped).
    pub fn from_upper_fn(m: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(m > 0, "dimension must be >= 1");
        let mut mat = Mat::<Complex64>::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                let v = f(i, j);
                if i == j {
                    mat[(i, i)] = Complex64::new(v.re, 0.0);
                } else {
                    mat[(i, j)] = v;
                    mat[(j, i)] = v.conj();
                }
            }
        }
        Self { mat }
    }

    pub fn identity(m: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; m])
    }

    pub fn zeros(m: usize) -> Self {
        assert!(m > 0, "dimension must be >= 1");
        Self {
            mat: Mat::zeros(m, m),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let m = diag.len();
        assert!(m > 0, "dimension must be >= 1");
        let mut mat = Mat::<Complex64>::zeros(m, m);
        for (i, &d) in diag.iter().enumerate() {
            mat[(i, i)] = Complex64::new(d, 0.0);
        }
        Self { mat }
    }

    /// Rank-one matrix `v v^H`.
    pub fn outer(v: &[Complex64]) -> Self {
        Self::from_upper_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.mat[(i, j)]
    }

    pub fn as_ref(&self) -> MatRef<'_, Complex64> {
        self.mat.as_ref()
    }

    pub fn to_mat(&self) -> Mat<Complex64> {
        self.mat.clone()
    }

    pub fn into_mat(self) -> Mat<Complex64> {
        self.mat
    }

    pub fn scaled(&self, s: f64) -> Self {
        let m = self.dim();
        Self {
            mat: Mat::from_fn(m, m, |i, j| self.mat[(i, j)] * s),
        }
    }

    /// `self + s * I`
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.mat[(i, i)].re += s;
        }
        out
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &Self, s: f64) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in add_scaled");
        let m = self.dim();
        Self {
            mat: Mat::from_fn(m, m, |i, j| self.mat[(i, j)] + other.mat[(i, j)] * s),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        let m = self.dim();
        let mut s = 0.0;
        for j in 0..m {
            for i in 0..m {
                s += self.mat[(i, j)].norm_sqr();
            }
        }
        s
    }

    /// Real Frobenius inner product `Re Tr(A^H B)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in inner");
        let m = self.dim();
        let mut s = 0.0;
        for j in 0..m {
            for i in 0..m {
                s += (self.mat[(i, j)].conj() * other.mat[(i, j)]).re;
            }
        }
        s
    }

    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in distance");
        let m = self.dim();
        let mut s = 0.0;
        for j in 0..m {
            for i in 0..m {
                s += (self.mat[(i, j)] - other.mat[(i, j)]).norm_sqr();
            }
        }
        s.sqrt()
    }

    /// Block-diagonal `I_blocks ⊗ self`.
    pub fn kron_identity(&self, blocks: usize) -> Self {
        assert!(blocks > 0, "kron_identity needs at least one block");
        let m = self.dim();
        let mut mat = Mat::<Complex64>::zeros(m * blocks, m * blocks);
        for b in 0..blocks {
            mat.as_mut()
                .submatrix_mut(b * m, b * m, m, m)
                .copy_from(self.mat.as_ref());
        }
        Self { mat }
    }

    /// The `index`-th `size x size` diagonal block.
    pub fn diagonal_block(&self, index: usize, size: usize) -> Self {
        let start = index * size;
        assert!(start + size <= self.dim(), "diagonal block out of range");
        Self {
            mat: self.mat.as_ref().submatrix(start, start, size, size).to_owned(),
        }
    }

    /// Mean of the `blocks` diagonal blocks of equal size.
    pub fn mean_diagonal_block(&self, blocks: usize) -> Result<Self> {
        if blocks == 0 || self.dim() % blocks != 0 {
            return Err(Error::Dimension(format!(
                "dimension {} is not divisible into {} blocks",
                self.dim(),
                blocks
            )));
        }
        let size = self.dim() / blocks;
        let mut acc = Mat::<Complex64>::zeros(size, size);
        for b in 0..blocks {
            let start = b * size;
            for j in 0..size {
                for i in 0..size {
                    acc[(i, j)] += self.mat[(start + i, start + j)];
                }
            }
        }
        let inv = 1.0 / blocks as f64;
        Ok(Self {
            mat: Mat::from_fn(size, size, |i, j| acc[(i, j)] * inv),
        })
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .mat
            .self_adjoint_eigenvalues(Side::Lower)
            .expect("self-adjoint eigenvalue iteration failed");
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty")
    }

    /// `log |A|` via Cholesky; fails unless the matrix is positive definite.
    pub fn log_det(&self) -> Result<f64> {
        let llt = self.llt()?;
        let l = llt.L();
        Ok((0..self.dim()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
    }

    fn llt(&self) -> Result<faer::linalg::solvers::Llt<Complex64>> {
        self.mat.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite {
            min_eigenvalue: self.min_eigenvalue(),
        })
    }

    /// `A v` for a vector `v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim(), "dimension mismatch in mul_vec");
        let m = self.dim();
        (0..m)
            .map(|i| (0..m).fold(ZERO, |acc, j| acc + self.mat[(i, j)] * v[j]))
            .collect()
    }

    /// `v^H A v` (real for Hermitian `A`).
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        let av = self.mul_vec(v);
        v.iter().zip(&av).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_asymmetry(self.as_ref()) <= tol
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        self.add_scaled(rhs, 1.0)
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        self.add_scaled(rhs, -1.0)
    }
}

/// Matrix product of two Hermitian matrices; the result is a general matrix.
impl Mul for &HermitianMatrix {
    type Output = Mat<Complex64>;
    fn mul(self, rhs: &HermitianMatrix) -> Mat<Complex64> {
        &self.mat * &rhs.mat
    }
}

/// Spectral decomposition `A = V diag(λ) V^H`, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<Complex64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(values) V^H` in this eigenbasis.
    pub fn compose(&self, values: &[f64]) -> HermitianMatrix {
        assert_eq!(values.len(), self.dim(), "eigenvalue count mismatch");
        let v = &self.eigenvectors;
        let m = self.dim();
        let scaled = Mat::from_fn(m, m, |i, j| v[(i, j)] * values[j]);
        let prod = &scaled * v.adjoint();
        HermitianMatrix::hermitian_part(prod.as_ref())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.compose(&self.eigenvalues)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let values: Vec<f64> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        self.compose(&values)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }
}

/// Full eigendecomposition with eigenvalues sorted in descending order.
pub fn hermitian_evd(a: &HermitianMatrix) -> Result<EigenDecomposition> {
    let evd = a
        .mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure)?;
    let m = a.dim();
    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..m).collect();
    let vals: Vec<f64> = (0..m).map(|i| s[i].re).collect();
    order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
    let eigenvalues = order.iter().map(|&k| vals[k]).collect();
    let eigenvectors = Mat::from_fn(m, m, |i, j| u[(i, order[j])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn check_psd(evd: &EigenDecomposition) -> Result<()> {
    let max = evd.max_eigenvalue();
    let min = evd.min_eigenvalue();
    if min < -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Indefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

/// A factor `F` with `F F^H = a`.
///
/// Strictly positive definite inputs get the lower-triangular Cholesky factor;
/// singular PSD inputs (e.g. a sample covariance with fewer samples than
/// dimensions) get `V diag(sqrt(max(λ, 0)))`.
pub fn cholesky_or_sqrt_factor(a: &HermitianMatrix) -> Result<Mat<Complex64>> {
    let evd = hermitian_evd(a)?;
    check_psd(&evd)?;
    let max = evd.max_eigenvalue();
    if evd.min_eigenvalue() > 1e-12 * max {
        if let Ok(llt) = a.mat.llt(Side::Lower) {
            return Ok(llt.L().to_owned());
        }
    }
    let m = a.dim();
    let roots: Vec<f64> = evd.eigenvalues.iter().map(|&x| x.max(0.0).sqrt()).collect();
    Ok(Mat::from_fn(m, m, |i, j| evd.eigenvectors[(i, j)] * roots[j]))
}

/// Inverse of a positive definite matrix.
pub fn pd_inverse(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let llt = a.llt()?;
    let inv = llt.inverse();
    if inv.col_iter().any(|c| c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite())) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: a.min_eigenvalue(),
        });
    }
    Ok(HermitianMatrix::hermitian_part(inv.as_ref()))
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let evd = hermitian_evd(a)?;
    check_psd(&evd)?;
    Ok(evd.map(|x| x.max(0.0).sqrt()))
}

/// `Tr(A^{-1} B)` for positive definite `A`.
pub fn trace_inv_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    use faer::linalg::solvers::Solve;
    let llt = a.llt()?;
    let sol = llt.solve(b.as_ref());
    Ok((0..a.dim()).map(|i| sol[(i, i)].re).sum())
}

/// Identity as a raw `faer` matrix.
pub fn identity_mat(m: usize) -> Mat<Complex64> {
    Mat::from_fn(m, m, |i, j| if i == j { ONE } else { ZERO })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(m: usize, rng: &mut impl Rng) -> HermitianMatrix {
        HermitianMatrix::from_upper_fn(m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn random_pd(m: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let g = Mat::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = &g * g.adjoint();
        HermitianMatrix::hermitian_part(p.as_ref()).shifted(0.1)
    }

    fn rel_err(a: MatRef<'_, Complex64>, b: MatRef<'_, Complex64>) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                num += (a[(i, j)] - b[(i, j)]).norm_sqr();
                den += b[(i, j)].norm_sqr();
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    #[test]
    fn constructor_rejects_non_hermitian() {
        let mut m = identity_mat(2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn constructor_symmetrizes_roundoff() {
        let mut m = identity_mat(2);
        m[(0, 1)] = Complex64::new(0.5, 1e-12);
        m[(1, 0)] = Complex64::new(0.5, 0.0);
        let h = HermitianMatrix::new(m).unwrap();
        assert_eq!(h.get(0, 1), h.get(1, 0).conj());
    }

    #[test]
    fn evd_identity_and_diagonal() {
        let e = hermitian_evd(&HermitianMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);

        let e = hermitian_evd(&HermitianMatrix::from_real_diagonal(&[1.0, 3.0])).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14 && (e.eigenvalues[1] - 1.0).abs() < 1e-14);
        // columns are the standard basis, permuted
        assert!((e.eigenvectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((e.eigenvectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn evd_reconstructs_and_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [1, 2, 4, 7] {
            let a = random_hermitian(m, &mut rng);
            let e = hermitian_evd(&a).unwrap();
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            assert!(rel_err(e.reconstruct().as_ref(), a.as_ref()) < 1e-10);
            let vhv = e.eigenvectors.adjoint() * &e.eigenvectors;
            assert!(rel_err(vhv.as_ref(), identity_mat(m).as_ref()) < 1e-9);
        }
    }

    #[test]
    fn factor_cases() {
        let f = cholesky_or_sqrt_factor(&HermitianMatrix::identity(3)).unwrap();
        assert!(rel_err(f.as_ref(), identity_mat(3).as_ref()) < 1e-15);

        let f = cholesky_or_sqrt_factor(&HermitianMatrix::from_real_diagonal(&[4.0, 9.0])).unwrap();
        assert!((f[(0, 0)].re - 2.0).abs() < 1e-14 && (f[(1, 1)].re - 3.0).abs() < 1e-14);

        // rank one: a single sample
        let y = [Complex64::new(1.0, 0.5), Complex64::new(-0.3, 2.0), Complex64::new(0.0, -1.0)];
        let s = HermitianMatrix::outer(&y);
        let f = cholesky_or_sqrt_factor(&s).unwrap();
        let ffh = &f * f.adjoint();
        assert!(rel_err(ffh.as_ref(), s.as_ref()) < 1e-9);
    }

    #[test]
    fn factor_rejects_indefinite() {
        let a = HermitianMatrix::from_real_diagonal(&[1.0, -0.5]);
        assert!(matches!(cholesky_or_sqrt_factor(&a), Err(Error::Indefinite { .. })));
        assert!(matches!(psd_sqrt(&a), Err(Error::Indefinite { .. })));
    }

    #[test]
    fn inverse_cases() {
        let inv = pd_inverse(&HermitianMatrix::from_real_diagonal(&[2.0, 4.0])).unwrap();
        assert!((inv.get(0, 0).re - 0.5).abs() < 1e-15 && (inv.get(1, 1).re - 0.25).abs() < 1e-15);
        assert!(pd_inverse(&HermitianMatrix::from_real_diagonal(&[1.0, 0.0])).is_err());
        assert!(pd_inverse(&HermitianMatrix::from_real_diagonal(&[1.0, -1.0])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_pd(5, &mut rng);
        let inv = pd_inverse(&a).unwrap();
        let prod = &a * &inv;
        assert!(rel_err(prod.as_ref(), identity_mat(5).as_ref()) < 1e-8);
        let back = pd_inverse(&inv).unwrap();
        assert!(rel_err(back.as_ref(), a.as_ref()) < 1e-7);
    }

    #[test]
    fn sqrt_cases() {
        let r = psd_sqrt(&HermitianMatrix::from_real_diagonal(&[4.0, 9.0])).unwrap();
        assert!((r.get(0, 0).re - 2.0).abs() < 1e-14 && (r.get(1, 1).re - 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_pd(4, &mut rng);
        let r = psd_sqrt(&a).unwrap();
        assert!(rel_err((&r * &r).as_ref(), a.as_ref()) < 1e-9);
        assert!(r.min_eigenvalue() >= 0.0);
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_pd(4, &mut rng);
        let by_eig: f64 = a.eigenvalues().iter().map(|x| x.ln()).sum();
        assert!((a.log_det().unwrap() - by_eig).abs() < 1e-10);
    }

    #[test]
    fn kron_and_blocks() {
        let x = HermitianMatrix::from_upper_fn(2, |i, j| Complex64::new((i + 2 * j) as f64, j as f64 - i as f64));
        let big = x.kron_identity(3);
        assert_eq!(big.dim(), 6);
        for b in 0..3 {
            assert_eq!(big.diagonal_block(b, 2), x);
        }
        assert_eq!(big.get(0, 2), Complex64::new(0.0, 0.0));
        assert_eq!(big.mean_diagonal_block(3).unwrap(), x);
        assert!(big.mean_diagonal_block(4).is_err());
    }
}
