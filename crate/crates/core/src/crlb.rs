//! Cramér–Rao bounds for Toeplitz, banded Toeplitz and Toeplitz-block-Toeplitz
//! covariances, via the Slepian–Bangs Fisher information
//! `F_ik = n Re Tr(R⁻¹ ∂_i R R⁻¹ ∂_k R)`.
//!
//! Each structure is parametrized by the real and imaginary parts of the first
//! row of every Hermitian Toeplitz block: `[r_1, Re r_2..Re r_k, Im r_2..Im r_k]`
//! per block, blocks concatenated.

use std::fmt::Write as _;

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pd_inverse, HermitianMatrix};
use crate::projections::StructureSpec;

/// A structured covariance in real coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaParam {
    pub structure: StructureSpec,
    pub m: usize,
    pub theta: Vec<f64>,
    pub n: usize,
}

/// Block layout shared by all supported structures: `blocks` Hermitian
/// Toeplitz blocks of size `size`, each with first-row length `band + 1`.
#[derive(Clone, Copy, Debug)]
struct Layout {
    blocks: usize,
    size: usize,
    band: usize,
}

impl Layout {
    fn of(structure: &StructureSpec, m: usize) -> Result<Self> {
        structure.validate(m)?;
        match *structure {
            StructureSpec::Toeplitz => Ok(Layout {
                blocks: 1,
                size: m,
                band: m - 1,
            }),
            StructureSpec::BandedToeplitz { bandwidth } => Ok(Layout {
                blocks: 1,
                size: m,
                band: bandwidth,
            }),
            StructureSpec::Tbt { blocks, block_size } => Ok(Layout {
                blocks,
                size: block_size,
                band: block_size - 1,
            }),
            _ => Err(Error::InvalidParameter(format!(
                "no Cramér–Rao parametrization for {}",
                structure.name()
            ))),
        }
    }

    /// Real parameters per block.
    fn per_block(&self) -> usize {
        2 * self.band + 1
    }

    fn len(&self) -> usize {
        self.blocks * self.per_block()
    }

    /// First-row coefficients per block (zeros beyond the band excluded).
    fn coeffs_per_block(&self) -> usize {
        self.band + 1
    }

    /// Parameter indices `(re, im)` carrying coefficient `k` (0-based, within block `z`).
    fn coeff_indices(&self, z: usize, k: usize) -> (usize, Option<usize>) {
        let base = z * self.per_block();
        if k == 0 {
            (base, None)
        } else {
            (base + k, Some(base + self.band + k))
        }
    }
}

impl ThetaParam {
    pub fn new(structure: StructureSpec, m: usize, theta: Vec<f64>, n: usize) -> Result<Self> {
        let layout = Layout::of(&structure, m)?;
        if theta.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "{} expects {} parameters, got {}",
                structure.name(),
                layout.len(),
                theta.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("sample count must be >= 1".into()));
        }
        Ok(Self {
            structure,
            m,
            theta,
            n,
        })
    }

    /// Reads the parameters off a matrix assumed to lie in the structure.
    pub fn from_matrix(structure: StructureSpec, r: &HermitianMatrix, n: usize) -> Result<Self> {
        let m = r.dim();
        let layout = Layout::of(&structure, m)?;
        let mut theta = vec![0.0; layout.len()];
        for z in 0..layout.blocks {
            for k in 0..layout.coeffs_per_block() {
                let v = r.get(0, z * layout.size + k);
                let (re, im) = layout.coeff_indices(z, k);
                theta[re] = v.re;
                if let Some(im) = im {
                    theta[im] = v.im;
                }
            }
        }
        Self::new(structure, m, theta, n)
    }

    pub fn covariance(&self) -> Result<HermitianMatrix> {
        let d = build_derivatives(self)?;
        let mut acc = HermitianMatrix::zeros(self.m);
        for (t, di) in self.theta.iter().zip(&d) {
            acc = acc.add_scaled(di, *t);
        }
        Ok(acc)
    }
}

/// `∂R/∂θ_i` for every parameter; `R` is linear in `θ`, so these also form a basis.
pub fn build_derivatives(p: &ThetaParam) -> Result<Vec<HermitianMatrix>> {
    let layout = Layout::of(&p.structure, p.m)?;
    let m = p.m;
    let l = layout.size;
    let mut out = vec![HermitianMatrix::zeros(m); layout.len()];
    for z in 0..layout.blocks {
        for k in 0..layout.coeffs_per_block() {
            let (re, im) = layout.coeff_indices(z, k);
            // Block lag z, in-block lag k: upper entries hold the coefficient,
            // lower entries its conjugate.
            let unit = |v: Complex64| {
                HermitianMatrix::from_upper_fn(m, |i, j| {
                    let (bi, bj) = (i / l, j / l);
                    let (ii, jj) = (i % l, j % l);
                    let block_lag = bj - bi;
                    if block_lag != z {
                        return Complex64::new(0.0, 0.0);
                    }
                    if jj >= ii && jj - ii == k {
                        v
                    } else if ii > jj && ii - jj == k {
                        v.conj()
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            };
            out[re] = unit(Complex64::new(1.0, 0.0));
            if let Some(im) = im {
                out[im] = unit(Complex64::new(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Dense real symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl RealMatrix {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.dim + k]
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.dim, self.dim, |i, k| self.get(i, k))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev = self
            .to_faer()
            .self_adjoint_eigenvalues(Side::Lower)
            .expect("symmetric eigenvalue iteration failed");
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

pub fn fisher_information(p: &ThetaParam, r: &HermitianMatrix) -> Result<RealMatrix> {
    if r.dim() != p.m {
        return Err(Error::Dimension(format!("covariance is {}x{}, parametrization has m = {}", r.dim(), r.dim(), p.m)));
    }
    let r_inv = pd_inverse(r)?.into_mat();
    let a: Vec<Mat<Complex64>> = build_derivatives(p)?
        .iter()
        .map(|d| &r_inv * d.as_ref())
        .collect();
    let k = a.len();
    let m = p.m;
    let mut data = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let mut t = 0.0;
            for u in 0..m {
                for v in 0..m {
                    t += (a[i][(u, v)] * a[j][(v, u)]).re;
                }
            }
            let f = p.n as f64 * t;
            data[i * k + j] = f;
            data[j * k + i] = f;
        }
    }
    Ok(RealMatrix { dim: k, data })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    pub fim: RealMatrix,
    /// Bound on each first-row coefficient, in first-row order (zero band excluded).
    pub bounds: Vec<f64>,
    /// First-row column of each bound.
    pub coeff_columns: Vec<usize>,
    pub sum_bound: f64,
}

impl CrlbReport {
    /// The bound on the first-row MSE `(1/m) Σ |r_i - r̂_i|²`.
    pub fn mse_bound(&self, m: usize) -> f64 {
        self.sum_bound / m as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("coeff_index,bound\n");
        for (c, b) in self.coeff_columns.iter().zip(&self.bounds) {
            let _ = writeln!(out, "{},{}", c + 1, b);
        }
        let _ = writeln!(out, "sum_bound,{}", self.sum_bound);
        out
    }
}

/// Inverse of a Fisher matrix; a rank-deficient input is an error rather than
/// being pseudo-inverted.
fn invert_fisher(fim: &RealMatrix) -> Result<Mat<f64>> {
    let k = fim.dim;
    let ev = fim.eigenvalues();
    let rank = ev.iter().filter(|&&x| x > 1e-12 * ev[0].abs().max(f64::MIN_POSITIVE)).count();
    if rank < k {
        return Err(Error::SingularFisher {
            rank,
            dim: k,
            deficiency: k - rank,
        });
    }
    let llt = fim.to_faer().llt(Side::Lower).map_err(|_| Error::SingularFisher {
        rank,
        dim: k,
        deficiency: 0,
    })?;
    let inv = llt.inverse();
    Ok(Mat::from_fn(k, k, |i, j| 0.5 * (inv[(i, j)] + inv[(j, i)])))
}

pub fn crlb_report(p: &ThetaParam, r: &HermitianMatrix) -> Result<CrlbReport> {
    let layout = Layout::of(&p.structure, p.m)?;
    let fim = fisher_information(p, r)?;
    let inv = invert_fisher(&fim)?;
    let inv_diag = |i: usize| inv[(i, i)];
    let mut bounds = Vec::new();
    let mut coeff_columns = Vec::new();
    for z in 0..layout.blocks {
        for c in 0..layout.coeffs_per_block() {
            let (re, im) = layout.coeff_indices(z, c);
            bounds.push(inv_diag(re) + im.map_or(0.0, inv_diag));
            coeff_columns.push(z * layout.size + c);
        }
    }
    let sum_bound = bounds.iter().sum();
    Ok(CrlbReport {
        fim,
        bounds,
        coeff_columns,
        sum_bound,
    })
}
