//! Frobenius-metric projections onto the structural and spectral sets, plus
//! Dykstra / POCS solvers for their intersections.

use faer::{Mat, MatRef};
use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_evd, HermitianMatrix};

/// Structural set a covariance estimate is confined to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StructureSpec {
    Toeplitz,
    /// Hermitian Toeplitz with first row zero beyond `bandwidth`.
    BandedToeplitz { bandwidth: usize },
    /// `blocks x blocks` block Toeplitz with Hermitian Toeplitz blocks of size `block_size`.
    Tbt { blocks: usize, block_size: usize },
    /// Toeplitz, plus a "rank-r PSD part plus a scalar multiple of identity" spectrum.
    LowRankPlusScalar { rank: usize },
    /// Toeplitz with condition number at most `kappa`.
    ToeplitzCondNum { kappa: f64 },
}

impl StructureSpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::Dimension("dimension must be >= 1".into()));
        }
        match *self {
            StructureSpec::Toeplitz => Ok(()),
            StructureSpec::BandedToeplitz { bandwidth } if bandwidth >= m => Err(Error::InvalidParameter(format!(
                "bandwidth {bandwidth} must be below the dimension {m}"
            ))),
            StructureSpec::BandedToeplitz { .. } => Ok(()),
            StructureSpec::Tbt { blocks, block_size } => {
                if blocks == 0 || block_size == 0 || blocks * block_size != m {
                    Err(Error::Dimension(format!(
                        "TBT needs blocks * block_size = m, got {blocks} * {block_size} for m = {m}"
                    )))
                } else {
                    Ok(())
                }
            }
            StructureSpec::LowRankPlusScalar { rank } => {
                if rank == 0 || rank >= m {
                    Err(Error::InvalidParameter(format!("rank must satisfy 1 <= r < m = {m}, got {rank}")))
                } else {
                    Ok(())
                }
            }
            StructureSpec::ToeplitzCondNum { kappa } => {
                if kappa.is_finite() && kappa >= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("kappa must be finite and >= 1, got {kappa}")))
                }
            }
        }
    }

    /// The linear (diagonal-averaging) part of the set.
    pub fn structural_part(&self) -> StructureSpec {
        match self {
            StructureSpec::LowRankPlusScalar { .. } | StructureSpec::ToeplitzCondNum { .. } => StructureSpec::Toeplitz,
            other => *other,
        }
    }

    /// Whether the full set (including any spectral constraint) is convex.
    pub fn is_convex(&self) -> bool {
        !matches!(self, StructureSpec::LowRankPlusScalar { .. })
    }

    pub fn name(&self) -> String {
        match self {
            StructureSpec::Toeplitz => "toeplitz".into(),
            StructureSpec::BandedToeplitz { bandwidth } => format!("banded_toeplitz(b={bandwidth})"),
            StructureSpec::Tbt { blocks, block_size } => format!("tbt(p={blocks},l={block_size})"),
            StructureSpec::LowRankPlusScalar { rank } => format!("low_rank_plus_scalar(r={rank})"),
            StructureSpec::ToeplitzCondNum { kappa } => format!("toeplitz_cond_num(kappa={kappa})"),
        }
    }
}

/// Lag means of a square matrix: entry `g` pools diagonal `+g` with the
/// conjugate of diagonal `-g`. Entry 0 is real.
fn hermitian_lag_means(a: MatRef<'_, Complex64>, max_lag: usize) -> Vec<Complex64> {
    let m = a.nrows();
    (0..=max_lag)
        .map(|g| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..m - g {
                acc += a[(i, i + g)] + a[(i + g, i)].conj();
            }
            let mean = acc / (2.0 * (m - g) as f64);
            if g == 0 {
                Complex64::new(mean.re, 0.0)
            } else {
                mean
            }
        })
        .collect()
}

/// Hermitian Toeplitz matrix with the given first row.
pub fn toeplitz_from_first_row(row: &[Complex64]) -> HermitianMatrix {
    HermitianMatrix::from_upper_fn(row.len(), |i, j| row[j - i])
}

/// First row of a matrix (meaningful for Toeplitz inputs).
pub fn first_row(a: &HermitianMatrix) -> Vec<Complex64> {
    (0..a.dim()).map(|j| a.get(0, j)).collect()
}

/// Nearest Hermitian Toeplitz matrix (banded to `bandwidth`) to an arbitrary square matrix.
pub fn hermitian_toeplitz_part(a: MatRef<'_, Complex64>, bandwidth: usize) -> HermitianMatrix {
    let m = a.nrows();
    let mut row = hermitian_lag_means(a, bandwidth.min(m - 1));
    row.resize(m, Complex64::new(0.0, 0.0));
    toeplitz_from_first_row(&row)
}

fn project_tbt(a: MatRef<'_, Complex64>, p: usize, l: usize) -> HermitianMatrix {
    let m = p * l;
    // Pool every occurrence of block lag w (above and below the block diagonal);
    // the block is Hermitian Toeplitz, so both orientations carry the same data.
    let blocks: Vec<HermitianMatrix> = (0..p)
        .map(|w| {
            let mut acc = Mat::<Complex64>::zeros(l, l);
            for i in 0..p - w {
                let up = a.submatrix(i * l, (i + w) * l, l, l);
                let down = a.submatrix((i + w) * l, i * l, l, l);
                for c in 0..l {
                    for r in 0..l {
                        acc[(r, c)] += up[(r, c)] + down[(r, c)];
                    }
                }
            }
            hermitian_toeplitz_part(acc.as_ref(), l - 1).scaled(1.0 / (2 * (p - w)) as f64)
        })
        .collect();
    HermitianMatrix::from_upper_fn(m, |i, j| {
        let (bi, bj) = (i / l, j / l);
        blocks[bj - bi].get(i % l, j % l)
    })
}

/// Projection onto the linear structural set of `spec`.
///
/// Spectral kinds (low rank, condition number) project onto their Toeplitz part.
pub fn project_structure(a: &HermitianMatrix, spec: &StructureSpec) -> Result<HermitianMatrix> {
    spec.validate(a.dim())?;
    Ok(project_structure_raw(a.as_ref(), spec))
}

/// As [`project_structure`] but accepts any square matrix, pooling each entry
/// with the conjugate of its mirror. `spec` must already be validated.
pub fn project_structure_raw(a: MatRef<'_, Complex64>, spec: &StructureSpec) -> HermitianMatrix {
    let m = a.nrows();
    match spec.structural_part() {
        StructureSpec::Toeplitz => hermitian_toeplitz_part(a, m - 1),
        StructureSpec::BandedToeplitz { bandwidth } => hermitian_toeplitz_part(a, bandwidth),
        StructureSpec::Tbt { blocks, block_size } => project_tbt(a, blocks, block_size),
        _ => unreachable!("structural_part is always linear"),
    }
}

/// Distance of `a` from its structural projection, relative to `‖a‖_F`.
pub fn structure_residual(a: &HermitianMatrix, spec: &StructureSpec) -> Result<f64> {
    let p = project_structure(a, spec)?;
    Ok(a.distance(&p) / a.frobenius_norm().max(f64::MIN_POSITIVE))
}

/// Projection of an `(bc*m) x (bc*m)` matrix onto block-diagonal matrices
/// with `bc` identical structured `m x m` blocks.
pub fn project_block_repeated(a: &HermitianMatrix, block: usize, inner: &StructureSpec) -> Result<HermitianMatrix> {
    if block == 0 || a.dim() % block != 0 {
        return Err(Error::Dimension(format!(
            "dimension {} is not a multiple of the block size {block}",
            a.dim()
        )));
    }
    let bc = a.dim() / block;
    let mean = a.mean_diagonal_block(bc)?;
    let b = project_structure(&mean, inner)?;
    Ok(b.kron_identity(bc))
}

/// Nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn project_psd_cone(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let e = hermitian_evd(a)?;
    if e.min_eigenvalue() >= 0.0 {
        return Ok(a.clone());
    }
    Ok(e.map(|x| x.max(0.0)))
}

/// Nearest matrix `X` with `X - lower` PSD.
pub fn project_lmi(a: &HermitianMatrix, lower: &HermitianMatrix) -> Result<HermitianMatrix> {
    if a.dim() != lower.dim() {
        return Err(Error::Dimension(format!(
            "LMI projection of a {}x{} matrix against a {}x{} bound",
            a.dim(),
            a.dim(),
            lower.dim(),
            lower.dim()
        )));
    }
    let shifted = a - lower;
    let e = hermitian_evd(&shifted)?;
    if e.min_eigenvalue() >= 0.0 {
        return Ok(a.clone());
    }
    Ok(&e.map(|x| x.max(0.0)) + lower)
}

/// Spectrum of the condition-number projection for level `u`.
fn clipped(gamma: &[f64], u: f64, kappa: f64) -> impl Iterator<Item = f64> + '_ {
    gamma.iter().map(move |&g| g.max(u).min(kappa * u))
}

fn waterlevel_cost(gamma: &[f64], u: f64, kappa: f64) -> f64 {
    clipped(gamma, u, kappa).zip(gamma).map(|(l, g)| (l - g) * (l - g)).sum()
}

/// Minimizer over `u >= 0` of `Σ (clamp(γ_i, u, κu) - γ_i)²`.
///
/// The cost is a convex quadratic between consecutive breakpoints
/// `{γ_i} ∪ {γ_i/κ}`, so each segment is solved in closed form. Ties (flat
/// zero-cost plateaus) resolve to the smallest minimizer.
pub fn solve_waterlevel(gamma: &[f64], kappa: f64) -> Result<f64> {
    if gamma.is_empty() {
        return Err(Error::InvalidParameter("waterlevel needs a nonempty spectrum".into()));
    }
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::InvalidParameter(format!("kappa must be finite and >= 1, got {kappa}")));
    }
    let mut bps: Vec<f64> = gamma
        .iter()
        .flat_map(|&g| [g, g / kappa])
        .filter(|&x| x > 0.0)
        .collect();
    bps.push(0.0);
    bps.sort_by(|a, b| a.total_cmp(b));
    bps.dedup();

    let mut best_u = 0.0;
    let mut best_h = waterlevel_cost(gamma, 0.0, kappa);
    let consider = |u: f64, best_u: &mut f64, best_h: &mut f64| {
        let h = waterlevel_cost(gamma, u, kappa);
        if h < *best_h || (h == *best_h && u < *best_u) {
            *best_u = u;
            *best_h = h;
        }
    };
    for (k, &lo) in bps.iter().enumerate() {
        let hi = bps.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let probe = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 + lo.abs() };
        let (mut num, mut den) = (0.0, 0.0);
        for &g in gamma {
            if g < probe {
                num += g;
                den += 1.0;
            } else if g > kappa * probe {
                num += kappa * g;
                den += kappa * kappa;
            }
        }
        let u = if den > 0.0 { (num / den).clamp(lo, hi) } else { lo };
        consider(lo, &mut best_u, &mut best_h);
        consider(u, &mut best_u, &mut best_h);
    }
    Ok(best_u)
}

/// Nearest matrix with condition number at most `kappa` (eigenvalue clipping).
///
/// If no eigenvalue is positive the waterlevel is zero and the result is the
/// zero matrix, the apex of the closed constraint cone.
pub fn project_cond_number(a: &HermitianMatrix, kappa: f64) -> Result<HermitianMatrix> {
    let e = hermitian_evd(a)?;
    let u = solve_waterlevel(&e.eigenvalues, kappa)?;
    if e.min_eigenvalue() > 0.0 && e.max_eigenvalue() <= kappa * e.min_eigenvalue() {
        return Ok(a.clone());
    }
    let values: Vec<f64> = clipped(&e.eigenvalues, u, kappa).collect();
    Ok(e.compose(&values))
}

/// Result of [`project_lowrank_plus_scalar`].
#[derive(Clone, Debug)]
pub struct LowRankProjection {
    pub matrix: HermitianMatrix,
    pub sigma: f64,
    /// The closed form left the set: `β_r < σ*`, so the rank-r part is not PSD.
    pub ordering_violated: bool,
}

/// Keeps the `r` largest eigenvalues and replaces the rest by their mean
/// (clamped at zero).
pub fn project_lowrank_plus_scalar(a: &HermitianMatrix, r: usize) -> Result<LowRankProjection> {
    let m = a.dim();
    if r == 0 || r >= m {
        return Err(Error::InvalidParameter(format!("rank must satisfy 1 <= r < m = {m}, got {r}")));
    }
    let e = hermitian_evd(a)?;
    let tail = &e.eigenvalues[r..];
    let sigma = (tail.iter().sum::<f64>() / tail.len() as f64).max(0.0);
    let ordering_violated = e.eigenvalues[r - 1] < sigma;
    if ordering_violated {
        warn!("low-rank projection: eigenvalue {} below the scalar level {sigma}", e.eigenvalues[r - 1]);
    }
    let mut values = e.eigenvalues.clone();
    values[r..].iter_mut().for_each(|v| *v = sigma);
    Ok(LowRankProjection {
        matrix: e.compose(&values),
        sigma,
        ordering_violated,
    })
}

/// A set that can be projected onto.
pub trait Projector {
    fn project(&self, a: &HermitianMatrix) -> Result<HermitianMatrix>;

    fn is_convex(&self) -> bool {
        true
    }
}

/// Any closure `&HermitianMatrix -> Result<HermitianMatrix>` is a convex projector.
impl<F> Projector for F
where
    F: Fn(&HermitianMatrix) -> Result<HermitianMatrix>,
{
    fn project(&self, a: &HermitianMatrix) -> Result<HermitianMatrix> {
        self(a)
    }
}

/// `{X : X ⪰ lower}`
pub struct LmiSet<'a> {
    pub lower: &'a HermitianMatrix,
}

impl Projector for LmiSet<'_> {
    fn project(&self, a: &HermitianMatrix) -> Result<HermitianMatrix> {
        project_lmi(a, self.lower)
    }
}

/// Block-diagonal matrices with identical structured blocks.
pub struct BlockRepeatedSet {
    pub block: usize,
    pub spec: StructureSpec,
}

impl Projector for BlockRepeatedSet {
    fn project(&self, a: &HermitianMatrix) -> Result<HermitianMatrix> {
        project_block_repeated(a, self.block, &self.spec)
    }
}

/// Spectral constraint applied to each diagonal block independently;
/// off-diagonal blocks are zeroed.
pub enum BlockwiseSpectralSet {
    CondNumber { block: usize, kappa: f64 },
    LowRankPlusScalar { block: usize, rank: usize },
}

impl Projector for BlockwiseSpectralSet {
    fn project(&self, a: &HermitianMatrix) -> Result<HermitianMatrix> {
        let block = match *self {
            BlockwiseSpectralSet::CondNumber { block, .. } | BlockwiseSpectralSet::LowRankPlusScalar { block, .. } => block,
        };
        if block == 0 || a.dim() % block != 0 {
            return Err(Error::Dimension(format!(
                "dimension {} is not a multiple of the block size {block}",
                a.dim()
            )));
        }
        let bc = a.dim() / block;
        let mut out = Mat::<Complex64>::zeros(a.dim(), a.dim());
        for b in 0..bc {
            let d = a.diagonal_block(b, block);
            let p = match *self {
                BlockwiseSpectralSet::CondNumber { kappa, .. } => project_cond_number(&d, kappa)?,
                BlockwiseSpectralSet::LowRankPlusScalar { rank, .. } => project_lowrank_plus_scalar(&d, rank)?.matrix,
            };
            out.as_mut()
                .submatrix_mut(b * block, b * block, block, block)
                .copy_from(p.as_ref());
        }
        Ok(HermitianMatrix::hermitian_part(out.as_ref()))
    }

    fn is_convex(&self) -> bool {
        matches!(self, BlockwiseSpectralSet::CondNumber { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntersectionMode {
    Dykstra,
    Pocs,
}

pub const DEFAULT_INTERSECTION_TOL: f64 = 1e-8;
pub const DEFAULT_INTERSECTION_MAX_ITER: usize = 5000;

#[derive(Clone, Debug)]
pub struct IntersectionResult {
    pub matrix: HermitianMatrix,
    /// Full passes over the set list.
    pub iterations: usize,
    pub converged: bool,
}

/// Cyclic projection onto the intersection of `sets`, starting from `init`.
///
/// Dykstra mode keeps one correction per set and, for convex sets, converges to
/// the point of the intersection nearest `init`. POCS cycles the raw
/// projections. Stops once a full pass changes the iterate by at most
/// `tol` relative Frobenius.
pub fn project_intersection(
    init: &HermitianMatrix,
    sets: &[&dyn Projector],
    mode: IntersectionMode,
    tol: f64,
    max_iter: usize,
) -> Result<IntersectionResult> {
    if sets.is_empty() {
        return Err(Error::InvalidParameter("intersection needs at least one set".into()));
    }
    if max_iter == 0 || !(tol > 0.0) {
        return Err(Error::InvalidParameter("need max_iter >= 1 and tol > 0".into()));
    }
    if mode == IntersectionMode::Dykstra && sets.iter().any(|s| !s.is_convex()) {
        return Err(Error::InvalidParameter(
            "Dykstra corrections need convex sets; use POCS for nonconvex constraints".into(),
        ));
    }
    let mut x = init.clone();
    let mut corrections: Vec<Option<HermitianMatrix>> = vec![None; sets.len()];
    for iter in 1..=max_iter {
        let prev = x.clone();
        for (set, corr) in sets.iter().zip(corrections.iter_mut()) {
            match mode {
                IntersectionMode::Pocs => x = set.project(&x)?,
                IntersectionMode::Dykstra => {
                    let shifted = match corr {
                        Some(c) => &x + c,
                        None => x.clone(),
                    };
                    let y = set.project(&shifted)?;
                    *corr = Some(&shifted - &y);
                    x = y;
                }
            }
        }
        let change = x.distance(&prev) / prev.frobenius_norm().max(f64::MIN_POSITIVE);
        if change <= tol {
            return Ok(IntersectionResult {
                matrix: x,
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(IntersectionResult {
        matrix: x,
        iterations: max_iter,
        converged: false,
    })
}
