//! Majorization-minimization estimators for structured covariance MLE.
//!
//! The likelihood is minimized in the reformulated variable `X`
//! (`min log|X|` subject to `Tr(X⁻¹ S) <= 1`, with `R = X / m`). Each outer step
//! linearizes `log|X|` at the current iterate and solves the resulting convex
//! surrogate over the structural set. The constraint is handled through the
//! equivalent LMI `I_m ⊗ X ⪰ r̄ r̄^H`, where `r̄` stacks the columns of a square
//! root of the SCM.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use log::{debug, warn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crlb::{build_derivatives, ThetaParam};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_or_sqrt_factor, hermitian_evd, pd_inverse, trace_inv_product, HermitianMatrix};
use crate::projections::{
    project_intersection, project_psd_cone, project_structure, BlockRepeatedSet, BlockwiseSpectralSet,
    IntersectionMode, LmiSet, Projector, StructureSpec,
};

/// Observed samples and everything derived from them.
#[derive(Clone, Debug)]
pub struct DataSet {
    pub samples: Vec<Vec<Complex64>>,
    pub scm: HermitianMatrix,
    /// `F` with `F F^H = scm`.
    pub factor: Mat<Complex64>,
    /// `r̄ r̄^H` (size `m² x m²`), `r̄` the column stacking of `factor`.
    pub reduced_constraint: HermitianMatrix,
}

impl DataSet {
    pub fn dim(&self) -> usize {
        self.scm.dim()
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

pub fn build_dataset(samples: Vec<Vec<Complex64>>) -> Result<DataSet> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let m = samples[0].len();
    if m == 0 {
        return Err(Error::Dimension("samples must have dimension >= 1".into()));
    }
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != m) {
        return Err(Error::Dimension(format!(
            "sample {i} has length {} but sample 0 has length {m}",
            s.len()
        )));
    }
    let inv_n = 1.0 / n as f64;
    let scm = HermitianMatrix::from_upper_fn(m, |i, j| {
        samples.iter().fold(Complex64::new(0.0, 0.0), |acc, y| acc + y[i] * y[j].conj()) * inv_n
    });
    let factor = cholesky_or_sqrt_factor(&scm)?;
    let rbar: Vec<Complex64> = (0..m * m).map(|k| factor[(k % m, k / m)]).collect();
    let reduced_constraint = HermitianMatrix::outer(&rbar);
    Ok(DataSet {
        samples,
        scm,
        factor,
        reduced_constraint,
    })
}

/// `(1/n) Σ y_i^H R⁻¹ y_i + log|R|`
pub fn negative_log_likelihood(r: &HermitianMatrix, data: &DataSet) -> Result<f64> {
    if r.dim() != data.dim() {
        return Err(Error::Dimension(format!("covariance is {}x{}, data has m = {}", r.dim(), r.dim(), data.dim())));
    }
    let llt = r.to_mat().llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite {
        min_eigenvalue: r.min_eigenvalue(),
    })?;
    let m = r.dim();
    let y = Mat::from_fn(m, data.n(), |i, k| data.samples[k][i]);
    let sol = llt.solve(y.as_ref());
    let mut quad = 0.0;
    for k in 0..data.n() {
        for i in 0..m {
            quad += (y[(i, k)].conj() * sol[(i, k)]).re;
        }
    }
    let l = llt.L();
    let logdet: f64 = (0..m).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    let value = quad / data.n() as f64 + logdet;
    if !value.is_finite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: r.min_eigenvalue(),
        });
    }
    Ok(value)
}

/// Diagonally loaded structural projection of the SCM, scaled onto the
/// constraint boundary `Tr(X⁻¹ S) = 1`.
pub fn init_x0(data: &DataSet, spec: &StructureSpec) -> Result<HermitianMatrix> {
    loaded_start(data, spec, 1e-3)
}

/// Projection of the SCM loaded so its smallest eigenvalue is at least
/// `floor * Tr(S) / m`, then scaled onto the constraint boundary.
fn loaded_start(data: &DataSet, spec: &StructureSpec, floor: f64) -> Result<HermitianMatrix> {
    let m = data.dim();
    let p = project_structure(&data.scm, spec)?;
    let tr = data.scm.trace();
    if !(tr > 0.0) {
        return Err(Error::InvalidParameter("sample covariance is zero".into()));
    }
    let delta = (floor * tr / m as f64 - p.min_eigenvalue()).max(0.0);
    boundary_scaled(p.shifted(delta), data)
}

fn boundary_scaled(x: HermitianMatrix, data: &DataSet) -> Result<HermitianMatrix> {
    let c = trace_inv_product(&x, &data.scm)?;
    Ok(x.scaled(c))
}

/// Lag-averaged SCM with the triangular weights `(m - g) / m`. This is an
/// average of per-sample autocorrelations, hence PSD Toeplitz even when the
/// plain diagonal average is indefinite.
fn tapered_start(data: &DataSet, spec: &StructureSpec) -> Result<Option<HermitianMatrix>> {
    let m = data.dim();
    let band = match spec.structural_part() {
        StructureSpec::Toeplitz => m - 1,
        StructureSpec::BandedToeplitz { bandwidth } => bandwidth,
        _ => return Ok(None),
    };
    let p = project_structure(&data.scm, &StructureSpec::Toeplitz)?;
    let row: Vec<Complex64> = (0..m)
        .map(|g| if g <= band { p.get(0, g) * ((m - g) as f64 / m as f64) } else { Complex64::new(0.0, 0.0) })
        .collect();
    let t = crate::projections::toeplitz_from_first_row(&row);
    // Banding can break definiteness; load as the projected start does.
    let floor = 1e-3 * data.scm.trace() / m as f64;
    let t = t.shifted((floor - t.min_eigenvalue()).max(0.0));
    boundary_scaled(t, data).map(Some)
}

/// Feasible starting points: the loaded projection of [`init_x0`], heavier
/// loadings of it, and (for Toeplitz kinds) the tapered lag average.
pub fn start_candidates(data: &DataSet, spec: &StructureSpec) -> Result<Vec<HermitianMatrix>> {
    let mut out = vec![init_x0(data, spec)?];
    for floor in [1e-2, 1e-1] {
        out.push(loaded_start(data, spec, floor)?);
    }
    if let Some(t) = tapered_start(data, spec)? {
        out.push(t);
    }
    Ok(out)
}

/// The candidate with the smallest `log|X|` (equivalently, the smallest likelihood).
pub fn best_start(data: &DataSet, spec: &StructureSpec) -> Result<HermitianMatrix> {
    let mut best: Option<(f64, HermitianMatrix)> = None;
    for x in start_candidates(data, spec)? {
        let ld = x.log_det()?;
        if best.as_ref().map_or(true, |(b, _)| ld < *b) {
            best = Some((ld, x));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    Admm,
    Dykstra,
    Pocs,
}

/// Which convex majorizer of `log|X|` the inner solver minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// `Tr(X_t⁻¹ X)`
    Linear,
    /// `Tr(X_t⁻¹ X) + w ‖X - X_t‖²_F`
    Proximal { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// ADMM penalty; `None` means `m`.
    pub rho: Option<f64>,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub inner_mode: InnerMode,
    /// Seed for a random PSD initial ADMM multiplier; `None` starts from zero.
    pub multiplier_seed: Option<u64>,
    pub start: StartPoint,
    pub proximal_scale: ProximalScale,
    /// Try `X_t + 2^k (M(X_t) - X_t)` for k = 1, 2, ... after each MM step and
    /// keep the best point that still lowers `log|X|`. Not used for low rank.
    pub step_doubling: bool,
}

/// Units in which the nearest-point surrogate is formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProximalScale {
    /// The data's own units (proximal weight 1).
    Unit,
    /// Units in which the current iterate has mean eigenvalue `target`.
    TraceNormalized { target: f64 },
    /// Coordinates `Y = X_t^{-1/2} X X_t^{-1/2}` in which the iterate is the
    /// identity. Spectral kinds fall back to `TraceNormalized`, starting at
    /// target 1 and backtracking to heavier targets when a step fails to descend.
    Whitened,
}

/// Whitened fallback targets for the initial feasibility projection.
fn fallback_target(spec: &StructureSpec) -> f64 {
    match spec {
        StructureSpec::LowRankPlusScalar { .. } => 10.0,
        _ => 1.0,
    }
}

const MAX_TARGET: f64 = 4096.0;

impl ProximalScale {
    fn sigma(&self, xt: &HermitianMatrix, spec: &StructureSpec) -> f64 {
        let target = match *self {
            ProximalScale::Unit => return 1.0,
            ProximalScale::TraceNormalized { target } => target,
            ProximalScale::Whitened => fallback_target(spec),
        };
        xt.trace() / (xt.dim() as f64 * target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    /// [`init_x0`] only.
    Projected,
    /// Lowest-likelihood member of [`start_candidates`]. Condition-number fits
    /// start from the plain Toeplitz estimate instead.
    BestOf,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            rho: None,
            outer_tol: 1e-4,
            outer_max_iter: 1000,
            inner_tol: 1e-8,
            inner_max_iter: 5000,
            inner_mode: InnerMode::Dykstra,
            multiplier_seed: None,
            start: StartPoint::BestOf,
            proximal_scale: ProximalScale::Whitened,
            step_doubling: true,
        }
    }
}

impl EstimatorConfig {
    pub fn atom1() -> Self {
        Self {
            inner_mode: InnerMode::Admm,
            ..Self::default()
        }
    }

    pub fn atom2() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("outer_tol", self.outer_tol)?;
        positive("inner_tol", self.inner_tol)?;
        if let Some(rho) = self.rho {
            positive("rho", rho)?;
        }
        if self.outer_max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::InvalidParameter("iteration limits must be >= 1".into()));
        }
        Ok(())
    }

    fn rho_for(&self, m: usize) -> f64 {
        self.rho.unwrap_or(m as f64)
    }
}

/// ADMM variables carried across outer iterations.
#[derive(Clone, Debug)]
pub struct Atom1State {
    pub x: HermitianMatrix,
    pub u: HermitianMatrix,
    pub multiplier: HermitianMatrix,
    pub blocks: usize,
}

impl Atom1State {
    pub fn new(x0: &HermitianMatrix, multiplier_seed: Option<u64>) -> Self {
        let m = x0.dim();
        let big = m * m;
        let multiplier = match multiplier_seed {
            None => HermitianMatrix::zeros(big),
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = Mat::from_fn(big, big, |_, _| Complex64::new(rng.gen::<f64>(), 0.0));
                HermitianMatrix::hermitian_part((&v * v.transpose()).as_ref()).scaled(1.0 / big as f64)
            }
        };
        Self {
            x: x0.clone(),
            u: HermitianMatrix::zeros(big),
            multiplier,
            blocks: m,
        }
    }
}

/// Output of one surrogate solve.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    pub x: HermitianMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// ADMM on the Toeplitz surrogate, warm-started from `state`.
pub fn solve_surrogate_admm(
    xt: &HermitianMatrix,
    data: &DataSet,
    surrogate: Surrogate,
    cfg: &EstimatorConfig,
    state: &mut Atom1State,
) -> Result<InnerSolution> {
    let m = data.dim();
    if xt.dim() != m {
        return Err(Error::Dimension(format!("iterate is {}x{}, data has m = {m}", xt.dim(), xt.dim())));
    }
    if cfg.proximal_scale == ProximalScale::Whitened && surrogate == Surrogate::Linear {
        return admm_whitened(xt, data, cfg, state);
    }
    let rho = cfg.rho_for(m);
    let bc = state.blocks;
    // Work in units where xt has mean eigenvalue 1 so that ρ is scale-free.
    // The objective value is unchanged; U scales like X and λ̂ inversely.
    let sigma = xt.trace() / m as f64;
    let rbar = data.reduced_constraint.scaled(1.0 / sigma);
    let xs = xt.scaled(1.0 / sigma);
    let xs_inv = pd_inverse(&xs)?;
    let prox_w = match surrogate {
        Surrogate::Linear => 0.0,
        Surrogate::Proximal { weight } => weight * sigma * sigma,
    };
    // Fixed part of the X-update numerator.
    let base = xs_inv.scaled(-1.0).add_scaled(&xs, 2.0 * prox_w);
    let denom = 2.0 * prox_w + rho * bc as f64;

    let mut x = state.x.scaled(1.0 / sigma);
    let mut u = state.u.scaled(1.0 / sigma);
    let mut multiplier = state.multiplier.scaled(sigma);
    let mut converged = false;
    let mut iterations = cfg.inner_max_iter;
    for iter in 1..=cfg.inner_max_iter {
        let ix = x.kron_identity(bc);
        let psi = (&ix - &rbar).add_scaled(&multiplier, 1.0 / rho);
        u = project_psd_cone(&psi)?;
        let w = &u + &rbar;
        let sum_w = w.mean_diagonal_block(bc)?.scaled(bc as f64);
        let sum_l = multiplier.mean_diagonal_block(bc)?.scaled(bc as f64);
        let lambda = base.add_scaled(&sum_w, rho).add_scaled(&sum_l, -1.0).scaled(1.0 / denom);
        x = project_structure(&lambda, &StructureSpec::Toeplitz)?;
        let resid = &(&x.kron_identity(bc) - &u) - &rbar;
        multiplier = multiplier.add_scaled(&resid, rho);
        if resid.frobenius_norm() / m as f64 <= cfg.inner_tol {
            converged = true;
            iterations = iter;
            break;
        }
    }
    state.x = x.scaled(sigma);
    state.u = u.scaled(sigma);
    state.multiplier = multiplier.scaled(1.0 / sigma);
    Ok(InnerSolution {
        x: state.x.clone(),
        iterations,
        converged,
    })
}

/// `C X C` for `C` Hermitian, as a Hermitian matrix.
fn congruence(c: &HermitianMatrix, x: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix::hermitian_part(((c * x) * c.as_ref()).as_ref())
}

/// Linear-surrogate ADMM in coordinates `Y = W X W`, `W = X_t^{-1/2}`.
///
/// There the objective is `Tr(Y)`, the lower bound is the outer product of
/// the stacked `W F`, and the Toeplitz set becomes its congruent image. The
/// carried state is mapped into and out of these coordinates (the multiplier
/// as a dual variable), so warm starts survive the change of frame.
fn admm_whitened(xt: &HermitianMatrix, data: &DataSet, cfg: &EstimatorConfig, state: &mut Atom1State) -> Result<InnerSolution> {
    let m = data.dim();
    let bc = state.blocks;
    let rho = cfg.rho_for(m);
    let evd = hermitian_evd(xt)?;
    if evd.min_eigenvalue() <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: evd.min_eigenvalue(),
        });
    }
    let w = evd.map(|x| 1.0 / x.sqrt());
    let w_inv = evd.map(f64::sqrt);
    let (bw, bw_inv) = (w.kron_identity(bc), w_inv.kron_identity(bc));
    let wf = w.as_ref() * data.factor.as_ref();
    let rbar: Vec<Complex64> = (0..m * m).map(|k| wf[(k % m, k / m)]).collect();
    let lower = HermitianMatrix::outer(&rbar);
    let subspace = CongruentSubspace::new(StructureSpec::Toeplitz, &w, 1)?;

    let mut y = congruence(&w, &state.x);
    let mut u = congruence(&bw, &state.u);
    let mut multiplier = congruence(&bw_inv, &state.multiplier);
    let mut theta = subspace.coefficients(&y)?;
    let denom = rho * bc as f64;
    let minus_eye = HermitianMatrix::identity(m).scaled(-1.0);
    let mut converged = false;
    let mut iterations = cfg.inner_max_iter;
    for iter in 1..=cfg.inner_max_iter {
        let psi = (&y.kron_identity(bc) - &lower).add_scaled(&multiplier, 1.0 / rho);
        u = project_psd_cone(&psi)?;
        let sum_w = (&u + &lower).mean_diagonal_block(bc)?.scaled(bc as f64);
        let sum_l = multiplier.mean_diagonal_block(bc)?.scaled(bc as f64);
        let lambda = minus_eye.add_scaled(&sum_w, rho).add_scaled(&sum_l, -1.0).scaled(1.0 / denom);
        theta = subspace.coefficients(&lambda)?;
        y = CongruentSubspace::combine(&subspace.mapped, &theta);
        let resid = &(&y.kron_identity(bc) - &u) - &lower;
        multiplier = multiplier.add_scaled(&resid, rho);
        if resid.frobenius_norm() / m as f64 <= cfg.inner_tol {
            converged = true;
            iterations = iter;
            break;
        }
    }
    state.x = CongruentSubspace::combine(&subspace.basis, &theta);
    state.u = congruence(&bw_inv, &u);
    state.multiplier = congruence(&bw, &multiplier);
    Ok(InnerSolution {
        x: state.x.clone(),
        iterations,
        converged,
    })
}

/// Nearest-point formulation of the proximal surrogate, solved by Dykstra or
/// POCS over `{I⊗X ⪰ r̄ r̄^H}` and the block-repeated structural set.
pub fn solve_surrogate_projection(
    xt: &HermitianMatrix,
    data: &DataSet,
    spec: &StructureSpec,
    cfg: &EstimatorConfig,
) -> Result<InnerSolution> {
    let m = data.dim();
    if xt.dim() != m {
        return Err(Error::Dimension(format!("iterate is {}x{}, data has m = {m}", xt.dim(), xt.dim())));
    }
    spec.validate(m)?;
    if cfg.proximal_scale == ProximalScale::Whitened && spec.structural_part() == *spec {
        return solve_whitened(xt, data, spec, cfg);
    }
    // Working units: X' = X / sigma, so the unit proximal weight in X' is
    // a weight 1 / sigma² in X.
    let sigma = cfg.proximal_scale.sigma(xt, spec);
    let xs = xt.scaled(1.0 / sigma);
    let b = xs.add_scaled(&pd_inverse(&xs)?, -0.5);
    let init = b.kron_identity(m);
    let scaled_lower;
    let lower = if sigma == 1.0 {
        &data.reduced_constraint
    } else {
        scaled_lower = data.reduced_constraint.scaled(1.0 / sigma);
        &scaled_lower
    };

    let lmi = LmiSet { lower };
    let structure = BlockRepeatedSet {
        block: m,
        spec: spec.structural_part(),
    };
    let extra = match *spec {
        StructureSpec::ToeplitzCondNum { kappa } => Some(BlockwiseSpectralSet::CondNumber { block: m, kappa }),
        StructureSpec::LowRankPlusScalar { rank } => Some(BlockwiseSpectralSet::LowRankPlusScalar { block: m, rank }),
        _ => None,
    };
    let mut sets: Vec<&dyn Projector> = vec![&lmi];
    if let Some(e) = &extra {
        sets.push(e);
    }
    sets.push(&structure);

    let mode = match cfg.inner_mode {
        InnerMode::Pocs => IntersectionMode::Pocs,
        _ if !spec.is_convex() => IntersectionMode::Pocs,
        _ => IntersectionMode::Dykstra,
    };
    let res = project_intersection(&init, &sets, mode, cfg.inner_tol, cfg.inner_max_iter)?;
    Ok(InnerSolution {
        x: res.matrix.diagonal_block(0, m).scaled(sigma),
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// The structural subspace mapped through `X ↦ W X W` (`W` Hermitian PD) and
/// repeated along the block diagonal.
struct CongruentSubspace {
    basis: Vec<HermitianMatrix>,
    mapped: Vec<HermitianMatrix>,
    gram: Mat<f64>,
    blocks: usize,
}

impl CongruentSubspace {
    fn new(structure: StructureSpec, w: &HermitianMatrix, blocks: usize) -> Result<Self> {
        let basis = build_derivatives(&ThetaParam::from_matrix(structure, w, 1)?)?;
        let mapped: Vec<HermitianMatrix> = basis
            .iter()
            .map(|d| HermitianMatrix::hermitian_part(((w * d) * w.as_ref()).as_ref()))
            .collect();
        let k = mapped.len();
        let gram = Mat::from_fn(k, k, |i, j| mapped[i].inner(&mapped[j]));
        Ok(Self {
            basis,
            mapped,
            gram,
            blocks,
        })
    }

    /// Least-squares coefficients of the mean diagonal block of `a`.
    fn coefficients(&self, a: &HermitianMatrix) -> Result<Vec<f64>> {
        let mean = a.mean_diagonal_block(self.blocks)?;
        let rhs = Mat::from_fn(self.mapped.len(), 1, |i, _| self.mapped[i].inner(&mean));
        let llt = self.gram.llt(Side::Lower).map_err(|_| Error::SingularFisher {
            rank: 0,
            dim: self.mapped.len(),
            deficiency: 0,
        })?;
        let sol = llt.solve(rhs.as_ref());
        Ok((0..self.mapped.len()).map(|i| sol[(i, 0)]).collect())
    }

    fn combine(mats: &[HermitianMatrix], theta: &[f64]) -> HermitianMatrix {
        let mut out = HermitianMatrix::zeros(mats[0].dim());
        for (d, &t) in mats.iter().zip(theta) {
            out = out.add_scaled(d, t);
        }
        out
    }
}

impl Projector for CongruentSubspace {
    fn project(&self, a: &HermitianMatrix) -> Result<HermitianMatrix> {
        let theta = self.coefficients(a)?;
        Ok(Self::combine(&self.mapped, &theta).kron_identity(self.blocks))
    }
}

/// Proximal surrogate in whitened coordinates, where it reads
/// `Tr(Y) + ‖Y - I‖²` and the nearest-point target is `I⊗(I/2)`.
fn solve_whitened(xt: &HermitianMatrix, data: &DataSet, spec: &StructureSpec, cfg: &EstimatorConfig) -> Result<InnerSolution> {
    let m = data.dim();
    let evd = hermitian_evd(xt)?;
    if evd.min_eigenvalue() <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: evd.min_eigenvalue(),
        });
    }
    let w = evd.map(|x| 1.0 / x.sqrt());
    // (I⊗W) r̄ is the column stacking of W F.
    let wf = w.as_ref() * data.factor.as_ref();
    let rbar: Vec<Complex64> = (0..m * m).map(|k| wf[(k % m, k / m)]).collect();
    let lower = HermitianMatrix::outer(&rbar);
    let lmi = LmiSet { lower: &lower };
    let subspace = CongruentSubspace::new(*spec, &w, m)?;
    let init = HermitianMatrix::identity(m * m).scaled(0.5);
    let mode = match cfg.inner_mode {
        InnerMode::Pocs => IntersectionMode::Pocs,
        _ => IntersectionMode::Dykstra,
    };
    let res = project_intersection(&init, &[&lmi, &subspace], mode, cfg.inner_tol, cfg.inner_max_iter)?;
    let theta = subspace.coefficients(&res.matrix)?;
    Ok(InnerSolution {
        x: CongruentSubspace::combine(&subspace.basis, &theta),
        iterations: res.iterations,
        converged: res.converged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub nll: f64,
    pub logdet_x: f64,
    /// `‖X_t - X_{t-1}‖_F / ‖X_{t-1}‖_F`; NaN for the initial point.
    pub rel_change: f64,
    pub inner_iters: usize,
    pub inner_converged: bool,
}

/// Why the outer loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// The inner solve failed to decrease `log|X|`; the previous iterate was kept.
    NoDescent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmTrace {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl MmTrace {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIterations
    }

    pub fn final_nll(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.nll)
    }

    pub fn total_inner_iters(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }

    /// True when `log|X_t|` never increases by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.records.windows(2).all(|w| w[1].logdet_x <= w[0].logdet_x + slack)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,nll,logdet_x,rel_change,inner_iters\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{},{}", r.iter, r.nll, r.logdet_x, r.rel_change, r.inner_iters);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Estimate {
    /// `R = X / m`
    pub covariance: HermitianMatrix,
    pub x: HermitianMatrix,
    pub trace: MmTrace,
}

/// Scales `x` onto the constraint boundary `Tr(x⁻¹ S) = 1`.
///
/// Scaling preserves every structural set, and at an exact surrogate optimum
/// the constraint is already active, so this only absorbs inner-solver slack.
fn rescale_to_boundary(x: &HermitianMatrix, data: &DataSet) -> Result<HermitianMatrix> {
    let c = trace_inv_product(x, &data.scm)?;
    Ok(x.scaled(c))
}

fn make_pd(x: HermitianMatrix) -> HermitianMatrix {
    if x.log_det().is_ok() {
        return x;
    }
    let load = 1e-10 * x.trace().abs().max(f64::MIN_POSITIVE) / x.dim() as f64;
    warn!("outer iterate not positive definite; loading diagonal by {load:e}");
    let mut y = x.shifted(load);
    while y.log_det().is_err() {
        let lmin = y.min_eigenvalue();
        y = y.shifted(-lmin + load);
    }
    y
}

const MAX_DOUBLINGS: u32 = 10;

fn condition_number(x: &HermitianMatrix) -> f64 {
    let ev = x.eigenvalues();
    ev[0] / ev[ev.len() - 1]
}

/// Step doubling along the MM direction `next - x`. Candidates are rescaled to
/// the constraint boundary, so accepting one never raises `log|X|`.
///
/// Linear structural sets contain every candidate. The condition-number cone
/// does not, so there a candidate must also keep the bound met by `next`.
fn extrapolate(x: &HermitianMatrix, next: HermitianMatrix, next_logdet: f64, data: &DataSet, kappa: Option<f64>) -> (HermitianMatrix, f64) {
    let dir = &next - x;
    let cond_cap = kappa.map(|k| k.max(condition_number(&next)));
    let mut best = (next, next_logdet);
    let mut alpha = 2.0;
    for _ in 0..MAX_DOUBLINGS {
        let cand = x.add_scaled(&dir, alpha);
        let Ok(cand) = rescale_to_boundary(&cand, data) else { break };
        if cond_cap.is_some_and(|cap| !(condition_number(&cand) <= cap)) {
            break;
        }
        match cand.log_det() {
            Ok(ld) if ld < best.1 => best = (cand, ld),
            _ => break,
        }
        alpha *= 2.0;
    }
    best
}

/// Runs the MM outer loop and returns `R = X* / m` with its trace.
pub fn estimate(data: &DataSet, spec: &StructureSpec, cfg: &EstimatorConfig) -> Result<Estimate> {
    let m = data.dim();
    spec.validate(m)?;
    cfg.validate()?;
    if cfg.inner_mode == InnerMode::Admm && *spec != StructureSpec::Toeplitz {
        return Err(Error::InvalidParameter(format!(
            "ADMM inner solver supports only the Toeplitz structure, got {}",
            spec.name()
        )));
    }
    let mf = m as f64;
    let nll_of = |x: &HermitianMatrix| negative_log_likelihood(&x.scaled(1.0 / mf), data);

    let mut x = match (cfg.start, spec) {
        (StartPoint::Projected, _) => init_x0(data, spec)?,
        // The cone constraint rules out the whitened metric, so warm-start
        // from the plain Toeplitz fit.
        (StartPoint::BestOf, StructureSpec::ToeplitzCondNum { .. }) => estimate(data, &StructureSpec::Toeplitz, cfg)?.x,
        (StartPoint::BestOf, _) => best_start(data, spec)?,
    };
    // Spectral sets may not contain the structural projection of the SCM.
    if spec.structural_part() != *spec {
        let sol = solve_surrogate_projection(&x, data, spec, cfg)?;
        x = rescale_to_boundary(&make_pd(sol.x), data)?;
    }
    let doubling = match *spec {
        _ if !cfg.step_doubling => None,
        StructureSpec::LowRankPlusScalar { .. } => None,
        StructureSpec::ToeplitzCondNum { kappa } => Some(Some(kappa)),
        _ => Some(None),
    };
    let mut logdet = x.log_det()?;
    let mut records = vec![TraceRecord {
        iter: 0,
        nll: nll_of(&x)?,
        logdet_x: logdet,
        rel_change: f64::NAN,
        inner_iters: 0,
        inner_converged: true,
    }];
    let mut admm = (cfg.inner_mode == InnerMode::Admm).then(|| Atom1State::new(&x, cfg.multiplier_seed));
    let mut stop = StopReason::MaxIterations;

    // Under the whitened default, spectral kinds backtrack on the proximal
    // target: every target gives a valid majorizer, so a step that fails to
    // descend is retried with a heavier proximal term before giving up.
    let adaptive = cfg.proximal_scale == ProximalScale::Whitened && spec.structural_part() != *spec;
    let mut target = 1.0;
    let mut step_cfg = cfg.clone();

    'outer: for iter in 1..=cfg.outer_max_iter {
        let (sol, mut next, mut next_logdet) = loop {
            if adaptive {
                step_cfg.proximal_scale = ProximalScale::TraceNormalized { target };
            }
            let sol = match admm.as_mut() {
                Some(state) => solve_surrogate_admm(&x, data, Surrogate::Linear, &step_cfg, state)?,
                None => solve_surrogate_projection(&x, data, spec, &step_cfg)?,
            };
            if !sol.converged {
                debug!("inner solver hit its iteration limit at outer step {iter}");
            }
            let next = rescale_to_boundary(&make_pd(sol.x.clone()), data)?;
            let next_logdet = next.log_det()?;
            if next_logdet <= logdet {
                break (sol, next, next_logdet);
            }
            // Keep X_t. Below the outer tolerance this is inner-solver noise.
            let rel_change = next.distance(&x) / x.frobenius_norm();
            debug!("no descent at outer step {iter} ({next_logdet} > {logdet}, change {rel_change:e}, target {target})");
            if rel_change <= cfg.outer_tol {
                stop = StopReason::Converged;
                break 'outer;
            }
            if !adaptive || target >= MAX_TARGET {
                stop = StopReason::NoDescent;
                break 'outer;
            }
            target *= 4.0;
        };
        if adaptive {
            target = (target / 2.0).max(1.0);
        }
        if let Some(kappa) = doubling {
            (next, next_logdet) = extrapolate(&x, next, next_logdet, data, kappa);
        }
        let rel_change = next.distance(&x) / x.frobenius_norm();
        x = next;
        logdet = next_logdet;
        records.push(TraceRecord {
            iter,
            nll: nll_of(&x)?,
            logdet_x: logdet,
            rel_change,
            inner_iters: sol.iterations,
            inner_converged: sol.converged,
        });
        if rel_change <= cfg.outer_tol {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(Estimate {
        covariance: x.scaled(1.0 / mf),
        x,
        trace: MmTrace { records, stop },
    })
}

pub fn scm_estimate(data: &DataSet) -> HermitianMatrix {
    data.scm.clone()
}
