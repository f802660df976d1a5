//! Independent solvers used to validate the MM estimators.
//!
//! These work directly in the real parameter vector `θ` of a linear structure
//! and share no code with the MM inner solvers beyond basic linear algebra.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::crlb::{build_derivatives, ThetaParam};
use crate::error::{Error, Result};
use crate::estimators::{negative_log_likelihood, DataSet};
use crate::linalg::{pd_inverse, trace_inv_product, HermitianMatrix};
use crate::projections::StructureSpec;

fn re_trace_product(a: &Mat<Complex64>, b: &Mat<Complex64>) -> f64 {
    let m = a.nrows();
    let mut t = 0.0;
    for u in 0..m {
        for v in 0..m {
            t += (a[(u, v)] * b[(v, u)]).re;
        }
    }
    t
}

/// Result of [`fisher_scoring_mle`].
#[derive(Clone, Debug)]
pub struct ReferenceFit {
    pub covariance: HermitianMatrix,
    pub nll: f64,
    pub iterations: usize,
    /// Gradient norm at termination.
    pub gradient_norm: f64,
}

/// Structured Gaussian MLE by damped Fisher scoring from a PD start.
///
/// The scoring step solves `F(θ) θ⁺ = b(θ)` with
/// `F_ik = Re Tr(R⁻¹ D_i R⁻¹ D_k)` and `b_i = Re Tr(R⁻¹ D_i R⁻¹ S)`; it is halved
/// until the iterate stays PD and the likelihood does not increase.
pub fn fisher_scoring_mle(data: &DataSet, structure: StructureSpec, start: &HermitianMatrix, max_iter: usize, tol: f64) -> Result<ReferenceFit> {
    let m = data.dim();
    let mut p = ThetaParam::from_matrix(structure, start, 1)?;
    let d: Vec<Mat<Complex64>> = build_derivatives(&p)?.into_iter().map(|x| x.into_mat()).collect();
    let k = d.len();
    let s = data.scm.to_mat();
    let mut r = p.covariance()?;
    let mut f = negative_log_likelihood(&r, data)?;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let ri = pd_inverse(&r)?.into_mat();
        let a: Vec<Mat<Complex64>> = d.iter().map(|di| &ri * di).collect();
        let ris = &ri * &s;
        let mut fim = Mat::<f64>::zeros(k, k);
        let mut b = Mat::<f64>::zeros(k, 1);
        let mut g = vec![0.0; k];
        for i in 0..k {
            for j in i..k {
                let v = re_trace_product(&a[i], &a[j]);
                fim[(i, j)] = v;
                fim[(j, i)] = v;
            }
            b[(i, 0)] = re_trace_product(&a[i], &ris);
            // dNLL/dθ_i = Tr(R⁻¹ D_i) - Tr(R⁻¹ D_i R⁻¹ S)
            g[i] = (0..m).map(|u| a[i][(u, u)].re).sum::<f64>() - b[(i, 0)];
        }
        grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if grad_norm <= tol {
            break;
        }
        let llt = fim.llt(Side::Lower).map_err(|_| Error::SingularFisher {
            rank: 0,
            dim: k,
            deficiency: 0,
        })?;
        let target = llt.solve(b.as_ref());
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let theta: Vec<f64> = (0..k).map(|i| p.theta[i] + step * (target[(i, 0)] - p.theta[i])).collect();
            let cand = ThetaParam::new(structure, m, theta, 1)?;
            let rc = cand.covariance()?;
            if let Ok(fc) = negative_log_likelihood(&rc, data) {
                if fc <= f {
                    p = cand;
                    r = rc;
                    f = fc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(ReferenceFit {
        covariance: r,
        nll: f,
        iterations,
        gradient_norm: grad_norm,
    })
}

/// Nelder–Mead minimization of `f` from `x0` with initial simplex edge `scale`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_evals: usize, ftol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale;
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= ftol * (best.abs() + ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..n).map(|j| x_best[j] + 0.5 * (p.0[j] - x_best[j])).collect();
                    let v = f(&x);
                    *p = (x, v);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

fn structured(structure: StructureSpec, m: usize, theta: &[f64]) -> HermitianMatrix {
    ThetaParam::new(structure, m, theta.to_vec(), 1)
        .and_then(|p| p.covariance())
        .expect("theta length fixed by the structure")
}

/// Trace ratio `Tr(X⁻¹ S)`, or `None` when `X` is not PD.
fn feasibility(x: &HermitianMatrix, data: &DataSet) -> Option<f64> {
    (x.min_eigenvalue() > 0.0).then(|| trace_inv_product(x, &data.scm).ok()).flatten()
}

/// Repeated Nelder–Mead restarts until the value stops improving.
fn polish(f: &impl Fn(&[f64]) -> f64, mut theta: Vec<f64>, scale: f64) -> Vec<f64> {
    let mut best = f(&theta);
    for _ in 0..20 {
        let (t, v) = nelder_mead(f, &theta, scale, 20_000, 1e-16);
        theta = t;
        if v >= best - 1e-15 * best.abs().max(1.0) {
            break;
        }
        best = v;
    }
    theta
}

/// Brute-force minimizer of `Tr(A X)` over the linear structure subject to
/// `Tr(X⁻¹ S) <= 1`, for PD `A`.
///
/// For any PD direction `X` the best feasible multiple is `Tr(X⁻¹ S) X`, so
/// the problem reduces to minimizing the scale-free product
/// `Tr(A X) Tr(X⁻¹ S)` over directions.
pub fn linear_surrogate_oracle(a: &HermitianMatrix, data: &DataSet, structure: StructureSpec, start: &HermitianMatrix) -> Result<HermitianMatrix> {
    let m = data.dim();
    let theta0 = ThetaParam::from_matrix(structure, start, 1)?.theta;
    let f = |th: &[f64]| -> f64 {
        let x = structured(structure, m, th);
        match feasibility(&x, data) {
            Some(c) => a.inner(&x).ln() + c.ln(),
            None => f64::INFINITY,
        }
    };
    let theta = polish(&f, theta0, 0.1 * start.trace() / m as f64);
    let x = structured(structure, m, &theta);
    let c = trace_inv_product(&x, &data.scm)?;
    Ok(x.scaled(c))
}

/// Brute-force nearest structured point to `b` (Frobenius) subject to
/// `Tr(X⁻¹ S) <= 1`.
///
/// Bisects the multiplier `μ` of `‖X - b‖² + μ Tr(X⁻¹ S)` until the constraint
/// is active; each penalized problem is strictly convex in the parameters.
pub fn nearest_feasible_oracle(b: &HermitianMatrix, data: &DataSet, structure: StructureSpec, start: &HermitianMatrix) -> Result<HermitianMatrix> {
    let m = data.dim();
    let pb = crate::projections::project_structure(b, &structure)?;
    if feasibility(&pb, data).is_some_and(|c| c <= 1.0) {
        return Ok(pb);
    }
    let scale = 0.1 * start.trace() / m as f64;
    let mut theta = ThetaParam::from_matrix(structure, start, 1)?.theta;
    let solve = |mu: f64, from: &[f64]| -> (Vec<f64>, f64) {
        let f = |th: &[f64]| -> f64 {
            let x = structured(structure, m, th);
            match feasibility(&x, data) {
                Some(c) => x.distance(b).powi(2) + mu * c,
                None => f64::INFINITY,
            }
        };
        let th = polish(&f, from.to_vec(), scale);
        let c = feasibility(&structured(structure, m, &th), data).unwrap_or(f64::INFINITY);
        (th, c)
    };
    // Bracket the multiplier: c(μ) decreases from c(0+) > 1 to 0.
    let (mut lo, mut hi) = (0.0, 1.0);
    loop {
        let (th, c) = solve(hi, &theta);
        theta = th;
        if c <= 1.0 {
            break;
        }
        lo = hi;
        hi *= 4.0;
        if hi > 1e12 {
            return Err(Error::InvalidParameter("could not bracket the multiplier".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (th, c) = solve(mid, &theta);
        theta = th;
        if c > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let x = structured(structure, m, &solve(hi, &theta).0);
    Ok(x)
}

/// Maximum-likelihood fit of `R = Σ_k p_k a(ω_k) a(ω_k)^H`, `p_k >= 0`, over the
/// uniform grid `ω_k = 2πk/grid_len` (the circulant-embedding model).
#[derive(Clone, Debug)]
pub struct GridFit {
    pub powers: Vec<f64>,
    pub covariance: HermitianMatrix,
    pub nll: f64,
    pub iterations: usize,
}

/// Fits the gridded model with the multiplicative update
/// `p_k ← p_k sqrt(a^H R⁻¹ S R⁻¹ a / a^H R⁻¹ a)`, which does not increase the
/// likelihood. Starts from equal powers matching `Tr(S)`.
pub fn grid_fit(data: &DataSet, grid_len: usize, max_iter: usize, tol: f64) -> Result<GridFit> {
    let m = data.dim();
    if grid_len < m {
        return Err(Error::InvalidParameter(format!("grid length {grid_len} is shorter than m = {m}")));
    }
    let atoms: Vec<Vec<Complex64>> = (0..grid_len)
        .map(|k| crate::scenarios::frequency_vector(m, 2.0 * std::f64::consts::PI * k as f64 / grid_len as f64))
        .collect();
    let model = |p: &[f64]| {
        let mut r = HermitianMatrix::zeros(m);
        for (a, &pk) in atoms.iter().zip(p) {
            r = r.add_scaled(&HermitianMatrix::outer(a), pk);
        }
        r
    };
    let mut p = vec![data.scm.trace() / (m * grid_len) as f64; grid_len];
    let mut r = model(&p);
    let mut nll = negative_log_likelihood(&r, data)?;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let ri = pd_inverse(&r)?;
        let ris = &ri * &data.scm;
        let ris = HermitianMatrix::hermitian_part((&ris * ri.as_ref()).as_ref());
        for (pk, a) in p.iter_mut().zip(&atoms) {
            *pk *= (ris.quadratic_form(a) / ri.quadratic_form(a)).sqrt();
        }
        r = model(&p);
        let next = negative_log_likelihood(&r, data)?;
        let done = nll - next <= tol * nll.abs().max(1.0);
        nll = next;
        if done {
            break;
        }
    }
    Ok(GridFit {
        powers: p,
        covariance: r,
        nll,
        iterations,
    })
}

/// Inverse of a real SPD matrix given as a `faer` matrix (test convenience).
pub fn spd_inverse(a: &Mat<f64>) -> Option<Mat<f64>> {
    a.llt(Side::Lower).ok().map(|l| l.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{sample_dataset, toeplitz_from_frequencies};

    #[test]
    fn grid_fit_recovers_on_grid_truth() {
        let truth = crate::scenarios::presets::on_grid_truth().build().unwrap().shifted(1.0);
        let data = sample_dataset(&truth, 4000, 2).unwrap();
        let fit = grid_fit(&data, 11, 20_000, 1e-13).unwrap();
        assert!(fit.nll <= negative_log_likelihood(&truth, &data).unwrap() + 1e-9);
        assert!(fit.powers.iter().all(|&p| p >= 0.0));
        let rel = fit.covariance.distance(&truth) / truth.frobenius_norm();
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (x, v) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2), &[0.0, 0.0], 0.5, 5000, 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5, "{x:?}");
        assert!(v < 1e-10);
    }

    #[test]
    fn scoring_recovers_truth_scale_mle() {
        let truth = toeplitz_from_frequencies(4, &[0.3, 1.7, 4.0], &[1.0, 2.0, 0.5]).unwrap().shifted(0.2);
        let data = sample_dataset(&truth, 2000, 9).unwrap();
        let fit = fisher_scoring_mle(&data, StructureSpec::Toeplitz, &truth, 200, 1e-10).unwrap();
        assert!(fit.gradient_norm < 1e-6, "{}", fit.gradient_norm);
        assert!(fit.nll <= negative_log_likelihood(&truth, &data).unwrap());
        // at the MLE the likelihood equations imply Tr(R⁻¹ S) = m
        let t = crate::linalg::trace_inv_product(&fit.covariance, &data.scm).unwrap();
        assert!((t - 4.0).abs() < 1e-6, "{t}");
    }
}
