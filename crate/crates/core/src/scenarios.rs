//! Ground-truth generators, Gaussian sampling and the evaluation metrics.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use faer::linalg::solvers::Solve;
use faer::Side;
use log::warn;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{build_dataset, DataSet};
use crate::linalg::{psd_sqrt, HermitianMatrix};
use crate::projections::{project_psd_cone, project_structure, StructureSpec};

/// `[1, e^{jω}, …, e^{j(m-1)ω}]`
pub fn frequency_vector(m: usize, omega: f64) -> Vec<Complex64> {
    (0..m).map(|k| Complex64::from_polar(1.0, omega * k as f64)).collect()
}

/// `Σ p_i a(ω_i) a(ω_i)^H`, a PSD Toeplitz matrix with diagonal `Σ p_i`.
pub fn toeplitz_from_frequencies(m: usize, frequencies: &[f64], powers: &[f64]) -> Result<HermitianMatrix> {
    if m == 0 {
        return Err(Error::Dimension("dimension must be >= 1".into()));
    }
    if frequencies.len() != powers.len() {
        return Err(Error::Dimension(format!(
            "{} frequencies but {} powers",
            frequencies.len(),
            powers.len()
        )));
    }
    if frequencies.is_empty() || frequencies.len() > m {
        return Err(Error::InvalidParameter(format!(
            "need between 1 and m = {m} frequencies, got {}",
            frequencies.len()
        )));
    }
    if let Some(p) = powers.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParameter(format!("powers must be positive, got {p}")));
    }
    let wrapped: Vec<f64> = frequencies.iter().map(|w| w.rem_euclid(2.0 * PI)).collect();
    for i in 0..wrapped.len() {
        for j in 0..i {
            if (wrapped[i] - wrapped[j]).abs() < 1e-12 {
                return Err(Error::InvalidParameter(format!("duplicate frequency {}", frequencies[i])));
            }
        }
    }
    // Toeplitz by construction: entry (i, j) depends on j - i only.
    let row: Vec<Complex64> = (0..m)
        .map(|lag| {
            frequencies
                .iter()
                .zip(powers)
                .map(|(&w, &p)| Complex64::from_polar(p, -w * lag as f64))
                .sum()
        })
        .collect();
    Ok(HermitianMatrix::from_upper_fn(m, |i, j| row[j - i]))
}

/// PSD matrix in the structural set, from alternating projections of a
/// seeded random PSD matrix.
///
/// The structural projections keep the trace and PSD clipping can only raise
/// it, so the iteration cannot collapse to zero as it can from an indefinite
/// start.
pub fn random_structured_truth(m: usize, structure: &StructureSpec, seed: u64) -> Result<HermitianMatrix> {
    structure.validate(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = faer::Mat::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut x = HermitianMatrix::hermitian_part((&b * b.adjoint()).as_ref()).scaled(1.0 / m as f64);
    for _ in 0..100_000 {
        let next = project_psd_cone(&project_structure(&x, structure)?)?;
        let change = next.distance(&x);
        x = next;
        if change <= 1e-10 * x.frobenius_norm().max(1.0) {
            break;
        }
    }
    let x = project_structure(&x, structure)?;
    let floor = 1e-6 * x.trace() / m as f64;
    let lmin = x.min_eigenvalue();
    Ok(if lmin < floor { x.shifted(floor - lmin.min(0.0)) } else { x })
}

/// `n` samples `y_k = √R n_k` with `E[n n^H] = I`, as a [`DataSet`].
pub fn sample_dataset(r: &HermitianMatrix, n: usize, seed: u64) -> Result<DataSet> {
    build_dataset(draw_samples(r, n, seed)?)
}

pub fn draw_samples(r: &HermitianMatrix, n: usize, seed: u64) -> Result<Vec<Vec<Complex64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let root = psd_sqrt(r)?;
    let m = r.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let noise: Vec<Complex64> = (0..m)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * FRAC_1_SQRT_2
                })
                .collect();
            root.mul_vec(&noise)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SincConvention {
    /// `sin(x) / x`
    #[default]
    Unnormalized,
    /// `sin(πx) / (πx)`
    Normalized,
}

impl SincConvention {
    pub fn eval(self, x: f64) -> f64 {
        let t = match self {
            SincConvention::Unnormalized => x,
            SincConvention::Normalized => PI * x,
        };
        if t == 0.0 {
            1.0
        } else {
            t.sin() / t
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jammer {
    /// Linear power.
    pub power: f64,
    pub angle_deg: f64,
}

/// Uniform half-wavelength array facing wideband jammers in white noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarScenario {
    pub m: usize,
    pub jammers: Vec<Jammer>,
    pub fractional_bandwidth: f64,
    /// Linear power.
    pub noise_power: f64,
    #[serde(default)]
    pub look_angles_deg: Vec<f64>,
    #[serde(default)]
    pub sinc: SincConvention,
}

impl RadarScenario {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Dimension("m must be >= 1".into()));
        }
        if self.jammers.iter().any(|j| !(j.power > 0.0) || !(j.angle_deg.abs() < 90.0)) {
            return Err(Error::InvalidParameter("jammer powers must be positive and angles within (-90, 90)".into()));
        }
        if !(self.fractional_bandwidth >= 0.0) || !(self.noise_power > 0.0) {
            return Err(Error::InvalidParameter("need fractional_bandwidth >= 0 and noise_power > 0".into()));
        }
        if self.look_angles_deg.iter().any(|a| !(a.abs() < 90.0)) {
            return Err(Error::InvalidParameter("look angles must lie within (-90, 90)".into()));
        }
        Ok(())
    }
}

pub fn jammer_covariance(s: &RadarScenario) -> Result<HermitianMatrix> {
    s.validate()?;
    let row: Vec<Complex64> = (0..s.m)
        .map(|lag| {
            // Entry (p, q) with q - p = lag has p - q = -lag.
            let d = -(lag as f64);
            s.jammers
                .iter()
                .map(|j| {
                    let phi = PI * j.angle_deg.to_radians().sin();
                    let taper = s.sinc.eval(0.5 * s.fractional_bandwidth * d * phi);
                    Complex64::from_polar(j.power * taper, d * phi)
                })
                .sum::<Complex64>()
        })
        .collect();
    let rs = HermitianMatrix::from_upper_fn(s.m, |i, j| row[j - i]);
    Ok(rs.shifted(s.noise_power))
}

/// `s(θ)_k = e^{jπ k sin θ}`
pub fn steering_vector(m: usize, theta_deg: f64) -> Vec<Complex64> {
    frequency_vector(m, PI * theta_deg.to_radians().sin())
}

/// Monte-Carlo mean of `(1/m) Σ_i |r_i - r̂_i|²` over first rows.
pub fn mse_first_row(truth: &HermitianMatrix, estimates: &[HermitianMatrix]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("no estimates to average".into()));
    }
    let m = truth.dim();
    let mut total = 0.0;
    for e in estimates {
        if e.dim() != m {
            return Err(Error::Dimension(format!("estimate is {}x{}, truth is {m}x{m}", e.dim(), e.dim())));
        }
        total += (0..m).map(|j| (truth.get(0, j) - e.get(0, j)).norm_sqr()).sum::<f64>() / m as f64;
    }
    Ok(total / estimates.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SinrSummary {
    pub avg_sinr: f64,
    pub bound: f64,
    /// Trials whose estimate could not be inverted.
    pub excluded: usize,
}

/// Average SINR of the adaptive weights `ŵ = R̂⁻¹ s(θ)` against the true
/// covariance, and the optimum `s^H R⁻¹ s`.
pub fn sinr_avg_and_bound(truth: &HermitianMatrix, estimates: &[HermitianMatrix], theta_deg: f64) -> Result<SinrSummary> {
    let m = truth.dim();
    let s = steering_vector(m, theta_deg);
    let solve = |a: &HermitianMatrix| -> Option<Vec<Complex64>> {
        let llt = a.to_mat().llt(Side::Lower).ok()?;
        let rhs = faer::Mat::from_fn(m, 1, |i, _| s[i]);
        let w = llt.solve(rhs.as_ref());
        let w: Vec<Complex64> = (0..m).map(|i| w[(i, 0)]).collect();
        w.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(w)
    };
    let w_opt = solve(truth).ok_or(Error::NotPositiveDefinite {
        min_eigenvalue: truth.min_eigenvalue(),
    })?;
    let bound: f64 = s.iter().zip(&w_opt).map(|(a, b)| (a.conj() * b).re).sum();
    let mut total = 0.0;
    let mut used = 0usize;
    for (k, e) in estimates.iter().enumerate() {
        if e.dim() != m {
            return Err(Error::Dimension(format!("estimate is {}x{}, truth is {m}x{m}", e.dim(), e.dim())));
        }
        match solve(e) {
            Some(w) => {
                let gain: Complex64 = w.iter().zip(&s).map(|(a, b)| a.conj() * b).sum();
                total += gain.norm_sqr() / truth.quadratic_form(&w);
                used += 1;
            }
            None => warn!("SINR: estimate {k} is singular; trial excluded"),
        }
    }
    if used == 0 {
        return Err(Error::InvalidParameter("every estimate was singular".into()));
    }
    Ok(SinrSummary {
        avg_sinr: total / used as f64,
        bound,
        excluded: estimates.len() - used,
    })
}

/// Ground truth of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruthSpec {
    Frequencies {
        m: usize,
        frequencies: Vec<f64>,
        powers: Vec<f64>,
    },
    RandomStructured {
        m: usize,
        structure: StructureSpec,
        seed: u64,
    },
    Jammer {
        scenario: RadarScenario,
    },
}

impl GroundTruthSpec {
    pub fn dim(&self) -> usize {
        match self {
            GroundTruthSpec::Frequencies { m, .. } | GroundTruthSpec::RandomStructured { m, .. } => *m,
            GroundTruthSpec::Jammer { scenario } => scenario.m,
        }
    }

    pub fn build(&self) -> Result<HermitianMatrix> {
        match self {
            GroundTruthSpec::Frequencies { m, frequencies, powers } => toeplitz_from_frequencies(*m, frequencies, powers),
            GroundTruthSpec::RandomStructured { m, structure, seed } => random_structured_truth(*m, structure, *seed),
            GroundTruthSpec::Jammer { scenario } => jammer_covariance(scenario),
        }
    }
}

/// Presets for the reference study.
pub mod presets {
    use super::*;

    /// Grid length used for the reference frequencies.
    pub const GRID_LEN: usize = 11;
    pub const AMPLITUDES: [f64; 6] = [3.0, 6.0, 4.0, 1.0, 7.0, 5.0];
    /// DFT bins (1-based columns 2, 3, 5, 7, 8, 11 of an 11-point grid).
    pub const ON_GRID_BINS: [usize; 6] = [1, 2, 4, 6, 7, 10];
    pub const OFF_GRID_FREQUENCY: f64 = 2.5;

    pub fn on_grid_frequencies() -> Vec<f64> {
        ON_GRID_BINS.iter().map(|&k| 2.0 * PI * k as f64 / GRID_LEN as f64).collect()
    }

    /// The on-grid set with its third frequency moved off the grid.
    pub fn off_grid_frequencies() -> Vec<f64> {
        let mut f = on_grid_frequencies();
        f[2] = OFF_GRID_FREQUENCY;
        f
    }

    /// The amplitudes enter directly as the dyad weights, so `R_11 = 26`.
    pub fn reference_powers() -> Vec<f64> {
        AMPLITUDES.to_vec()
    }

    pub fn on_grid_truth() -> GroundTruthSpec {
        GroundTruthSpec::Frequencies {
            m: 6,
            frequencies: on_grid_frequencies(),
            powers: reference_powers(),
        }
    }

    pub fn off_grid_truth() -> GroundTruthSpec {
        GroundTruthSpec::Frequencies {
            m: 6,
            frequencies: off_grid_frequencies(),
            powers: reference_powers(),
        }
    }

    /// Six sensors, two 20 dB jammers at 9.8° and -8.8°, B_f = 0.3, 10 dB noise.
    pub fn radar_scenario() -> RadarScenario {
        RadarScenario {
            m: 6,
            jammers: vec![
                Jammer {
                    power: 100.0,
                    angle_deg: 9.8,
                },
                Jammer {
                    power: 100.0,
                    angle_deg: -8.8,
                },
            ],
            fractional_bandwidth: 0.3,
            noise_power: 10.0,
            look_angles_deg: (-80..=80).step_by(5).map(f64::from).collect(),
            sinc: SincConvention::Unnormalized,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projections::structure_residual;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_frequency_is_a_unit_diagonal_dyad() {
        let r = toeplitz_from_frequencies(4, &[0.9], &[1.0]).unwrap();
        for i in 0..4 {
            assert!((r.get(i, i) - c(1.0, 0.0)).norm() < 1e-15);
        }
        let ev = r.eigenvalues();
        assert!((ev[0] - 4.0).abs() < 1e-12);
        assert!(ev[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn reference_preset_values() {
        let f = presets::on_grid_frequencies();
        let frozen = [0.5712, 1.1424, 2.2848, 3.4272, 3.9984, 5.7120];
        for (a, b) in f.iter().zip(frozen) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        let r = presets::on_grid_truth().build().unwrap();
        assert!((r.get(0, 0).re - 26.0).abs() < 1e-12);
        assert!(structure_residual(&r, &StructureSpec::Toeplitz).unwrap() < 1e-12);
        assert!(r.min_eigenvalue() > 0.0);
        let off = presets::off_grid_truth().build().unwrap();
        assert_eq!(presets::off_grid_frequencies()[2], 2.5);
        assert!((off.get(0, 0).re - 26.0).abs() < 1e-12);
        // frozen entry: Σ p_i e^{-jω_i}
        let expect: Complex64 = presets::on_grid_frequencies()
            .iter()
            .zip(presets::AMPLITUDES)
            .map(|(&w, p)| Complex64::from_polar(p, -w))
            .sum();
        assert!((r.get(0, 1) - expect).norm() < 1e-12);
        assert!((r.get(0, 1) - c(1.0595572936481341, -1.8275290573117111)).norm() < 1e-9, "{}", r.get(0, 1));
    }

    #[test]
    fn frequency_generator_validates() {
        assert!(toeplitz_from_frequencies(3, &[0.1, 0.1 + 2.0 * PI], &[1.0, 1.0]).is_err());
        assert!(toeplitz_from_frequencies(3, &[0.1], &[0.0]).is_err());
        assert!(toeplitz_from_frequencies(2, &[0.1, 0.2, 0.3], &[1.0; 3]).is_err());
        assert!(toeplitz_from_frequencies(2, &[0.1], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn random_truth_is_a_structured_fixed_point() {
        for (m, spec) in [
            (15, StructureSpec::BandedToeplitz { bandwidth: 6 }),
            (6, StructureSpec::Tbt { blocks: 3, block_size: 2 }),
            (5, StructureSpec::Toeplitz),
        ] {
            let r = random_structured_truth(m, &spec, 42).unwrap();
            assert!(structure_residual(&r, &spec).unwrap() <= 1e-9 * r.frobenius_norm());
            assert!(r.min_eigenvalue() > 0.0, "{spec:?}");
            assert!(project_psd_cone(&r).unwrap().distance(&r) <= 1e-9 * r.frobenius_norm());
            let again = random_structured_truth(m, &spec, 42).unwrap();
            assert_eq!(r, again);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_scale_equivariant() {
        let r = toeplitz_from_frequencies(3, &[0.3, 2.0], &[1.0, 0.5]).unwrap().shifted(0.1);
        let a = draw_samples(&r, 20, 7).unwrap();
        assert_eq!(a, draw_samples(&r, 20, 7).unwrap());
        assert_ne!(a, draw_samples(&r, 20, 8).unwrap());
        let b = draw_samples(&r.scaled(4.0), 20, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                assert!((u * 2.0 - v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_sampling_is_consistent() {
        let m = 4;
        let eye = HermitianMatrix::identity(m);
        for n in [100, 1000] {
            for trial in 0..20 {
                let data = sample_dataset(&eye, n, 100 + trial).unwrap();
                assert!(data.scm.distance(&eye) <= 5.0 * m as f64 / (n as f64).sqrt());
                let mean: Vec<Complex64> = (0..m).map(|i| data.samples.iter().map(|y| y[i]).sum::<Complex64>() / n as f64).collect();
                let norm = mean.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!(norm <= 5.0 * (m as f64 / n as f64).sqrt());
            }
        }
    }

    #[test]
    fn jammer_covariance_properties() {
        let mut s = presets::radar_scenario();
        let r = jammer_covariance(&s).unwrap();
        assert!(r.min_eigenvalue() > 0.0);
        assert!(structure_residual(&r, &StructureSpec::Toeplitz).unwrap() < 1e-12);
        for i in 0..6 {
            assert!((r.get(i, i).re - 210.0).abs() < 1e-12);
        }
        s.fractional_bandwidth = 0.0;
        let r0 = jammer_covariance(&s).unwrap();
        let mut expect = HermitianMatrix::identity(6).scaled(10.0);
        for j in &s.jammers {
            let a = frequency_vector(6, PI * j.angle_deg.to_radians().sin());
            expect = expect.add_scaled(&HermitianMatrix::outer(&a), j.power);
        }
        assert!(r0.distance(&expect) < 1e-10);
        s.sinc = SincConvention::Normalized;
        s.fractional_bandwidth = 0.3;
        assert!(jammer_covariance(&s).unwrap().min_eigenvalue() > 0.0);
        s.jammers[0].angle_deg = 95.0;
        assert!(jammer_covariance(&s).is_err());
    }

    #[test]
    fn steering_vectors() {
        assert!(steering_vector(5, 0.0).iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));
        let s = steering_vector(6, 30.0);
        for (k, z) in s.iter().enumerate() {
            assert!((z - Complex64::from_polar(1.0, PI * k as f64 / 2.0)).norm() < 1e-12);
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn first_row_mse() {
        let r = toeplitz_from_frequencies(4, &[0.3], &[2.0]).unwrap().shifted(1.0);
        assert_eq!(mse_first_row(&r, &[r.clone()]).unwrap(), 0.0);
        let mut row = crate::projections::first_row(&r);
        row[2] += c(0.0, 0.3);
        let shifted = crate::projections::toeplitz_from_first_row(&row);
        assert!((mse_first_row(&r, &[shifted.clone()]).unwrap() - 0.09 / 4.0).abs() < 1e-14);
        let manual = ((0..4).map(|j| (r.get(0, j) - shifted.get(0, j)).norm_sqr()).sum::<f64>() / 4.0 + 0.0) / 2.0;
        assert!((mse_first_row(&r, &[shifted, r.clone()]).unwrap() - manual).abs() < 1e-14);
        assert!(mse_first_row(&r, &[]).is_err());
    }

    #[test]
    fn sinr_never_exceeds_the_bound() {
        let truth = jammer_covariance(&presets::radar_scenario()).unwrap();
        let exact = sinr_avg_and_bound(&truth, &[truth.clone()], 10.0).unwrap();
        assert!((exact.avg_sinr - exact.bound).abs() < 1e-12 * exact.bound);
        let ests: Vec<HermitianMatrix> = (0..5).map(|k| sample_dataset(&truth, 12, k).unwrap().scm).collect();
        for theta in [-60.0, 0.0, 9.8, 45.0] {
            let sm = sinr_avg_and_bound(&truth, &ests, theta).unwrap();
            assert!(sm.avg_sinr <= sm.bound * (1.0 + 1e-12));
            assert_eq!(sm.excluded, 0);
        }
        let singular = sinr_avg_and_bound(&truth, &[HermitianMatrix::zeros(6), truth.clone()], 0.0).unwrap();
        assert_eq!(singular.excluded, 1);
    }

    #[test]
    fn ground_truth_spec_serde() {
        let spec = presets::off_grid_truth();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GroundTruthSpec>(&text).unwrap(), spec);
        let err = serde_json::from_str::<GroundTruthSpec>(r#"{"kind":"frequencies","m":2,"frequencies":[1],"power":[1]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("power"), "{err}");
        assert_eq!(spec.dim(), 6);
    }
}
