//! Monte-Carlo experiment runners. Trial `k` always uses seed `base_seed + k`.

use std::time::Instant;

use toepcov::crlb::{crlb_report, ThetaParam};
use toepcov::estimators::{estimate, negative_log_likelihood, scm_estimate, DataSet};
use toepcov::projections::StructureSpec;
use toepcov::scenarios::{mse_first_row, sample_dataset, sinr_avg_and_bound, GroundTruthSpec};
use toepcov::HermitianMatrix;

use crate::config::{linear_to_db, EstimatorEntry, EstimatorKind, ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::table::{Cell, ResultTable};

pub const VERSION: &str = concat!("toepcov-cli v", env!("CARGO_PKG_VERSION"));

fn fit(entry: &EstimatorEntry, data: &DataSet) -> Result<HermitianMatrix> {
    if entry.estimator == EstimatorKind::Scm {
        return Ok(scm_estimate(data));
    }
    let settings = entry.settings.clone().unwrap_or_default();
    Ok(estimate(data, &entry.structure, &settings)?.covariance)
}

fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.base_seed.wrapping_add(trial as u64)
}

/// Validates `cfg` and runs it. Nothing is computed if validation fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    let truth = match &cfg.truth {
        Some(t) => Some(t.to_spec().build()?),
        None => None,
    };
    let mut table = match cfg.kind {
        ExperimentKind::Convergence => convergence(&cfg, truth.as_ref().expect("validated"))?,
        ExperimentKind::MseVsN => mse_vs_n(&cfg, truth.as_ref().expect("validated"))?,
        ExperimentKind::Sinr => sinr(&cfg, truth.as_ref().expect("validated"))?,
        ExperimentKind::CrlbTable => crlb_table(&cfg, truth.as_ref().expect("validated"))?,
        ExperimentKind::Runtime => runtime(&cfg)?,
    };
    table.metadata = vec![
        ("kind".into(), cfg.kind.to_string()),
        ("base_seed".into(), cfg.base_seed.to_string()),
        ("trials".into(), cfg.trials.to_string()),
        ("version".into(), VERSION.into()),
        ("config".into(), cfg.to_json()),
    ];
    Ok(table)
}

/// One trace per estimator on the dataset of the first `n` and the base seed.
fn convergence(cfg: &ExperimentConfig, truth: &HermitianMatrix) -> Result<ResultTable> {
    let mut t = ResultTable::new(["estimator", "iter", "nll", "logdet_x"].map(String::from).to_vec());
    let data = sample_dataset(truth, cfg.n_grid[0], cfg.base_seed)?;
    let m = data.dim() as f64;
    for e in &cfg.estimators {
        if e.estimator == EstimatorKind::Scm {
            let r = scm_estimate(&data);
            let nll = negative_log_likelihood(&r, &data).unwrap_or(f64::INFINITY);
            let logdet = r.scaled(m).log_det().unwrap_or(f64::NEG_INFINITY);
            t.push(vec![e.label().into(), 0usize.into(), nll.into(), logdet.into()]);
            continue;
        }
        let est = estimate(&data, &e.structure, e.settings.as_ref().expect("validated"))?;
        for r in &est.trace.records {
            t.push(vec![e.label().into(), r.iter.into(), r.nll.into(), r.logdet_x.into()]);
        }
    }
    Ok(t)
}

/// Estimates of every estimator over all trials at sample size `n`.
fn trial_estimates(cfg: &ExperimentConfig, truth: &HermitianMatrix, n: usize) -> Result<Vec<Vec<HermitianMatrix>>> {
    let mut out = vec![Vec::with_capacity(cfg.trials); cfg.estimators.len()];
    for k in 0..cfg.trials {
        let data = sample_dataset(truth, n, trial_seed(cfg, k))?;
        for (slot, e) in out.iter_mut().zip(&cfg.estimators) {
            slot.push(fit(e, &data)?);
        }
    }
    Ok(out)
}

fn mse_vs_n(cfg: &ExperimentConfig, truth: &HermitianMatrix) -> Result<ResultTable> {
    let mut columns = vec!["n".to_string()];
    columns.extend(cfg.estimators.iter().map(|e| e.label().to_string()));
    columns.push("crlb_sum".into());
    let mut t = ResultTable::new(columns);
    let m = truth.dim();
    for &n in &cfg.n_grid {
        let mut row: Vec<Cell> = vec![n.into()];
        for est in trial_estimates(cfg, truth, n)? {
            row.push(mse_first_row(truth, &est)?.into());
        }
        // The MSE averages over the m first-row entries, so the bound does too.
        let report = crlb_report(&ThetaParam::from_matrix(cfg.crlb_structure, truth, n)?, truth)?;
        row.push(report.mse_bound(m).into());
        t.push(row);
    }
    Ok(t)
}

/// Average SINR and its bound in dB, per sample size and look angle.
fn sinr(cfg: &ExperimentConfig, truth: &HermitianMatrix) -> Result<ResultTable> {
    let Some(GroundTruthSpec::Jammer { scenario }) = cfg.truth.as_ref().map(|t| t.to_spec()) else {
        unreachable!("validated as a jammer truth")
    };
    let mut columns = vec!["n".to_string(), "theta_deg".to_string()];
    columns.extend(cfg.estimators.iter().map(|e| e.label().to_string()));
    columns.push("bound".into());
    let mut t = ResultTable::new(columns);
    for &n in &cfg.n_grid {
        let estimates = trial_estimates(cfg, truth, n)?;
        for &theta in &scenario.look_angles_deg {
            let mut row: Vec<Cell> = vec![n.into(), theta.into()];
            let mut bound = f64::NAN;
            for est in &estimates {
                let s = sinr_avg_and_bound(truth, est, theta)?;
                bound = s.bound;
                row.push(linear_to_db(s.avg_sinr).into());
            }
            row.push(linear_to_db(bound).into());
            t.push(row);
        }
    }
    Ok(t)
}

fn crlb_table(cfg: &ExperimentConfig, truth: &HermitianMatrix) -> Result<ResultTable> {
    let mut t = ResultTable::new(["n", "coeff_index", "bound", "sum_bound"].map(String::from).to_vec());
    for &n in &cfg.n_grid {
        let report = crlb_report(&ThetaParam::from_matrix(cfg.crlb_structure, truth, n)?, truth)?;
        for (c, b) in report.coeff_columns.iter().zip(&report.bounds) {
            t.push(vec![n.into(), (c + 1).into(), (*b).into(), report.sum_bound.into()]);
        }
    }
    Ok(t)
}

/// Wall-clock mean per estimator; the only output that is not reproducible.
fn runtime(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let mut t = ResultTable::new(["m", "estimator", "mean_seconds"].map(String::from).to_vec());
    let n = cfg.n_grid[0];
    for &m in &cfg.m_grid {
        let truth = GroundTruthSpec::RandomStructured {
            m,
            structure: StructureSpec::Toeplitz,
            seed: cfg.base_seed,
        }
        .build()?;
        let mut totals = vec![0.0; cfg.estimators.len()];
        for k in 0..cfg.trials {
            let data = sample_dataset(&truth, n, trial_seed(cfg, k))?;
            for (total, e) in totals.iter_mut().zip(&cfg.estimators) {
                // The dimension varies here, so rho falls back to m per fit.
                let mut e = e.clone();
                if let Some(s) = e.settings.as_mut() {
                    s.rho = None;
                }
                let start = Instant::now();
                fit(&e, &data)?;
                *total += start.elapsed().as_secs_f64();
            }
        }
        for (total, e) in totals.iter().zip(&cfg.estimators) {
            t.push(vec![m.into(), e.label().into(), (total / cfg.trials as f64).into()]);
        }
    }
    Ok(t)
}
