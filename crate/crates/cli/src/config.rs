//! Experiment configuration files (JSON).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toepcov::estimators::{EstimatorConfig, InnerMode};
use toepcov::projections::StructureSpec;
use toepcov::scenarios::{GroundTruthSpec, Jammer, RadarScenario, SincConvention};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    MseVsN,
    Sinr,
    CrlbTable,
    Runtime,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::MseVsN => "mse_vs_n",
            ExperimentKind::Sinr => "sinr",
            ExperimentKind::CrlbTable => "crlb_table",
            ExperimentKind::Runtime => "runtime",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Atom1,
    Atom2,
    Atom2Pocs,
    Scm,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Atom1 => "atom1",
            EstimatorKind::Atom2 => "atom2",
            EstimatorKind::Atom2Pocs => "atom2_pocs",
            EstimatorKind::Scm => "scm",
        }
    }

    fn base_config(self) -> EstimatorConfig {
        match self {
            EstimatorKind::Atom1 => EstimatorConfig::atom1(),
            EstimatorKind::Atom2Pocs => EstimatorConfig {
                inner_mode: InnerMode::Pocs,
                ..EstimatorConfig::atom2()
            },
            EstimatorKind::Atom2 | EstimatorKind::Scm => EstimatorConfig::atom2(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEntry {
    pub estimator: EstimatorKind,
    #[serde(default = "toeplitz")]
    pub structure: StructureSpec,
    /// Column name; defaults to the estimator name.
    #[serde(default)]
    pub label: Option<String>,
    /// Solver settings. Missing keys take the estimator's defaults.
    #[serde(default)]
    pub settings: Option<EstimatorConfig>,
}

impl EstimatorEntry {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.estimator.name())
    }
}

fn toeplitz() -> StructureSpec {
    StructureSpec::Toeplitz
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerDb {
    pub power_db: f64,
    pub angle_deg: f64,
}

/// Ground truth as written in a config. Powers of the radar scenario are in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthConfig {
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
        m: usize,
        jammers: Vec<JammerDb>,
        fractional_bandwidth: f64,
        noise_power_db: f64,
        look_angles_deg: Vec<f64>,
        #[serde(default)]
        sinc: SincConvention,
    },
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl TruthConfig {
    pub fn dim(&self) -> usize {
        match self {
            TruthConfig::Frequencies { m, .. } | TruthConfig::RandomStructured { m, .. } | TruthConfig::Jammer { m, .. } => *m,
        }
    }

    pub fn to_spec(&self) -> GroundTruthSpec {
        match self.clone() {
            TruthConfig::Frequencies { m, frequencies, powers } => GroundTruthSpec::Frequencies { m, frequencies, powers },
            TruthConfig::RandomStructured { m, structure, seed } => GroundTruthSpec::RandomStructured { m, structure, seed },
            TruthConfig::Jammer {
                m,
                jammers,
                fractional_bandwidth,
                noise_power_db,
                look_angles_deg,
                sinc,
            } => GroundTruthSpec::Jammer {
                scenario: RadarScenario {
                    m,
                    jammers: jammers
                        .iter()
                        .map(|j| Jammer {
                            power: db_to_linear(j.power_db),
                            angle_deg: j.angle_deg,
                        })
                        .collect(),
                    fractional_bandwidth,
                    noise_power: db_to_linear(noise_power_db),
                    look_angles_deg,
                    sinc,
                },
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Required by every kind except `runtime`.
    #[serde(default)]
    pub truth: Option<TruthConfig>,
    #[serde(default)]
    pub estimators: Vec<EstimatorEntry>,
    pub n_grid: Vec<usize>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Parametrization of the bound in `crlb_table` and `mse_vs_n`.
    #[serde(default = "toeplitz")]
    pub crlb_structure: StructureSpec,
    /// Dimensions timed by `runtime`, each on a random Toeplitz truth.
    #[serde(default)]
    pub m_grid: Vec<usize>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::config(key, e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_config(&text)
}

impl ExperimentConfig {
    /// Dimension of the truth (or the largest timed dimension).
    pub fn dim(&self) -> usize {
        match &self.truth {
            Some(t) => t.dim(),
            None => self.m_grid.iter().copied().max().unwrap_or(0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Checks every key and fills solver defaults (`rho = m`).
    pub fn validate(&mut self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(CliError::config("n_grid", "must not be empty"));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::config("n_grid", "must be positive and strictly increasing"));
        }
        if self.trials == 0 {
            return Err(CliError::config("trials", "must be >= 1"));
        }
        let dims: Vec<usize> = match (&self.truth, self.kind) {
            (_, ExperimentKind::Runtime) => {
                if self.m_grid.is_empty() || self.m_grid.contains(&0) {
                    return Err(CliError::config("m_grid", "runtime needs a nonempty list of positive dimensions"));
                }
                self.m_grid.clone()
            }
            (None, kind) => return Err(CliError::config("truth", format!("required for {kind}"))),
            (Some(truth), kind) => {
                if truth.dim() == 0 {
                    return Err(CliError::config("truth.m", "must be >= 1"));
                }
                let spec = truth.to_spec();
                if let GroundTruthSpec::Jammer { scenario } = &spec {
                    scenario.validate().map_err(|e| CliError::config("truth", e))?;
                    if kind == ExperimentKind::Sinr && scenario.look_angles_deg.is_empty() {
                        return Err(CliError::config("truth.look_angles_deg", "sinr needs at least one look angle"));
                    }
                } else if kind == ExperimentKind::Sinr {
                    return Err(CliError::config("truth.kind", "sinr needs a jammer truth"));
                }
                spec.build().map_err(|e| CliError::config("truth", e))?;
                vec![truth.dim()]
            }
        };
        if self.kind == ExperimentKind::CrlbTable || self.kind == ExperimentKind::MseVsN {
            for &m in &dims {
                self.crlb_structure.validate(m).map_err(|e| CliError::config("crlb_structure", e))?;
            }
        } else if self.estimators.is_empty() {
            return Err(CliError::config("estimators", format!("{} needs at least one estimator", self.kind)));
        }
        if self.kind == ExperimentKind::MseVsN && self.estimators.is_empty() {
            return Err(CliError::config("estimators", "mse_vs_n needs at least one estimator"));
        }
        for (i, e) in self.estimators.iter_mut().enumerate() {
            let key = |k: &str| format!("estimators[{i}].{k}");
            for &m in &dims {
                e.structure.validate(m).map_err(|err| CliError::config(key("structure"), err))?;
            }
            if e.estimator == EstimatorKind::Atom1 && e.structure != StructureSpec::Toeplitz {
                return Err(CliError::config(
                    key("structure"),
                    format!("atom1 supports only toeplitz, got {}", e.structure.name()),
                ));
            }
            let mut settings = e.settings.clone().unwrap_or_else(|| e.estimator.base_config());
            match e.estimator {
                EstimatorKind::Atom1 => settings.inner_mode = InnerMode::Admm,
                EstimatorKind::Atom2Pocs => settings.inner_mode = InnerMode::Pocs,
                _ if settings.inner_mode == InnerMode::Admm => {
                    return Err(CliError::config(key("settings.inner_mode"), "admm is the atom1 inner solver"));
                }
                _ => {}
            }
            settings.validate().map_err(|err| CliError::config(key("settings"), err))?;
            if settings.rho.is_none() && dims.len() == 1 {
                settings.rho = Some(dims[0] as f64);
            }
            e.settings = Some(settings);
        }
        let mut labels: Vec<&str> = self.estimators.iter().map(|e| e.label()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::config("estimators", format!("duplicate label `{}`; set `label`", w[0])));
        }
        Ok(())
    }
}
