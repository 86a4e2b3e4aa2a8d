//! Experiment configuration: flat key = value sections in TOML, one file per
//! experiment. The configuration round-trips losslessly through serde and its
//! hash is taken over the canonical re-serialization, so formatting and
//! comment differences do not change the hash.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use stochrate_core::objectives::Objective;
use stochrate_core::optim::{ScheduleMode, StepSchedule};
use stochrate_core::oracle::StochasticOracle;
use stochrate_core::presets;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    pub schedule: ScheduleSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    /// quadratic | power | least_squares | ls_spectrum | bump | preset
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Explicit eigenvalues for `quadratic`.
    #[serde(default)]
    pub eigs: Option<Vec<f64>>,
    /// CSV path for `least_squares`: one row per sample, features then target.
    #[serde(default)]
    pub dataset: Option<String>,
    /// Spectrum for `ls_spectrum`.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub energies: Option<Vec<f64>>,
    #[serde(default)]
    pub residual: Option<f64>,
    /// Preset name for `preset`: convex_boundary | hp_envelope.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// finite_sum | additive_noise (default finite_sum)
    #[serde(default)]
    pub kind: Option<String>,
    /// Component weights for finite-sum oracles over non-dataset objectives.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub c: Option<f64>,
    pub p: f64,
    #[serde(default)]
    pub alpha0: Option<f64>,
    /// as_rate | hp_rate
    pub mode: String,
    /// When true (default), c and alpha0 are set to the derived cap K0.
    #[serde(default = "default_true")]
    pub auto_cap: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub beta: f64,
    pub t: usize,
    pub seeds: usize,
    pub master_seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Initial iterate: explicit vector, or `w* + w0_offset` per coordinate.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    #[serde(default)]
    pub w0_offset: Option<f64>,
}

fn default_record_every() -> usize {
    10
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub p: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    /// sgd | shb
    pub algo: Vec<String>,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: usize,
    #[serde(default = "default_sweep_t")]
    pub t: usize,
}

fn default_sweep_seeds() -> usize {
    30
}

fn default_sweep_t() -> usize {
    100_000
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.run.beta) {
            bail!("run.beta must be in [0, 1)");
        }
        if self.run.seeds == 0 || self.run.t == 0 {
            bail!("run.seeds and run.t must be positive");
        }
        if !(self.run.delta > 0.0 && self.run.delta < 1.0) {
            bail!("run.delta must be in (0, 1)");
        }
        Ok(())
    }

    /// Hash of the canonical serialization; deterministic across formatting.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn schedule_mode(&self) -> Result<ScheduleMode> {
        match self.schedule.mode.as_str() {
            "as_rate" => Ok(ScheduleMode::AsRate),
            "hp_rate" => Ok(ScheduleMode::HpRate),
            other => bail!("unknown schedule mode '{other}' (as_rate | hp_rate)"),
        }
    }

    /// Builds the objective, oracle, and initial iterate.
    pub fn build_instance(&self) -> Result<presets::Instance> {
        let o = &self.objective;
        let instance = match o.kind.as_str() {
            "preset" => match o.name.as_deref() {
                Some("convex_boundary") => presets::convex_boundary_instance(),
                Some("hp_envelope") => presets::hp_envelope_instance(),
                other => bail!("unknown preset {other:?} (convex_boundary | hp_envelope)"),
            },
            "ls_spectrum" => {
                let lambdas = o.lambdas.as_ref().context("ls_spectrum needs lambdas")?;
                let energies = o.energies.as_ref().context("ls_spectrum needs energies")?;
                presets::spectral_least_squares(lambdas, energies, o.residual.unwrap_or(0.0))?
            }
            "least_squares" => {
                let path = o.dataset.as_ref().context("least_squares needs dataset")?;
                let (xs, ys) = load_dataset(Path::new(path))?;
                let objective = Objective::least_squares(xs, ys)?;
                let oracle = StochasticOracle::finite_sum_least_squares(objective.clone())?;
                let w0 = self.w0_for(&objective)?;
                presets::Instance {
                    objective,
                    oracle,
                    w0,
                }
            }
            "quadratic" | "power" | "bump" => {
                let objective = match o.kind.as_str() {
                    "quadratic" => match (&o.eigs, o.dim) {
                        (Some(eigs), _) => Objective::quadratic(eigs.clone())?,
                        (None, Some(d)) => Objective::quadratic(vec![1.0; d])?,
                        _ => bail!("quadratic needs eigs or dim"),
                    },
                    "power" => Objective::power(
                        o.dim.context("power needs dim")?,
                        o.gamma.context("power needs gamma")?,
                    )?,
                    _ => Objective::bump(o.dim.context("bump needs dim")?)?,
                };
                let oracle = self.build_oracle(&objective)?;
                let w0 = self.w0_for(&objective)?;
                presets::Instance {
                    objective,
                    oracle,
                    w0,
                }
            }
            other => bail!("unknown objective kind '{other}'"),
        };
        // Explicit w0 overrides the preset initial point.
        let mut instance = instance;
        if let Some(w0) = &self.run.w0 {
            if w0.len() != instance.objective.dim() {
                bail!(
                    "w0 has length {}, objective dimension is {}",
                    w0.len(),
                    instance.objective.dim()
                );
            }
            instance.w0 = w0.clone();
        } else if let Some(off) = self.run.w0_offset {
            instance.w0 = instance
                .objective
                .w_star()
                .iter()
                .map(|w| w + off)
                .collect();
        }
        Ok(instance)
    }

    fn w0_for(&self, objective: &Objective) -> Result<Vec<f64>> {
        if let Some(w0) = &self.run.w0 {
            return Ok(w0.clone());
        }
        let off = self.run.w0_offset.unwrap_or(1.0);
        Ok(objective.w_star().iter().map(|w| w + off).collect())
    }

    fn build_oracle(&self, objective: &Objective) -> Result<StochasticOracle> {
        match self.oracle.kind.as_deref().unwrap_or("finite_sum") {
            "finite_sum" => {
                let weights = self
                    .oracle
                    .weights
                    .clone()
                    .unwrap_or_else(|| vec![0.8, 1.2]);
                Ok(StochasticOracle::finite_sum_scaled(
                    objective.clone(),
                    weights,
                )?)
            }
            "additive_noise" => Ok(StochasticOracle::additive_noise(
                objective.clone(),
                self.oracle.sigma.unwrap_or(0.1),
            )?),
            other => bail!("unknown oracle kind '{other}'"),
        }
    }

    /// Builds the step schedule, deriving the cap when `auto_cap` is set.
    pub fn build_schedule(&self, cap_k0: f64, hp_cap: f64) -> Result<StepSchedule> {
        let mode = self.schedule_mode()?;
        let (c, alpha0) = if self.schedule.auto_cap {
            let cap = match mode {
                ScheduleMode::AsRate => cap_k0.min(1.0),
                ScheduleMode::HpRate => cap_k0.min(hp_cap).min(1.0),
            };
            (cap, cap)
        } else {
            (
                self.schedule.c.context("schedule.c required when auto_cap = false")?,
                self.schedule
                    .alpha0
                    .context("schedule.alpha0 required when auto_cap = false")?,
            )
        };
        Ok(StepSchedule::new(c, self.schedule.p, alpha0, mode)?)
    }
}

/// Plain CSV: one row per sample, features then target, no header.
pub fn load_dataset(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("dataset line {}", lineno + 1))?;
        if cells.len() < 2 {
            bail!("dataset line {} needs features and a target", lineno + 1);
        }
        let (features, target) = cells.split_at(cells.len() - 1);
        xs.push(features.to_vec());
        ys.push(target[0]);
    }
    if xs.is_empty() {
        bail!("dataset {} is empty", path.display());
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[objective]
kind = "preset"
name = "convex_boundary"

[schedule]
p = 0.6666666666666666
mode = "as_rate"

[run]
beta = 0.0
t = 1000
seeds = 3
master_seed = 42
"#;

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        let cfg: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let cfg2: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(cfg.hash(), cfg2.hash());

        // Reordering/whitespace does not change the hash.
        let shuffled = EXAMPLE.replace("beta = 0.0", "beta   =   0.0");
        let cfg3: ExperimentConfig = toml::from_str(&shuffled).unwrap();
        assert_eq!(cfg.hash(), cfg3.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = EXAMPLE.replace("master_seed = 42", "master_seed = 42\nbogus = 1");
        assert!(toml::from_str::<ExperimentConfig>(&bad).is_err());
    }

    #[test]
    fn preset_instance_builds() {
        let cfg: ExperimentConfig = toml::from_str(EXAMPLE).unwrap();
        let inst = cfg.build_instance().unwrap();
        assert_eq!(inst.objective.dim(), 5);
    }

    #[test]
    fn dataset_csv_loads_features_then_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "# comment\n1.0, 0.0, 2.0\n0.0, 1.0, -1.0\n0.5,0.5,0.75\n")
            .unwrap();
        let (xs, ys) = load_dataset(&path).unwrap();
        assert_eq!(xs.len(), 3);
        assert_eq!(xs[0], vec![1.0, 0.0]);
        assert_eq!(ys, vec![2.0, -1.0, 0.75]);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "1.0\n").unwrap();
        assert!(load_dataset(&bad).is_err());
    }
}
