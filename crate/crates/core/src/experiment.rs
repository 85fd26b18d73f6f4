//! Experiment configuration and deterministic parallel execution.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PercoError, Result};
use crate::exploration::{run_trial, Limits, PercolationModel, TrialRecord};
use crate::lattice::MapType;
use crate::rng::trial_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = PercoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(PercoError::InvalidArgument(format!(
                "unknown format '{other}' (expected csv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub map: MapType,
    pub model: PercolationModel,
    pub p: f64,
    pub trials: u64,
    pub max_steps: u64,
    pub escape_height: u64,
    pub volume_budget: u64,
    pub master_seed: u64,
    /// Worker threads; 0 means the rayon default.
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    #[serde(default)]
    pub track_hull: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let l = Limits::default();
        ExperimentConfig {
            map: MapType::Tri2,
            model: PercolationModel::Site,
            p: 0.75,
            trials: 10_000,
            max_steps: l.max_steps,
            escape_height: l.escape_height,
            volume_budget: l.volume_budget,
            master_seed: 0,
            threads: 0,
            output: None,
            format: OutputFormat::Csv,
            track_hull: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(PercoError::InvalidArgument(format!(
                "p = {} is not a probability; pass a value in [0, 1]",
                self.p
            )));
        }
        for (name, v) in [
            ("trials", self.trials),
            ("max_steps", self.max_steps),
            ("escape_height", self.escape_height),
            ("volume_budget", self.volume_budget),
        ] {
            if v == 0 {
                return Err(PercoError::InvalidArgument(format!(
                    "{name} must be positive"
                )));
            }
        }
        if !self.model.is_valid_for(self.map) {
            // reuse the lattice message (open problem for site on quad)
            crate::lattice::threshold(self.map, self.model)?;
            return Err(PercoError::Unsupported {
                model: self.model.name().into(),
                map: self.map.name().into(),
                reason: "not a valid pair".into(),
            });
        }
        Ok(())
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_steps: self.max_steps,
            escape_height: self.escape_height,
            volume_budget: self.volume_budget,
            track_hull: self.track_hull,
        }
    }
}

/// Float text form used in every data file: 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Runs `f(i, rng_i)` for every trial index on a pool of `threads`
/// workers; results come back in index order.
pub fn par_map_trials<T, F>(threads: usize, trials: u64, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PercoError::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(master_seed, i);
                f(i, &mut rng)
            })
            .collect()
    })
}

/// Runs every trial of `config`; the output depends only on the config.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let limits = config.limits();
    par_map_trials(
        config.threads,
        config.trials,
        config.master_seed,
        |_, rng| run_trial(config.model, config.map, config.p, &limits, rng),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, -7.25e12] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn config_round_trips() {
        let c = ExperimentConfig {
            p: 0.1 + 0.2,
            master_seed: u64::MAX,
            output: Some("out/x.csv".into()),
            format: OutputFormat::Json,
            ..Default::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn validation_messages() {
        let bad_p = ExperimentConfig {
            p: 1.5,
            ..Default::default()
        };
        assert!(bad_p.validate().is_err());
        let zero = ExperimentConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(zero.validate().unwrap_err().to_string().contains("trials"));
        let quad_site = ExperimentConfig {
            map: MapType::Quad,
            ..Default::default()
        };
        let msg = quad_site.validate().unwrap_err().to_string();
        assert!(msg.contains("open problem"), "{msg}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let base = ExperimentConfig {
            trials: 300,
            escape_height: 200,
            master_seed: 11,
            ..Default::default()
        };
        let a = run_trials(&ExperimentConfig {
            threads: 1,
            ..base.clone()
        })
        .unwrap();
        let b = run_trials(&ExperimentConfig { threads: 4, ..base }).unwrap();
        assert_eq!(a, b);
    }
}
