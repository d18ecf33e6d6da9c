use std::path::{Path, PathBuf};

use gaitscope::env::EnvConfig;
use gaitscope::fixed_points::{FixedPointOptions, GridSpec};
use gaitscope::pca::RolloutConfig;
use gaitscope::perturb::{
    GridConfig, NeuralExperimentConfig, NeuralPerturbationSpec, PhysicalPerturbationSpec,
    PhysicalTrialConfig,
};
use gaitscope::train::TrainConfig;
use gaitscope::Dims;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Everything a command may need. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; every stochastic component derives its seed from it.
    pub seed: u64,
    pub paths: Paths,
    pub dims: Dims,
    pub env: EnvConfig,
    /// `train.seed` is replaced by the master seed.
    pub train: TrainConfig,
    /// Write a weight checkpoint every this many epochs; zero disables.
    pub checkpoint_every: usize,
    pub rollout: RolloutConfig,
    pub fixed_points: FixedPointBlock,
    pub neural: NeuralBlock,
    pub physical: PhysicalBlock,
    pub grid: GridConfig,
    pub compare: CompareBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub weights: Option<PathBuf>,
    pub basis: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            weights: None,
            basis: None,
            dataset: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointBlock {
    pub options: FixedPointOptions,
    pub n_inits: usize,
    pub merge_radius: f64,
    pub tol_marginal: f64,
    /// Starts are drawn from the bounding box of recorded walking states,
    /// each side widened by this fraction of its extent.
    pub init_inflate: f64,
    pub field: GridSpec,
    /// Length of the unforced decay trajectory from the limit cycle.
    pub decay_steps: usize,
}

impl Default for FixedPointBlock {
    fn default() -> Self {
        FixedPointBlock {
            options: FixedPointOptions::default(),
            n_inits: 256,
            merge_radius: 0.1,
            tol_marginal: 0.005,
            init_inflate: 0.25,
            field: GridSpec::default(),
            decay_steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeuralBlock {
    pub spec: NeuralPerturbationSpec,
    pub experiment: NeuralExperimentConfig,
    /// Consecutive application steps for the phase-response table; zero
    /// skips it, `null` uses one gait period.
    pub response_steps: Option<usize>,
}

impl Default for NeuralBlock {
    fn default() -> Self {
        NeuralBlock {
            spec: NeuralPerturbationSpec {
                pc_index: 1,
                magnitude: 2.0,
                t_apply: 300,
                sign: 1.0,
            },
            experiment: NeuralExperimentConfig::default(),
            response_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalBlock {
    pub spec: PhysicalPerturbationSpec,
    pub trial: PhysicalTrialConfig,
}

impl Default for PhysicalBlock {
    fn default() -> Self {
        PhysicalBlock {
            spec: PhysicalPerturbationSpec {
                magnitude_bw: 2.0,
                duration_ms: 100.0,
                t_apply: 200,
            },
            trial: PhysicalTrialConfig {
                stop_early: false,
                ..PhysicalTrialConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareBlock {
    pub k_values: Vec<usize>,
}

impl Default for CompareBlock {
    fn default() -> Self {
        CompareBlock {
            k_values: vec![16, 4],
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::MissingInput {
                    what: "config",
                    path: p.to_path_buf(),
                    reason: e.to_string(),
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out_dir {
            cfg.paths.out_dir = out.clone();
        }
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    /// Checks the blocks every command shares.
    pub fn validate_common(&self) -> CliResult<()> {
        self.dims.validate()?;
        self.env.validate()?;
        for (what, p) in [
            ("weights", &self.paths.weights),
            ("basis", &self.paths.basis),
            ("dataset", &self.paths.dataset),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::MissingInput {
                        what,
                        path: p.clone(),
                        reason: "file not found".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory so
    /// that reruns elsewhere hash identically.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths.out_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
