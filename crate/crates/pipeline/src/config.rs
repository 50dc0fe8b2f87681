//! Run configuration: one JSON file per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use levykm::dataset::tensor_grid;
use levykm::flow::{Architecture, TrainConfig};
use levykm::km::ExtractSettings;
use levykm::sde::SdeSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Overrides the directory that relative `output_dir` values resolve against.
pub const OUTPUT_ROOT_ENV: &str = "LEVY_EXTRACT_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    /// Points per axis.
    pub points: usize,
    /// Endpoints simulated per grid point.
    pub samples_per_point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub arch: Architecture,
    /// `seed` is replaced by a per-burst seed derived from the run seed.
    #[serde(default)]
    pub optimizer: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Error norms use grid points with every `|z_i| ≤ window`. When unset,
    /// points on the grid boundary are excluded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub sde: SdeSpec,
    pub grid: GridConfig,
    pub training: TrainingConfig,
    /// `seed` is replaced by one derived from the run seed.
    #[serde(default)]
    pub extraction: ExtractSettings,
    #[serde(default)]
    pub report: ReportConfig,
    pub seed: u64,
    /// Relative paths resolve against [`OUTPUT_ROOT_ENV`], else the
    /// working directory.
    pub output_dir: PathBuf,
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(
        serde_json::to_vec(value).expect("value serializes"),
    ))
}

/// SplitMix64 finalizer, for deriving independent stage seeds.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            PipelineError::Validation(m) => {
                PipelineError::Validation(format!("{}: {m}", path.display()))
            }
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Validation(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Validation(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        self.sde
            .validate()
            .map_err(|e| PipelineError::Validation(format!("sde: {e}")))?;
        let g = &self.grid;
        if !(g.lo < g.hi && g.lo.is_finite() && g.hi.is_finite()) {
            return bad(format!("grid: need lo < hi, got [{}, {}]", g.lo, g.hi));
        }
        if g.points == 0 || g.samples_per_point < 2 {
            return bad("grid: need points ≥ 1 and samples_per_point ≥ 2".into());
        }
        let arch = &self.training.arch;
        arch.validate()
            .map_err(|e| PipelineError::Validation(format!("training.arch: {e}")))?;
        if arch.dim() != self.sde.dim() {
            return bad(format!(
                "training.arch is {}-dimensional but the SDE is {}-dimensional",
                arch.dim(),
                self.sde.dim()
            ));
        }
        self.training
            .optimizer
            .validate()
            .map_err(|e| PipelineError::Validation(format!("training.optimizer: {e}")))?;
        self.extraction
            .validate()
            .map_err(|e| PipelineError::Validation(format!("extraction: {e}")))?;
        if let Some(w) = self.report.window {
            if !(w > 0.0) {
                return bad("report.window must be positive".into());
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sde.dim()
    }

    pub fn z_grid(&self) -> Vec<Vec<f64>> {
        tensor_grid(self.grid.lo, self.grid.hi, self.grid.points, self.dim())
    }

    /// Digest of the whole configuration.
    pub fn digest(&self) -> String {
        sha256_json(self)
    }

    /// Run directory after applying the output-root override.
    pub fn run_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn simulation_seed(&self) -> u64 {
        mix_seed(self.seed, 1)
    }

    pub fn training_seed(&self, burst: usize) -> u64 {
        mix_seed(mix_seed(self.seed, 2), burst as u64)
    }

    pub fn extraction_seed(&self) -> u64 {
        mix_seed(self.seed, 3)
    }

    /// Settings as extraction runs them.
    pub fn extract_settings(&self) -> ExtractSettings {
        ExtractSettings {
            seed: self.extraction_seed(),
            ..self.extraction.clone()
        }
    }

    /// Training options for one burst.
    pub fn train_config(&self, burst: usize) -> TrainConfig {
        TrainConfig {
            seed: self.training_seed(burst),
            ..self.training.optimizer.clone()
        }
    }

    /// Whether `z` counts towards error norms.
    pub fn in_window(&self, z: &[f64]) -> bool {
        match self.report.window {
            Some(w) => z.iter().all(|v| v.abs() <= w + 1e-9),
            None => {
                let tol = 1e-9 * (self.grid.hi - self.grid.lo);
                z.iter()
                    .all(|v| (v - self.grid.lo).abs() > tol && (v - self.grid.hi).abs() > tol)
            }
        }
    }
}
