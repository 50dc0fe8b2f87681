//! Stage execution with digest-based caching.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.json            resolved configuration
//! dataset/               meta.json + burst_<i>.csv
//! models/                burst_<i>.json checkpoints, burst_<i>.curve.csv,
//!                        training_curves.csv
//! result/                result.json, drift.csv, diffusion.csv
//! report/                report.json, error tables, SVG plots
//! stages/<stage>.json    completion stamp with the stage digest
//! ```
//!
//! A stage is current when its stamp carries the digest computed from the
//! config blocks it depends on plus its upstream stage digest, so a config
//! change invalidates that stage and everything downstream of it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use levykm::dataset::{generate_dataset, write_atomic, BurstDataset};
use levykm::flow::{train_flow, Checkpoint, FlowModel, TrainConfig};
use levykm::km::{extract, ExtractionResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{sha256_json, RunConfig};
use crate::error::{PipelineError, Result};
use crate::report::run_report;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Train,
    Extract,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Simulate, Stage::Train, Stage::Extract, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Train => "train",
            Stage::Extract => "extract",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstFailure {
    pub index: usize,
    pub message: String,
}

/// Written last by each stage; its presence marks completed outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: Stage,
    pub digest: String,
    /// Digest of the stage's main output.
    pub output_digest: String,
    pub seconds: f64,
    /// Checkpoint file digests by burst index (train stage only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub files: BTreeMap<usize, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<BurstFailure>,
}

/// What happened to a stage during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Cached,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub dir: PathBuf,
    pub force: Option<Stage>,
    pub quiet: bool,
}

fn file_sha(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        let dir = config.run_dir();
        Self {
            config,
            dir,
            force: None,
            quiet: false,
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{}] {}", self.config.name, msg.as_ref());
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dir.join("dataset")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.dir.join("models")
    }

    pub fn result_dir(&self) -> PathBuf {
        self.dir.join("result")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.dir.join("report")
    }

    fn stamp_path(&self, stage: Stage) -> PathBuf {
        self.dir
            .join("stages")
            .join(format!("{}.json", stage.name()))
    }

    pub fn checkpoint_path(&self, index: usize) -> PathBuf {
        self.models_dir().join(format!("burst_{index}.json"))
    }

    fn curve_path(&self, index: usize) -> PathBuf {
        self.models_dir().join(format!("burst_{index}.curve.csv"))
    }

    /// Digest identifying the inputs of `stage`.
    pub fn stage_digest(&self, stage: Stage) -> String {
        let c = &self.config;
        match stage {
            Stage::Simulate => sha256_json(&("simulate", &c.sde, &c.grid, c.simulation_seed())),
            Stage::Train => sha256_json(&(
                "train",
                self.stage_digest(Stage::Simulate),
                &c.training,
                c.training_seed(0),
            )),
            Stage::Extract => sha256_json(&(
                "extract",
                self.stage_digest(Stage::Train),
                c.extract_settings(),
            )),
            Stage::Report => sha256_json(&("report", self.stage_digest(Stage::Extract), &c.report)),
        }
    }

    pub fn read_stamp(&self, stage: Stage) -> Option<Stamp> {
        let text = fs::read(self.stamp_path(stage)).ok()?;
        serde_json::from_slice(&text).ok()
    }

    fn write_stamp(&self, stamp: &Stamp) -> Result<()> {
        let path = self.stamp_path(stamp.stage);
        let parent = path.parent().unwrap();
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        let json = serde_json::to_vec_pretty(stamp).expect("stamp serializes");
        write_atomic(&path, &json)?;
        Ok(())
    }

    /// The stamp of `stage` if it matches the current config.
    fn current_stamp(&self, stage: Stage) -> Option<Stamp> {
        self.read_stamp(stage)
            .filter(|s| s.digest == self.stage_digest(stage))
    }

    fn is_current(&self, stage: Stage) -> bool {
        // The report is a cheap view of the result and is always redrawn.
        if stage == Stage::Report {
            return false;
        }
        let Some(stamp) = self.current_stamp(stage) else {
            return false;
        };
        if stage == Stage::Train {
            // Any edited or missing checkpoint forces a retrain.
            return stamp
                .files
                .iter()
                .all(|(&i, sha)| file_sha(&self.checkpoint_path(i)).is_ok_and(|s| &s == sha));
        }
        true
    }

    fn require_upstream(&self, stage: Stage) -> Result<Stamp> {
        let upstream = match stage {
            Stage::Simulate => unreachable!(),
            Stage::Train => Stage::Simulate,
            Stage::Extract => Stage::Train,
            Stage::Report => Stage::Extract,
        };
        self.current_stamp(upstream).ok_or_else(|| {
            PipelineError::MissingInput(format!(
                "{} outputs in {} are missing or stale; run `{}` first",
                upstream.name(),
                self.dir.display(),
                upstream.name()
            ))
        })
    }

    fn write_config(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| PipelineError::io(&self.dir, e))?;
        let mut json = serde_json::to_string_pretty(&self.config).expect("config serializes");
        json.push('\n');
        write_atomic(&self.dir.join("config.json"), json.as_bytes())?;
        Ok(())
    }

    /// Runs `stages` in order. A stage reruns when stale, when forced, or
    /// when an earlier stage in this invocation reran.
    pub fn run(&self, stages: &[Stage]) -> Result<Vec<(Stage, Outcome)>> {
        self.write_config()?;
        let mut outcomes = Vec::new();
        let mut upstream_ran = false;
        for &stage in stages {
            let forced = self
                .force
                .is_some_and(|f| f <= stage && stages.contains(&f));
            if !forced && !upstream_ran && self.is_current(stage) {
                self.log(format!("{}: up to date", stage.name()));
                outcomes.push((stage, Outcome::Cached));
                continue;
            }
            let start = Instant::now();
            self.log(format!("{}: running", stage.name()));
            let mut stamp = match stage {
                Stage::Simulate => self.simulate()?,
                Stage::Train => self.train()?,
                Stage::Extract => self.extract()?,
                Stage::Report => self.report()?,
            };
            stamp.seconds = start.elapsed().as_secs_f64();
            self.write_stamp(&stamp)?;
            self.log(format!("{}: done in {:.1}s", stage.name(), stamp.seconds));
            outcomes.push((stage, Outcome::Ran));
            upstream_ran = true;
        }
        Ok(outcomes)
    }

    fn stamp(&self, stage: Stage, output_digest: String) -> Stamp {
        Stamp {
            stage,
            digest: self.stage_digest(stage),
            output_digest,
            seconds: 0.0,
            files: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    fn simulate(&self) -> Result<Stamp> {
        let c = &self.config;
        let dataset = generate_dataset(
            &c.sde,
            &c.z_grid(),
            c.grid.samples_per_point,
            c.simulation_seed(),
        )?;
        dataset.save(&self.dataset_dir())?;
        Ok(self.stamp(Stage::Simulate, dataset.digest()))
    }

    /// Loads the dataset and checks it against the simulate stamp.
    pub fn load_dataset(&self) -> Result<BurstDataset> {
        let stamp = self.require_upstream(Stage::Train)?;
        let dataset = BurstDataset::load(&self.dataset_dir())?;
        if dataset.digest() != stamp.output_digest {
            return Err(PipelineError::MissingInput(format!(
                "dataset in {} does not match its stamp; rerun `simulate`",
                self.dataset_dir().display()
            )));
        }
        Ok(dataset)
    }

    fn checkpoint_digest(&self, index: usize) -> String {
        sha256_json(&(self.stage_digest(Stage::Train), index))
    }

    /// A checkpoint worth keeping: parseable, trained for this digest and,
    /// when a previous stamp recorded it, byte-identical to that record.
    fn reusable_checkpoint(&self, index: usize, previous: Option<&Stamp>) -> Option<Checkpoint> {
        let path = self.checkpoint_path(index);
        let ckpt = Checkpoint::load(&path).ok()?;
        if ckpt.input_digest != self.checkpoint_digest(index) || !self.curve_path(index).exists() {
            return None;
        }
        if let Some(sha) = previous.and_then(|s| s.files.get(&index)) {
            if file_sha(&path).ok()? != *sha {
                return None;
            }
        }
        Some(ckpt)
    }

    fn train(&self) -> Result<Stamp> {
        let dataset = self.load_dataset()?;
        let dir = self.models_dir();
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let previous = if self.force == Some(Stage::Train) {
            None
        } else {
            self.current_stamp(Stage::Train)
        };
        let forced = self.force.is_some_and(|f| f <= Stage::Train);
        let arch = &self.config.training.arch;
        let results: Vec<Result<std::result::Result<(), String>>> = dataset
            .bursts
            .par_iter()
            .enumerate()
            .map(|(i, burst)| {
                if !forced && self.reusable_checkpoint(i, previous.as_ref()).is_some() {
                    return Ok(Ok(()));
                }
                let config: TrainConfig = self.config.train_config(i);
                match train_flow(&burst.samples, arch, &config) {
                    Ok((model, report)) => {
                        let ckpt =
                            Checkpoint::new(model, config, &report, self.checkpoint_digest(i));
                        let mut curve = String::from("epoch,train_nll,validation_nll\n");
                        for e in &report.curve {
                            writeln!(curve, "{},{},{}", e.epoch, e.train_nll, e.validation_nll)
                                .unwrap();
                        }
                        write_atomic(&self.curve_path(i), curve.as_bytes())?;
                        ckpt.save(&self.checkpoint_path(i))?;
                        Ok(Ok(()))
                    }
                    Err(e) => {
                        let _ = fs::remove_file(self.checkpoint_path(i));
                        Ok(Err(e.to_string()))
                    }
                }
            })
            .collect();

        let mut stamp = self.stamp(Stage::Train, String::new());
        let mut combined = String::from("burst,epoch,train_nll,validation_nll\n");
        let mut hasher = Sha256::new();
        for (i, r) in results.into_iter().enumerate() {
            match r? {
                Ok(()) => {
                    let sha = file_sha(&self.checkpoint_path(i))?;
                    hasher.update(sha.as_bytes());
                    stamp.files.insert(i, sha);
                    let curve = fs::read_to_string(self.curve_path(i))
                        .map_err(|e| PipelineError::io(self.curve_path(i), e))?;
                    for line in curve.lines().skip(1) {
                        writeln!(combined, "{i},{line}").unwrap();
                    }
                }
                Err(message) => {
                    self.log(format!("train: burst {i} failed: {message}"));
                    hasher.update(format!("failed {i}").as_bytes());
                    stamp.failures.push(BurstFailure { index: i, message });
                }
            }
        }
        if stamp.files.is_empty() {
            return Err(PipelineError::Numerical(
                "training failed for every burst".into(),
            ));
        }
        write_atomic(&dir.join("training_curves.csv"), combined.as_bytes())?;
        stamp.output_digest = hex::encode(hasher.finalize());
        Ok(stamp)
    }

    /// Checkpointed models in burst order; `None` where training failed.
    pub fn load_models(&self, n: usize) -> Result<Vec<Option<FlowModel>>> {
        let stamp = self.require_upstream(Stage::Extract)?;
        (0..n)
            .map(|i| match stamp.files.get(&i) {
                None => Ok(None),
                Some(sha) => {
                    let path = self.checkpoint_path(i);
                    if file_sha(&path)? != *sha {
                        return Err(PipelineError::MissingInput(format!(
                            "{} changed since training; rerun `train`",
                            path.display()
                        )));
                    }
                    Ok(Some(Checkpoint::load(&path)?.model))
                }
            })
            .collect()
    }

    fn extract(&self) -> Result<Stamp> {
        let dataset = self.load_dataset()?;
        let models = self.load_models(dataset.bursts.len())?;
        let result = extract(&dataset, &models, &self.config.extract_settings())?;
        let dir = self.result_dir();
        result.save(&dir, Some(&self.config.sde))?;
        for f in &result.failures {
            self.log(format!("extract: point {:?} failed: {}", f.z, f.message));
        }
        Ok(self.stamp(Stage::Extract, file_sha(&dir.join("result.json"))?))
    }

    pub fn load_result(&self) -> Result<ExtractionResult> {
        let dir = self.result_dir();
        if !dir.join("result.json").exists() {
            return Err(PipelineError::MissingInput(format!(
                "nothing to report: no result.json in {}",
                dir.display()
            )));
        }
        Ok(ExtractionResult::load(&dir)?)
    }

    fn report(&self) -> Result<Stamp> {
        let report = run_report(self)?;
        Ok(self.stamp(Stage::Report, sha256_json(&report.files)))
    }

    /// Seconds recorded by each stage's stamp.
    pub fn stage_seconds(&self) -> BTreeMap<String, f64> {
        Stage::ALL
            .iter()
            .filter_map(|&s| {
                self.read_stamp(s)
                    .map(|st| (s.name().to_string(), st.seconds))
            })
            .collect()
    }
}

/// Trains one flow per burst of the dataset in `dataset_dir`, writing
/// `burst_<i>.json` and `burst_<i>.curve.csv` into `out`. Burst seeds derive
/// from `seed`. Returns the per-burst failures.
pub fn train_dataset(
    dataset_dir: &Path,
    arch: &levykm::flow::Architecture,
    optimizer: &TrainConfig,
    seed: u64,
    out: &Path,
) -> Result<Vec<BurstFailure>> {
    let dataset = BurstDataset::load(dataset_dir)?;
    if arch.dim() != dataset.dim() {
        return Err(PipelineError::Validation(format!(
            "architecture is {}-dimensional but the dataset is {}-dimensional",
            arch.dim(),
            dataset.dim()
        )));
    }
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let digest = dataset.digest();
    let results: Vec<Result<Option<BurstFailure>>> = dataset
        .bursts
        .par_iter()
        .enumerate()
        .map(|(i, burst)| {
            let config = TrainConfig {
                seed: crate::config::mix_seed(seed, i as u64),
                ..optimizer.clone()
            };
            match train_flow(&burst.samples, arch, &config) {
                Ok((model, report)) => {
                    let mut curve = String::from("epoch,train_nll,validation_nll\n");
                    for e in &report.curve {
                        writeln!(curve, "{},{},{}", e.epoch, e.train_nll, e.validation_nll)
                            .unwrap();
                    }
                    write_atomic(&out.join(format!("burst_{i}.curve.csv")), curve.as_bytes())?;
                    Checkpoint::new(model, config, &report, sha256_json(&(&digest, i)))
                        .save(&out.join(format!("burst_{i}.json")))?;
                    Ok(None)
                }
                Err(e) => Ok(Some(BurstFailure {
                    index: i,
                    message: e.to_string(),
                })),
            }
        })
        .collect();
    let failures: Vec<BurstFailure> = results
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if failures.len() == dataset.bursts.len() {
        return Err(PipelineError::Numerical(
            "training failed for every burst".into(),
        ));
    }
    Ok(failures)
}
