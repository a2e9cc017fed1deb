//! End-to-end experiment drivers: the synthetic 1-D benchmark, k-fold
//! tabular regression and Monte-Carlo verification of the closed forms.
//! Every run writes its artifacts plus a manifest of SHA-256 hashes.

pub mod config;
pub mod models;
pub mod seeds;
pub mod synthetic;
pub mod tabular;
pub mod verification;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Checkpoint;

pub use config::{DatasetSpec, ExperimentConfig, ModelKind, SCHEMA_VERSION};
pub use models::{FitSpec, Prediction, Predictive, Trained};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Relative path → hex SHA-256.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// What a command reports back: where things went and the headline numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub output_dir: PathBuf,
    pub manifest_sha256: String,
    pub metrics: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files written by one run and seals them into a manifest.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    /// Hashes a file already written at `rel`.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(rel))?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        fs::write(self.path(rel)?, serde_json::to_string_pretty(value)?)?;
        self.record(rel)
    }

    pub fn write_checkpoint(&mut self, rel: &str, ck: &Checkpoint) -> Result<()> {
        ck.save(&self.path(rel)?)?;
        self.record(rel)
    }

    /// Writes a CSV with a header row; floats use shortest round-trip form.
    pub fn write_table(&mut self, rel: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(rel)?)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        self.record(rel)
    }

    pub fn finish(self, command: &str, cfg: &ExperimentConfig, metrics: serde_json::Value) -> Result<RunSummary> {
        self.finish_raw(command, cfg.seed, cfg.to_value(), metrics)
    }

    pub fn finish_raw(
        mut self,
        command: &str,
        seed: u64,
        config: serde_json::Value,
        metrics: serde_json::Value,
    ) -> Result<RunSummary> {
        self.write_json("metrics.json", &metrics)?;
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            config,
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join(MANIFEST_FILE), &text)?;
        Ok(RunSummary {
            command: command.to_string(),
            output_dir: self.dir,
            manifest_sha256: sha256_hex(text.as_bytes()),
            metrics,
        })
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains or evaluates according to the dataset kind.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    match cfg.dataset {
        DatasetSpec::Synthetic { .. } => synthetic::run(cfg, synthetic::Mode::Train),
        DatasetSpec::Csv { .. } => tabular::run(cfg, tabular::Mode::Train),
    }
}

/// Re-evaluates the checkpoints of a finished run.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<RunSummary> {
    match cfg.dataset {
        DatasetSpec::Synthetic { .. } => synthetic::run(cfg, synthetic::Mode::Eval),
        DatasetSpec::Csv { .. } => tabular::run(cfg, tabular::Mode::Eval),
    }
}

pub(crate) fn fit_spec(cfg: &ExperimentConfig) -> FitSpec {
    FitSpec {
        kind: cfg.model,
        hidden_sizes: cfg.network.hidden_sizes.clone(),
        train: cfg.train,
        prior: cfg.prior,
        distill: cfg.distill.clone(),
    }
}

/// Ensemble members from a teacher run directory; `rel` names the checkpoint inside it.
pub(crate) fn load_teacher(cfg: &ExperimentConfig, rel: &str) -> Result<Option<Checkpoint>> {
    if !cfg.model.is_distillation() {
        return Ok(None);
    }
    let dir = cfg
        .distill
        .teacher_dir
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} needs distill.teacher_dir", cfg.model.name())))?;
    let ck = Checkpoint::load(&dir.join(rel))?;
    if ck.members.len() < 2 {
        return Err(Error::Config(format!(
            "teacher in {} is not an ensemble",
            dir.display()
        )));
    }
    Ok(Some(ck))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn sha_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
