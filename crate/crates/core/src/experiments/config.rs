//! Experiment configuration: a versioned JSON document with dotted-path overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::CsvSchema;
use crate::error::{Error, Result};
use crate::eval::CurveConvention;
use crate::losses::AnnealSchedule;
use crate::nn::{AdamConfig, HeadKind, TrainConfig};
use crate::uncertainty::Scalarization;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub model: ModelKind,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub distill: DistillSpec,
    #[serde(default)]
    pub eval: EvalSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_ood")]
        n_ood: usize,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default = "yes")]
        standardize_targets: bool,
        /// Latent dimension of the factor-analysis OOD generator; min(D−1, 5) when unset.
        #[serde(default)]
        fa_latent: Option<usize>,
        #[serde(default = "default_fa_scale")]
        fa_scale: f64,
        #[serde(default = "default_fa_iters")]
        fa_iters: usize,
        /// External out-of-domain evaluation file. Without one, a separate
        /// factor-analysis draw stands in.
        #[serde(default)]
        eval_ood: Option<OodFile>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodFile {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

fn default_n_train() -> usize {
    2048
}

fn default_n_ood() -> usize {
    512
}

fn default_folds() -> usize {
    10
}

fn default_fa_scale() -> f64 {
    3.0
}

fn default_fa_iters() -> usize {
    200
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    Single,
    Ensemble { members: usize },
    NwpnRkl,
    End,
    MdEnd,
    Endd,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Single => "single",
            ModelKind::Ensemble { .. } => "ensemble",
            ModelKind::NwpnRkl => "nwpn_rkl",
            ModelKind::End => "end",
            ModelKind::MdEnd => "md_end",
            ModelKind::Endd => "endd",
        }
    }

    pub fn is_distillation(&self) -> bool {
        matches!(self, ModelKind::End | ModelKind::MdEnd | ModelKind::Endd)
    }

    /// Head of the trained network; mixtures take one component per teacher member.
    pub fn head(&self, teacher_members: usize) -> HeadKind {
        match self {
            ModelKind::Single | ModelKind::Ensemble { .. } | ModelKind::End => HeadKind::Gaussian,
            ModelKind::NwpnRkl | ModelKind::Endd => HeadKind::NormalWishart,
            ModelKind::MdEnd => HeadKind::Mixture {
                components: teacher_members,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden_sizes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub epsilon: f64,
    pub beta_in: f64,
    pub gamma: f64,
    /// γ ramps linearly from 0 over this many epochs.
    #[serde(default)]
    pub gamma_warmup_epochs: usize,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            beta_in: 1e2,
            gamma: 0.5,
            gamma_warmup_epochs: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSpec {
    /// Output directory of a finished ensemble run.
    #[serde(default)]
    pub teacher_dir: Option<PathBuf>,
    #[serde(default)]
    pub anneal: AnnealSchedule,
    /// Standard deviation of Gaussian noise for the augmented copy of the inputs; 0 disables it.
    #[serde(default)]
    pub input_noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points < 2 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.min + step * i as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    #[serde(default)]
    pub scalarization: Scalarization,
    #[serde(default)]
    pub curve_convention: CurveConvention,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
}

fn default_grid() -> GridSpec {
    GridSpec {
        min: -30.0,
        max: 30.0,
        points: 601,
    }
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            scalarization: Scalarization::default(),
            curve_convention: CurveConvention::default(),
            grid: default_grid(),
        }
    }
}

impl ExperimentConfig {
    /// Synthetic benchmark: 2 × 30 relu, Adam lr 1e-2, weight decay 1e-4,
    /// 800 epochs of batch 128, κ₀ = ε = 1e-2, β̂ = 100, γ = 0.5, input noise 3 for distillation.
    pub fn synthetic(model: ModelKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: default_output_dir(),
            dataset: DatasetSpec::Synthetic {
                n_train: 2048,
                n_ood: 512,
            },
            model,
            network: NetworkSpec {
                hidden_sizes: vec![30, 30],
            },
            train: TrainConfig {
                epochs: 800,
                batch_size: 128,
                adam: AdamConfig {
                    lr: 1e-2,
                    weight_decay: 1e-4,
                    ..Default::default()
                },
            },
            prior: PriorSpec::default(),
            distill: DistillSpec {
                teacher_dir: None,
                anneal: AnnealSchedule::default(),
                input_noise: 3.0,
            },
            eval: EvalSpec::default(),
        }
    }

    /// Tabular protocol: one hidden layer of 50 relu units, 100 epochs of batch 32, 10 folds.
    pub fn tabular(path: PathBuf, target: &str, model: ModelKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: default_output_dir(),
            dataset: DatasetSpec::Csv {
                path,
                schema: CsvSchema {
                    target_column: Some(target.into()),
                    ..Default::default()
                },
                folds: 10,
                standardize_targets: true,
                fa_latent: None,
                fa_scale: 3.0,
                fa_iters: 200,
                eval_ood: None,
            },
            model,
            network: NetworkSpec { hidden_sizes: vec![50] },
            train: TrainConfig {
                epochs: 100,
                batch_size: 32,
                adam: AdamConfig {
                    lr: 1e-3,
                    weight_decay: 1e-4,
                    ..Default::default()
                },
            },
            prior: PriorSpec::default(),
            distill: DistillSpec::default(),
            eval: EvalSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let ModelKind::Ensemble { members } = self.model {
            if members < 2 {
                return Err(Error::Config("an ensemble needs at least 2 members".into()));
            }
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.network.hidden_sizes.is_empty() {
            return Err(Error::Config("network needs at least one hidden layer".into()));
        }
        self.distill
            .anneal
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let DatasetSpec::Csv { folds, .. } = &self.dataset {
            if *folds < 2 {
                return Err(Error::Config("folds must be at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Parses a JSON document after applying `key.path=value` overrides.
    pub fn from_value_with_overrides(mut value: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value_with_overrides(value, overrides)
    }
}

/// Sets a dotted path inside a JSON object. The value is read as JSON when
/// it parses, otherwise as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    if key.is_empty() {
        return Err(Error::Config(format!("override '{assignment}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{}' is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}
