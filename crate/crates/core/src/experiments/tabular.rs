//! k-fold regression on a CSV dataset: RMSE and NLL in original target
//! units, prediction-rejection ratios and OOD-detection AUC per measure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{DatasetSpec, ExperimentConfig};
use super::models::{fit, Prediction, Trained};
use super::seeds::{stream, Stream};
use super::{fit_spec, load_teacher, mean_std, Artifacts, RunSummary};
use crate::data::{csv_ingest, fa_default_latent, fa_fit, fa_sample_ood, kfold, standardize, ColumnStats, Dataset};
use crate::error::{Error, Result};
use crate::eval::{auc_roc, prr, rejection_curve_with, rmse, CurveConvention, RejectionCurve};
use crate::nn::Checkpoint;
use crate::uncertainty::UncertaintyReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    /// Load `fold_k/checkpoint.json` from the output directory and write to `eval/`.
    Eval,
}

pub fn fold_checkpoint(fold: usize) -> String {
    format!("fold_{fold}/checkpoint.json")
}

/// Every scalar uncertainty a report carries, by name.
pub fn measures(r: &UncertaintyReport) -> Vec<(&'static str, Option<f64>)> {
    vec![
        ("total_variance", Some(r.total_variance)),
        ("data_variance", Some(r.expected_data_variance)),
        ("knowledge_variance", Some(r.knowledge_variance)),
        ("total_entropy", r.total_entropy),
        ("data_entropy", r.expected_data_entropy),
        ("mutual_information", r.mutual_information),
        ("epkl", Some(r.epkl)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub rmse: f64,
    pub nll: f64,
    pub prr: BTreeMap<String, Option<f64>>,
    pub auc: BTreeMap<String, Option<f64>>,
    #[serde(skip)]
    pub curves: Vec<(String, RejectionCurve)>,
    #[serde(skip)]
    pub checkpoint: Option<Checkpoint>,
}

fn scores(preds: &[Prediction], name: &str) -> Option<Vec<f64>> {
    preds
        .iter()
        .map(|p| {
            measures(&p.report)
                .into_iter()
                .find(|(n, _)| *n == name)
                .and_then(|(_, v)| v)
        })
        .collect()
}

fn destandardize_mean(mean: &[f64], stats: Option<&ColumnStats>) -> Vec<f64> {
    match stats {
        Some(s) => mean
            .iter()
            .zip(s.mean.iter().zip(&s.std))
            .map(|(m, (a, sd))| m * sd + a)
            .collect(),
        None => mean.to_vec(),
    }
}

/// Scores one fold's predictions. `targets` are in original units.
pub fn score_fold(
    fold: usize,
    test: &[Prediction],
    ood: &[Prediction],
    targets: &[Vec<f64>],
    stats: Option<&ColumnStats>,
    convention: CurveConvention,
) -> Result<FoldResult> {
    let mut means = Vec::with_capacity(test.len());
    let mut nll = 0.0;
    let mut errors = Vec::with_capacity(test.len());
    for (p, y) in test.iter().zip(targets) {
        let mean = destandardize_mean(&p.mean, stats);
        let predictive = match stats {
            Some(s) => p.predictive.destandardize(s)?,
            None => p.predictive.clone(),
        };
        nll += predictive.nll(y)?;
        errors.push(mean.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        means.push(mean);
    }
    let mut prr_map = BTreeMap::new();
    let mut auc_map = BTreeMap::new();
    let mut curves = Vec::new();
    for (name, _) in measures(&test[0].report) {
        let (Some(s_in), Some(s_out)) = (scores(test, name), scores(ood, name)) else {
            continue;
        };
        let curve = rejection_curve_with(&errors, &s_in, convention)?;
        prr_map.insert(name.to_string(), prr(&curve).ok());
        auc_map.insert(name.to_string(), auc_roc(&s_in, &s_out).ok());
        curves.push((name.to_string(), curve));
    }
    Ok(FoldResult {
        fold,
        rmse: rmse(&means, targets)?,
        nll: nll / test.len() as f64,
        prr: prr_map,
        auc: auc_map,
        curves,
        checkpoint: None,
    })
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> serde_json::Value {
    let v: Vec<f64> = values.flatten().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return serde_json::Value::Null;
    }
    let (m, s) = mean_std(&v);
    json!({ "mean": m, "std": s })
}

/// Mean ± sample std across folds of every metric.
pub fn aggregate(folds: &[FoldResult]) -> serde_json::Value {
    let names: Vec<String> = folds
        .first()
        .map(|f| f.prr.keys().cloned().collect())
        .unwrap_or_default();
    let per = |pick: &dyn Fn(&FoldResult) -> &BTreeMap<String, Option<f64>>| {
        names
            .iter()
            .map(|n| {
                (
                    n.clone(),
                    summarize(folds.iter().map(|f| pick(f).get(n).copied().flatten())),
                )
            })
            .collect::<serde_json::Map<_, _>>()
    };
    json!({
        "rmse": summarize(folds.iter().map(|f| Some(f.rmse))),
        "nll": summarize(folds.iter().map(|f| Some(f.nll))),
        "prr": per(&|f| &f.prr),
        "auc": per(&|f| &f.auc),
        "per_fold": folds,
    })
}

pub fn run(cfg: &ExperimentConfig, mode: Mode) -> Result<RunSummary> {
    let DatasetSpec::Csv {
        path,
        schema,
        folds,
        standardize_targets,
        fa_latent,
        fa_scale,
        fa_iters,
        eval_ood,
    } = &cfg.dataset
    else {
        return Err(Error::Config("tabular run needs a csv dataset".into()));
    };
    let ds = csv_ingest(path, schema)?;
    ds.targets()?;
    let external = eval_ood.as_ref().map(|o| csv_ingest(&o.path, &o.schema)).transpose()?;
    if let Some(e) = &external {
        if e.input_dim() != ds.input_dim() {
            return Err(Error::Config(format!(
                "eval_ood has {} columns, the dataset has {} inputs (set schema.max_columns)",
                e.input_dim(),
                ds.input_dim()
            )));
        }
    }
    let splits = kfold(ds.len(), *folds, stream(cfg.seed, Stream::Folds))?;
    let spec = fit_spec(cfg);
    let latent = fa_latent.unwrap_or_else(|| fa_default_latent(ds.input_dim()));

    let results = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train_idx, test_idx))| -> Result<FoldResult> {
            let seed = stream(cfg.seed, Stream::Fold(f as u64));
            let raw_test = ds.subset(test_idx);
            let mut others = vec![raw_test.clone()];
            if let Some(e) = &external {
                let n = test_idx.len().min(e.len());
                others.push(e.subset(&(0..n).collect::<Vec<_>>()));
            }
            let (train, rest) = standardize(&ds.subset(train_idx), &others, *standardize_targets)?;
            let fa = fa_fit(&train.inputs, latent, *fa_iters, stream(seed, Stream::FaFit))?;
            let eval_ood: Dataset = match rest.get(1) {
                Some(e) => e.clone(),
                None => fa_sample_ood(&fa, test_idx.len(), *fa_scale, stream(seed, Stream::FaEval))?,
            };
            let model = match mode {
                Mode::Train => {
                    let teacher = load_teacher(cfg, &fold_checkpoint(f))?;
                    if let Some(t) = &teacher {
                        let stored: Option<Vec<usize>> =
                            serde_json::from_value(t.metadata["test_indices"].clone()).ok();
                        if stored.as_deref() != Some(test_idx.as_slice()) {
                            return Err(Error::Config(format!(
                                "teacher fold {f} was trained on a different split"
                            )));
                        }
                    }
                    let ood_train = if cfg.prior.gamma > 0.0 {
                        Some(fa_sample_ood(&fa, train.len(), *fa_scale, stream(seed, Stream::FaTrain))?.inputs)
                    } else {
                        None
                    };
                    fit(
                        &spec,
                        &train.inputs,
                        train.targets()?,
                        ood_train.as_ref(),
                        teacher.as_ref().map(|t| t.members.as_slice()),
                        seed,
                    )?
                }
                Mode::Eval => Trained::from_checkpoint(&Checkpoint::load(&cfg.output_dir.join(fold_checkpoint(f)))?)?,
            };
            let test_preds = model.predict(&rest[0].inputs, cfg.eval.scalarization)?;
            let ood_preds = model.predict(&eval_ood.inputs, cfg.eval.scalarization)?;
            let mut r = score_fold(
                f,
                &test_preds,
                &ood_preds,
                &raw_test.target_rows()?,
                train.target_stats.as_ref(),
                cfg.eval.curve_convention,
            )?;
            if mode == Mode::Train {
                let meta = json!({
                    "model": cfg.model.name(),
                    "seed": cfg.seed,
                    "fold": f,
                    "test_indices": test_idx,
                    "feature_stats": train.feature_stats,
                    "target_stats": train.target_stats,
                });
                r.checkpoint = Some(Checkpoint::new(model.members(), meta));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;

    let (mut out, command) = match mode {
        Mode::Train => (Artifacts::create(&cfg.output_dir)?, "train"),
        Mode::Eval => (Artifacts::create(&cfg.output_dir.join("eval"))?, "eval"),
    };
    for r in &results {
        if let Some(ck) = &r.checkpoint {
            out.write_checkpoint(&fold_checkpoint(r.fold), ck)?;
        }
        for (name, curve) in &r.curves {
            let rows: Vec<Vec<f64>> = curve
                .fractions
                .iter()
                .zip(&curve.errors)
                .zip(curve.oracle.iter().zip(&curve.random))
                .map(|((f, e), (o, r))| vec![*f, *e, *o, *r])
                .collect();
            out.write_table(
                &format!("fold_{}/curve_{name}.csv", r.fold),
                &["rejection_fraction", "error", "oracle", "random"],
                &rows,
            )?;
        }
    }
    let mut metrics = aggregate(&results);
    metrics["model"] = json!(cfg.model.name());
    metrics["seed"] = json!(cfg.seed);
    metrics["folds"] = json!(folds);
    metrics["eval_ood_source"] = json!(if external.is_some() {
        "external"
    } else {
        "factor_analysis"
    });
    out.finish(command, cfg, metrics)
}
