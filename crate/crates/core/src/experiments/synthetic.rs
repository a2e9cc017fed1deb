//! The 1-D heteroscedastic benchmark: train on x ∈ [−10, 10], score a dense
//! grid over [−30, 30] and summarize in-domain against far-OOD uncertainty.

use serde_json::json;

use super::config::{DatasetSpec, ExperimentConfig};
use super::models::{fit, member_predictions, Prediction, Trained};
use super::seeds::{stream, Stream};
use super::{fit_spec, load_teacher, Artifacts, RunSummary};
use crate::data::{synth_generate, synth_ood, SYNTH_RANGE};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::Checkpoint;
use crate::uncertainty::{ensemble_mean, Scalarization};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    /// Load `checkpoint.json` from the output directory and write to `eval/`.
    Eval,
}

/// Grid columns: every measure with variances as plain variances (trace
/// scalarization, identical to the variance itself for K = 1).
pub const GRID_HEADER: [&str; 9] = [
    "x",
    "mean",
    "total_variance",
    "data_variance",
    "knowledge_variance",
    "total_entropy",
    "data_entropy",
    "mutual_information",
    "epkl",
];

fn region_mean(xs: &[f64], values: &[f64], keep: impl Fn(f64) -> bool) -> Option<f64> {
    let v: Vec<f64> = xs
        .iter()
        .zip(values)
        .filter(|(x, _)| keep(**x))
        .map(|(_, v)| *v)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Knowledge measure used for the region ratios: mutual information when
/// the model has it, the knowledge variance otherwise.
fn knowledge(p: &Prediction) -> f64 {
    p.report.mutual_information.unwrap_or(p.report.knowledge_variance)
}

/// Region summaries over a grid of predictions made with trace scalarization.
pub fn grid_metrics(xs: &[f64], preds: &[Prediction]) -> serde_json::Value {
    let k: Vec<f64> = preds.iter().map(knowledge).collect();
    let kv: Vec<f64> = preds.iter().map(|p| p.report.knowledge_variance).collect();
    let dv: Vec<f64> = preds.iter().map(|p| p.report.expected_data_variance).collect();
    let in_dom = |x: f64| x.abs() <= 5.0;
    let ood_right = |x: f64| (20.0..=25.0).contains(&x);
    let ood = |x: f64| (20.0..=25.0).contains(&x.abs());
    let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let k_in = region_mean(xs, &k, in_dom);
    let k_right = region_mean(xs, &k, ood_right);
    let k_ood = region_mean(xs, &k, ood);
    // argmax of data variance over the training range only
    let (argmax, _) = xs
        .iter()
        .zip(&dv)
        .filter(|(x, _)| (SYNTH_RANGE.0..=SYNTH_RANGE.1).contains(*x))
        .fold(
            (f64::NAN, f64::NEG_INFINITY),
            |acc, (x, v)| if *v > acc.1 { (*x, *v) } else { acc },
        );
    json!({
        "knowledge_measure": if preds.first().is_some_and(|p| p.report.mutual_information.is_some()) { "mutual_information" } else { "knowledge_variance" },
        "knowledge_in_domain": k_in,
        "knowledge_ood_right": k_right,
        "knowledge_ood": k_ood,
        "knowledge_ratio_right": ratio(k_right, k_in),
        "knowledge_ratio_ood": ratio(k_ood, k_in),
        "knowledge_variance_in_domain": region_mean(xs, &kv, in_dom),
        "knowledge_variance_ood": region_mean(xs, &kv, ood),
        "data_variance_argmax": argmax,
    })
}

fn grid_row(x: f64, p: &Prediction) -> Vec<f64> {
    let r = &p.report;
    vec![
        x,
        p.mean[0],
        r.total_variance,
        r.expected_data_variance,
        r.knowledge_variance,
        r.total_entropy.unwrap_or(f64::NAN),
        r.expected_data_entropy.unwrap_or(f64::NAN),
        r.mutual_information.unwrap_or(f64::NAN),
        r.epkl,
    ]
}

pub fn run(cfg: &ExperimentConfig, mode: Mode) -> Result<RunSummary> {
    let DatasetSpec::Synthetic { n_train, n_ood } = cfg.dataset else {
        return Err(Error::Config("synthetic run needs a synthetic dataset".into()));
    };
    let train_set = synth_generate(n_train, stream(cfg.seed, Stream::Data))?;
    let ood_set = synth_ood(n_ood, stream(cfg.seed, Stream::Ood))?;
    let y = train_set.targets()?.clone();
    let teacher = load_teacher(cfg, CHECKPOINT_FILE)?;

    let (model, mut out, command) = match mode {
        Mode::Train => {
            let model = fit(
                &fit_spec(cfg),
                &train_set.inputs,
                &y,
                Some(&ood_set.inputs),
                teacher.as_ref().map(|t| t.members.as_slice()),
                stream(cfg.seed, Stream::Init),
            )?;
            let mut out = Artifacts::create(&cfg.output_dir)?;
            let rows: Vec<Vec<f64>> = (0..n_train)
                .map(|i| vec![train_set.inputs[(i, 0)], y[(i, 0)]])
                .collect();
            out.write_table("train.csv", &["x", "y"], &rows)?;
            let rows: Vec<Vec<f64>> = (0..n_ood).map(|i| vec![ood_set.inputs[(i, 0)]]).collect();
            out.write_table("ood_train.csv", &["x"], &rows)?;
            let meta = json!({ "model": cfg.model.name(), "seed": cfg.seed });
            out.write_checkpoint(CHECKPOINT_FILE, &Checkpoint::new(model.members(), meta))?;
            (model, out, "train")
        }
        Mode::Eval => {
            let ck = Checkpoint::load(&cfg.output_dir.join(CHECKPOINT_FILE))?;
            (
                Trained::from_checkpoint(&ck)?,
                Artifacts::create(&cfg.output_dir.join("eval"))?,
                "eval",
            )
        }
    };

    let xs = cfg.eval.grid.values();
    let grid = Matrix::from_vec(xs.len(), 1, xs.clone())?;
    let preds = model.predict(&grid, Scalarization::Trace)?;
    let rows: Vec<Vec<f64>> = xs.iter().zip(&preds).map(|(x, p)| grid_row(*x, p)).collect();
    out.write_table("grid.csv", &GRID_HEADER, &rows)?;

    let mut metrics = grid_metrics(&xs, &preds);
    let train_preds = model.predict(&train_set.inputs, Scalarization::Trace)?;
    let mut nll = 0.0;
    for (i, p) in train_preds.iter().enumerate() {
        nll += p.predictive.nll(y.row(i))?;
    }
    metrics["model"] = json!(cfg.model.name());
    metrics["seed"] = json!(cfg.seed);
    metrics["train_nll"] = json!(nll / n_train as f64);
    if let Some(t) = &teacher {
        // how closely the student mean follows the ensemble mean on the training inputs
        let members = member_predictions(&t.members, &train_set.inputs)?;
        let mad = members
            .iter()
            .zip(&train_preds)
            .map(|(m, p)| (ensemble_mean(m)[0] - p.mean[0]).abs())
            .sum::<f64>()
            / n_train as f64;
        metrics["teacher_mean_abs_dev"] = json!(mad);
    }
    out.finish(command, cfg, metrics)
}
