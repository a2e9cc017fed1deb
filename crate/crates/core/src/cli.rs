//! Command-line front end. Every command prints one JSON summary line on
//! stdout; diagnostics go to stderr. Exit codes: 0 success, 1 the
//! experiment failed, 2 usage or configuration error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::data::{
    csv_ingest, fa_default_latent, fa_fit_traced, fa_sample_ood, synth_generate, synth_ood, write_csv, ColumnStats,
    Dataset,
};
use crate::error::{Error, Result};
use crate::experiments::config::{DatasetSpec, ExperimentConfig};
use crate::experiments::seeds::{stream, Stream};
use crate::experiments::verification::run_verification;
use crate::experiments::{self, Artifacts, Manifest, RunSummary};

const SCHEMA_HELP: &str = "\
CONFIG SCHEMA (JSON, unknown keys rejected)
  schema_version   1
  seed             integer (default 0)
  output_dir       path (default runs/default)
  dataset          {\"kind\":\"synthetic\", n_train, n_ood}
                 | {\"kind\":\"csv\", path, schema:{has_header, target_column, drop_constant,
                    max_columns, max_rows}, folds, standardize_targets, fa_latent, fa_scale,
                    fa_iters, eval_ood:{path, schema}}
  model            {\"kind\": single | ensemble (members) | nwpn_rkl | end | md_end | endd}
  network          {hidden_sizes: [..]}
  train            {epochs, batch_size, adam:{lr, beta1, beta2, eps, weight_decay}}
  prior            {epsilon, beta_in, gamma, gamma_warmup_epochs}
  distill          {teacher_dir, anneal:{t_initial, hold_frac, decay_frac}, input_noise}
  eval             {scalarization: logdet|trace, curve_convention: zero_fill|retained_mean,
                    grid:{min, max, points}}

Overrides: --set train.adam.lr=0.001 (value parsed as JSON, else string).
Logging: NWPN_LOG=error|info|debug.";

#[derive(Debug, Parser)]
#[command(name = "rpn", version, about = "Regression prior networks: training, evaluation and verification", after_help = SCHEMA_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted-path override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes the configured dataset (and synthetic OOD inputs) as CSV and JSON.
    GenData(Common),
    /// Fits factor analysis to the dataset inputs and samples OOD inputs.
    FaOod {
        #[command(flatten)]
        common: Common,
        /// Number of OOD rows (default: dataset size).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Trains and evaluates the configured model.
    Train(Common),
    /// Re-evaluates the checkpoints of a finished run; writes to <out>/eval.
    Eval(Common),
    /// Monte-Carlo verification of the closed forms.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Writes the input scatter and uncertainty-vs-x series of a synthetic run.
    ExportCurves(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::FaOod { .. } => "fa-ood",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Verify { .. } => "verify",
            Command::ExportCurves(_) => "export-curves",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenData(c) | Command::Train(c) | Command::Eval(c) | Command::ExportCurves(c) => c,
            Command::FaOod { common, .. } | Command::Verify { common, .. } => common,
        }
    }
}

/// Failure split by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(Error),
    Run(Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Run(_) => 1,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Usage(e) | Failure::Run(e) => e,
        }
    }
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn running<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Run)
}

/// Config from `--config`, with overrides, seed and output directory applied.
pub fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path, &c.set)?;
    apply_flags(&mut cfg, c);
    Ok(cfg)
}

fn apply_flags(cfg: &mut ExperimentConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
}

/// Config of a finished run: `--config` when given, else the manifest in `--out`.
fn run_config(c: &Common) -> Result<ExperimentConfig> {
    if c.config.is_some() {
        return resolve_config(c);
    }
    let dir = c
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("need --config or --out pointing at a finished run".into()))?;
    let manifest = Manifest::load(dir)?;
    let mut cfg = ExperimentConfig::from_value_with_overrides(manifest.config, &c.set)?;
    apply_flags(&mut cfg, c);
    Ok(cfg)
}

fn summary_json(s: &RunSummary) -> serde_json::Value {
    json!({
        "command": s.command,
        "ok": true,
        "output_dir": s.output_dir,
        "manifest_sha256": s.manifest_sha256,
        "metrics": s.metrics,
    })
}

fn gen_data(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let mut out = Artifacts::create(&cfg.output_dir)?;
    let metrics = match &cfg.dataset {
        DatasetSpec::Synthetic { n_train, n_ood } => {
            let train = synth_generate(*n_train, stream(cfg.seed, Stream::Data))?;
            let ood = synth_ood(*n_ood, stream(cfg.seed, Stream::Ood))?;
            write_dataset(&mut out, "train", &train)?;
            write_dataset(&mut out, "ood_train", &ood)?;
            json!({ "train_rows": train.len(), "ood_rows": ood.len() })
        }
        DatasetSpec::Csv { path, schema, .. } => {
            let ds = csv_ingest(path, schema)?;
            write_dataset(&mut out, "dataset", &ds)?;
            json!({ "rows": ds.len(), "inputs": ds.input_dim(), "features": ds.feature_names })
        }
    };
    out.finish("gen-data", cfg, metrics)
}

fn write_dataset(out: &mut Artifacts, stem: &str, ds: &Dataset) -> Result<()> {
    let csv = format!("{stem}.csv");
    write_csv(ds, &out.path(&csv)?)?;
    out.record(&csv)?;
    out.write_json(&format!("{stem}.json"), ds)
}

fn fa_ood(cfg: &ExperimentConfig, samples: Option<usize>) -> Result<RunSummary> {
    let DatasetSpec::Csv {
        path,
        schema,
        fa_latent,
        fa_scale,
        fa_iters,
        ..
    } = &cfg.dataset
    else {
        return Err(Error::Config("fa-ood needs a csv dataset".into()));
    };
    let ds = csv_ingest(path, schema)?;
    let stats = ColumnStats::from_matrix(&ds.inputs)?;
    let x = stats.apply(&ds.inputs)?;
    let d = fa_latent.unwrap_or_else(|| fa_default_latent(ds.input_dim()));
    let (model, trace) = fa_fit_traced(&x, d, *fa_iters, 1e-8, stream(cfg.seed, Stream::FaFit))?;
    let n = samples.unwrap_or(ds.len());
    let mut ood = fa_sample_ood(&model, n, *fa_scale, stream(cfg.seed, Stream::FaTrain))?;
    ood.inputs = stats.invert(&ood.inputs)?;
    ood.feature_names = ds.feature_names.clone();
    let mut out = Artifacts::create(&cfg.output_dir)?;
    out.write_json("fa_model.json", &model)?;
    write_dataset(&mut out, "fa_ood", &ood)?;
    let metrics = json!({
        "rows": n,
        "latent_dim": d,
        "scale": fa_scale,
        "em_iterations": trace.len(),
        "log_likelihood": trace.last(),
    });
    out.finish("fa-ood", cfg, metrics)
}

fn verify(c: &Common, samples: usize) -> std::result::Result<serde_json::Value, Failure> {
    let seed = c.seed.unwrap_or(0);
    let report = usage(run_verification(samples, seed))?;
    let mut line = json!({
        "command": "verify",
        "ok": true,
        "pass": report.pass,
        "max_abs_z": report.max_abs_z,
        "samples": samples,
        "seed": seed,
    });
    if let Some(dir) = &c.out {
        let mut out = running(Artifacts::create(dir))?;
        running(out.write_json("verification.json", &report))?;
        let s = running(out.finish_raw(
            "verify",
            seed,
            json!({ "samples": samples }),
            json!({ "pass": report.pass, "max_abs_z": report.max_abs_z }),
        ))?;
        line["output_dir"] = json!(s.output_dir);
        line["manifest_sha256"] = json!(s.manifest_sha256);
    }
    Ok(line)
}

fn export_curves(dir: &Path) -> Result<RunSummary> {
    let manifest = Manifest::load(dir)?;
    let cfg: ExperimentConfig = serde_json::from_value(manifest.config)?;
    if !matches!(cfg.dataset, DatasetSpec::Synthetic { .. }) {
        return Err(Error::Config("export-curves needs a synthetic run directory".into()));
    }
    let read = |name: &str| -> Result<Vec<Vec<f64>>> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let mut r = csv::Reader::from_path(path)?;
        r.records()
            .map(|rec| {
                rec?.iter()
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Config(format!("{name}: {e}"))))
                    .collect()
            })
            .collect()
    };
    let scatter = read("train.csv")?;
    let grid = read("grid.csv")?;
    let mut out = Artifacts::create(&dir.join("curves"))?;
    out.write_table("input_scatter.csv", &["x", "y"], &scatter)?;
    let series: Vec<Vec<f64>> = grid.iter().map(|r| r[..5].to_vec()).collect();
    out.write_table(
        "uncertainty_vs_x.csv",
        &["x", "mean", "total_variance", "data_variance", "knowledge_variance"],
        &series,
    )?;
    out.finish(
        "export-curves",
        &cfg,
        json!({ "scatter_rows": scatter.len(), "grid_rows": series.len() }),
    )
}

/// Runs one parsed command and returns its JSON summary line.
pub fn dispatch(cmd: &Command) -> std::result::Result<serde_json::Value, Failure> {
    let c = cmd.common();
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads.max(1))
        .build_global();
    let summary = match cmd {
        Command::Verify { samples, .. } => return verify(c, *samples),
        Command::ExportCurves(_) => {
            let dir = c
                .out
                .as_ref()
                .ok_or_else(|| Failure::Usage(Error::Config("export-curves needs --out <run dir>".into())))?;
            running(export_curves(dir))?
        }
        Command::GenData(_) => running(gen_data(&usage(resolve_config(c))?))?,
        Command::FaOod { samples, .. } => running(fa_ood(&usage(resolve_config(c))?, *samples))?,
        Command::Train(_) => running(experiments::run(&usage(resolve_config(c))?))?,
        Command::Eval(_) => running(experiments::evaluate(&usage(run_config(c))?))?,
    };
    Ok(summary_json(&summary))
}

/// Parses `args`, runs the command, prints the summary line and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.error());
            println!(
                "{}",
                json!({ "command": cli.command.name(), "ok": false, "error": f.error().to_string() })
            );
            f.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_train() {
        let cli = Cli::try_parse_from([
            "rpn", "train", "--config", "c.json", "--seed", "7", "--set", "a.b=1", "--set", "c=2",
        ])
        .unwrap();
        match cli.command {
            Command::Train(c) => {
                assert_eq!(c.config, Some(PathBuf::from("c.json")));
                assert_eq!(c.seed, Some(7));
                assert_eq!(c.threads, 1);
                assert_eq!(c.set, vec!["a.b=1", "c=2"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_verify() {
        let cli = Cli::try_parse_from(["rpn", "verify", "--samples", "100000"]).unwrap();
        assert!(matches!(cli.command, Command::Verify { samples: 100_000, .. }));
    }

    #[test]
    fn rejects_unknown_flag() {
        let e = Cli::try_parse_from(["rpn", "train", "--bogus"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_config_is_usage_error() {
        let cli = Cli::try_parse_from(["rpn", "train", "--config", "/nonexistent/missing.json"]).unwrap();
        let f = dispatch(&cli.command).unwrap_err();
        assert_eq!(f.code(), 2);
        assert!(f.error().to_string().contains("missing.json"));
    }
}
