//! 10-fold cross-validation on red wine quality: a single Gaussian network,
//! an ensemble of 10, the reverse-KL prior network and the three distilled
//! students (EnD, MD-EnD, EnD²) taught by the ensemble.
//!
//!     cargo run --release --example wine_benchmark -- [out_dir] [seed]

use std::path::PathBuf;

use rpn::experiments::{run, ExperimentConfig};

fn main() -> rpn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NWPN_LOG", "warn")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/wine".into()));
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let names = ["single", "ensemble", "nwpn", "end", "md_end", "endd"];
    println!(
        "{:<10} {:>14} {:>14} {:>22}",
        "model", "rmse", "nll", "ood auc (mi / kvar)"
    );
    for name in names {
        let mut cfg = ExperimentConfig::load(&PathBuf::from(format!("configs/wine_{name}.json")), &[])?;
        cfg.seed = seed;
        cfg.output_dir = out.join(name);
        if cfg.model.is_distillation() {
            cfg.distill.teacher_dir = Some(out.join("ensemble"));
        }
        let m = run(&cfg)?.metrics;
        let pm = |k: &str| {
            format!(
                "{:.3} ± {:.3}",
                m[k]["mean"].as_f64().unwrap_or(f64::NAN),
                m[k]["std"].as_f64().unwrap_or(f64::NAN)
            )
        };
        let auc = |k: &str| {
            m["auc"][k]["mean"]
                .as_f64()
                .map_or("-".to_string(), |v| format!("{v:.3}"))
        };
        println!(
            "{name:<10} {:>14} {:>14} {:>22}",
            pm("rmse"),
            pm("nll"),
            format!("{} / {}", auc("mutual_information"), auc("knowledge_variance"))
        );
    }
    Ok(())
}
