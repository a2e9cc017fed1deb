//! The 1-D heteroscedastic benchmark: an ensemble of 10, a prior network
//! trained with the reverse-KL objective, and EnD² distilled from the ensemble.
//!
//!     cargo run --release --example synthetic_benchmark -- [out_dir] [seed]

use std::path::PathBuf;

use rpn::experiments::{run, ExperimentConfig, ModelKind};

fn main() -> rpn::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NWPN_LOG", "info")).init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/synthetic".into()));
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let mut ensemble = ExperimentConfig::synthetic(ModelKind::Ensemble { members: 10 });
    ensemble.seed = seed;
    ensemble.output_dir = out.join("ensemble");
    let mut nwpn = ExperimentConfig::synthetic(ModelKind::NwpnRkl);
    nwpn.seed = seed;
    nwpn.output_dir = out.join("nwpn");
    let mut endd = ExperimentConfig::synthetic(ModelKind::Endd);
    endd.seed = seed;
    endd.output_dir = out.join("endd");
    endd.distill.teacher_dir = Some(ensemble.output_dir.clone());

    for cfg in [&ensemble, &nwpn, &endd] {
        let start = std::time::Instant::now();
        let summary = run(cfg)?;
        println!("{} ({:.0}s)", cfg.model.name(), start.elapsed().as_secs_f64());
        println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
    }
    Ok(())
}
