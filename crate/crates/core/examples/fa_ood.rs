//! Factor-analysis OOD inputs for a tabular dataset: fit FA to standardized
//! wine features, draw samples with inflated latent scale and compare
//! their likelihood under the fitted model with the real data.
//!
//!     cargo run --release --example fa_ood -- [csv] [target]

use std::path::PathBuf;

use rpn::data::{csv_ingest, fa_default_latent, fa_fit_traced, fa_sample_ood, standardize, CsvSchema};

fn main() -> rpn::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().unwrap_or_else(|| "data/winequality-red.csv".into()));
    let target = args.next().unwrap_or_else(|| "quality".into());
    let ds = csv_ingest(
        &path,
        &CsvSchema {
            target_column: Some(target),
            ..Default::default()
        },
    )?;
    let (ds, _) = standardize(&ds, &[], false)?;
    let d = fa_default_latent(ds.input_dim());
    let (model, trace) = fa_fit_traced(&ds.inputs, d, 500, 1e-6, 0)?;
    println!(
        "{} rows, {} features, {d} factors, EM converged in {} iterations",
        ds.len(),
        ds.input_dim(),
        trace.len()
    );
    println!("in-domain mean log-likelihood {:.3}", model.log_likelihood(&ds.inputs)?);
    for scale in [1.0, 2.0, 3.0, 5.0] {
        let ood = fa_sample_ood(&model, ds.len(), scale, 1)?;
        println!(
            "scale {scale}: OOD mean log-likelihood {:.3}",
            model.log_likelihood(&ood.inputs)?
        );
    }
    Ok(())
}
