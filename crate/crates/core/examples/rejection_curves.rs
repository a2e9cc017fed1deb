//! Prediction-rejection ratio and AUC-ROC on toy scores: an informative
//! uncertainty, a noisy one, and pure noise.
//!
//!     cargo run --release --example rejection_curves

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rpn::eval::{auc_roc, prr, rejection_curve};

fn main() -> rpn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 2000;
    // Heteroscedastic errors whose scale is the "true" uncertainty.
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let errors: Vec<f64> = sigma
        .iter()
        .map(|s| (s * rng.sample::<f64, _>(StandardNormal)).powi(2))
        .collect();
    let noisy: Vec<f64> = sigma.iter().map(|s| s + rng.random_range(0.0..1.0)).collect();
    let random: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    for (name, scores) in [
        ("errors (oracle)", &errors),
        ("sigma", &sigma),
        ("sigma + noise", &noisy),
        ("random", &random),
    ] {
        let curve = rejection_curve(&errors, scores)?;
        println!("{name:<16} PRR {:+.3}", prr(&curve)?);
    }

    let in_domain: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for shift in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let ood: Vec<f64> = (0..500).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
        println!("OOD shift {shift}: AUC-ROC {:.3}", auc_roc(&in_domain, &ood)?);
    }
    Ok(())
}
