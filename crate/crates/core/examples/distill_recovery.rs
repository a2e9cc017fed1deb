//! EnD² on a known target: sample an "ensemble" of Gaussians from a
//! Normal-Wishart and recover its parameters by minimizing the distillation
//! loss, at several temperatures.
//!
//!     cargo run --release --example distill_recovery -- [members]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rpn::distributions::{sample_nw, NormalParams, NormalWishartParams};
use rpn::experiments::models::distill_constant;
use rpn::linalg::{cholesky, Matrix};

fn main() -> rpn::Result<()> {
    let members: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let truth = NormalWishartParams::new(
        vec![0.5, -1.0],
        cholesky(&Matrix::from_rows(&[&[0.8, 0.3], &[0.3, 0.5]]))?,
        2.0,
        8.0,
    )?;
    let ensemble = (0..members)
        .map(|_| {
            let (mu, lambda) = sample_nw(&truth, &mut rng)?;
            NormalParams::new(mu, lambda)
        })
        .collect::<rpn::Result<Vec<_>>>()?;
    println!("truth: m {:?} kappa {} nu {}", truth.m, truth.kappa, truth.nu);
    for t in [1.0, 2.0, 5.0] {
        let fit = distill_constant(&ensemble, t, 3000, 0.02)?;
        println!(
            "T={t}: m [{:.3}, {:.3}] kappa {:.3} nu {:.3} L {:?}",
            fit.m[0],
            fit.m[1],
            fit.kappa,
            fit.nu,
            fit.l
                .to_matrix()
                .as_slice()
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}
