//! Closed-form uncertainty of a Normal-Wishart as its concentration grows:
//! knowledge uncertainty shrinks while data uncertainty stays put.
//!
//!     cargo run --release --example nw_uncertainty

use rpn::distributions::{posterior_predictive, NormalWishartParams};
use rpn::linalg::{cholesky, Matrix};
use rpn::uncertainty::{nw_measures, Scalarization};

fn main() -> rpn::Result<()> {
    let precision = Matrix::from_rows(&[&[2.0, 0.4], &[0.4, 1.0]]);
    println!(
        "{:>8} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "kappa", "nu", "H[total]", "H[data]", "MI", "EPKL", "var[know]"
    );
    for (kappa, extra) in [(0.1, 1.0), (1.0, 5.0), (10.0, 50.0), (100.0, 500.0)] {
        let nu = 3.0 + extra;
        // Scale the Wishart so the expected precision stays fixed.
        let l = cholesky(&precision.scale(1.0 / nu))?;
        let omega = NormalWishartParams::new(vec![0.0, 1.0], l, kappa, nu)?;
        let r = nw_measures(&omega, Scalarization::Trace, None)?;
        println!(
            "{kappa:>8} {nu:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            r.total_entropy.unwrap_or(f64::NAN),
            r.expected_data_entropy.unwrap_or(f64::NAN),
            r.mutual_information.unwrap_or(f64::NAN),
            r.epkl,
            r.knowledge_variance
        );
        let t = posterior_predictive(&omega)?;
        let s = t.scale.to_matrix();
        println!(
            "         predictive Student-t: dof {:.0}, scale diag [{:.4}, {:.4}]",
            t.dof,
            s[(0, 0)],
            s[(1, 1)]
        );
    }
    Ok(())
}
