//! Monte-Carlo verification of every closed form.
//!
//!     cargo run --release --example verify_closed_forms -- [samples] [seed]

use rpn::experiments::verification::run_verification;

fn main() -> rpn::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples = args.next().and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let start = std::time::Instant::now();
    let report = run_verification(samples, seed)?;
    for s in &report.summary {
        println!(
            "{:<24} max |z| = {:.3}  {}",
            format!("{:?}", s.formula),
            s.max_abs_z,
            if s.pass { "ok" } else { "FAIL" }
        );
    }
    println!("{} samples per check, {:.1}s", samples, start.elapsed().as_secs_f64());
    Ok(())
}
