//! Reverse-mode gradients through a small Normal-Wishart MLP, checked against
//! central differences of the reverse-KL loss.
//!
//!     cargo run --release --example autodiff

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rpn::linalg::Matrix;
use rpn::losses::graph as lg;
use rpn::losses::{multitask_rkl, PriorConfig};
use rpn::nn::{Graph, HeadKind, Mlp, MlpConfig};

fn main() -> rpn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = MlpConfig {
        input_dim: 1,
        hidden_sizes: vec![8],
        activation: Default::default(),
        head: HeadKind::NormalWishart,
        output_dim: 1,
    };
    let model = Mlp::new(cfg, &mut rng)?;
    let x = Matrix::from_vec(4, 1, vec![-1.0, 0.0, 0.5, 2.0])?;
    let y = Matrix::from_vec(4, 1, vec![-0.8, 0.1, 0.4, 1.1])?;
    let ood = Matrix::from_vec(2, 1, vec![-6.0, 6.0])?;
    let targets: Vec<Vec<f64>> = (0..4).map(|i| y.row(i).to_vec()).collect();
    let prior = PriorConfig::from_targets(&targets, 1e-2, 100.0, 0.5)?;

    let mut g = Graph::new();
    let loss = lg::multitask_rkl(&mut g, &model, &x, &y, Some(&ood), &prior)?;
    println!("loss {:.6} ({} nodes)", g.scalar_value(loss), g.len());
    g.backward(loss)?;
    let grads = g.param_grads(&model.param_shapes());

    let h = 1e-6;
    for (p, grad) in grads.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for e in 0..grad.as_slice().len() {
            let mut plus = model.clone();
            plus.params_mut()[p].as_mut_slice()[e] += h;
            let mut minus = model.clone();
            minus.params_mut()[p].as_mut_slice()[e] -= h;
            let fd = (multitask_rkl(&plus, &x, &y, Some(&ood), &prior)?
                - multitask_rkl(&minus, &x, &y, Some(&ood), &prior)?)
                / (2.0 * h);
            worst = worst.max((fd - grad.as_slice()[e]).abs());
        }
        println!(
            "param {p} ({}x{}): max |autodiff - fd| = {worst:.2e}",
            grad.rows(),
            grad.cols()
        );
    }
    Ok(())
}
