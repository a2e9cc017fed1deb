//! Minibatch training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::mlp::Mlp;
use super::optim::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};

/// Losses beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

/// Runs `epochs` passes over `n` shuffled example indices. `batch_loss`
/// records the scalar loss of one batch on the graph; it receives the
/// batch indices and the epoch. Returns the mean loss of every epoch.
pub fn train<R, F>(model: &mut Mlp, n: usize, cfg: &TrainConfig, rng: &mut R, mut batch_loss: F) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&mut Graph, &Mlp, &[usize], usize) -> Result<Var>,
{
    if n == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "training needs data and a positive batch size".into(),
        ));
    }
    let shapes = model.param_shapes();
    let mut state = AdamState::new(&shapes);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let loss = batch_loss(&mut g, model, batch, epoch)?;
            let value = g.scalar_value(loss);
            if !value.is_finite() || value.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence { epoch, loss: value });
            }
            g.backward(loss)?;
            let grads = g.param_grads(&shapes);
            adam_step(model.params_mut(), &grads, &mut state, &cfg.adam)?;
            total += value;
            batches += 1;
        }
        log::debug!("epoch {epoch}: loss {:.6}", total / batches as f64);
        history.push(total / batches as f64);
    }
    Ok(history)
}
