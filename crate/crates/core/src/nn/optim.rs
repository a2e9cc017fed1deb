//! Adam with bias correction and coupled (L2) weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. The decay term `weight_decay · θ` is added to
/// the gradient before the moment estimates.
pub fn adam_step(params: &mut [Matrix], grads: &[Matrix], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    check_dim(params.len(), grads.len())?;
    check_dim(params.len(), state.m.len())?;
    for (p, g) in params.iter().zip(grads) {
        check_dim(p.as_slice().len(), g.as_slice().len())?;
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let ps = p.as_mut_slice();
        let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
        for (i, gi) in g.as_slice().iter().enumerate() {
            let gi = gi + cfg.weight_decay * ps[i];
            ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * gi;
            vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * gi * gi;
            ps[i] -= cfg.lr * (ms[i] / c1) / ((vs[i] / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = vec![Matrix::filled(1, 2, 3.0)];
        let g = vec![Matrix::zeros(1, 2)];
        let mut s = AdamState::new(&[(1, 2)]);
        adam_step(
            &mut p,
            &g,
            &mut s,
            &AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(p[0].as_slice(), &[3.0, 3.0]);
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 1e-2,
            ..Default::default()
        };
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert!(p[0][(0, 0)] < 3.0);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut p = vec![Matrix::zeros(1, 1)];
        let g = vec![Matrix::filled(1, 1, 0.37)];
        let mut s = AdamState::new(&[(1, 1)]);
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        let mut prev = 0.0;
        for _ in 0..2000 {
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            let cur = p[0][(0, 0)];
            assert!(((prev - cur) - 0.01).abs() < 1e-6);
            prev = cur;
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let run = || {
            let mut p = vec![Matrix::filled(2, 2, 0.5)];
            let g = vec![Matrix::from_rows(&[&[0.1, -0.2], &[0.3, 0.0]])];
            let mut s = AdamState::new(&[(2, 2)]);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut p = vec![Matrix::zeros(1, 1)];
        let mut s = AdamState::new(&[(1, 1)]);
        assert!(adam_step(&mut p, &[Matrix::zeros(1, 2)], &mut s, &AdamConfig::default()).is_err());
    }
}
