//! Behavioral cloning: supervised regression from demonstration states to
//! expert actions. The result stands in for the expert policy inside the
//! supervised actor term.

use rand::seq::SliceRandom;

use super::{BcPolicy, GaussianPolicy};
use crate::demos::DemoSet;
use crate::nn::{AdamHyper, AdamState, MlpParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden_width: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            hidden_width: 64,
        }
    }
}

/// Trains the policy mean to minimize the squared error against expert
/// actions. Deterministic per seed; the returned policy is frozen.
pub fn bc_train(
    demos: &DemoSet,
    action_bounds: Vec<[f64; 2]>,
    cfg: BcConfig,
    seed: u64,
) -> Result<BcPolicy> {
    if demos.n_transitions() == 0 {
        return Err(Error::Config("behavioral cloning needs a non-empty demo set".into()));
    }
    let state_dim = demos.state_dim();
    let action_dim = demos.action_dim();
    let mut policy = GaussianPolicy::new(
        state_dim,
        action_dim,
        cfg.hidden_width,
        action_bounds,
        crate::seeds::derive(seed, 0),
    )?;
    let transitions: Vec<_> = demos.iter_transitions().collect();
    let mut rng = crate::seeds::rng(crate::seeds::derive(seed, 1));
    let mut adam = AdamState::new(policy.mean_net.spec().clone(), AdamHyper::with_lr(cfg.lr));
    let mut indices: Vec<usize> = (0..transitions.len()).collect();
    for _ in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size.max(1)) {
            let mut grads = MlpParams::zeros(policy.mean_net.spec().clone());
            let norm = 1.0 / (chunk.len() * action_dim) as f64;
            for &i in chunk {
                let t = transitions[i];
                let mean = policy.mean_net.forward(&t.state)?;
                let cot: Vec<f64> = mean
                    .iter()
                    .zip(&t.action)
                    .map(|(m, a)| 2.0 * (m - a) * norm)
                    .collect();
                let (g, _) = policy.mean_net.backward(&t.state, &cot)?;
                grads.add_scaled(&g, 1.0);
            }
            adam.step(&mut policy.mean_net, &grads)?;
        }
    }
    Ok(BcPolicy::from_policy(policy))
}

/// Mean squared error of the cloned mean against expert actions.
pub fn bc_mse(bc: &BcPolicy, demos: &DemoSet) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in demos.iter_transitions() {
        let mean = bc.mean(&t.state)?;
        for (m, a) in mean.iter().zip(&t.action) {
            total += (m - a) * (m - a);
        }
        count += mean.len();
    }
    if count == 0 {
        return Err(Error::Config("empty demo set".into()));
    }
    Ok(total / count as f64)
}
