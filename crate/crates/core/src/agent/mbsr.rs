//! Offline pre-training with multi-branch short rollouts.
//!
//! Branches start from states sampled out of the demonstrations. Each branch
//! first explores: the policy acts with extra Gaussian action noise for a few
//! steps, wandering into regions the ensemble scores as out-of-distribution
//! (reward 0), which penalizes drifting off the expert manifold. It then
//! exploits: a longer rollout under the policy's own actions inside the
//! region the model predicts well. The single model `m0` supplies next
//! states, the ensemble supplies rewards, and the actor and critic are
//! updated after every model step. No environment interaction happens here:
//! the function never sees an environment.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Agent, BcPolicy, TrainConfig, TransitionBatch};
use crate::demos::{DemoSet, ReplayPool, Transition};
use crate::dynmodel::{ensemble_reward, EnsembleDynamics, RewardConfig, SingleDynamics};
use crate::envs::STATE_BOUND;
use crate::{Error, Result};

/// Summary of one pre-training run.
#[derive(Debug, Clone)]
pub struct MbsrLog {
    pub branches: usize,
    /// Model steps taken (exploration + exploitation over all branches).
    pub model_steps: u64,
    /// Mean ensemble reward over all model steps.
    pub avg_reward: f64,
    /// Mean ensemble reward per branch.
    pub branch_rewards: Vec<f64>,
}

/// Runs `branch_count` branches of exploration + exploitation rollouts inside
/// the learned model, updating the agent each step. Deterministic per seed.
pub fn mbsr_pretrain(
    agent: &mut Agent,
    bc: &BcPolicy,
    m0: &SingleDynamics,
    ensemble: &EnsembleDynamics,
    reward_cfg: &RewardConfig,
    demos: &DemoSet,
    config: &TrainConfig,
    seed: u64,
) -> Result<MbsrLog> {
    config.validate()?;
    if !reward_cfg.is_calibrated() {
        return Err(Error::Config("pre-training needs a calibrated reward".into()));
    }
    if demos.n_transitions() == 0 {
        return Err(Error::Config("pre-training needs a non-empty demo set".into()));
    }
    if demos.state_dim() != m0.state_dim || demos.action_dim() != m0.action_dim {
        return Err(Error::Dimension("demo dims do not match the dynamics model".into()));
    }

    let start_states: Vec<&[f64]> = demos.iter_transitions().map(|t| t.state.as_slice()).collect();
    let mut rng = crate::seeds::rng(seed);
    // Model transitions feed their own pool so every step updates on a full
    // batch; nothing here ever reaches a real environment.
    let mut model_pool = ReplayPool::new(config.replay_capacity)?;
    let mut log = MbsrLog {
        branches: config.branch_count,
        model_steps: 0,
        avg_reward: 0.0,
        branch_rewards: Vec::with_capacity(config.branch_count),
    };
    let mut reward_total = 0.0;

    for _ in 0..config.branch_count {
        let mut state = start_states[rng.random_range(0..start_states.len())].to_vec();
        let mut branch_reward = 0.0;
        let mut branch_steps = 0u64;
        for phase in 0..2 {
            let (len, noise_std) = if phase == 0 {
                (config.explore_len, config.exploration_noise_std)
            } else {
                (config.exploit_len, 0.0)
            };
            for _ in 0..len {
                let (mut action, _) = agent.policy.sample(&state, &mut rng)?;
                if noise_std > 0.0 {
                    for a in action.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *a += noise_std * z;
                    }
                    agent.policy.clip_action(&mut action);
                }
                let mut next_state = m0.predict(&state, &action)?;
                if next_state.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("model rollout produced a non-finite state".into()));
                }
                // Model rollouts stay inside the documented state box, like
                // the data the model was fitted on.
                for v in next_state.iter_mut() {
                    *v = v.clamp(-STATE_BOUND, STATE_BOUND);
                }
                let reward = ensemble_reward(ensemble, reward_cfg, &state, &action)?;
                branch_reward += reward;
                branch_steps += 1;

                model_pool.push(Transition {
                    state: state.clone(),
                    action,
                    next_state: next_state.clone(),
                    reward: Some(reward),
                    done: false,
                });
                let sampled =
                    model_pool.sample_with(config.batch_size.min(model_pool.len()), &mut rng)?;
                let next_actions = sampled
                    .iter()
                    .map(|t| Ok(agent.policy.sample(&t.next_state, &mut rng)?.0))
                    .collect::<Result<Vec<_>>>()?;
                let batch = TransitionBatch::from_transitions(&sampled, next_actions)?;
                agent.update(bc, &batch, config)?;
                state = next_state;
            }
        }
        log.model_steps += branch_steps;
        reward_total += branch_reward;
        log.branch_rewards.push(if branch_steps > 0 {
            branch_reward / branch_steps as f64
        } else {
            0.0
        });
    }
    log.avg_reward = if log.model_steps > 0 {
        reward_total / log.model_steps as f64
    } else {
        0.0
    };
    Ok(log)
}
