//! The online training loop: act in the real environment, reward every
//! transition with the ensemble, and update the actor and critic from the
//! replay pool.

use std::io::Write;
use std::path::Path;

use super::{Agent, BcPolicy, GaussianPolicy, TrainConfig, TransitionBatch};
use crate::demos::{ReplayPool, Transition};
use crate::dynmodel::{ensemble_reward, EnsembleDynamics, RewardConfig};
use crate::envs::{ContinuousEnv, EnvSession};
use crate::{Error, Result};

/// One completed training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Cumulative real-environment interactions at episode end.
    pub env_steps: u64,
    /// Fraction of this episode's post-step states inside the goal region
    /// (evaluation-only signal; the learner never sees it).
    pub task_return: f64,
    /// Sum of ensemble rewards collected in this episode.
    pub ensemble_return: f64,
    /// Episode averages of the update diagnostics; NaN when no updates ran.
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub supervised_term: f64,
}

pub const METRICS_HEADER: &str =
    "episode,env_steps,task_return,ensemble_return,actor_loss,critic_loss,supervised_term";

/// Per-episode metrics plus exact interaction accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<EpisodeMetrics>,
    /// Total real-environment steps taken by the training loop, including any
    /// partial episode cut off by the step budget.
    pub total_interactions: u64,
}

impl MetricsLog {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.9},{:.9},{:.9},{:.9},{:.9}",
                r.episode,
                r.env_steps,
                r.task_return,
                r.ensemble_return,
                r.actor_loss,
                r.critic_loss,
                r.supervised_term
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MetricsLog> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line != METRICS_HEADER {
                    return Err(Error::Format(format!("bad metrics header '{line}'")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Format(format!("metrics row has {} fields", f.len())));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad metrics float '{s}'")))
            };
            rows.push(EpisodeMetrics {
                episode: f[0]
                    .parse()
                    .map_err(|_| Error::Format("bad episode index".into()))?,
                env_steps: f[1]
                    .parse()
                    .map_err(|_| Error::Format("bad env_steps".into()))?,
                task_return: parse(f[2])?,
                ensemble_return: parse(f[3])?,
                actor_loss: parse(f[4])?,
                critic_loss: parse(f[5])?,
                supervised_term: parse(f[6])?,
            });
        }
        let total_interactions = rows.last().map_or(0, |r| r.env_steps);
        Ok(MetricsLog {
            rows,
            total_interactions,
        })
    }
}

/// Trains in the real environment until the step budget is exhausted or the
/// task return plateaus. Episodes always run to completion; the budget is
/// checked at episode boundaries. Returns per-episode metrics.
pub fn mrfil_train(
    agent: &mut Agent,
    bc: &BcPolicy,
    ensemble: &EnsembleDynamics,
    reward_cfg: &RewardConfig,
    session: &mut EnvSession,
    pool: &mut ReplayPool,
    config: &TrainConfig,
    seed: u64,
) -> Result<MetricsLog> {
    config.validate()?;
    if !reward_cfg.is_calibrated() {
        return Err(Error::Config("training needs a calibrated reward".into()));
    }
    let mut rng = crate::seeds::rng(seed);
    let mut log = MetricsLog::default();
    let start_interactions = session.interactions();
    let mut best_return = f64::NEG_INFINITY;
    let mut stale_episodes = 0usize;
    let mut episode = 0usize;

    while session.interactions() - start_interactions < config.max_env_steps {
        let mut obs = session.reset();
        let mut in_goal = 0usize;
        let mut steps = 0usize;
        let mut ensemble_return = 0.0;
        let mut actor_loss_sum = 0.0;
        let mut critic_loss_sum = 0.0;
        let mut supervised_sum = 0.0;
        let mut updates = 0usize;
        loop {
            let (action, _) = agent.policy.sample(&obs, &mut rng)?;
            let (next_obs, done) = session.step(&action)?;
            let reward = ensemble_reward(ensemble, reward_cfg, &obs, &action)?;
            ensemble_return += reward;
            steps += 1;
            if session.in_goal_now() {
                in_goal += 1;
            }
            pool.push(Transition {
                state: obs,
                action,
                next_state: next_obs.clone(),
                reward: Some(reward),
                done,
            });
            if pool.len() >= config.batch_size {
                let sampled = pool.sample_with(config.batch_size, &mut rng)?;
                let next_actions = sampled
                    .iter()
                    .map(|t| Ok(agent.policy.sample(&t.next_state, &mut rng)?.0))
                    .collect::<Result<Vec<_>>>()?;
                let batch = TransitionBatch::from_transitions(&sampled, next_actions)?;
                let (critic_diag, actor_diag) = agent.update(bc, &batch, config)?;
                if !critic_diag.skipped && !actor_diag.skipped {
                    critic_loss_sum += critic_diag.loss;
                    actor_loss_sum += actor_diag.loss;
                    supervised_sum += actor_diag.supervised_term;
                    updates += 1;
                }
            }
            obs = next_obs;
            if done {
                break;
            }
        }
        let task_return = in_goal as f64 / steps as f64;
        let (actor_loss, critic_loss, supervised_term) = if updates > 0 {
            let n = updates as f64;
            (actor_loss_sum / n, critic_loss_sum / n, supervised_sum / n)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        log.rows.push(EpisodeMetrics {
            episode,
            env_steps: session.interactions() - start_interactions,
            task_return,
            ensemble_return,
            actor_loss,
            critic_loss,
            supervised_term,
        });
        episode += 1;

        if task_return > best_return + 1e-12 {
            best_return = task_return;
            stale_episodes = 0;
        } else {
            stale_episodes += 1;
            if config.plateau_window > 0 && stale_episodes >= config.plateau_window {
                break;
            }
        }
    }
    log.total_interactions = session.interactions() - start_interactions;
    Ok(log)
}

/// Mean task return of a frozen policy over `n_episodes` evaluation rollouts.
/// Actions are the clipped policy mean; observation noise still applies.
pub fn evaluate_policy(
    env: &ContinuousEnv,
    policy: &GaussianPolicy,
    n_episodes: usize,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for ep in 0..n_episodes {
        let mut session = EnvSession::new(env.clone(), crate::seeds::derive(seed, ep as u64));
        let r = crate::envs::rollout_task_return(&mut session, |obs| {
            let mut a = policy.mean(obs).unwrap_or_else(|_| vec![0.0; policy.action_dim()]);
            policy.clip_action(&mut a);
            a
        })?;
        total += r;
    }
    Ok(total / n_episodes as f64)
}
