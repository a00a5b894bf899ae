//! The learner: Gaussian policy, Q critic, behavioral cloning, offline
//! multi-branch short-rollout pre-training, and the online training loop
//! driven by the ensemble reward.

mod bc;
mod mbsr;
mod mrfil;
mod updates;

pub use bc::{bc_mse, bc_train, BcConfig};
pub use mbsr::{mbsr_pretrain, MbsrLog};
pub use mrfil::{evaluate_policy, mrfil_train, EpisodeMetrics, MetricsLog, METRICS_HEADER};
pub use updates::{
    actor_gradient, actor_gradient_parts, actor_update, critic_update, ActorDiagnostics,
    ActorGradient, CriticDiagnostics,
};

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::demos::Transition;
use crate::nn::{
    load_params, save_params, AdamHyper, AdamState, MlpParams, MlpSpec, VecAdam,
};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Hidden-layer count for actor and critic networks.
pub const POLICY_HIDDEN_LAYERS: usize = 2;

/// Diagonal-Gaussian policy: an MLP mean over states plus a learnable
/// per-dimension log standard deviation, clamped to `[-5, 2]`. Sampled
/// actions are clipped to the action bounds; log-densities always refer to
/// the unclipped draw.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub mean_net: MlpParams,
    pub log_std: Vec<f64>,
    pub action_bounds: Vec<[f64; 2]>,
}

impl GaussianPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden_width: usize,
        action_bounds: Vec<[f64; 2]>,
        seed: u64,
    ) -> Result<Self> {
        if action_bounds.len() != action_dim {
            return Err(Error::Dimension("action bounds length mismatch".into()));
        }
        let spec = MlpSpec::with_hidden(state_dim, hidden_width, POLICY_HIDDEN_LAYERS, action_dim)?;
        Ok(Self {
            mean_net: MlpParams::init(spec, seed)?,
            log_std: vec![-1.6; action_dim],
            action_bounds,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(state)
    }

    pub fn clip_action(&self, action: &mut [f64]) {
        for (a, b) in action.iter_mut().zip(&self.action_bounds) {
            *a = a.clamp(b[0], b[1]);
        }
    }

    /// Draws `mean + std . z`, clips to bounds, and returns the clipped
    /// action with the log-density of the unclipped draw.
    pub fn sample(&self, state: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(state)?;
        let mut action = Vec::with_capacity(mean.len());
        let mut log_prob = 0.0;
        for (i, &m) in mean.iter().enumerate() {
            let ls = self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let z: f64 = StandardNormal.sample(rng);
            action.push(m + ls.exp() * z);
            log_prob += -0.5 * z * z - ls - HALF_LN_TWO_PI;
        }
        self.clip_action(&mut action);
        Ok((action, log_prob))
    }

    /// Log-density of `action` under the current Gaussian.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let mean = self.mean(state)?;
        if action.len() != mean.len() {
            return Err(Error::Dimension("action length mismatch".into()));
        }
        let mut lp = 0.0;
        for (i, (&m, &a)) in mean.iter().zip(action).enumerate() {
            let ls = self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let z = (a - m) / ls.exp();
            lp += -0.5 * z * z - ls - HALF_LN_TWO_PI;
        }
        Ok(lp)
    }

    /// Entropy of the diagonal Gaussian (state-independent).
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls.clamp(LOG_STD_MIN, LOG_STD_MAX) + HALF_LN_TWO_PI + 0.5)
            .sum()
    }

    pub fn clamp_log_std(&mut self) {
        for ls in self.log_std.iter_mut() {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

/// Action-value critic over `concat(state, action)`.
#[derive(Debug, Clone)]
pub struct QFunction {
    pub net: MlpParams,
}

impl QFunction {
    pub fn new(state_dim: usize, action_dim: usize, hidden_width: usize, seed: u64) -> Result<Self> {
        let spec = MlpSpec::with_hidden(state_dim + action_dim, hidden_width, POLICY_HIDDEN_LAYERS, 1)?;
        Ok(Self {
            net: MlpParams::init(spec, seed)?,
        })
    }

    pub fn input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(state.len() + action.len());
        x.extend_from_slice(state);
        x.extend_from_slice(action);
        x
    }

    pub fn value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&self.input(state, action))?[0])
    }
}

/// A behavioral-cloning policy: structurally a [`GaussianPolicy`], trained
/// supervised on demonstrations and frozen afterwards.
#[derive(Debug, Clone)]
pub struct BcPolicy {
    policy: GaussianPolicy,
}

impl BcPolicy {
    pub fn from_policy(policy: GaussianPolicy) -> Self {
        Self { policy }
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.policy.mean(state)
    }
}

/// Hyperparameters of the actor-critic stages.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    /// Actor step size.
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Weight of the supervised distance-to-cloned-policy term.
    pub tau: f64,
    pub entropy_coeff: f64,
    /// Extra action noise during exploration rollouts.
    pub exploration_noise_std: f64,
    pub branch_count: usize,
    pub explore_len: usize,
    pub exploit_len: usize,
    pub batch_size: usize,
    pub max_env_steps: u64,
    /// Stop after this many consecutive episodes without a task-return
    /// improvement. 0 disables the plateau detector.
    pub plateau_window: usize,
    pub hidden_width: usize,
    pub replay_capacity: usize,
    /// Polyak coefficient for an optional target critic; 0 disables it and
    /// bootstrap targets come from the live critic.
    pub target_polyak: f64,
    /// Subtract the batch-mean advantage before the likelihood step.
    pub advantage_centering: bool,
    /// Rescale advantages to unit standard deviation per batch, bounding the
    /// likelihood term so the supervised weight keeps its meaning.
    pub advantage_normalization: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gamma: 0.99,
            tau: 1.0,
            entropy_coeff: 0.01,
            exploration_noise_std: 0.3,
            branch_count: 50,
            explore_len: 5,
            exploit_len: 20,
            batch_size: 256,
            max_env_steps: 50_000,
            plateau_window: 20,
            hidden_width: 64,
            replay_capacity: 100_000,
            target_polyak: 0.0,
            advantage_centering: true,
            advantage_normalization: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {}", self.gamma)));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("tau", self.tau),
            ("entropy_coeff", self.entropy_coeff),
            ("exploration_noise_std", self.exploration_noise_std),
            ("target_polyak", self.target_polyak),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.batch_size == 0 || self.hidden_width == 0 || self.replay_capacity == 0 {
            return Err(Error::Config(
                "batch_size, hidden_width, and replay_capacity must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A batch of transitions prepared for an update step. `next_actions` are
/// drawn from the current policy at the next states; bootstrap targets use
/// them in place of an action-space maximum, which has no finite analogue
/// for continuous actions.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    pub next_actions: Vec<Vec<f64>>,
    pub dones: Vec<bool>,
}

impl TransitionBatch {
    pub fn from_transitions(transitions: &[Transition], next_actions: Vec<Vec<f64>>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Config("batch must be non-empty".into()));
        }
        if next_actions.len() != transitions.len() {
            return Err(Error::Dimension("next_actions length mismatch".into()));
        }
        let rewards: Result<Vec<f64>> = transitions
            .iter()
            .map(|t| {
                t.reward
                    .ok_or_else(|| Error::Config("batch transition missing its reward".into()))
            })
            .collect();
        Ok(Self {
            states: transitions.iter().map(|t| t.state.clone()).collect(),
            actions: transitions.iter().map(|t| t.action.clone()).collect(),
            rewards: rewards?,
            next_states: transitions.iter().map(|t| t.next_state.clone()).collect(),
            next_actions,
            dones: transitions.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Policy + critic with their optimizer state and the optional target critic.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub critic: QFunction,
    pub actor_net_opt: AdamState,
    pub log_std_opt: VecAdam,
    pub critic_opt: AdamState,
    pub target_critic: Option<QFunction>,
}

impl Agent {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        action_bounds: Vec<[f64; 2]>,
        config: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let policy = GaussianPolicy::new(
            state_dim,
            action_dim,
            config.hidden_width,
            action_bounds,
            crate::seeds::derive(seed, 1),
        )?;
        let critic = QFunction::new(
            state_dim,
            action_dim,
            config.hidden_width,
            crate::seeds::derive(seed, 2),
        )?;
        let actor_net_opt = AdamState::new(
            policy.mean_net.spec().clone(),
            AdamHyper::with_lr(config.actor_lr),
        );
        let log_std_opt = VecAdam::new(action_dim, AdamHyper::with_lr(config.actor_lr));
        let critic_opt = AdamState::new(
            critic.net.spec().clone(),
            AdamHyper::with_lr(config.critic_lr),
        );
        let target_critic = (config.target_polyak > 0.0).then(|| critic.clone());
        Ok(Self {
            policy,
            critic,
            actor_net_opt,
            log_std_opt,
            critic_opt,
            target_critic,
        })
    }

    /// One critic + actor update on a prepared batch.
    pub fn update(
        &mut self,
        bc: &BcPolicy,
        batch: &TransitionBatch,
        config: &TrainConfig,
    ) -> Result<(CriticDiagnostics, ActorDiagnostics)> {
        let critic_diag = critic_update(
            &mut self.critic,
            &mut self.critic_opt,
            batch,
            config,
            self.target_critic.as_ref(),
        )?;
        if let Some(target) = self.target_critic.as_mut() {
            let p = config.target_polyak;
            let mut blended = target.net.clone();
            blended.scale(1.0 - p);
            blended.add_scaled(&self.critic.net, p);
            target.net = blended;
        }
        let actor_diag = actor_update(
            &mut self.policy,
            &mut self.actor_net_opt,
            &mut self.log_std_opt,
            &self.critic,
            bc,
            batch,
            config,
        )?;
        Ok((critic_diag, actor_diag))
    }
}

/// Saves a policy as `<stem>_mean.nn` plus a `<stem>_meta.txt` with the
/// log-std vector and action bounds.
pub fn save_policy(dir: &Path, stem: &str, policy: &GaussianPolicy) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_params(&policy.mean_net, &dir.join(format!("{stem}_mean.nn")))?;
    let mut meta = String::from("mrfil-policy v1\n");
    meta.push_str(&format!(
        "log_std={}\n",
        policy
            .log_std
            .iter()
            .map(|v| crate::demos::format_float(*v))
            .collect::<Vec<_>>()
            .join(";")
    ));
    meta.push_str(&format!(
        "bounds={}\n",
        policy
            .action_bounds
            .iter()
            .map(|b| format!(
                "{}:{}",
                crate::demos::format_float(b[0]),
                crate::demos::format_float(b[1])
            ))
            .collect::<Vec<_>>()
            .join(";")
    ));
    std::fs::write(dir.join(format!("{stem}_meta.txt")), meta)?;
    Ok(())
}

pub fn load_policy(dir: &Path, stem: &str) -> Result<GaussianPolicy> {
    let mean_net = load_params(&dir.join(format!("{stem}_mean.nn")))?;
    let meta = std::fs::read_to_string(dir.join(format!("{stem}_meta.txt")))?;
    let mut log_std = None;
    let mut bounds = None;
    for (i, line) in meta.lines().enumerate() {
        if i == 0 {
            if line != "mrfil-policy v1" {
                return Err(Error::Format(format!("bad policy meta header '{line}'")));
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad policy meta line '{line}'")))?;
        match key {
            "log_std" => {
                log_std = Some(
                    value
                        .split(';')
                        .map(|v| v.parse::<f64>().map_err(|_| Error::Format("bad log_std".into())))
                        .collect::<Result<Vec<f64>>>()?,
                )
            }
            "bounds" => {
                bounds = Some(
                    value
                        .split(';')
                        .map(|pair| {
                            let (lo, hi) = pair
                                .split_once(':')
                                .ok_or_else(|| Error::Format("bad bounds".into()))?;
                            Ok([
                                lo.parse::<f64>().map_err(|_| Error::Format("bad bound".into()))?,
                                hi.parse::<f64>().map_err(|_| Error::Format("bad bound".into()))?,
                            ])
                        })
                        .collect::<Result<Vec<[f64; 2]>>>()?,
                )
            }
            other => return Err(Error::Format(format!("unknown policy meta key '{other}'"))),
        }
    }
    let log_std = log_std.ok_or_else(|| Error::Format("policy meta missing log_std".into()))?;
    let action_bounds = bounds.ok_or_else(|| Error::Format("policy meta missing bounds".into()))?;
    if log_std.len() != mean_net.output_dim() || action_bounds.len() != mean_net.output_dim() {
        return Err(Error::Format("policy meta dims do not match network".into()));
    }
    Ok(GaussianPolicy {
        mean_net,
        log_std,
        action_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(2, 1, 8, vec![[-1.0, 1.0]], seed).unwrap()
    }

    #[test]
    fn tiny_std_sampling_is_nearly_deterministic() {
        let mut p = test_policy(3);
        p.log_std = vec![LOG_STD_MIN];
        let mut rng = crate::seeds::rng(1);
        let state = [0.3, -0.2];
        let mean = p.mean(&state).unwrap();
        let clipped_mean = mean[0].clamp(-1.0, 1.0);
        let mut total_dev = 0.0;
        for _ in 0..100 {
            let (a, _) = p.sample(&state, &mut rng).unwrap();
            total_dev += (a[0] - clipped_mean).abs();
            // sigma = e^-5, so even a 4-sigma draw stays tiny.
            assert!((a[0] - clipped_mean).abs() < 4.0 * 6.8e-3);
        }
        assert!(total_dev / 100.0 < 1e-2);
    }

    #[test]
    fn log_prob_at_mean_matches_gaussian_density() {
        let mut p = test_policy(5);
        let sigma: f64 = 0.25;
        p.log_std = vec![sigma.ln()];
        let state = [0.1, 0.4];
        let mean = p.mean(&state).unwrap();
        let lp = p.log_prob(&state, &mean).unwrap();
        let want = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((lp - want).abs() < 1e-12, "{lp} vs {want}");
    }

    #[test]
    fn sample_mean_matches_network_mean() {
        let mut p = test_policy(9);
        let sigma: f64 = 0.2;
        p.log_std = vec![sigma.ln()];
        // Mean well inside the bounds so clipping stays inactive.
        let state = [0.05, 0.05];
        let mean = p.mean(&state).unwrap()[0];
        assert!(mean.abs() < 0.5, "test setup needs an interior mean");
        let n = 100_000;
        let mut rng = crate::seeds::rng(33);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += p.sample(&state, &mut rng).unwrap().0[0];
        }
        let sample_mean = sum / n as f64;
        let tol = 3.0 * sigma / (n as f64).sqrt();
        assert!(
            (sample_mean - mean).abs() < tol,
            "sample mean {sample_mean} vs network mean {mean} (tol {tol})"
        );
    }

    #[test]
    fn policy_save_load_round_trip() {
        let p = test_policy(11);
        let dir = tempfile::tempdir().unwrap();
        save_policy(dir.path(), "actor", &p).unwrap();
        let q = load_policy(dir.path(), "actor").unwrap();
        assert_eq!(p.mean_net, q.mean_net);
        assert_eq!(p.log_std, q.log_std);
        assert_eq!(p.action_bounds, q.action_bounds);
    }

    #[test]
    fn batch_requires_rewards() {
        let t = Transition {
            state: vec![0.0, 0.0],
            action: vec![0.0],
            next_state: vec![0.0, 0.0],
            reward: None,
            done: false,
        };
        assert!(TransitionBatch::from_transitions(&[t], vec![vec![0.0]]).is_err());
    }
}
