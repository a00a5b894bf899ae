//! Actor and critic update steps.
//!
//! The actor ascends the advantage-weighted log-likelihood with an entropy
//! bonus, plus a supervised term pulling the policy mean toward the cloned
//! expert mean: descent on
//! `L = mean_i[-log pi(a_i|s_i) * A_i] - entropy_coeff * H(pi)
//!      + tau * mean_i ||mu_bc(s_i) - mu(s_i)||_2`,
//! where `A_i = r_i + gamma * Q(s'_i, a'_i) - Q(s_i, a_i)` is treated as a
//! constant. The critic descends the squared TD error against
//! `y_i = r_i + gamma * Q(s'_i, a'_i)` with the target treated as constant.

use super::{BcPolicy, GaussianPolicy, QFunction, TrainConfig, TransitionBatch, LOG_STD_MAX, LOG_STD_MIN};
use crate::nn::{AdamState, MlpParams, VecAdam};
use crate::Result;

/// Standardized residuals are clamped to this many sigmas inside likelihood
/// gradients. Replayed actions always lie in the action box, so once the
/// mean drifts outside it the raw residual grows without bound and the
/// resulting feedback loop runs the mean off to infinity; the clamp caps
/// that loop while leaving any plausible on-policy residual untouched.
const RESIDUAL_CLIP: f64 = 4.0;
/// Normalized advantages are winsorized to this many standard deviations.
const ADVANTAGE_CLIP: f64 = 3.0;
/// Per-coordinate cap on the likelihood cotangent of one sample. A single
/// stale replay sample can otherwise inject a gradient spike that Adam's
/// moment memory turns into hundreds of bad steps.
const PG_COTANGENT_CLIP: f64 = 3.0;

/// Actor gradient blocks: the mean network plus the log-std vector.
#[derive(Debug, Clone)]
pub struct ActorGradient {
    pub mean_net: MlpParams,
    pub log_std: Vec<f64>,
}

impl ActorGradient {
    fn zeros(policy: &GaussianPolicy) -> Self {
        Self {
            mean_net: MlpParams::zeros(policy.mean_net.spec().clone()),
            log_std: vec![0.0; policy.log_std.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &ActorGradient, scale: f64) {
        self.mean_net.add_scaled(&other.mean_net, scale);
        for (a, b) in self.log_std.iter_mut().zip(&other.log_std) {
            *a += scale * b;
        }
    }
}

/// Per-update actor diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ActorDiagnostics {
    /// Mean advantage-weighted negative log-likelihood.
    pub pg_term: f64,
    /// Mean Euclidean distance between the policy mean and the cloned mean.
    pub supervised_term: f64,
    pub entropy: f64,
    pub mean_advantage: f64,
    /// Full surrogate loss.
    pub loss: f64,
    /// True when a non-finite advantage made the update a no-op.
    pub skipped: bool,
}

/// Per-update critic diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct CriticDiagnostics {
    pub loss: f64,
    pub mean_td_error: f64,
    pub skipped: bool,
}

/// Bootstrap targets `y_i = r_i + gamma * Q(s'_i, a'_i)`, with the bootstrap
/// dropped on terminal transitions.
///
/// Targets are projected into the feasible value range
/// `[-max|r|/(1-gamma), +max|r|/(1-gamma)]` implied by the batch rewards.
/// Every true action value lies in that range, so the projection cannot move
/// a target away from the fixed point, and it stops the self-bootstrap
/// runaway that value iteration with function approximation is prone to.
pub fn critic_targets(
    critic: &QFunction,
    batch: &TransitionBatch,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    let max_abs_r = batch.rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let value_bound = max_abs_r / (1.0 - config.gamma);
    let mut targets = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let bootstrap = if batch.dones[i] {
            0.0
        } else {
            config.gamma * critic.value(&batch.next_states[i], &batch.next_actions[i])?
        };
        let y = batch.rewards[i] + bootstrap;
        targets.push(if y.is_finite() {
            y.clamp(-value_bound, value_bound)
        } else {
            y
        });
    }
    Ok(targets)
}

/// Advantages `A_i = r_i + gamma * Q(s', a') - Q(s, a)`, bootstrap dropped on
/// terminal transitions. With `advantage_centering` the batch mean is
/// subtracted, acting as a baseline: a batch whose advantages are all equal
/// then exerts no net push on the policy.
fn advantages(
    critic: &QFunction,
    batch: &TransitionBatch,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    let targets = critic_targets(critic, batch, config)?;
    let mut advs = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        advs.push(targets[i] - critic.value(&batch.states[i], &batch.actions[i])?);
    }
    if config.advantage_centering && advs.len() > 1 && advs.iter().all(|a| a.is_finite()) {
        let mean = advs.iter().sum::<f64>() / advs.len() as f64;
        for a in advs.iter_mut() {
            *a -= mean;
        }
    }
    if config.advantage_normalization && advs.len() > 1 && advs.iter().all(|a| a.is_finite()) {
        let mean = advs.iter().sum::<f64>() / advs.len() as f64;
        let var = advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / advs.len() as f64;
        let std = var.sqrt();
        if std > 1e-8 {
            for a in advs.iter_mut() {
                *a = (*a / std).clamp(-ADVANTAGE_CLIP, ADVANTAGE_CLIP);
            }
        }
    }
    Ok(advs)
}

struct SampleTerms {
    pg_cotangent: Vec<f64>,
    sup_cotangent: Vec<f64>,
    pg_log_std_grad: Vec<f64>,
    neg_loglik_adv: f64,
    sup_distance: f64,
}

/// Per-sample cotangents of the two loss pieces with respect to the policy
/// mean, plus the log-std gradient of the likelihood piece.
fn sample_terms(
    policy: &GaussianPolicy,
    bc: &BcPolicy,
    state: &[f64],
    action: &[f64],
    advantage: f64,
) -> Result<SampleTerms> {
    let mean = policy.mean(state)?;
    let bc_mean = bc.mean(state)?;
    let dim = mean.len();
    let mut pg_cotangent = vec![0.0; dim];
    let mut pg_log_std_grad = vec![0.0; dim];
    let mut neg_loglik = 0.0;
    for j in 0..dim {
        let ls = policy.log_std[j].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let sigma = ls.exp();
        let z = (action[j] - mean[j]) / sigma;
        let zc = z.clamp(-RESIDUAL_CLIP, RESIDUAL_CLIP);
        // d(-log pi)/d mu_j = -z / sigma ; d(-log pi)/d ls_j = 1 - z^2
        pg_cotangent[j] =
            (advantage * (-zc / sigma)).clamp(-PG_COTANGENT_CLIP, PG_COTANGENT_CLIP);
        pg_log_std_grad[j] =
            (advantage * (1.0 - zc * zc)).clamp(-PG_COTANGENT_CLIP, PG_COTANGENT_CLIP);
        neg_loglik += 0.5 * z * z + ls + super::HALF_LN_TWO_PI;
    }
    let diff: Vec<f64> = mean.iter().zip(&bc_mean).map(|(m, b)| m - b).collect();
    let distance = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    // Subgradient 0 at the non-differentiable minimum.
    let sup_cotangent = if distance > 0.0 {
        diff.iter().map(|d| d / distance).collect()
    } else {
        vec![0.0; dim]
    };
    Ok(SampleTerms {
        pg_cotangent,
        sup_cotangent,
        pg_log_std_grad,
        neg_loglik_adv: neg_loglik * advantage,
        sup_distance: distance,
    })
}

/// The two actor gradient pieces, each from its own backward pass: the
/// advantage-weighted likelihood piece (entropy bonus included) and the
/// unscaled supervised piece. The full update direction is
/// `pg + tau * supervised`.
pub fn actor_gradient_parts(
    policy: &GaussianPolicy,
    critic: &QFunction,
    bc: &BcPolicy,
    batch: &TransitionBatch,
    config: &TrainConfig,
) -> Result<(ActorGradient, ActorGradient, ActorDiagnostics)> {
    let advs = advantages(critic, batch, config)?;
    let mut pg = ActorGradient::zeros(policy);
    let mut sup = ActorGradient::zeros(policy);
    let mut diag = ActorDiagnostics {
        pg_term: 0.0,
        supervised_term: 0.0,
        entropy: policy.entropy(),
        mean_advantage: 0.0,
        loss: 0.0,
        skipped: false,
    };
    if advs.iter().any(|a| !a.is_finite()) {
        diag.skipped = true;
        return Ok((pg, sup, diag));
    }
    let scale = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        let terms = sample_terms(policy, bc, &batch.states[i], &batch.actions[i], advs[i])?;
        let pg_cot: Vec<f64> = terms.pg_cotangent.iter().map(|c| c * scale).collect();
        let (g, _) = policy.mean_net.backward(&batch.states[i], &pg_cot)?;
        pg.mean_net.add_scaled(&g, 1.0);
        let sup_cot: Vec<f64> = terms.sup_cotangent.iter().map(|c| c * scale).collect();
        let (g, _) = policy.mean_net.backward(&batch.states[i], &sup_cot)?;
        sup.mean_net.add_scaled(&g, 1.0);
        for j in 0..policy.log_std.len() {
            pg.log_std[j] += scale * terms.pg_log_std_grad[j];
        }
        diag.pg_term += scale * terms.neg_loglik_adv;
        diag.supervised_term += scale * terms.sup_distance;
        diag.mean_advantage += scale * advs[i];
    }
    // Entropy bonus: descent on -entropy_coeff * H adds -coeff per log-std.
    for g in pg.log_std.iter_mut() {
        *g -= config.entropy_coeff;
    }
    diag.loss = diag.pg_term - config.entropy_coeff * diag.entropy
        + config.tau * diag.supervised_term;
    Ok((pg, sup, diag))
}

/// The fused actor gradient (single backward pass per sample). Linearity of
/// reverse mode makes this exactly `pg + tau * supervised` from
/// [`actor_gradient_parts`].
pub fn actor_gradient(
    policy: &GaussianPolicy,
    critic: &QFunction,
    bc: &BcPolicy,
    batch: &TransitionBatch,
    config: &TrainConfig,
) -> Result<(ActorGradient, ActorDiagnostics)> {
    let advs = advantages(critic, batch, config)?;
    let mut total = ActorGradient::zeros(policy);
    let mut diag = ActorDiagnostics {
        pg_term: 0.0,
        supervised_term: 0.0,
        entropy: policy.entropy(),
        mean_advantage: 0.0,
        loss: 0.0,
        skipped: false,
    };
    if advs.iter().any(|a| !a.is_finite()) {
        diag.skipped = true;
        return Ok((total, diag));
    }
    let scale = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        let terms = sample_terms(policy, bc, &batch.states[i], &batch.actions[i], advs[i])?;
        let cot: Vec<f64> = terms
            .pg_cotangent
            .iter()
            .zip(&terms.sup_cotangent)
            .map(|(p, s)| (p + config.tau * s) * scale)
            .collect();
        let (g, _) = policy.mean_net.backward(&batch.states[i], &cot)?;
        total.mean_net.add_scaled(&g, 1.0);
        for j in 0..policy.log_std.len() {
            total.log_std[j] += scale * terms.pg_log_std_grad[j];
        }
        diag.pg_term += scale * terms.neg_loglik_adv;
        diag.supervised_term += scale * terms.sup_distance;
        diag.mean_advantage += scale * advs[i];
    }
    for g in total.log_std.iter_mut() {
        *g -= config.entropy_coeff;
    }
    diag.loss = diag.pg_term - config.entropy_coeff * diag.entropy
        + config.tau * diag.supervised_term;
    Ok((total, diag))
}

/// Applies one fused actor step. A non-finite advantage skips the update and
/// flags the diagnostics instead of erroring.
pub fn actor_update(
    policy: &mut GaussianPolicy,
    net_opt: &mut AdamState,
    log_std_opt: &mut VecAdam,
    critic: &QFunction,
    bc: &BcPolicy,
    batch: &TransitionBatch,
    config: &TrainConfig,
) -> Result<ActorDiagnostics> {
    let (grad, diag) = actor_gradient(policy, critic, bc, batch, config)?;
    if diag.skipped {
        return Ok(diag);
    }
    net_opt.step(&mut policy.mean_net, &grad.mean_net)?;
    log_std_opt.step(&mut policy.log_std, &grad.log_std)?;
    policy.clamp_log_std();
    Ok(diag)
}

/// Applies one semi-gradient TD step. Targets come from `target` when a
/// Polyak-averaged critic is configured, otherwise from the live critic. A
/// non-finite target skips the update and flags the diagnostics.
pub fn critic_update(
    critic: &mut QFunction,
    opt: &mut AdamState,
    batch: &TransitionBatch,
    config: &TrainConfig,
    target: Option<&QFunction>,
) -> Result<CriticDiagnostics> {
    let targets = critic_targets(target.unwrap_or(critic), batch, config)?;
    if targets.iter().any(|t| !t.is_finite()) {
        return Ok(CriticDiagnostics {
            loss: f64::NAN,
            mean_td_error: f64::NAN,
            skipped: true,
        });
    }
    let mut grads = MlpParams::zeros(critic.net.spec().clone());
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut abs_td = 0.0;
    for i in 0..batch.len() {
        let x = critic.input(&batch.states[i], &batch.actions[i]);
        let pred = critic.net.forward(&x)?[0];
        let err = pred - targets[i];
        loss += scale * err * err;
        abs_td += scale * err.abs();
        let (g, _) = critic.net.backward(&x, &[2.0 * err * scale])?;
        grads.add_scaled(&g, 1.0);
    }
    opt.step(&mut critic.net, &grads)?;
    Ok(CriticDiagnostics {
        loss,
        mean_td_error: abs_td,
        skipped: false,
    })
}
