//! Return-gap bound for a learner trained inside an imperfect dynamics model.
//!
//! For an expert policy evaluated under the real dynamics and a perturbed
//! policy evaluated under perturbed dynamics, with a binary reward table, the
//! absolute return gap is bounded by
//! `2 * (gamma * (eps_m + eps_pi) / (1-gamma)^2 + eps_pi / (1-gamma))`,
//! where `eps_m` caps the per-step model KL under the learner's state
//! distribution and `eps_pi` caps the per-state policy TVD. The checker
//! builds random instances, evaluates everything exactly, and confirms the
//! bound is never violated.

use rand::Rng;

use super::dist::{kl, tvd};
use super::{CheckReport, CheckRow};
use crate::envs::{policy_eval, random_stochastic_rows, PolicyTable, TabularMdp};
use crate::{Error, Result};

const BOUND_TOL: f64 = 1e-9;

/// One verified instance of the return-gap bound.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub trial: usize,
    pub measured_gap: f64,
    pub bound_value: f64,
    /// Bound with the KL model error converted through `sqrt(eps_m / 2)`.
    pub pinsker_bound_value: f64,
    pub epsilon_m: f64,
    pub epsilon_pi: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn to_row(&self) -> CheckRow {
        CheckRow {
            check: "return_gap_bound",
            trial: self.trial,
            lhs: self.measured_gap,
            rhs: self.bound_value,
            margin: self.bound_value - self.measured_gap,
            satisfied: self.satisfied,
        }
    }
}

/// Mixes each transition row with a random stochastic row at `rate`.
fn perturb_transition(mdp: &TabularMdp, rate: f64, rng: &mut impl Rng) -> Result<TabularMdp> {
    let n = mdp.n_states;
    let na = mdp.n_actions;
    let noise = random_stochastic_rows(n * na, n, rng);
    let mut t = Vec::with_capacity(n * na * n);
    for s in 0..n {
        for a in 0..na {
            for s2 in 0..n {
                let base = mdp.p(s, a, s2);
                let mix = noise[(s * na + a) * n + s2];
                t.push((1.0 - rate) * base + rate * mix);
            }
        }
    }
    mdp.clone().with_transition(t)
}

fn bound_formula(gamma: f64, eps_m: f64, eps_pi: f64) -> f64 {
    2.0 * (gamma * (eps_m + eps_pi) / ((1.0 - gamma) * (1.0 - gamma)) + eps_pi / (1.0 - gamma))
}

/// `max_t E_{s ~ p_m^t, a ~ pi_m}[KL(p_m(.|s,a) || p_r(.|s,a))]`, by exact
/// state-marginal propagation under the perturbed pair until the marginal is
/// stationary.
fn model_kl_epsilon(
    real: &TabularMdp,
    model: &TabularMdp,
    policy: &PolicyTable,
) -> Result<f64> {
    let n = real.n_states;
    let na = real.n_actions;
    // Per-(s,a) KL between model and real next-state rows.
    let mut kl_table = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let pm: Vec<f64> = (0..n).map(|s2| model.p(s, a, s2)).collect();
            let pr: Vec<f64> = (0..n).map(|s2| real.p(s, a, s2)).collect();
            kl_table[s * na + a] = kl(&pm, &pr)?;
        }
    }
    let mut marginal: Vec<f64> = (0..n).map(|s| model.rho0(s)).collect();
    let mut eps = 0.0f64;
    for _ in 0..500 {
        let expectation: f64 = (0..n)
            .map(|s| {
                marginal[s]
                    * (0..na)
                        .map(|a| policy.prob(s, a) * kl_table[s * na + a])
                        .sum::<f64>()
            })
            .sum();
        eps = eps.max(expectation);
        let mut next = vec![0.0; n];
        for s in 0..n {
            for a in 0..na {
                let w = marginal[s] * policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for s2 in 0..n {
                    next[s2] += w * model.p(s, a, s2);
                }
            }
        }
        let drift: f64 = next
            .iter()
            .zip(&marginal)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        marginal = next;
        if drift < 1e-13 {
            break;
        }
    }
    Ok(eps)
}

/// `max_s TVD(pi_e(.|s) || pi_m(.|s))`.
fn policy_tvd_epsilon(expert: &PolicyTable, learner: &PolicyTable) -> Result<f64> {
    let mut eps = 0.0f64;
    for s in 0..expert.n_states {
        eps = eps.max(tvd(expert.row(s), learner.row(s))?);
    }
    Ok(eps)
}

/// Builds `n_mdps` random instances at the given perturbation scale and
/// verifies the return-gap bound on each.
///
/// Per trial: a random MDP with a binary reward table plays the real system;
/// the model transition and the learner policy are row mixtures of the expert
/// pair with random rows at `perturbation_scale`. Expert return is evaluated
/// under the real dynamics, learner return under the model dynamics, both
/// exactly.
pub fn check_return_gap_bound(
    n_mdps: usize,
    perturbation_scale: f64,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    if n_mdps == 0 {
        return Ok(Vec::new());
    }
    if !(0.0..=1.0).contains(&perturbation_scale) {
        return Err(Error::Config(format!(
            "perturbation scale must be in [0,1], got {perturbation_scale}"
        )));
    }
    let mut rng = crate::seeds::rng(seed);
    let mut reports = Vec::with_capacity(n_mdps);
    for trial in 0..n_mdps {
        let n_states = rng.random_range(3..=6);
        let n_actions = rng.random_range(2..=4);
        let gamma = rng.random_range(0.85..0.95);
        let binary_reward: Vec<f64> = (0..n_states * n_actions)
            .map(|_| if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { 0.0 })
            .collect();
        let real = TabularMdp::random(n_states, n_actions, gamma, &mut rng)
            .with_reward(binary_reward)?;
        let expert = PolicyTable::random(n_states, n_actions, &mut rng);

        let model = perturb_transition(&real, perturbation_scale, &mut rng)?;
        let noise_policy = PolicyTable::random(n_states, n_actions, &mut rng);
        let learner = expert.mix(&noise_policy, perturbation_scale);

        let eps_m = model_kl_epsilon(&real, &model, &learner)?;
        let eps_pi = policy_tvd_epsilon(&expert, &learner)?;

        let (_, eta_e) = policy_eval(&real, &expert)?;
        let (_, eta_m) = policy_eval(&model, &learner)?;
        let measured_gap = (eta_e - eta_m).abs();

        let bound_value = bound_formula(gamma, eps_m, eps_pi);
        let pinsker_bound_value = bound_formula(gamma, (eps_m / 2.0).sqrt(), eps_pi);
        reports.push(BoundReport {
            trial,
            measured_gap,
            bound_value,
            pinsker_bound_value,
            epsilon_m: eps_m,
            epsilon_pi: eps_pi,
            satisfied: measured_gap <= bound_value + BOUND_TOL,
        });
    }
    Ok(reports)
}

/// Convenience wrapper collecting bound reports into check rows.
pub fn return_gap_report(reports: &[BoundReport]) -> CheckReport {
    CheckReport {
        rows: reports.iter().map(BoundReport::to_row).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_gives_zero_gap_and_zero_bound() {
        let reports = check_return_gap_bound(20, 0.0, 5).unwrap();
        for r in &reports {
            assert!(r.measured_gap.abs() < 1e-9, "gap {}", r.measured_gap);
            assert!(r.epsilon_m.abs() < 1e-12);
            assert!(r.epsilon_pi.abs() < 1e-12);
            assert!(r.bound_value.abs() < 1e-9);
            assert!(r.satisfied);
        }
    }

    #[test]
    fn policy_only_perturbation_specializes_the_formula() {
        // With the transition unperturbed, eps_m = 0 and the bound must
        // collapse to 2 * (gamma*eps_pi/(1-gamma)^2 + eps_pi/(1-gamma)).
        let mut rng = crate::seeds::rng(31);
        for trial in 0..20 {
            let gamma = 0.9;
            let real = TabularMdp::random(4, 3, gamma, &mut rng);
            let expert = PolicyTable::random(4, 3, &mut rng);
            let noise = PolicyTable::random(4, 3, &mut rng);
            let learner = expert.mix(&noise, 0.05);
            let eps_m = model_kl_epsilon(&real, &real, &learner).unwrap();
            assert!(eps_m.abs() < 1e-14, "identical model has zero KL");
            let eps_pi = policy_tvd_epsilon(&expert, &learner).unwrap();
            let bound = bound_formula(gamma, eps_m, eps_pi);
            let want = 2.0 * (gamma * eps_pi / (0.1 * 0.1) + eps_pi / 0.1);
            assert!((bound - want).abs() < 1e-12, "trial {trial}");

            let (_, eta_e) = policy_eval(&real, &expert).unwrap();
            let (_, eta_m) = policy_eval(&real, &learner).unwrap();
            assert!((eta_e - eta_m).abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn bound_never_violated_across_scales() {
        for (i, scale) in [0.01, 0.05, 0.1].iter().enumerate() {
            let reports = check_return_gap_bound(100, *scale, 100 + i as u64).unwrap();
            let violations = reports.iter().filter(|r| !r.satisfied).count();
            assert_eq!(violations, 0, "scale {scale}");
        }
    }

    #[test]
    fn mixed_rows_remain_stochastic() {
        let mut rng = crate::seeds::rng(77);
        let mdp = TabularMdp::random(5, 3, 0.9, &mut rng);
        let mixed = perturb_transition(&mdp, 0.3, &mut rng).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                let sum: f64 = (0..5).map(|s2| mixed.p(s, a, s2)).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }
}
