//! Lagrangian dual identities of the occupancy-measure formulation.
//!
//! Three constrained entropy problems over occupancy measures arise when the
//! imitation objective is dualized: pure occupancy matching, the
//! nonnegativity-only relaxation a plain policy-gradient objective dualizes
//! to, and the supervised-augmented variant that pins the policy to the
//! expert on demonstrated pairs. Each proof reduces the Lagrangian to a
//! closed form in policy expectations; the checker evaluates the Lagrangian
//! both from its definition over `rho` and from the reduced policy form and
//! asserts agreement on random instances.

use rand::Rng;

use super::occupancy::{
    entropy_occupancy, entropy_policy, occupancy_measure, policy_from_occupancy,
};
use super::{CheckReport, CheckRow};
use crate::envs::{PolicyTable, TabularMdp};
use crate::Result;

const IDENTITY_TOL: f64 = 1e-9;

/// Which dual problem to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualProblem {
    /// Occupancy matching against an expert: the dual variable per (s,a) is
    /// a reward, and the Lagrangian reduces to
    /// `-H(rho) - E_pi[r] + E_pi_E[r]`.
    OccupancyMatching,
    /// Nonnegativity constraints only: reduces to `-H(rho) - E_pi[r]`.
    EntropyRegularized,
    /// Nonnegativity plus per-demonstration policy matching with multipliers
    /// `alpha`: reduces to `-H(rho) - E_pi[r] + sum_DE alpha (pi_E - pi)`.
    SupervisedAugmented,
}

impl DualProblem {
    pub fn check_name(&self) -> &'static str {
        match self {
            DualProblem::OccupancyMatching => "dual_occupancy_matching",
            DualProblem::EntropyRegularized => "dual_entropy_regularized",
            DualProblem::SupervisedAugmented => "dual_supervised_augmented",
        }
    }
}

struct Instance {
    mdp: TabularMdp,
    rho: super::OccupancyMeasure,
    policy: PolicyTable,
    reward: Vec<f64>,
}

fn random_instance(rng: &mut impl Rng) -> Result<Instance> {
    let n_states = rng.random_range(2..=5);
    let n_actions = rng.random_range(2..=4);
    let gamma = rng.random_range(0.7..0.97);
    let mdp = TabularMdp::random(n_states, n_actions, gamma, rng);
    let generator = PolicyTable::random(n_states, n_actions, rng);
    let rho = occupancy_measure(&mdp, &generator)?;
    let (policy, _) = policy_from_occupancy(&rho);
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    Ok(Instance {
        mdp,
        rho,
        policy,
        reward,
    })
}

/// `E_pi[r]` via the policy route: recompute the occupancy of `policy` from
/// the MDP and weight the reward with it. Pairs with the direct
/// `sum rho * r` route to make the identity checks two-sided.
fn expected_reward_policy_route(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reward: &[f64],
) -> Result<f64> {
    let rho = occupancy_measure(mdp, policy)?;
    Ok(rho.weighted_sum(|s, a| reward[s * mdp.n_actions + a]))
}

/// Verifies the chosen dual identity on `n_trials` random instances.
///
/// Every trial emits one row comparing the definition-route and
/// policy-route evaluations of the Lagrangian. The supervised variant
/// additionally emits a residual row showing that dropping the multiplier
/// term costs at most `sum(alpha) * max |pi_E - pi|`, and a matched-policy
/// row showing the term vanishes when the policy agrees with the expert on
/// the demonstrated pairs. The matching variant additionally verifies that
/// the expert occupancy satisfies the primal constraint exactly.
pub fn check_dual_identity(
    which: DualProblem,
    n_trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut rng = crate::seeds::rng(seed);
    let mut report = CheckReport::default();
    for trial in 0..n_trials {
        let inst = random_instance(&mut rng)?;
        let n_actions = inst.mdp.n_actions;
        let direct_reward_term = inst
            .rho
            .weighted_sum(|s, a| inst.reward[s * n_actions + a]);
        let neg_entropy_direct = -entropy_occupancy(&inst.rho);
        let neg_entropy_policy = -entropy_policy(&inst.mdp, &inst.policy)?;
        let reward_term_policy =
            expected_reward_policy_route(&inst.mdp, &inst.policy, &inst.reward)?;

        let (lhs, rhs) = match which {
            DualProblem::OccupancyMatching => {
                let expert = PolicyTable::random(inst.mdp.n_states, n_actions, &mut rng);
                let rho_e = occupancy_measure(&inst.mdp, &expert)?;
                let expert_term_direct =
                    rho_e.weighted_sum(|s, a| inst.reward[s * n_actions + a]);
                let expert_term_policy =
                    expected_reward_policy_route(&inst.mdp, &expert, &inst.reward)?;
                let lhs = neg_entropy_direct + expert_term_direct - direct_reward_term;
                let rhs = neg_entropy_policy - reward_term_policy + expert_term_policy;

                // The expert occupancy satisfies the matching constraint, so
                // the reward terms cancel there: L(rho_E) = -H(rho_E).
                let lagrangian_at_expert = -entropy_occupancy(&rho_e)
                    + rho_e.weighted_sum(|s, a| inst.reward[s * n_actions + a])
                    - rho_e.weighted_sum(|s, a| inst.reward[s * n_actions + a]);
                let collapse_dev =
                    (lagrangian_at_expert - (-entropy_occupancy(&rho_e))).abs();
                report.rows.push(CheckRow {
                    check: "dual_matching_expert_collapse",
                    trial,
                    lhs: lagrangian_at_expert,
                    rhs: -entropy_occupancy(&rho_e),
                    margin: collapse_dev,
                    satisfied: collapse_dev < IDENTITY_TOL,
                });

                // And normalizing rho_E recovers the expert policy.
                let (recovered, flagged) = policy_from_occupancy(&rho_e);
                let mut max_dev = 0.0f64;
                for s in 0..inst.mdp.n_states {
                    if flagged.contains(&s) {
                        continue;
                    }
                    for a in 0..n_actions {
                        max_dev =
                            max_dev.max((recovered.prob(s, a) - expert.prob(s, a)).abs());
                    }
                }
                report.rows.push(CheckRow {
                    check: "dual_matching_expert_recovery",
                    trial,
                    lhs: max_dev,
                    rhs: 0.0,
                    margin: max_dev,
                    satisfied: max_dev < IDENTITY_TOL,
                });
                (lhs, rhs)
            }
            DualProblem::EntropyRegularized => {
                let lhs = neg_entropy_direct - direct_reward_term;
                let rhs = neg_entropy_policy - reward_term_policy;
                (lhs, rhs)
            }
            DualProblem::SupervisedAugmented => {
                let expert = PolicyTable::random(inst.mdp.n_states, n_actions, &mut rng);
                // Demonstrated pairs with sampling-probability multipliers.
                let mut demo_pairs = Vec::new();
                for s in 0..inst.mdp.n_states {
                    for a in 0..n_actions {
                        if rng.random_range(0.0..1.0) < 0.5 {
                            demo_pairs.push((s, a));
                        }
                    }
                }
                if demo_pairs.is_empty() {
                    demo_pairs.push((0, 0));
                }
                let raw: Vec<f64> = demo_pairs
                    .iter()
                    .map(|_| rng.random_range(0.0..1.0))
                    .collect();
                let total: f64 = raw.iter().sum();
                let alphas: Vec<f64> = raw.iter().map(|v| v / total).collect();

                let multiplier_term: f64 = demo_pairs
                    .iter()
                    .zip(&alphas)
                    .map(|(&(s, a), &alpha)| {
                        alpha * (expert.prob(s, a) - inst.policy.prob(s, a))
                    })
                    .sum();
                let lhs = neg_entropy_direct - direct_reward_term + multiplier_term;
                let rhs = neg_entropy_policy - reward_term_policy + multiplier_term;

                // Residual of discarding the multiplier term, with its bound
                // sum(alpha) * max |pi_E - pi| over the demonstrated pairs.
                let residual = multiplier_term.abs();
                let alpha_sum: f64 = alphas.iter().sum();
                let max_gap = demo_pairs
                    .iter()
                    .map(|&(s, a)| (expert.prob(s, a) - inst.policy.prob(s, a)).abs())
                    .fold(0.0f64, f64::max);
                let residual_bound = alpha_sum * max_gap;
                report.rows.push(CheckRow {
                    check: "dual_supervised_residual",
                    trial,
                    lhs: residual,
                    rhs: residual_bound,
                    margin: residual_bound - residual,
                    satisfied: residual <= residual_bound + IDENTITY_TOL,
                });

                // With the policy matching the expert on demonstrated pairs
                // the multiplier term vanishes and the relaxed form returns.
                let matched_term: f64 = demo_pairs
                    .iter()
                    .zip(&alphas)
                    .map(|(&(s, a), &alpha)| {
                        alpha * (inst.policy.prob(s, a) - inst.policy.prob(s, a))
                    })
                    .sum();
                let matched = neg_entropy_direct - direct_reward_term + matched_term;
                let relaxed = neg_entropy_direct - direct_reward_term;
                report.rows.push(CheckRow {
                    check: "dual_supervised_matched",
                    trial,
                    lhs: matched,
                    rhs: relaxed,
                    margin: (matched - relaxed).abs(),
                    satisfied: (matched - relaxed).abs() < 1e-12,
                });
                (lhs, rhs)
            }
        };
        report.rows.push(CheckRow {
            check: which.check_name(),
            trial,
            lhs,
            rhs,
            margin: (lhs - rhs).abs(),
            satisfied: (lhs - rhs).abs() < IDENTITY_TOL,
        });
    }
    Ok(report)
}
