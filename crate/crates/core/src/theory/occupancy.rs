//! Occupancy measures, the policy they induce, and causal entropy.

use nalgebra::{DMatrix, DVector};

use super::{CheckReport, CheckRow};
use crate::envs::{PolicyTable, TabularMdp};
use crate::{Error, Result};

/// Marginals at or below this are treated as unreachable.
const REACHABLE_TOL: f64 = 1e-12;

/// Unnormalized discounted state-action visitation: `rho(s,a) = pi(a|s) *
/// sum_t gamma^t P(s_t = s | pi)`. Total mass is `1/(1-gamma)`.
#[derive(Debug, Clone)]
pub struct OccupancyMeasure {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    rho: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != n_states * n_actions {
            return Err(Error::Dimension("occupancy table size mismatch".into()));
        }
        if rho.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Config("occupancy entries must be finite and >= 0".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            rho,
        })
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.rho[s * self.n_actions + a]
    }

    pub fn state_marginal(&self, s: usize) -> f64 {
        self.rho[s * self.n_actions..(s + 1) * self.n_actions]
            .iter()
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.iter().sum()
    }

    /// `sum_{s,a} rho(s,a) * f(s,a)`; with unnormalized occupancy this is the
    /// expected discounted sum of `f` along trajectories.
    pub fn weighted_sum(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                total += self.get(s, a) * f(s, a);
            }
        }
        total
    }
}

/// Solves the discounted visitation system `d = rho0 + gamma * P_pi^T d`
/// exactly and expands it to state-action occupancy.
pub fn occupancy_measure(mdp: &TabularMdp, policy: &PolicyTable) -> Result<OccupancyMeasure> {
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return Err(Error::Dimension("policy shape does not match MDP".into()));
    }
    let n = mdp.n_states;
    // a[(i, j)] = delta_ij - gamma * P_pi(j -> i)
    let mut a = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        for act in 0..mdp.n_actions {
            let pi = policy.prob(j, act);
            for i in 0..n {
                a[(i, j)] -= mdp.gamma * pi * mdp.p(j, act, i);
            }
        }
    }
    let b = DVector::from_fn(n, |s, _| mdp.rho0(s));
    let d = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("discounted visitation system".into()))?;
    let mut rho = vec![0.0; n * mdp.n_actions];
    for s in 0..n {
        for act in 0..mdp.n_actions {
            // Clamp the tiny negative values LU can leave on unreachable states.
            rho[s * mdp.n_actions + act] = (policy.prob(s, act) * d[s]).max(0.0);
        }
    }
    OccupancyMeasure::new(n, mdp.n_actions, mdp.gamma, rho)
}

/// Normalizes occupancy rows back into a policy: `pi(a|s) =
/// rho(s,a) / sum_a' rho(s,a')`. States with (numerically) zero marginal are
/// unreachable under the generating policy; they get a uniform row and are
/// returned in the flagged list so callers can exclude them from comparisons.
pub fn policy_from_occupancy(rho: &OccupancyMeasure) -> (PolicyTable, Vec<usize>) {
    let mut probs = Vec::with_capacity(rho.n_states * rho.n_actions);
    let mut flagged = Vec::new();
    for s in 0..rho.n_states {
        let mass = rho.state_marginal(s);
        if mass <= REACHABLE_TOL {
            flagged.push(s);
            probs.extend(std::iter::repeat(1.0 / rho.n_actions as f64).take(rho.n_actions));
        } else {
            for a in 0..rho.n_actions {
                probs.push(rho.get(s, a) / mass);
            }
        }
    }
    let policy = PolicyTable::new(rho.n_states, rho.n_actions, probs)
        .expect("normalized rows are a valid policy");
    (policy, flagged)
}

/// Discounted causal entropy `E_pi[-log pi(a|s)]`, computed exactly through
/// the occupancy weighting. `0 log 0 := 0`.
pub fn entropy_policy(mdp: &TabularMdp, policy: &PolicyTable) -> Result<f64> {
    let rho = occupancy_measure(mdp, policy)?;
    Ok(rho.weighted_sum(|s, a| {
        let p = policy.prob(s, a);
        if p > 0.0 {
            -p.ln()
        } else {
            0.0
        }
    }))
}

/// Entropy of an occupancy measure:
/// `-sum rho(s,a) log(rho(s,a) / sum_a' rho(s,a'))`, with `0 log 0 := 0`.
pub fn entropy_occupancy(rho: &OccupancyMeasure) -> f64 {
    let mut total = 0.0;
    for s in 0..rho.n_states {
        let mass = rho.state_marginal(s);
        if mass <= 0.0 {
            continue;
        }
        for a in 0..rho.n_actions {
            let v = rho.get(s, a);
            if v > 0.0 {
                total -= v * (v / mass).ln();
            }
        }
    }
    total
}

/// Random-instance verification of the occupancy identities:
/// total mass `1/(1-gamma)`, the occupancy <-> policy round trip, and the
/// agreement of the two entropy routes.
pub fn check_occupancy_identities(n_trials: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    let mut rng = crate::seeds::rng(seed);
    for trial in 0..n_trials {
        use rand::Rng;
        let n_states = rng.random_range(2..=6);
        let n_actions = rng.random_range(2..=4);
        let gamma = rng.random_range(0.5..0.99);
        let mdp = TabularMdp::random(n_states, n_actions, gamma, &mut rng);
        let policy = PolicyTable::random(n_states, n_actions, &mut rng);
        let rho = occupancy_measure(&mdp, &policy)?;

        let mass = rho.total_mass();
        let want_mass = 1.0 / (1.0 - gamma);
        report.rows.push(CheckRow {
            check: "occupancy_mass",
            trial,
            lhs: mass,
            rhs: want_mass,
            margin: (mass - want_mass).abs(),
            satisfied: (mass - want_mass).abs() < 1e-9,
        });

        let (recovered, flagged) = policy_from_occupancy(&rho);
        let mut max_dev = 0.0f64;
        for s in 0..n_states {
            if flagged.contains(&s) {
                continue;
            }
            for a in 0..n_actions {
                max_dev = max_dev.max((recovered.prob(s, a) - policy.prob(s, a)).abs());
            }
        }
        report.rows.push(CheckRow {
            check: "occupancy_roundtrip",
            trial,
            lhs: max_dev,
            rhs: 0.0,
            margin: max_dev,
            satisfied: max_dev < 1e-9,
        });

        let h_policy = entropy_policy(&mdp, &policy)?;
        let h_occ = entropy_occupancy(&rho);
        report.rows.push(CheckRow {
            check: "entropy_consistency",
            trial,
            lhs: h_policy,
            rhs: h_occ,
            margin: (h_policy - h_occ).abs(),
            satisfied: (h_policy - h_occ).abs() < 1e-9,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn single_state_two_action_occupancy() {
        let mdp = TabularMdp::new(
            1,
            2,
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            0.5,
            vec![1.0],
        )
        .unwrap();
        let policy = PolicyTable::new(1, 2, vec![0.3, 0.7]).unwrap();
        let rho = occupancy_measure(&mdp, &policy).unwrap();
        // d(s) = 1/(1-gamma) = 2, so rho = (0.6, 1.4).
        assert!((rho.get(0, 0) - 0.6).abs() < 1e-12);
        assert!((rho.get(0, 1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn total_mass_is_inverse_one_minus_gamma() {
        let mut rng = crate::seeds::rng(8);
        for _ in 0..50 {
            let gamma = rng.random_range(0.3..0.99);
            let mdp = TabularMdp::random(5, 3, gamma, &mut rng);
            let policy = PolicyTable::random(5, 3, &mut rng);
            let rho = occupancy_measure(&mdp, &policy).unwrap();
            assert!((rho.total_mass() - 1.0 / (1.0 - gamma)).abs() < 1e-9);
        }
    }

    #[test]
    fn occupancy_matches_monte_carlo_visitation() {
        let mut rng = crate::seeds::rng(14);
        let mdp = TabularMdp::random(4, 2, 0.9, &mut rng);
        let policy = PolicyTable::random(4, 2, &mut rng);
        let rho = occupancy_measure(&mdp, &policy).unwrap();

        let sample_idx = |probs: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> usize {
            let u: f64 = rng.random_range(0.0..1.0);
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        };

        let t_max = ((1e-10f64).ln() / 0.9f64.ln()).ceil() as usize;
        let n_episodes = 5_000usize;
        let mut rollrng = crate::seeds::rng(15);
        let mut sums = vec![0.0; 8];
        let mut sumsq = vec![0.0; 8];
        for _ in 0..n_episodes {
            let mut acc = vec![0.0; 8];
            let rho0: Vec<f64> = (0..4).map(|s| mdp.rho0(s)).collect();
            let mut s = sample_idx(&rho0, &mut rollrng);
            let mut disc = 1.0;
            for _ in 0..t_max {
                let a = sample_idx(policy.row(s), &mut rollrng);
                acc[s * 2 + a] += disc;
                disc *= 0.9;
                let row: Vec<f64> = (0..4).map(|s2| mdp.p(s, a, s2)).collect();
                s = sample_idx(&row, &mut rollrng);
            }
            for i in 0..8 {
                sums[i] += acc[i];
                sumsq[i] += acc[i] * acc[i];
            }
        }
        // ~5k episodes x 219 steps > 10^6 sampled steps in total.
        for s in 0..4 {
            for a in 0..2 {
                let i = s * 2 + a;
                let mean = sums[i] / n_episodes as f64;
                let var = sumsq[i] / n_episodes as f64 - mean * mean;
                let se = (var / n_episodes as f64).sqrt();
                let exact = rho.get(s, a);
                assert!(
                    (mean - exact).abs() <= 3.0 * se.max(1e-6),
                    "rho({s},{a}): MC {mean} vs exact {exact} (3se {})",
                    3.0 * se
                );
            }
        }
    }

    #[test]
    fn round_trip_recovers_policy_on_reachable_states() {
        let mut rng = crate::seeds::rng(23);
        for _ in 0..50 {
            let mdp = TabularMdp::random(5, 3, 0.9, &mut rng);
            let policy = PolicyTable::random(5, 3, &mut rng);
            let rho = occupancy_measure(&mdp, &policy).unwrap();
            let (recovered, flagged) = policy_from_occupancy(&rho);
            assert!(flagged.is_empty(), "all states reachable in these instances");
            for s in 0..5 {
                for a in 0..3 {
                    assert!((recovered.prob(s, a) - policy.prob(s, a)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn unreachable_state_is_flagged() {
        // State 1 is unreachable: rho0 puts no mass there and both states
        // self-loop.
        let mdp = TabularMdp::new(
            2,
            1,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            0.9,
            vec![1.0, 0.0],
        )
        .unwrap();
        let policy = PolicyTable::uniform(2, 1);
        let rho = occupancy_measure(&mdp, &policy).unwrap();
        let (_, flagged) = policy_from_occupancy(&rho);
        assert_eq!(flagged, vec![1]);
    }

    #[test]
    fn uniform_occupancy_row_gives_uniform_policy() {
        let rho = OccupancyMeasure::new(1, 2, 0.5, vec![1.0, 1.0]).unwrap();
        let (policy, flagged) = policy_from_occupancy(&rho);
        assert!(flagged.is_empty());
        assert_eq!(policy.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn deterministic_policy_has_zero_entropy() {
        let mut rng = crate::seeds::rng(2);
        let mdp = TabularMdp::random(3, 2, 0.8, &mut rng);
        let policy = PolicyTable::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(entropy_policy(&mdp, &policy).unwrap(), 0.0);
    }

    #[test]
    fn single_state_uniform_entropy_is_mass_times_log2() {
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![0.0, 0.0], 0.5, vec![1.0]).unwrap();
        let policy = PolicyTable::uniform(1, 2);
        let h = entropy_policy(&mdp, &policy).unwrap();
        assert!((h - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn identity_suite_has_zero_violations() {
        let report = check_occupancy_identities(100, 42).unwrap();
        assert_eq!(report.rows.len(), 300);
        assert_eq!(report.violations(), 0);
    }
}
