//! Exact finite MDPs: the substrate for all numerical verification.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP `(S, A, p, r, gamma, rho0)` with dense row-stochastic
/// transitions. Indexing is `transition[s][a][s']`, flattened.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    pub gamma: f64,
    initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config("MDP needs at least one state and action".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension("transition tensor size mismatch".into()));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Dimension("reward table size mismatch".into()));
        }
        if initial.len() != n_states {
            return Err(Error::Dimension("initial distribution size mismatch".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in (0,1), got {gamma}")));
        }
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let sum: f64 = (0..n_states).map(|s2| mdp.p(s, a, s2)).sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Config(format!(
                        "transition row (s={s}, a={a}) sums to {sum}, not 1"
                    )));
                }
            }
        }
        let rho_sum: f64 = mdp.initial.iter().sum();
        if (rho_sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Config(format!(
                "initial distribution sums to {rho_sum}, not 1"
            )));
        }
        Ok(mdp)
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    #[inline]
    pub fn rho0(&self, s: usize) -> f64 {
        self.initial[s]
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// Replaces the reward table (shape-checked).
    pub fn with_reward(mut self, reward: Vec<f64>) -> Result<Self> {
        if reward.len() != self.n_states * self.n_actions {
            return Err(Error::Dimension("reward table size mismatch".into()));
        }
        self.reward = reward;
        Ok(self)
    }

    /// Replaces the transition tensor (revalidates row-stochasticity).
    pub fn with_transition(self, transition: Vec<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            transition,
            self.reward,
            self.gamma,
            self.initial,
        )
    }

    /// Random MDP with strictly positive transition probabilities: each row is
    /// a normalized vector of Uniform(0.05, 1) draws, so log-ratios stay
    /// bounded. Rewards Uniform(0, 1).
    pub fn random(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let transition = random_stochastic_rows(n_states * n_actions, n_states, rng);
        let reward = (0..n_states * n_actions).map(|_| rng.random_range(0.0..1.0)).collect();
        let initial = random_stochastic_rows(1, n_states, rng);
        Self::new(n_states, n_actions, transition, reward, gamma, initial)
            .expect("random construction is always valid")
    }
}

/// `n_rows` probability rows of length `width`, concatenated. Entries are
/// bounded away from zero.
pub fn random_stochastic_rows(n_rows: usize, width: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_rows * width);
    for _ in 0..n_rows {
        let row: Vec<f64> = (0..width).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = row.iter().sum();
        out.extend(row.into_iter().map(|v| v / sum));
    }
    out
}

/// A stochastic policy over a finite MDP: `probs[s][a]`, rows sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub n_states: usize,
    pub n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension("policy table size mismatch".into()));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::Config(format!("negative policy probability in state {s}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "policy row for state {s} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn random(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> Self {
        Self {
            n_states,
            n_actions,
            probs: random_stochastic_rows(n_states, n_actions, rng),
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Row-wise convex mixture `(1-rate)*self + rate*other`.
    pub fn mix(&self, other: &PolicyTable, rate: f64) -> PolicyTable {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (1.0 - rate) * a + rate * b)
            .collect();
        PolicyTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        }
    }
}

/// Exact policy evaluation: solves `(I - gamma * P_pi) v = r_pi` and returns
/// the state values plus the expected return `rho0 . v`.
pub fn policy_eval(mdp: &TabularMdp, policy: &PolicyTable) -> Result<(Vec<f64>, f64)> {
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return Err(Error::Dimension("policy shape does not match MDP".into()));
    }
    let n = mdp.n_states;
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        for act in 0..mdp.n_actions {
            let pi = policy.prob(s, act);
            b[s] += pi * mdp.r(s, act);
            for s2 in 0..n {
                a[(s, s2)] -= mdp.gamma * pi * mdp.p(s, act, s2);
            }
        }
    }
    let lu = a.lu();
    let v = lu
        .solve(&b)
        .ok_or_else(|| Error::Singular("policy evaluation system".into()))?;
    let values: Vec<f64> = v.iter().copied().collect();
    let ret = values
        .iter()
        .enumerate()
        .map(|(s, v)| mdp.rho0(s) * v)
        .sum();
    Ok((values, ret))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::IndexedRandom;

    #[test]
    fn single_state_geometric_series() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9, vec![1.0]).unwrap();
        let policy = PolicyTable::uniform(1, 1);
        let (v, ret) = policy_eval(&mdp, &policy).unwrap();
        assert!((v[0] - 10.0).abs() < 1e-9);
        assert!((ret - 10.0).abs() < 1e-9);
    }

    #[test]
    fn zero_reward_gives_zero_return() {
        let mut rng = crate::seeds::rng(4);
        let mdp = TabularMdp::random(4, 3, 0.95, &mut rng)
            .with_reward(vec![0.0; 12])
            .unwrap();
        let policy = PolicyTable::random(4, 3, &mut rng);
        let (_, ret) = policy_eval(&mdp, &policy).unwrap();
        assert!(ret.abs() < 1e-12);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let res = TabularMdp::new(1, 1, vec![0.7], vec![0.0], 0.9, vec![1.0]);
        assert!(res.is_err());
    }

    /// Monte-Carlo rollout oracle for the expected discounted return.
    #[test]
    fn policy_eval_matches_monte_carlo() {
        let mut rng = crate::seeds::rng(31);
        let mdp = TabularMdp::random(5, 3, 0.9, &mut rng);
        let policy = PolicyTable::random(5, 3, &mut rng);
        let (_, exact) = policy_eval(&mdp, &policy).unwrap();

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

        // Episodes truncated where gamma^t < 1e-12; per-episode truncation
        // bias is far below the Monte-Carlo standard error.
        let t_max = ((1e-12f64).ln() / mdp.gamma.ln()).ceil() as usize;
        let n_episodes = 4_000usize;
        let mut rollrng = crate::seeds::rng(77);
        let mut returns = Vec::with_capacity(n_episodes);
        let states: Vec<usize> = (0..mdp.n_states).collect();
        for _ in 0..n_episodes {
            let mut s = *states
                .choose_weighted(&mut rollrng, |&s| mdp.rho0(s))
                .unwrap();
            let mut ret = 0.0;
            let mut disc = 1.0;
            for _ in 0..t_max {
                let a = sample_idx(policy.row(s), &mut rollrng);
                ret += disc * mdp.r(s, a);
                disc *= mdp.gamma;
                let row: Vec<f64> = (0..mdp.n_states).map(|s2| mdp.p(s, a, s2)).collect();
                s = sample_idx(&row, &mut rollrng);
            }
            returns.push(ret);
        }
        let mean: f64 = returns.iter().sum::<f64>() / n_episodes as f64;
        let var: f64 =
            returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n_episodes - 1) as f64;
        let std_err = (var / n_episodes as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * std_err,
            "MC mean {mean} vs exact {exact} (3 SE = {})",
            3.0 * std_err
        );
    }

    #[test]
    fn random_mdp_rows_are_stochastic() {
        let mut rng = crate::seeds::rng(0);
        for _ in 0..20 {
            let mdp = TabularMdp::random(6, 4, 0.9, &mut rng);
            for s in 0..6 {
                for a in 0..4 {
                    let sum: f64 = (0..6).map(|s2| mdp.p(s, a, s2)).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
