//! Random-instance verification of two total-variation bounds: the
//! chain rule for joint distributions and the linear drift of Markov chain
//! state marginals.

use rand::Rng;

use super::dist::tvd;
use super::{CheckReport, CheckRow};
use crate::envs::random_stochastic_rows;

const TOL: f64 = 1e-12;

/// Verifies, on random joint distributions, that
/// `TVD(p1(x,y) || p2(x,y)) <= TVD(p1(x) || p2(x)) +
///  E_{x~p1}[TVD(p1(y|x) || p2(y|x))]`.
///
/// Support sizes are sampled in `2..=max_dim` per axis. Returns one row per
/// trial; a violation is an excess beyond 1e-12.
pub fn check_joint_tvd_chain_rule(n_trials: usize, max_dim: usize, seed: u64) -> CheckReport {
    assert!(max_dim >= 2, "need at least binary supports");
    let mut rng = crate::seeds::rng(seed);
    let mut report = CheckReport::default();
    for trial in 0..n_trials {
        let nx = rng.random_range(2..=max_dim);
        let ny = rng.random_range(2..=max_dim);
        // Joint built as marginal times conditionals so both factors are
        // available in closed form.
        let px1 = random_stochastic_rows(1, nx, &mut rng);
        let px2 = random_stochastic_rows(1, nx, &mut rng);
        let cond1 = random_stochastic_rows(nx, ny, &mut rng);
        let cond2 = random_stochastic_rows(nx, ny, &mut rng);

        let joint = |px: &[f64], cond: &[f64]| -> Vec<f64> {
            let mut j = Vec::with_capacity(nx * ny);
            for x in 0..nx {
                for y in 0..ny {
                    j.push(px[x] * cond[x * ny + y]);
                }
            }
            j
        };
        let j1 = joint(&px1, &cond1);
        let j2 = joint(&px2, &cond2);
        let lhs = tvd(&j1, &j2).expect("valid joints");

        let marginal_term = tvd(&px1, &px2).expect("valid marginals");
        let mut conditional_term = 0.0;
        for x in 0..nx {
            let c1 = &cond1[x * ny..(x + 1) * ny];
            let c2 = &cond2[x * ny..(x + 1) * ny];
            conditional_term += px1[x] * tvd(c1, c2).expect("valid conditionals");
        }
        let rhs = marginal_term + conditional_term;
        report.rows.push(CheckRow {
            check: "joint_tvd_chain_rule",
            trial,
            lhs,
            rhs,
            margin: rhs - lhs,
            satisfied: lhs <= rhs + TOL,
        });
    }
    report
}

/// Verifies, on random pairs of Markov chains sharing an initial
/// distribution, that the state-marginal distance grows at most linearly:
/// `TVD(p1^t || p2^t) <= t * delta`, where `delta` is the maximum over t of
/// the expected conditional TVD of the two kernels under `p1^(t-1)`.
///
/// Chains have `2..=max_states` states; one row per (pair, t).
pub fn check_markov_marginal_drift(
    chain_pairs: usize,
    horizon: usize,
    max_states: usize,
    seed: u64,
) -> CheckReport {
    assert!(max_states >= 2);
    let mut rng = crate::seeds::rng(seed);
    let mut report = CheckReport::default();
    for pair in 0..chain_pairs {
        let n = rng.random_range(2..=max_states);
        // kernel[s_from * n + s_to]
        let k1 = random_stochastic_rows(n, n, &mut rng);
        let k2 = random_stochastic_rows(n, n, &mut rng);
        let p0 = random_stochastic_rows(1, n, &mut rng);

        let push = |kernel: &[f64], p: &[f64]| -> Vec<f64> {
            let mut next = vec![0.0; n];
            for from in 0..n {
                for to in 0..n {
                    next[to] += p[from] * kernel[from * n + to];
                }
            }
            next
        };

        // Propagate both marginals exactly and record delta_t along the way.
        let mut p1 = p0.clone();
        let mut p2 = p0.clone();
        let mut marginals = Vec::with_capacity(horizon);
        let mut delta = 0.0f64;
        for _ in 1..=horizon {
            let mut delta_t = 0.0;
            for from in 0..n {
                let r1 = &k1[from * n..(from + 1) * n];
                let r2 = &k2[from * n..(from + 1) * n];
                delta_t += p1[from] * tvd(r1, r2).expect("valid rows");
            }
            delta = delta.max(delta_t);
            p1 = push(&k1, &p1);
            p2 = push(&k2, &p2);
            marginals.push((p1.clone(), p2.clone()));
        }

        for (i, (m1, m2)) in marginals.iter().enumerate() {
            let t = i + 1;
            let lhs = tvd(m1, m2).expect("valid marginals");
            let rhs = t as f64 * delta;
            report.rows.push(CheckRow {
                check: "markov_marginal_drift",
                trial: pair * horizon + i,
                lhs,
                rhs,
                margin: rhs - lhs,
                satisfied: lhs <= rhs + TOL,
            });
        }
    }
    report
}
