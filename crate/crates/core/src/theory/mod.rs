//! Exact numerical verification of the occupancy-measure and return-gap
//! results underlying the training objective.
//!
//! Every check constructs random tabular instances, evaluates both sides of
//! a claimed identity or bound with exact linear algebra, and reports
//! per-trial rows. Checks are pure functions of their seeds: fixed seeds
//! produce fixed reports.

mod dist;
mod duality;
mod occupancy;
mod return_gap;
mod tvd_bounds;

pub use dist::{kl, tvd};
pub use duality::{check_dual_identity, DualProblem};
pub use occupancy::{
    check_occupancy_identities, entropy_occupancy, entropy_policy, occupancy_measure,
    policy_from_occupancy, OccupancyMeasure,
};
pub use return_gap::{check_return_gap_bound, return_gap_report, BoundReport};
pub use tvd_bounds::{check_joint_tvd_chain_rule, check_markov_marginal_drift};

/// One verification trial: an identity or bound instance with both sides
/// evaluated. `margin = rhs - lhs`; satisfied means the claim held within its
/// tolerance.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub check: &'static str,
    pub trial: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub satisfied: bool,
}

/// A batch of trials from one check.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.satisfied).count()
    }

    pub fn extend(&mut self, other: CheckReport) {
        self.rows.extend(other.rows);
    }
}
