//! Imitation learning with an ensemble-dynamics reward function.
//!
//! The crate implements the full MRFIL pipeline on small analytic control
//! environments, plus an exact numerical verifier for the occupancy-measure
//! and return-gap results the method rests on:
//!
//! - [`nn`]: fixed-topology MLPs with analytic forward/backward passes and Adam.
//! - [`envs`]: point-mass / spring environments and exact tabular MDPs.
//! - [`demos`]: expert demonstration generation, persistence, and replay.
//! - [`dynmodel`]: single + ensemble forward models and the variance-thresholded
//!   binary reward.
//! - [`agent`]: Gaussian policy, Q critic, behavioral cloning, offline
//!   multi-branch short-rollout pre-training, and the online training loop.
//! - [`theory`]: occupancy measures, divergence bounds, Lagrangian dual
//!   identities, and the model/policy return-gap bound, all checked on random
//!   tabular instances.
//!
//! Everything is seed-deterministic: the same seeds and data produce
//! bit-identical parameters, trajectories, and metric files.

pub mod agent;
pub mod demos;
pub mod dynmodel;
pub mod envs;
mod error;
pub mod nn;
pub mod seeds;
pub mod theory;

pub use error::{Error, Result};
