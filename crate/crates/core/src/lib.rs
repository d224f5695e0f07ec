//! Offline reinforcement learning on episodic time-homogeneous MDPs.
//!
//! The crate builds empirical models from logged episodes, evaluates and
//! plans on them by exact dynamic programming, and ships the machinery used
//! to measure how estimation error scales with data volume and horizon:
//!
//! - [`mdp`]: tabular MDP and policy types, exact DP in [`solve`], and
//!   brute-force oracles in [`oracle`];
//! - [`data`]: seeded episode sampling, JSONL persistence and count
//!   statistics;
//! - [`estimator`]: the plug-in evaluator and model-based planner on
//!   count-based empirical MDPs;
//! - [`linear`]: anchor-point linear MDPs whose full model reconstructs from
//!   statistics at `d` anchor pairs;
//! - [`diagnostics`]: decomposition identities, total-variance functionals,
//!   recursion inequalities and concentration bounds as checkable reports;
//! - [`instances`]: two-point lower-bound constructions and random
//!   bounded-total-reward families;
//! - [`experiments`]: config-driven deterministic Monte Carlo sweeps with
//!   CSV/JSON output.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod instances;
pub mod linear;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod solve;

pub use error::{Error, Result};
pub use mdp::{OccupancyMeasures, Policy, RewardModel, TabularMDP, ValueSolution};
