//! Fair multi-user dueling bandits: preference environments, Condorcet
//! winner identification, Nash social welfare optimisation, online agents
//! and an experiment harness.

pub mod agents;
pub mod condorcet;
pub mod domain;
pub mod envgen;
pub mod error;
pub mod harness;
pub mod rng;
pub mod welfare;

pub use domain::{
    derive_scores, expected_utility, find_true_winners, validate_tensor, FeedbackVector, InstanceDocument, Policy,
    PreferenceTensor, ScoreMatrix, Violation, WinnerSet,
};
pub use envgen::{generate, DuelSampler, Instance, InstanceKind, InstanceSpec, TensorSampler};
pub use error::{Error, Result};
pub use rng::RngSeed;
pub use welfare::{maximize_nsw, maximize_utilitarian, nsw_value, utilitarian_value, SolverSettings};
