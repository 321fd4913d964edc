//! Online agents: fair explore-then-commit and epsilon-greedy, their
//! utilitarian twins, and the uniform-over-users baseline.
//!
//! Agents see the environment only through a [`DuelSampler`](crate::envgen::DuelSampler) and report each
//! step to a [`StepLog`], which is where the harness computes regret.

mod config;
mod estimates;
mod runner;
pub mod schedules;

pub use config::{AgentConfig, AgentKind, Objective};
pub use estimates::EstimatedScores;
pub use runner::{
    run_agent, run_fair_eps, run_fair_etc, run_uniform_users, run_utilitarian_variant, user_share_policy, AgentOutcome,
    PhaseCounts,
};
pub use schedules::{compute_delta, compute_eps_t, compute_l};

use crate::domain::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Identify,
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Identify => "identify",
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "identify" => Ok(Phase::Identify),
            "explore" => Ok(Phase::Explore),
            "exploit" => Ok(Phase::Exploit),
            other => Err(crate::Error::InvalidConfig(format!("unknown phase {other:?}"))),
        }
    }
}

/// How the two arms of a step were chosen.
#[derive(Debug, Clone, Copy)]
pub enum Play<'a> {
    /// Both arms were picked deterministically.
    Fixed,
    /// Both arms were drawn from `policy`. `version` changes whenever the
    /// policy does, so observers can cache per-policy work.
    Sampled { policy: &'a Policy, version: u64 },
}

pub trait StepLog {
    fn record(&mut self, phase: Phase, arm_i: usize, arm_j: usize, play: Play<'_>);
}

impl StepLog for () {
    fn record(&mut self, _: Phase, _: usize, _: usize, _: Play<'_>) {}
}

impl StepLog for Vec<(Phase, usize, usize)> {
    fn record(&mut self, phase: Phase, arm_i: usize, arm_j: usize, _: Play<'_>) {
        self.push((phase, arm_i, arm_j));
    }
}
