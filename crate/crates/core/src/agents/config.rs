use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::welfare::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    FairEtc,
    FairEps,
    UtilEtc,
    UtilEps,
    UniformUsers,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::FairEtc,
        AgentKind::FairEps,
        AgentKind::UtilEtc,
        AgentKind::UtilEps,
        AgentKind::UniformUsers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::FairEtc => "fair_etc",
            AgentKind::FairEps => "fair_eps",
            AgentKind::UtilEtc => "util_etc",
            AgentKind::UtilEps => "util_eps",
            AgentKind::UniformUsers => "uniform_users",
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            AgentKind::FairEtc | AgentKind::FairEps => Objective::Nash,
            AgentKind::UtilEtc | AgentKind::UtilEps => Objective::Utilitarian,
            AgentKind::UniformUsers => Objective::UserShare,
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accepts both `fair_etc` and `fair-etc`.
impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown agent {s:?}")))
    }
}

/// What the agent optimises when it commits or exploits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Nash,
    Utilitarian,
    /// Each user's estimated winner with probability proportional to its
    /// number of users.
    UserShare,
}

fn default_delta_hat() -> f64 {
    0.0025
}
fn default_etc_scale() -> f64 {
    0.25
}
fn default_eps_scale() -> f64 {
    0.1
}
fn default_recompute_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Total number of duels. Sweeps fill this from the experiment horizon.
    #[serde(default)]
    pub horizon: u64,
    #[serde(default = "default_delta_hat")]
    pub delta_hat: f64,
    #[serde(default = "default_etc_scale")]
    pub etc_scale: f64,
    #[serde(default = "default_eps_scale")]
    pub eps_scale: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Agent-side randomness (exploration coin, policy draws).
    #[serde(default)]
    pub seed: RngSeed,
    /// Exploitation steps between re-solves of the greedy agents.
    #[serde(default = "default_recompute_every")]
    pub recompute_every: usize,
    /// Fixed exploration rate replacing the decaying schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_eps: Option<f64>,
    /// Cap on identification duels; the remaining horizon always applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_budget: Option<u64>,
    /// Label in sweep outputs; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl AgentConfig {
    pub fn new(kind: AgentKind, horizon: u64) -> Self {
        Self {
            kind,
            horizon,
            delta_hat: default_delta_hat(),
            etc_scale: default_etc_scale(),
            eps_scale: default_eps_scale(),
            solver: SolverSettings::default(),
            seed: RngSeed::default(),
            recompute_every: default_recompute_every(),
            constant_eps: None,
            step_budget: None,
            name: None,
        }
    }

    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        self.seed = seed;
        self
    }

    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.delta_hat > 0.0 && self.delta_hat < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta_hat must lie in (0, 1), got {}",
                self.delta_hat
            )));
        }
        if self.etc_scale.is_nan() || self.etc_scale <= 0.0 || self.eps_scale.is_nan() || self.eps_scale <= 0.0 {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        if self.recompute_every == 0 {
            return Err(Error::InvalidConfig("recompute_every must be at least 1".into()));
        }
        if let Some(e) = self.constant_eps {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidConfig(format!("constant_eps {e} outside [0, 1]")));
            }
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name.contains("__") {
                return Err(Error::InvalidConfig(format!("unusable agent name {name:?}")));
            }
        }
        self.solver.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_spellings() {
        assert_eq!("fair-etc".parse::<AgentKind>().unwrap(), AgentKind::FairEtc);
        assert_eq!("uniform_users".parse::<AgentKind>().unwrap(), AgentKind::UniformUsers);
        assert!("ucb".parse::<AgentKind>().is_err());
    }

    #[test]
    fn json_defaults() {
        let c: AgentConfig = serde_json::from_str(r#"{"kind":"fair_eps"}"#).unwrap();
        assert_eq!(c.delta_hat, 0.0025);
        assert_eq!(c.etc_scale, 0.25);
        assert_eq!(c.eps_scale, 0.1);
        assert_eq!(c.recompute_every, 1);
        assert_eq!(c.solver, SolverSettings::default());
    }

    #[test]
    fn validation() {
        assert!(AgentConfig::new(AgentKind::FairEtc, 0).validate().is_err());
        assert!(AgentConfig::new(AgentKind::FairEtc, 10).validate().is_ok());
        let mut c = AgentConfig::new(AgentKind::FairEtc, 10);
        c.delta_hat = 1.0;
        assert!(c.validate().is_err());
    }
}
