use std::time::Duration;

use crate::agents::{AgentOutcome, Phase, Play, StepLog};
use crate::domain::{Policy, ScoreMatrix};
use crate::welfare::{nsw_value, point_mass_nsw};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: u64,
    pub phase: Phase,
    pub arm_i: usize,
    pub arm_j: usize,
    pub regret: f64,
    pub regret_cum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    pub regret_cum: f64,
    /// Cumulative utility of each user up to `t`.
    pub utilities: Vec<f64>,
}

/// Regret of one step: the optimum minus the mean NSW of the two policies.
pub fn instantaneous_regret(scores: &ScoreMatrix, optimal_value: f64, pi: &Policy, pi_prime: &Policy) -> f64 {
    optimal_value - 0.5 * (nsw_value(pi, scores) + nsw_value(pi_prime, scores))
}

/// Turns agent steps into regret and per-user utilities measured against
/// the true scores.
#[derive(Debug, Clone)]
pub struct Recorder<'a> {
    scores: &'a ScoreMatrix,
    optimal_value: f64,
    point_nsw: Vec<f64>,
    stride: u64,
    steps: Vec<StepRecord>,
    utilities: Vec<f64>,
    regret_cum: f64,
    policy_nsw: Option<(u64, f64)>,
    checkpoints: Vec<Checkpoint>,
}

impl<'a> Recorder<'a> {
    pub fn new(scores: &'a ScoreMatrix, optimal_value: f64, stride: u64) -> Self {
        Self {
            scores,
            optimal_value,
            point_nsw: (0..scores.arms()).map(|a| point_mass_nsw(scores, a)).collect(),
            stride: stride.max(1),
            steps: Vec::new(),
            utilities: vec![0.0; scores.users()],
            regret_cum: 0.0,
            policy_nsw: None,
            checkpoints: Vec::new(),
        }
    }

    pub fn with_capacity(mut self, steps: usize) -> Self {
        self.steps.reserve(steps);
        self
    }

    pub fn finish(self, outcome: AgentOutcome, duration: Duration) -> RunRecord {
        let mut checkpoints = self.checkpoints;
        let t = self.steps.len() as u64;
        if checkpoints.last().is_none_or(|c| c.t != t) {
            checkpoints.push(Checkpoint {
                t,
                regret_cum: self.regret_cum,
                utilities: self.utilities.clone(),
            });
        }
        RunRecord {
            steps: self.steps,
            checkpoints,
            utilities: self.utilities,
            cumulative_regret: self.regret_cum,
            optimal_value: self.optimal_value,
            final_policy: outcome.final_policy.clone(),
            truncated: outcome.truncated,
            duration,
            outcome,
        }
    }
}

impl StepLog for Recorder<'_> {
    fn record(&mut self, phase: Phase, arm_i: usize, arm_j: usize, play: Play<'_>) {
        let achieved = match play {
            Play::Fixed => 0.5 * (self.point_nsw[arm_i] + self.point_nsw[arm_j]),
            Play::Sampled { policy, version } => match self.policy_nsw {
                Some((v, value)) if v == version => value,
                _ => {
                    let value = nsw_value(policy, self.scores);
                    self.policy_nsw = Some((version, value));
                    value
                }
            },
        };
        let regret = self.optimal_value - achieved;
        self.regret_cum += regret;
        for (d, u) in self.utilities.iter_mut().enumerate() {
            let row = self.scores.row(d);
            *u += 0.5 * (row[arm_i] + row[arm_j]);
        }
        let t = self.steps.len() as u64 + 1;
        self.steps.push(StepRecord {
            t,
            phase,
            arm_i,
            arm_j,
            regret,
            regret_cum: self.regret_cum,
        });
        if t % self.stride == 0 {
            self.checkpoints.push(Checkpoint {
                t,
                regret_cum: self.regret_cum,
                utilities: self.utilities.clone(),
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    /// Every `stride` steps, plus the final step.
    pub checkpoints: Vec<Checkpoint>,
    /// Cumulative utility of each user at the end of the run.
    pub utilities: Vec<f64>,
    pub cumulative_regret: f64,
    pub optimal_value: f64,
    pub final_policy: Option<Policy>,
    pub truncated: bool,
    pub duration: Duration,
    pub outcome: AgentOutcome,
}

impl RunRecord {
    pub fn horizon(&self) -> u64 {
        self.steps.len() as u64
    }
}

/// `u_d = sum_t (s_d(i_t) + s_d(j_t)) / 2` over the played pairs.
pub fn cumulative_utilities<I>(pairs: I, scores: &ScoreMatrix) -> Vec<f64>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut u = vec![0.0; scores.users()];
    for (i, j) in pairs {
        for (d, ud) in u.iter_mut().enumerate() {
            let row = scores.row(d);
            *ud += 0.5 * (row[i] + row[j]);
        }
    }
    u
}
