use log::debug;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{AgentConfig, AgentKind, Objective};
use super::estimates::EstimatedScores;
use super::schedules::{compute_delta, compute_eps_t, compute_l};
use super::{Phase, Play, StepLog};
use crate::condorcet::{run_tournament, TournamentState, UNKNOWN_GAP_BUDGET};
use crate::domain::{FeedbackVector, Policy, ScoreMatrix, WinnerSet};
use crate::envgen::DuelSampler;
use crate::error::{Error, Result};
use crate::welfare::{maximize_nsw, maximize_utilitarian};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseCounts {
    pub identify: u64,
    pub explore: u64,
    pub exploit: u64,
}

impl PhaseCounts {
    pub fn total(&self) -> u64 {
        self.identify + self.explore + self.exploit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub kind: AgentKind,
    /// Tournament confidence before the division by `D`.
    pub delta: f64,
    /// `None` when the horizon ran out during identification.
    pub winners: Option<WinnerSet>,
    /// Step at which each user's candidate set became a singleton.
    pub resolved_at: Vec<Option<u64>>,
    /// Per-pair exploration length (explore-then-commit only).
    pub exploration_length: Option<u64>,
    /// Committed policy, or the last one played.
    pub final_policy: Option<Policy>,
    pub estimates: Option<EstimatedScores>,
    /// Steps completed before each solver call.
    pub solve_steps: Vec<u64>,
    pub phases: PhaseCounts,
    /// The horizon ended before the agent reached its final phase.
    pub truncated: bool,
}

/// Step counter shared by all phases; refuses to go past the horizon.
struct Clock<'a, S: ?Sized, L: ?Sized> {
    sampler: &'a mut S,
    log: &'a mut L,
    horizon: u64,
    phases: PhaseCounts,
    feedback: FeedbackVector,
}

impl<S: DuelSampler + ?Sized, L: StepLog + ?Sized> Clock<'_, S, L> {
    fn now(&self) -> u64 {
        self.phases.total()
    }

    fn remaining(&self) -> u64 {
        self.horizon - self.now()
    }

    fn tick(&mut self, phase: Phase) {
        match phase {
            Phase::Identify => self.phases.identify += 1,
            Phase::Explore => self.phases.explore += 1,
            Phase::Exploit => self.phases.exploit += 1,
        }
    }

    fn duel(&mut self, phase: Phase, i: usize, j: usize, play: Play<'_>) -> Result<&FeedbackVector> {
        debug_assert!(self.remaining() > 0);
        self.sampler.duel(i, j, &mut self.feedback)?;
        self.log.record(phase, i, j, play);
        self.tick(phase);
        Ok(&self.feedback)
    }

    /// A step whose feedback the agent will not use.
    fn play_blind(&mut self, i: usize, j: usize, policy: &Policy, version: u64) {
        self.log.record(Phase::Exploit, i, j, Play::Sampled { policy, version });
        self.tick(Phase::Exploit);
    }
}

/// Exposes the clock to the tournament, logging every duel as identification.
struct Identify<'c, 'a, S: ?Sized, L: ?Sized>(&'c mut Clock<'a, S, L>);

impl<S: DuelSampler + ?Sized, L: StepLog + ?Sized> DuelSampler for Identify<'_, '_, S, L> {
    fn users(&self) -> usize {
        self.0.sampler.users()
    }
    fn arms(&self) -> usize {
        self.0.sampler.arms()
    }
    fn duel(&mut self, i: usize, j: usize, out: &mut FeedbackVector) -> Result<()> {
        let fb = self.0.duel(Phase::Identify, i, j, Play::Fixed)?;
        out.clone_from(fb);
        Ok(())
    }
}

struct Identified {
    winners: Option<WinnerSet>,
    resolved_at: Vec<Option<u64>>,
}

fn identify<S, L>(clock: &mut Clock<'_, S, L>, config: &AgentConfig, delta: f64) -> Result<Identified>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    let (users, arms) = (clock.sampler.users(), clock.sampler.arms());
    let cap = config.step_budget.unwrap_or(UNKNOWN_GAP_BUDGET);
    let budget = cap.min(clock.remaining());
    let mut state = TournamentState::new(users, arms, budget);
    let result = run_tournament(&mut state, &mut Identify(clock), delta / users as f64);
    let resolved_at = (0..users).map(|d| state.resolved_at(d)).collect();
    match result {
        Ok(()) => Ok(Identified {
            winners: state.winners(),
            resolved_at,
        }),
        Err(Error::BudgetExhausted { .. }) if clock.remaining() == 0 => {
            debug!("horizon reached during identification");
            Ok(Identified {
                winners: None,
                resolved_at,
            })
        }
        Err(e) => Err(e),
    }
}

fn solve(objective: Objective, scores: &ScoreMatrix, config: &AgentConfig, winners: &WinnerSet) -> Policy {
    match objective {
        Objective::Nash => maximize_nsw(scores, &config.solver).policy,
        Objective::Utilitarian => maximize_utilitarian(scores).policy,
        Objective::UserShare => user_share_policy(winners, scores.arms()),
    }
}

/// `pi(w) = #{d : winner_d = w} / D`.
pub fn user_share_policy(winners: &WinnerSet, arms: usize) -> Policy {
    let mut w = vec![0.0; arms];
    let share = 1.0 / winners.users() as f64;
    for &a in winners.winners() {
        w[a] += share;
    }
    // counts over D sum to one up to rounding; renormalise exactly
    let total: f64 = w.iter().sum();
    Policy::new(w.iter().map(|x| x / total).collect()).expect("shares form a distribution")
}

fn start<'a, S, L>(sampler: &'a mut S, log: &'a mut L, config: &AgentConfig) -> Result<Clock<'a, S, L>>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    config.validate()?;
    if sampler.users() == 0 || sampler.arms() == 0 {
        return Err(Error::InvalidConfig("environment has no users or arms".into()));
    }
    let users = sampler.users();
    Ok(Clock {
        sampler,
        log,
        horizon: config.horizon,
        phases: PhaseCounts::default(),
        feedback: FeedbackVector::zeros(users),
    })
}

fn outcome(config: &AgentConfig, delta: f64, id: Identified, phases: PhaseCounts) -> AgentOutcome {
    AgentOutcome {
        kind: config.kind,
        delta,
        truncated: id.winners.is_none(),
        winners: id.winners,
        resolved_at: id.resolved_at,
        exploration_length: None,
        final_policy: None,
        estimates: None,
        solve_steps: Vec::new(),
        phases,
    }
}

/// Dispatches on `config.kind`.
pub fn run_agent<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    match config.kind {
        AgentKind::FairEtc | AgentKind::UtilEtc => explore_then_commit(sampler, config, log),
        AgentKind::FairEps | AgentKind::UtilEps => epsilon_greedy(sampler, config, log),
        AgentKind::UniformUsers => uniform_users(sampler, config, log),
    }
}

fn expect_kind(config: &AgentConfig, allowed: &[AgentKind]) -> Result<()> {
    if allowed.contains(&config.kind) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "agent kind {} not accepted here",
            config.kind
        )))
    }
}

pub fn run_fair_etc<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    expect_kind(config, &[AgentKind::FairEtc])?;
    explore_then_commit(sampler, config, log)
}

pub fn run_fair_eps<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    expect_kind(config, &[AgentKind::FairEps])?;
    epsilon_greedy(sampler, config, log)
}

pub fn run_utilitarian_variant<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    expect_kind(config, &[AgentKind::UtilEtc, AgentKind::UtilEps])?;
    run_agent(sampler, config, log)
}

pub fn run_uniform_users<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    expect_kind(config, &[AgentKind::UniformUsers])?;
    uniform_users(sampler, config, log)
}

fn explore_then_commit<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    let mut rng: ChaCha8Rng = config.seed.rng();
    let mut clock = start(sampler, log, config)?;
    let (users, arms) = (clock.sampler.users(), clock.sampler.arms());
    let delta = compute_delta(arms, config.horizon, config.delta_hat);
    let id = identify(&mut clock, config, delta)?;
    let Some(winners) = id.winners.clone() else {
        return Ok(outcome(config, delta, id, clock.phases));
    };

    let distinct = winners.distinct().to_vec();
    let l = compute_l(arms, users, distinct.len(), config.horizon, config.etc_scale);
    let mut est = EstimatedScores::new(winners.clone(), arms);
    let mut result = outcome(config, delta, id, clock.phases);
    result.exploration_length = Some(l);

    for &w in &distinct {
        for a in 0..arms {
            for _ in 0..l {
                if clock.remaining() == 0 {
                    result.truncated = true;
                    result.phases = clock.phases;
                    result.estimates = Some(est);
                    return Ok(result);
                }
                let fb = clock.duel(Phase::Explore, a, w, Play::Fixed)?;
                est.record(a, w, fb);
            }
        }
    }

    result.solve_steps.push(clock.now());
    let policy = solve(config.kind.objective(), &est.scores(), config, &winners);
    while clock.remaining() > 0 {
        let i = policy.sample(&mut rng);
        let j = policy.sample(&mut rng);
        clock.play_blind(i, j, &policy, 0);
    }
    result.phases = clock.phases;
    result.final_policy = Some(policy);
    result.estimates = Some(est);
    Ok(result)
}

fn epsilon_greedy<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    let mut rng: ChaCha8Rng = config.seed.rng();
    let mut clock = start(sampler, log, config)?;
    let (users, arms) = (clock.sampler.users(), clock.sampler.arms());
    let delta = compute_delta(arms, config.horizon, config.delta_hat);
    let id = identify(&mut clock, config, delta)?;
    let Some(winners) = id.winners.clone() else {
        return Ok(outcome(config, delta, id, clock.phases));
    };

    let distinct = winners.distinct().to_vec();
    let schedule: Vec<(usize, usize)> = distinct
        .iter()
        .flat_map(|&w| (0..arms).filter(move |&a| a != w).map(move |a| (a, w)))
        .collect();
    let t0 = clock.now();
    let objective = config.kind.objective();
    let mut est = EstimatedScores::new(winners.clone(), arms);
    let mut result = outcome(config, delta, id, clock.phases);

    let mut cursor = 0usize;
    let mut policy: Option<Policy> = None;
    let mut version = 0u64;
    let mut stale = true;
    let mut since_solve = 0usize;

    while clock.remaining() > 0 {
        let t = clock.now() + 1;
        let eps = config
            .constant_eps
            .unwrap_or_else(|| compute_eps_t(users, arms, distinct.len(), t, t0, config.eps_scale));
        let u: f64 = rng.random();
        if u <= eps && !schedule.is_empty() {
            let (a, w) = schedule[cursor % schedule.len()];
            cursor += 1;
            let fb = clock.duel(Phase::Explore, a, w, Play::Fixed)?;
            stale |= est.record(a, w, fb);
            continue;
        }
        let due = policy.is_none() || (stale && since_solve >= config.recompute_every);
        if due {
            result.solve_steps.push(clock.now());
            policy = Some(solve(objective, &est.scores(), config, &winners));
            version += 1;
            stale = false;
            since_solve = 0;
        }
        let pi = policy.as_ref().expect("solved above");
        let i = pi.sample(&mut rng);
        let j = pi.sample(&mut rng);
        since_solve += 1;
        let fb = clock.duel(Phase::Exploit, i, j, Play::Sampled { policy: pi, version })?;
        stale |= est.record(i, j, fb);
    }
    result.phases = clock.phases;
    result.final_policy = policy;
    result.estimates = Some(est);
    Ok(result)
}

fn uniform_users<S, L>(sampler: &mut S, config: &AgentConfig, log: &mut L) -> Result<AgentOutcome>
where
    S: DuelSampler + ?Sized,
    L: StepLog + ?Sized,
{
    let mut rng: ChaCha8Rng = config.seed.rng();
    let mut clock = start(sampler, log, config)?;
    let arms = clock.sampler.arms();
    let delta = compute_delta(arms, config.horizon, config.delta_hat);
    let id = identify(&mut clock, config, delta)?;
    let Some(winners) = id.winners.clone() else {
        return Ok(outcome(config, delta, id, clock.phases));
    };
    let policy = user_share_policy(&winners, arms);
    let mut result = outcome(config, delta, id, clock.phases);
    while clock.remaining() > 0 {
        let i = policy.sample(&mut rng);
        let j = policy.sample(&mut rng);
        clock.play_blind(i, j, &policy, 0);
    }
    result.phases = clock.phases;
    result.final_policy = Some(policy);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PreferenceTensor;
    use crate::envgen::{generate, InstanceSpec, TensorSampler};
    use crate::rng::RngSeed;

    /// Deterministic preferences: 0 > 1 > 2 > 3 for user 0, 3 > 2 > 1 > 0
    /// for user 1.
    fn opposed() -> PreferenceTensor {
        let mut t = PreferenceTensor::indifferent(2, 4).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                t.set_pair(0, i, j, 1.0);
                t.set_pair(1, i, j, 0.0);
            }
        }
        t
    }

    fn config(kind: AgentKind, horizon: u64) -> AgentConfig {
        AgentConfig::new(kind, horizon).with_seed(RngSeed::from_master(11))
    }

    #[test]
    fn time_is_conserved() {
        let t = opposed();
        for kind in AgentKind::ALL {
            for horizon in [1, 500, 5_000, 40_000] {
                let mut s = TensorSampler::new(&t, RngSeed::from_master(1));
                let mut log = Vec::new();
                let out = run_agent(&mut s, &config(kind, horizon), &mut log).unwrap();
                assert_eq!(log.len() as u64, horizon, "{kind}");
                assert_eq!(out.phases.total(), horizon);
                let idents = log.iter().filter(|s| s.0 == Phase::Identify).count() as u64;
                assert_eq!(idents, out.phases.identify);
            }
        }
    }

    #[test]
    fn short_horizon_truncates_identification() {
        let t = opposed();
        let mut s = TensorSampler::new(&t, RngSeed::default());
        let out = run_agent(&mut s, &config(AgentKind::FairEtc, 100), &mut ()).unwrap();
        assert!(out.truncated);
        assert!(out.winners.is_none());
        assert_eq!(out.phases.identify, 100);
    }

    #[test]
    fn etc_exploration_counts() {
        let t = opposed();
        let mut s = TensorSampler::new(&t, RngSeed::default());
        let out = run_agent(&mut s, &config(AgentKind::FairEtc, 200_000), &mut ()).unwrap();
        assert!(!out.truncated);
        let winners = out.winners.unwrap();
        assert_eq!(winners.winners(), &[0, 3]);
        let l = out.exploration_length.unwrap();
        assert_eq!(out.phases.explore, 2 * 4 * l);
        let est = out.estimates.unwrap();
        for d in 0..2 {
            for a in 0..4 {
                let w = winners.winner(d);
                let mult = if a == w {
                    0
                } else if winners.distinct().contains(&a) {
                    2
                } else {
                    1
                };
                assert_eq!(est.count(d, a), mult * l, "user {d} arm {a}");
                if a != w {
                    // deterministic feedback: every non-winner loses
                    assert_eq!(est.p_hat(d, a), Some(0.0));
                }
            }
        }
        assert_eq!(out.solve_steps, vec![out.phases.identify + out.phases.explore]);
    }

    #[test]
    fn single_user_commits_to_point_mass() {
        let spec = InstanceSpec::random(1, 4, 0.1, RngSeed::from_master(2));
        let inst = generate(&spec).unwrap();
        let mut s = TensorSampler::new(&inst.tensor, RngSeed::from_master(3));
        let out = run_agent(&mut s, &config(AgentKind::FairEtc, 20_000), &mut ()).unwrap();
        assert_eq!(out.final_policy.unwrap().as_point_mass(), Some(inst.winners.winner(0)));
    }

    #[test]
    fn single_arm_has_no_identification() {
        let t = PreferenceTensor::indifferent(3, 1).unwrap();
        let mut s = TensorSampler::new(&t, RngSeed::default());
        let out = run_agent(&mut s, &config(AgentKind::FairEtc, 50), &mut ()).unwrap();
        assert_eq!(out.phases.identify, 0);
        assert_eq!(out.final_policy.unwrap(), Policy::point_mass(1, 0));
    }

    #[test]
    fn forced_exploration_cycles_evenly() {
        let t = opposed();
        let mut c = config(AgentKind::FairEps, 60_000);
        c.constant_eps = Some(1.0);
        let mut s = TensorSampler::new(&t, RngSeed::default());
        let mut log = Vec::new();
        let out = run_agent(&mut s, &c, &mut log).unwrap();
        assert_eq!(out.phases.exploit, 0);
        assert!(out.solve_steps.is_empty());
        let mut counts = std::collections::BTreeMap::new();
        for &(phase, i, j) in &log {
            if phase == Phase::Explore {
                *counts.entry((i, j)).or_insert(0u64) += 1;
            }
        }
        assert_eq!(counts.len(), 6);
        let (lo, hi) = (counts.values().min().unwrap(), counts.values().max().unwrap());
        assert!(hi - lo <= 1);
        // the cycle puts the winner second
        assert!(counts.keys().all(|&(a, w)| a != w && (w == 0 || w == 3)));
    }

    #[test]
    fn no_exploration_keeps_policy_fixed() {
        let t = opposed();
        let mut c = config(AgentKind::FairEps, 60_000);
        c.constant_eps = Some(0.0);
        let mut s = TensorSampler::new(&t, RngSeed::default());
        let out = run_agent(&mut s, &c, &mut ()).unwrap();
        assert_eq!(out.phases.explore, 0);
        // exploitation duels keep feeding estimates, so the solver reruns,
        // but with deterministic feedback the estimates never change value
        let p = out.final_policy.unwrap();
        assert!(!out.solve_steps.is_empty());
        let first = maximize_nsw(&EstimatedScores::new(out.winners.unwrap(), 4).scores(), &c.solver);
        assert_eq!(p, first.policy);
    }

    #[test]
    fn solver_runs_only_when_exploiting() {
        let spec = InstanceSpec::random(3, 4, 0.1, RngSeed::from_master(8));
        let inst = generate(&spec).unwrap();
        let mut s = TensorSampler::new(&inst.tensor, RngSeed::from_master(9));
        let mut c = config(AgentKind::FairEps, 30_000);
        c.recompute_every = 5;
        let mut log = Vec::new();
        let out = run_agent(&mut s, &c, &mut log).unwrap();
        for &step in &out.solve_steps {
            assert_eq!(log[step as usize].0, Phase::Exploit);
        }
        for w in out.solve_steps.windows(2) {
            let between = log[w[0] as usize..w[1] as usize]
                .iter()
                .filter(|s| s.0 == Phase::Exploit)
                .count();
            assert!(between >= 5);
        }
    }

    #[test]
    fn user_share_example() {
        let p = user_share_policy(&WinnerSet::new(vec![0, 0, 1, 2]), 4);
        assert_eq!(p.weights(), &[0.5, 0.25, 0.25, 0.0]);
        let single = user_share_policy(&WinnerSet::new(vec![2, 2, 2]), 3);
        assert_eq!(single.as_point_mass(), Some(2));
    }

    #[test]
    fn uniform_users_plays_share_policy() {
        let t = opposed();
        let mut s = TensorSampler::new(&t, RngSeed::default());
        let out = run_agent(&mut s, &config(AgentKind::UniformUsers, 30_000), &mut ()).unwrap();
        assert_eq!(out.final_policy.unwrap().weights(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn utilitarian_commit_is_point_mass() {
        let spec = InstanceSpec::random(4, 4, 0.1, RngSeed::from_master(21));
        let inst = generate(&spec).unwrap();
        let mut s = TensorSampler::new(&inst.tensor, RngSeed::from_master(22));
        let out = run_agent(&mut s, &config(AgentKind::UtilEtc, 40_000), &mut ()).unwrap();
        assert!(out.final_policy.unwrap().as_point_mass().is_some());
    }

    #[test]
    fn single_user_twins_match() {
        let spec = InstanceSpec::random(1, 5, 0.1, RngSeed::from_master(31));
        let random = generate(&spec).unwrap().tensor;
        // the greedy agents re-solve on sparse estimates, where tied maxima
        // leave the Nash optimum non-unique; deterministic feedback avoids ties
        let mut ordered = opposed();
        ordered = PreferenceTensor::from_nested(&ordered.to_nested()[..1]).unwrap();
        for (tensor, fair, util) in [
            (&random, AgentKind::FairEtc, AgentKind::UtilEtc),
            (&ordered, AgentKind::FairEps, AgentKind::UtilEps),
        ] {
            let run = |kind| {
                let mut s = TensorSampler::new(tensor, RngSeed::from_master(32));
                let mut log = Vec::new();
                run_agent(&mut s, &config(kind, 20_000), &mut log).unwrap();
                log
            };
            assert_eq!(run(fair), run(util), "{fair}");
        }
    }

    #[test]
    fn same_seed_same_run() {
        let spec = InstanceSpec::random(3, 4, 0.1, RngSeed::from_master(5));
        let inst = generate(&spec).unwrap();
        for kind in AgentKind::ALL {
            let run = || {
                let mut s = TensorSampler::new(&inst.tensor, RngSeed::from_master(6));
                let mut log = Vec::new();
                let out = run_agent(&mut s, &config(kind, 10_000), &mut log).unwrap();
                (log, out)
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn kind_specific_entry_points_check_kind() {
        let t = opposed();
        let mut s = TensorSampler::new(&t, RngSeed::default());
        assert!(run_fair_etc(&mut s, &config(AgentKind::FairEps, 10), &mut ()).is_err());
        assert!(run_utilitarian_variant(&mut s, &config(AgentKind::FairEps, 10), &mut ()).is_err());
        assert!(run_uniform_users(&mut s, &config(AgentKind::UniformUsers, 10), &mut ()).is_ok());
    }
}
