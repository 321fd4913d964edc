//! Multi-user Condorcet winner identification by a DKW elimination
//! tournament.
//!
//! Every duel is observed by all users at once, so one batch of duels on a
//! pair `(i, j)` can settle the comparison for every user still holding both
//! arms as candidates.

use std::f64::consts::PI;

use log::debug;

use crate::domain::{FeedbackVector, WinnerSet};
use crate::envgen::DuelSampler;
use crate::error::{Error, Result};

/// Budget used when no preference gap is known.
pub const UNKNOWN_GAP_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundParams {
    /// Confidence width `2^-(r+1)`.
    pub width: f64,
    /// Per-round failure probability.
    pub delta: f64,
    /// Duels played in this round.
    pub duels: u64,
}

/// Width, confidence and length of round `r >= 1` of a comparison run at
/// confidence `delta_prime`.
pub fn round_params(r: u32, delta_prime: f64) -> RoundParams {
    assert!(r >= 1, "rounds are numbered from 1");
    let width = 0.5f64.powi(r as i32 + 1);
    let rf = f64::from(r);
    let delta = 6.0 * delta_prime / (PI * PI * rf * rf);
    let duels = (8.0 * (4.0 / delta).ln() / (width * width)).ceil() as u64;
    RoundParams { width, delta, duels }
}

/// `50 K^2 D / gap^2` when the gap is known, otherwise a flat 10^8.
pub fn default_step_budget(arms: usize, users: usize, gap: Option<f64>) -> u64 {
    match gap {
        Some(g) if g > 0.0 => {
            let b = 50.0 * (arms * arms * users) as f64 / (g * g);
            if b >= u64::MAX as f64 {
                u64::MAX
            } else {
                b.ceil() as u64
            }
        }
        _ => UNKNOWN_GAP_BUDGET,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentState {
    users: usize,
    arms: usize,
    /// Sorted candidate sets `S_d`.
    candidates: Vec<Vec<usize>>,
    /// Round counter per unordered pair, indexed `lo * K + hi`.
    rounds: Vec<u32>,
    /// Wins of the lower-indexed arm per `(d, pair)`.
    wins: Vec<u64>,
    /// Duels per pair; shared by every user since all observe each duel.
    totals: Vec<u64>,
    steps_used: u64,
    resolved_at: Vec<Option<u64>>,
    budget: u64,
}

impl TournamentState {
    pub fn new(users: usize, arms: usize, budget: u64) -> Self {
        let candidates = vec![(0..arms).collect::<Vec<_>>(); users];
        let resolved_at = candidates.iter().map(|s| (s.len() <= 1).then_some(0)).collect();
        Self {
            users,
            arms,
            candidates,
            rounds: vec![1; arms * arms],
            wins: vec![0; users * arms * arms],
            totals: vec![0; arms * arms],
            steps_used: 0,
            resolved_at,
            budget,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn candidates(&self, d: usize) -> &[usize] {
        &self.candidates[d]
    }

    pub fn round(&self, i: usize, j: usize) -> u32 {
        self.rounds[self.pair(i, j)]
    }

    /// `(wins of i over j, total duels)` seen by user `d`.
    pub fn pair_count(&self, d: usize, i: usize, j: usize) -> (u64, u64) {
        let p = self.pair(i, j);
        let total = self.totals[p];
        let lo_wins = self.wins[d * self.arms * self.arms + p];
        if i <= j {
            (lo_wins, total)
        } else {
            (total - lo_wins, total)
        }
    }

    pub fn steps_used(&self) -> u64 {
        self.steps_used
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Step count at which `S_d` became a singleton.
    pub fn resolved_at(&self, d: usize) -> Option<u64> {
        self.resolved_at[d]
    }

    pub fn is_resolved(&self) -> bool {
        self.candidates.iter().all(|s| s.len() == 1)
    }

    pub fn unresolved_users(&self) -> Vec<usize> {
        (0..self.users).filter(|&d| self.candidates[d].len() > 1).collect()
    }

    /// The surviving candidate of every user, once all are singletons.
    pub fn winners(&self) -> Option<WinnerSet> {
        self.is_resolved()
            .then(|| WinnerSet::new(self.candidates.iter().map(|s| s[0]).collect()))
    }

    fn pair(&self, i: usize, j: usize) -> usize {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        lo * self.arms + hi
    }

    fn holds(&self, d: usize, i: usize, j: usize) -> bool {
        let s = &self.candidates[d];
        s.binary_search(&i).is_ok() && s.binary_search(&j).is_ok()
    }

    fn eliminate(&mut self, d: usize, arm: usize) {
        let s = &mut self.candidates[d];
        if let Ok(pos) = s.binary_search(&arm) {
            s.remove(pos);
        }
        if s.len() == 1 && self.resolved_at[d].is_none() {
            self.resolved_at[d] = Some(self.steps_used);
        }
    }
}

/// Runs rounds on `(i, j)` until user `d` no longer holds both arms.
pub fn dkw_compare<S: DuelSampler + ?Sized>(
    i: usize,
    j: usize,
    d: usize,
    delta_prime: f64,
    state: &mut TournamentState,
    sampler: &mut S,
) -> Result<()> {
    if i == j || !state.holds(d, i, j) {
        return Err(Error::InvalidConfig(format!(
            "user {d} does not hold the distinct pair ({i}, {j})"
        )));
    }
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let pair = state.pair(lo, hi);
    let stride = state.arms * state.arms;
    let mut feedback = FeedbackVector::zeros(state.users);

    while state.holds(d, lo, hi) {
        let r = state.rounds[pair];
        let params = round_params(r, delta_prime);
        for _ in 0..params.duels {
            if state.steps_used >= state.budget {
                return Err(Error::BudgetExhausted {
                    budget: state.budget,
                    unresolved: state.unresolved_users(),
                });
            }
            sampler.duel(lo, hi, &mut feedback)?;
            for u in 0..state.users {
                state.wins[u * stride + pair] += u64::from(feedback.won(u));
            }
            state.totals[pair] += 1;
            state.steps_used += 1;
        }
        let total = state.totals[pair] as f64;
        for u in 0..state.users {
            if !state.holds(u, lo, hi) {
                continue;
            }
            let p_hat = state.wins[u * stride + pair] as f64 / total;
            if (p_hat - 0.5).abs() > 0.5 * params.width {
                let loser = if p_hat > 0.5 { hi } else { lo };
                state.eliminate(u, loser);
            }
        }
        state.rounds[pair] = r + 1;
        debug!(
            "pair ({lo}, {hi}) round {r}: {} duels, {} steps so far",
            params.duels, state.steps_used
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentOutcome {
    pub winners: WinnerSet,
    pub steps_used: u64,
    /// Step at which each user's candidate set became a singleton.
    pub resolved_at: Vec<u64>,
}

/// Tournament over all users at overall confidence `delta`. Each comparison
/// runs at `delta / K`.
pub fn dkwt<S: DuelSampler + ?Sized>(sampler: &mut S, delta: f64, budget: u64) -> Result<TournamentOutcome> {
    let mut state = TournamentState::new(sampler.users(), sampler.arms(), budget);
    run_tournament(&mut state, sampler, delta)?;
    let winners = state.winners().expect("tournament ends with singletons");
    let resolved_at = (0..state.users).map(|d| state.resolved_at(d).unwrap_or(0)).collect();
    Ok(TournamentOutcome {
        winners,
        steps_used: state.steps_used,
        resolved_at,
    })
}

/// Drives an existing state to completion; on error the state shows how
/// far the tournament got.
pub fn run_tournament<S: DuelSampler + ?Sized>(state: &mut TournamentState, sampler: &mut S, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "tournament confidence must lie in (0, 1], got {delta}"
        )));
    }
    let delta_prime = delta / state.arms.max(1) as f64;
    while let Some(d) = (0..state.users).find(|&d| state.candidates[d].len() > 1) {
        let (i, j) = (state.candidates[d][0], state.candidates[d][1]);
        dkw_compare(i, j, d, delta_prime, state, sampler)?;
    }
    Ok(())
}
