//! Preference tensors, Condorcet winners, scores and policies.
//!
//! Arms and users are 0-based everywhere.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance of a pairwise probability from a coin flip.
#[inline]
pub fn preference_gap(p: f64) -> f64 {
    (0.5 - p).abs()
}

/// `D` stacked `K x K` matrices; entry `(d, i, j)` is the probability that
/// user `d` prefers arm `i` over arm `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTensor {
    users: usize,
    arms: usize,
    probs: Vec<f64>,
}

impl PreferenceTensor {
    /// All entries 0.5.
    pub fn indifferent(users: usize, arms: usize) -> Result<Self> {
        Self::new(users, arms, vec![0.5; users * arms * arms])
    }

    /// Builds a tensor from row-major `d -> i -> j` storage. Only the shape is
    /// checked here; see [`validate_tensor`].
    pub fn new(users: usize, arms: usize, probs: Vec<f64>) -> Result<Self> {
        if users == 0 || arms == 0 {
            return Err(Error::DimensionMismatch(format!(
                "tensor needs at least one user and one arm (got D={users}, K={arms})"
            )));
        }
        if probs.len() != users * arms * arms {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for D={users}, K={arms}, got {}",
                users * arms * arms,
                probs.len()
            )));
        }
        Ok(Self { users, arms, probs })
    }

    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let users = nested.len();
        let arms = nested.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(users * arms * arms);
        for (d, matrix) in nested.iter().enumerate() {
            if matrix.len() != arms {
                return Err(Error::DimensionMismatch(format!(
                    "user {d} has {} rows, expected {arms}",
                    matrix.len()
                )));
            }
            for (i, row) in matrix.iter().enumerate() {
                if row.len() != arms {
                    return Err(Error::DimensionMismatch(format!(
                        "user {d} row {i} has {} entries, expected {arms}",
                        row.len()
                    )));
                }
                probs.extend_from_slice(row);
            }
        }
        Self::new(users, arms, probs)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.users)
            .map(|d| self.user_matrix(d).chunks(self.arms).map(<[f64]>::to_vec).collect())
            .collect()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    #[inline]
    fn index(&self, d: usize, i: usize, j: usize) -> usize {
        (d * self.arms + i) * self.arms + j
    }

    #[inline]
    pub fn get(&self, d: usize, i: usize, j: usize) -> f64 {
        self.probs[self.index(d, i, j)]
    }

    /// Writes a single entry without touching its mirror.
    pub fn set_raw(&mut self, d: usize, i: usize, j: usize, p: f64) {
        let idx = self.index(d, i, j);
        self.probs[idx] = p;
    }

    /// Sets `P(d,i,j) = p` and `P(d,j,i) = 1 - p`.
    pub fn set_pair(&mut self, d: usize, i: usize, j: usize, p: f64) {
        debug_assert_ne!(i, j);
        self.set_raw(d, i, j, p);
        self.set_raw(d, j, i, 1.0 - p);
    }

    pub fn user_matrix(&self, d: usize) -> &[f64] {
        let k2 = self.arms * self.arms;
        &self.probs[d * k2..(d + 1) * k2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// `min_{d, i != j} |0.5 - P(d,i,j)|`, or `None` for a single arm.
    pub fn min_gap(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for d in 0..self.users {
            for i in 0..self.arms {
                for j in 0..self.arms {
                    if i != j {
                        let g = preference_gap(self.get(d, i, j));
                        best = Some(best.map_or(g, |b| b.min(g)));
                    }
                }
            }
        }
        best
    }
}

/// One broken invariant of a [`PreferenceTensor`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `P(d,i,j) + P(d,j,i)` is not 1; reported once with `i < j`.
    Reciprocity {
        user: usize,
        i: usize,
        j: usize,
        sum: f64,
    },
    Diagonal {
        user: usize,
        arm: usize,
        value: f64,
    },
    OutOfRange {
        user: usize,
        i: usize,
        j: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Reciprocity { user, i, j, sum } => {
                write!(f, "P({user},{i},{j}) + P({user},{j},{i}) = {sum}, expected 1")
            }
            Violation::Diagonal { user, arm, value } => {
                write!(f, "P({user},{arm},{arm}) = {value}, expected 0.5")
            }
            Violation::OutOfRange { user, i, j, value } => {
                write!(f, "P({user},{i},{j}) = {value} is outside [0, 1]")
            }
        }
    }
}

/// Reports every violated tensor invariant. Never aborts.
///
/// Reciprocal sums may be off from 1 by at most one unit in the last place.
pub fn validate_tensor(tensor: &PreferenceTensor) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let k = tensor.arms();
    for d in 0..tensor.users() {
        for i in 0..k {
            for j in 0..k {
                let v = tensor.get(d, i, j);
                if !(0.0..=1.0).contains(&v) {
                    violations.push(Violation::OutOfRange {
                        user: d,
                        i,
                        j,
                        value: v,
                    });
                }
            }
            let diag = tensor.get(d, i, i);
            if diag != 0.5 {
                violations.push(Violation::Diagonal {
                    user: d,
                    arm: i,
                    value: diag,
                });
            }
            for j in i + 1..k {
                let sum = tensor.get(d, i, j) + tensor.get(d, j, i);
                if sum.is_nan() || (sum - 1.0).abs() > f64::EPSILON {
                    violations.push(Violation::Reciprocity { user: d, i, j, sum });
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Like [`validate_tensor`] but folds the report into an [`Error`].
pub fn ensure_valid(tensor: &PreferenceTensor) -> Result<()> {
    validate_tensor(tensor).map_err(|v| Error::InvalidTensor {
        count: v.len(),
        first: v[0].to_string(),
    })
}

/// Per-user Condorcet winners `a*_d` and their deduplicated set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinnerSet {
    winners: Vec<usize>,
    distinct: Vec<usize>,
}

impl WinnerSet {
    pub fn new(winners: Vec<usize>) -> Self {
        let mut distinct = winners.clone();
        distinct.sort_unstable();
        distinct.dedup();
        Self { winners, distinct }
    }

    pub fn winners(&self) -> &[usize] {
        &self.winners
    }

    pub fn winner(&self, d: usize) -> usize {
        self.winners[d]
    }

    /// Distinct winners in ascending arm order.
    pub fn distinct(&self) -> &[usize] {
        &self.distinct
    }

    pub fn users(&self) -> usize {
        self.winners.len()
    }
}

/// The arm beating every other arm with probability above one half for
/// user `d`, if any. Brute force over the definition.
pub fn condorcet_winner(tensor: &PreferenceTensor, d: usize) -> Option<usize> {
    let k = tensor.arms();
    (0..k).find(|&a| (0..k).all(|j| j == a || tensor.get(d, a, j) > 0.5))
}

/// Condorcet winners of all users, or the list of users without one.
pub fn find_true_winners(tensor: &PreferenceTensor) -> Result<WinnerSet> {
    let found: Vec<Option<usize>> = (0..tensor.users()).map(|d| condorcet_winner(tensor, d)).collect();
    let missing: Vec<usize> = found
        .iter()
        .enumerate()
        .filter_map(|(d, w)| w.is_none().then_some(d))
        .collect();
    if !missing.is_empty() {
        return Err(Error::NoCondorcetWinner { users: missing });
    }
    Ok(WinnerSet::new(found.into_iter().flatten().collect()))
}

/// `D x K` utilities in `[0, 1]`; row `d` holds `s_d(a)` for every arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    users: usize,
    arms: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(users: usize, arms: usize, scores: Vec<f64>) -> Result<Self> {
        if users == 0 || arms == 0 || scores.len() != users * arms {
            return Err(Error::DimensionMismatch(format!(
                "score matrix D={users}, K={arms} cannot hold {} entries",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::DimensionMismatch(format!("score {bad} is outside [0, 1]")));
        }
        Ok(Self { users, arms, scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let arms = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != arms) {
            return Err(Error::DimensionMismatch("ragged score rows".into()));
        }
        Self::new(rows.len(), arms, rows.concat())
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    #[inline]
    pub fn get(&self, d: usize, a: usize) -> f64 {
        self.scores[d * self.arms + a]
    }

    #[inline]
    pub fn row(&self, d: usize) -> &[f64] {
        &self.scores[d * self.arms..(d + 1) * self.arms]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks(self.arms)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn column_sum(&self, a: usize) -> f64 {
        self.rows().map(|r| r[a]).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// `s_d(i) = clamp(2 P(d, i, a*_d), 0, 1)`, with the winner pinned to 1.
pub fn derive_scores(tensor: &PreferenceTensor, winners: &WinnerSet) -> Result<ScoreMatrix> {
    if winners.users() != tensor.users() {
        return Err(Error::DimensionMismatch(format!(
            "{} winners for {} users",
            winners.users(),
            tensor.users()
        )));
    }
    let k = tensor.arms();
    if let Some(&w) = winners.winners().iter().find(|&&w| w >= k) {
        return Err(Error::DimensionMismatch(format!(
            "winner arm {w} out of range for K={k}"
        )));
    }
    let mut scores = Vec::with_capacity(tensor.users() * k);
    for (d, &w) in winners.winners().iter().enumerate() {
        for i in 0..k {
            let s = if i == w {
                1.0
            } else {
                (2.0 * tensor.get(d, i, w)).clamp(0.0, 1.0)
            };
            scores.push(s);
        }
    }
    ScoreMatrix::new(tensor.users(), k, scores)
}

/// A distribution over arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Policy {
    weights: Vec<f64>,
}

impl Policy {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPolicy("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPolicy(format!("weight {w} is negative or not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidPolicy(format!("weights sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(arms: usize) -> Self {
        Self {
            weights: vec![1.0 / arms as f64; arms],
        }
    }

    pub fn point_mass(arms: usize, arm: usize) -> Self {
        let mut weights = vec![0.0; arms];
        weights[arm] = 1.0;
        Self { weights }
    }

    /// Mixture `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Policy, lambda: f64) -> Self {
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn arms(&self) -> usize {
        self.weights.len()
    }

    /// The single arm carrying all the mass, if any.
    pub fn as_point_mass(&self) -> Option<usize> {
        self.weights.iter().position(|&w| w == 1.0)
    }

    /// Inverse-CDF draw. Always consumes exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (a, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = a;
                if u < acc {
                    return a;
                }
            }
        }
        last_positive
    }
}

impl TryFrom<Vec<f64>> for Policy {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Policy::new(weights)
    }
}

impl From<Policy> for Vec<f64> {
    fn from(p: Policy) -> Self {
        p.weights
    }
}

/// `sum_a pi(a) s(a)`.
pub fn expected_utility(policy: &Policy, user_scores: &[f64]) -> f64 {
    policy.weights.iter().zip(user_scores).map(|(w, s)| w * s).sum()
}

/// One bit per user: did the user prefer the first arm of the duel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackVector {
    outcomes: Vec<bool>,
}

impl FeedbackVector {
    pub fn zeros(users: usize) -> Self {
        Self {
            outcomes: vec![false; users],
        }
    }

    pub fn from_bits(outcomes: Vec<bool>) -> Self {
        Self { outcomes }
    }

    #[inline]
    pub fn get(&self, d: usize) -> u8 {
        u8::from(self.outcomes[d])
    }

    #[inline]
    pub fn won(&self, d: usize) -> bool {
        self.outcomes[d]
    }

    #[inline]
    pub fn set(&mut self, d: usize, first_won: bool) {
        self.outcomes[d] = first_won;
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.outcomes
    }
}

/// On-disk instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub users: usize,
    pub arms: usize,
    pub probs: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winners: Option<Vec<usize>>,
}

impl InstanceDocument {
    pub fn new(tensor: &PreferenceTensor, winners: Option<&WinnerSet>) -> Self {
        Self {
            users: tensor.users(),
            arms: tensor.arms(),
            probs: tensor.to_nested(),
            winners: winners.map(|w| w.winners().to_vec()),
        }
    }

    pub fn tensor(&self) -> Result<PreferenceTensor> {
        let t = PreferenceTensor::from_nested(&self.probs)?;
        if t.users() != self.users || t.arms() != self.arms {
            return Err(Error::DimensionMismatch(format!(
                "header says D={}, K={} but probs are {}x{}x{}",
                self.users,
                self.arms,
                t.users(),
                t.arms(),
                t.arms()
            )));
        }
        Ok(t)
    }
}
