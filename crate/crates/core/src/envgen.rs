//! Problem instances (random, clustered, hard) and duel feedback.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    condorcet_winner, derive_scores, ensure_valid, find_true_winners, preference_gap, FeedbackVector, InstanceDocument,
    PreferenceTensor, ScoreMatrix, WinnerSet,
};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Resampling attempts per user before giving up on a random row.
pub const MAX_USER_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Random,
    Clustered,
    Hard,
}

impl InstanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InstanceKind::Random => "random",
            InstanceKind::Clustered => "clustered",
            InstanceKind::Hard => "hard",
        }
    }
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "clustered" => Ok(Self::Clustered),
            "hard" => Ok(Self::Hard),
            other => Err(Error::InvalidSpec(format!("unknown instance kind {other:?}"))),
        }
    }
}

fn default_gap() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub users: usize,
    pub arms: usize,
    /// Minimum preference gap for random and clustered rows.
    #[serde(default = "default_gap")]
    pub gap: f64,
    /// Fraction of users in the majority cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Perturbation separating the distinguished good winner (hard only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Margin keeping every winner strictly ahead (hard only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_prime: Option<f64>,
    /// 0-based index into the good winners of the distinguished arm (hard only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_m: Option<usize>,
    #[serde(default)]
    pub seed: RngSeed,
}

impl InstanceSpec {
    pub fn random(users: usize, arms: usize, gap: f64, seed: RngSeed) -> Self {
        Self {
            kind: InstanceKind::Random,
            users,
            arms,
            gap,
            rho: None,
            eps: None,
            eps_prime: None,
            target_m: None,
            seed,
        }
    }

    pub fn clustered(users: usize, arms: usize, gap: f64, rho: f64, seed: RngSeed) -> Self {
        Self {
            kind: InstanceKind::Clustered,
            rho: Some(rho),
            ..Self::random(users, arms, gap, seed)
        }
    }

    pub fn hard(users: usize, arms: usize, eps: f64, eps_prime: f64, target_m: usize) -> Self {
        Self {
            kind: InstanceKind::Hard,
            eps: Some(eps),
            eps_prime: Some(eps_prime),
            target_m: Some(target_m),
            ..Self::random(users, arms, default_gap(), RngSeed::default())
        }
    }

    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.arms == 0 {
            return Err(Error::InvalidSpec("users and arms must be positive".into()));
        }
        match self.kind {
            InstanceKind::Random | InstanceKind::Clustered => {
                if !(self.gap > 0.0 && self.gap < 0.5) {
                    return Err(Error::InvalidSpec(format!(
                        "gap must lie in (0, 0.5), got {}",
                        self.gap
                    )));
                }
                if self.kind == InstanceKind::Clustered {
                    let rho = self
                        .rho
                        .ok_or_else(|| Error::InvalidSpec("clustered instances need rho".into()))?;
                    if !(rho > 0.0 && rho <= 1.0) {
                        return Err(Error::InvalidSpec(format!("rho must lie in (0, 1], got {rho}")));
                    }
                    if rho * (self.users as f64) < 1.0 {
                        return Err(Error::InvalidSpec(format!(
                            "rho * users = {} leaves the majority empty",
                            rho * self.users as f64
                        )));
                    }
                    if self.majority_size() < self.users && self.arms < 2 {
                        return Err(Error::InvalidSpec("a minority needs at least two arms".into()));
                    }
                }
            }
            InstanceKind::Hard => {
                for (name, n) in [("users", self.users), ("arms", self.arms)] {
                    if n < 4 || n % 2 != 0 {
                        return Err(Error::InvalidSpec(format!(
                            "hard instances need even {name} >= 4, got {n}"
                        )));
                    }
                }
                let eps = self
                    .eps
                    .ok_or_else(|| Error::InvalidSpec("hard instances need eps".into()))?;
                let eps_prime = self
                    .eps_prime
                    .ok_or_else(|| Error::InvalidSpec("hard instances need eps_prime".into()))?;
                if !(eps > 0.0 && eps < 0.2) {
                    return Err(Error::InvalidSpec(format!("eps must lie in (0, 0.2), got {eps}")));
                }
                if !(eps_prime > 0.0 && eps_prime < 0.05) {
                    return Err(Error::InvalidSpec(format!(
                        "eps_prime must lie in (0, 0.05), got {eps_prime}"
                    )));
                }
                let m = self
                    .target_m
                    .ok_or_else(|| Error::InvalidSpec("hard instances need target_m".into()))?;
                let good = self.users.min(self.arms) / 2;
                if m >= good {
                    return Err(Error::InvalidSpec(format!(
                        "target_m {m} is not one of the {good} good winners"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `ceil(rho * D)`, the size of the shared-winner cluster.
    pub fn majority_size(&self) -> usize {
        let rho = self.rho.unwrap_or(1.0);
        // guard against 0.7 * 10 landing a hair above 7
        ((rho * self.users as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Ground truth bundle: tensor, its winners and the derived scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub tensor: PreferenceTensor,
    pub winners: WinnerSet,
    pub scores: ScoreMatrix,
    pub spec: Option<InstanceSpec>,
}

impl Instance {
    /// Validates the tensor and derives winners and scores.
    pub fn from_tensor(tensor: PreferenceTensor) -> Result<Self> {
        ensure_valid(&tensor)?;
        let winners = find_true_winners(&tensor)?;
        let scores = derive_scores(&tensor, &winners)?;
        Ok(Self {
            tensor,
            winners,
            scores,
            spec: None,
        })
    }

    pub fn from_document(doc: &InstanceDocument) -> Result<Self> {
        let instance = Self::from_tensor(doc.tensor()?)?;
        if let Some(stated) = &doc.winners {
            if stated.as_slice() != instance.winners.winners() {
                return Err(Error::InvalidSpec(format!(
                    "stated winners {stated:?} disagree with the tensor's {:?}",
                    instance.winners.winners()
                )));
            }
        }
        Ok(instance)
    }

    pub fn document(&self) -> InstanceDocument {
        InstanceDocument::new(&self.tensor, Some(&self.winners))
    }

    pub fn users(&self) -> usize {
        self.tensor.users()
    }

    pub fn arms(&self) -> usize {
        self.tensor.arms()
    }
}

pub fn generate(spec: &InstanceSpec) -> Result<Instance> {
    match spec.kind {
        InstanceKind::Random => gen_random(spec),
        InstanceKind::Clustered => gen_clustered(spec),
        InstanceKind::Hard => gen_hard(spec),
    }
}

/// An entry in `[0.5 + gap, 1]`, nudged up so that both it and its mirror
/// clear the gap in floating point.
fn favoured_probability<R: Rng + ?Sized>(gap: f64, rng: &mut R) -> f64 {
    let margin = gap + rng.random::<f64>() * (0.5 - gap);
    let mut p = (0.5 + margin).min(1.0);
    while p < 1.0 && (preference_gap(p) < gap || preference_gap(1.0 - p) < gap) {
        p = p.next_up();
    }
    p
}

/// Fills user `d`'s matrix around winner `w`. Winner-row entries come from
/// `[0.5 + gap, 1]`; every other pair is oriented by a fair coin and drawn
/// from the same interval, i.e. from `[0, 0.5 - gap] U [0.5 + gap, 1]`.
fn fill_user_row<R: Rng + ?Sized>(
    tensor: &mut PreferenceTensor,
    d: usize,
    w: usize,
    gap: f64,
    rng: &mut R,
) -> Result<()> {
    let k = tensor.arms();
    for _ in 0..MAX_USER_RETRIES {
        for j in 0..k {
            if j != w {
                let p = favoured_probability(gap, rng);
                tensor.set_pair(d, w, j, p);
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                if i == w || j == w {
                    continue;
                }
                let p = favoured_probability(gap, rng);
                if rng.random::<bool>() {
                    tensor.set_pair(d, i, j, p);
                } else {
                    tensor.set_pair(d, j, i, p);
                }
            }
        }
        if condorcet_winner(tensor, d) == Some(w) {
            return Ok(());
        }
    }
    Err(Error::GenerationFailed {
        user: d,
        attempts: MAX_USER_RETRIES,
    })
}

fn finish(tensor: PreferenceTensor, intended: Vec<usize>, spec: &InstanceSpec) -> Result<Instance> {
    let mut instance = Instance::from_tensor(tensor)?;
    if instance.winners.winners() != intended.as_slice() {
        return Err(Error::InvalidSpec(format!(
            "generated winners {:?} differ from intended {intended:?}",
            instance.winners.winners()
        )));
    }
    instance.spec = Some(spec.clone());
    Ok(instance)
}

pub fn gen_random(spec: &InstanceSpec) -> Result<Instance> {
    if spec.kind != InstanceKind::Random {
        return Err(Error::InvalidSpec("gen_random needs kind = random".into()));
    }
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let mut tensor = PreferenceTensor::indifferent(spec.users, spec.arms)?;
    let mut winners = Vec::with_capacity(spec.users);
    for d in 0..spec.users {
        let w = rng.random_range(0..spec.arms);
        fill_user_row(&mut tensor, d, w, spec.gap, &mut rng)?;
        winners.push(w);
    }
    finish(tensor, winners, spec)
}

pub fn gen_clustered(spec: &InstanceSpec) -> Result<Instance> {
    if spec.kind != InstanceKind::Clustered {
        return Err(Error::InvalidSpec("gen_clustered needs kind = clustered".into()));
    }
    spec.validate()?;
    let mut rng = spec.seed.rng();
    let mut tensor = PreferenceTensor::indifferent(spec.users, spec.arms)?;
    let shared = rng.random_range(0..spec.arms);
    let others: Vec<usize> = (0..spec.arms).filter(|&a| a != shared).collect();
    let majority = spec.majority_size();
    let mut winners = Vec::with_capacity(spec.users);
    for d in 0..spec.users {
        let w = if d < majority {
            shared
        } else {
            *others.choose(&mut rng).expect("validated: at least two arms")
        };
        fill_user_row(&mut tensor, d, w, spec.gap, &mut rng)?;
        winners.push(w);
    }
    finish(tensor, winners, spec)
}

/// Layout of the lower-bound construction: winners, the good/bad split and
/// the distinguished arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardLayout {
    /// `a*_d = (d + 1) mod K` for 0-based user `d`.
    pub winners: Vec<usize>,
    /// Winners in order of first appearance over users.
    pub winner_arms: Vec<usize>,
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
    pub distinguished: usize,
}

impl HardLayout {
    pub fn new(users: usize, arms: usize, target_m: usize) -> Self {
        let winners: Vec<usize> = (0..users).map(|d| (d + 1) % arms).collect();
        let mut winner_arms = Vec::new();
        for &w in &winners {
            if !winner_arms.contains(&w) {
                winner_arms.push(w);
            }
        }
        let half = winner_arms.len() / 2;
        let good = winner_arms[..half].to_vec();
        let bad = winner_arms[half..].to_vec();
        let distinguished = good[target_m];
        Self {
            winners,
            winner_arms,
            good,
            bad,
            distinguished,
        }
    }

    pub fn is_good(&self, arm: usize) -> bool {
        self.good.contains(&arm)
    }

    pub fn is_bad(&self, arm: usize) -> bool {
        self.bad.contains(&arm)
    }

    pub fn is_winner(&self, arm: usize) -> bool {
        self.winner_arms.contains(&arm)
    }
}

/// The lower-bound instance. Only the winner's row of each user is pinned
/// by the construction; every other off-diagonal pair is left at 0.5.
pub fn gen_hard(spec: &InstanceSpec) -> Result<Instance> {
    if spec.kind != InstanceKind::Hard {
        return Err(Error::InvalidSpec("gen_hard needs kind = hard".into()));
    }
    spec.validate()?;
    let (eps, eps_prime, m) = (
        spec.eps.unwrap_or_default(),
        spec.eps_prime.unwrap_or_default(),
        spec.target_m.unwrap_or_default(),
    );
    let layout = HardLayout::new(spec.users, spec.arms, m);
    let mut tensor = PreferenceTensor::indifferent(spec.users, spec.arms)?;
    for (d, &w) in layout.winners.iter().enumerate() {
        for a in 0..spec.arms {
            if a == w {
                continue;
            }
            let p = if !layout.is_winner(a) {
                1.0
            } else if layout.is_good(w) {
                if layout.is_bad(a) {
                    1.0
                } else {
                    0.5 + eps_prime
                }
            } else if layout.is_bad(a) {
                1.0
            } else if a == layout.distinguished {
                0.5 + eps_prime
            } else {
                0.5 + eps_prime + eps
            };
            tensor.set_pair(d, w, a, p);
        }
    }
    finish(tensor, layout.winners, spec)
}

/// Source of duel feedback. `duel(i, j, out)` fills `out[d]` with whether
/// user `d` preferred `i` over `j`.
pub trait DuelSampler {
    fn users(&self) -> usize;
    fn arms(&self) -> usize;
    fn duel(&mut self, i: usize, j: usize, out: &mut FeedbackVector) -> Result<()>;
}

impl<S: DuelSampler + ?Sized> DuelSampler for &mut S {
    fn users(&self) -> usize {
        (**self).users()
    }
    fn arms(&self) -> usize {
        (**self).arms()
    }
    fn duel(&mut self, i: usize, j: usize, out: &mut FeedbackVector) -> Result<()> {
        (**self).duel(i, j, out)
    }
}

/// Independent Bernoulli draws per user.
pub fn sample_duel<R: Rng + ?Sized>(
    tensor: &PreferenceTensor,
    i: usize,
    j: usize,
    rng: &mut R,
    out: &mut FeedbackVector,
) {
    for d in 0..tensor.users() {
        let p = tensor.get(d, i, j);
        out.set(d, rng.random::<f64>() < p);
    }
}

/// Duels against a fixed tensor on a private random stream.
#[derive(Debug, Clone)]
pub struct TensorSampler<'a> {
    tensor: &'a PreferenceTensor,
    rng: ChaCha8Rng,
}

impl<'a> TensorSampler<'a> {
    pub fn new(tensor: &'a PreferenceTensor, seed: RngSeed) -> Self {
        Self {
            tensor,
            rng: seed.rng(),
        }
    }

    pub fn sample(&mut self, i: usize, j: usize) -> FeedbackVector {
        let mut out = FeedbackVector::zeros(self.tensor.users());
        sample_duel(self.tensor, i, j, &mut self.rng, &mut out);
        out
    }
}

impl DuelSampler for TensorSampler<'_> {
    fn users(&self) -> usize {
        self.tensor.users()
    }
    fn arms(&self) -> usize {
        self.tensor.arms()
    }
    fn duel(&mut self, i: usize, j: usize, out: &mut FeedbackVector) -> Result<()> {
        sample_duel(self.tensor, i, j, &mut self.rng, out);
        Ok(())
    }
}
