use crate::domain::{FeedbackVector, ScoreMatrix, WinnerSet};

/// Empirical win rates of every arm against each user's estimated winner.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedScores {
    winners: WinnerSet,
    arms: usize,
    wins: Vec<u64>,
    counts: Vec<u64>,
}

impl EstimatedScores {
    pub fn new(winners: WinnerSet, arms: usize) -> Self {
        let n = winners.users() * arms;
        Self {
            winners,
            arms,
            wins: vec![0; n],
            counts: vec![0; n],
        }
    }

    pub fn users(&self) -> usize {
        self.winners.users()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn winners(&self) -> &WinnerSet {
        &self.winners
    }

    /// Folds in a duel `(i, j)` for every user whose estimated winner is one
    /// of the two arms. Returns whether any estimate moved.
    pub fn record(&mut self, i: usize, j: usize, feedback: &FeedbackVector) -> bool {
        if i == j {
            return false;
        }
        let mut changed = false;
        for (d, &w) in self.winners.winners().iter().enumerate() {
            let (arm, arm_won) = if j == w {
                (i, feedback.won(d))
            } else if i == w {
                (j, !feedback.won(d))
            } else {
                continue;
            };
            let idx = d * self.arms + arm;
            self.wins[idx] += u64::from(arm_won);
            self.counts[idx] += 1;
            changed = true;
        }
        changed
    }

    /// Samples of `arm` against user `d`'s winner.
    pub fn count(&self, d: usize, arm: usize) -> u64 {
        self.counts[d * self.arms + arm]
    }

    /// Empirical probability that `arm` beats user `d`'s winner.
    pub fn p_hat(&self, d: usize, arm: usize) -> Option<f64> {
        let idx = d * self.arms + arm;
        (self.counts[idx] > 0).then(|| self.wins[idx] as f64 / self.counts[idx] as f64)
    }

    /// `clamp(2 p_hat, 0, 1)`, zero for unsampled arms and one at the winner.
    pub fn scores(&self) -> ScoreMatrix {
        let mut s = Vec::with_capacity(self.wins.len());
        for (d, &w) in self.winners.winners().iter().enumerate() {
            for a in 0..self.arms {
                s.push(if a == w {
                    1.0
                } else {
                    self.p_hat(d, a).map_or(0.0, |p| (2.0 * p).clamp(0.0, 1.0))
                });
            }
        }
        ScoreMatrix::new(self.users(), self.arms, s).expect("entries are clamped")
    }
}
