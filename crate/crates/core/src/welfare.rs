//! Welfare objectives and a Frank-Wolfe maximizer for Nash social welfare.

use serde::{Deserialize, Serialize};

use crate::domain::{expected_utility, Policy, ScoreMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Stop once the Frank-Wolfe gap on the log objective drops below this.
    pub gap_tolerance: f64,
    /// Lower bound on utilities inside the log objective and its gradient.
    pub utility_floor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gap_tolerance: 1e-8,
            utility_floor: 1e-12,
        }
    }
}

impl SolverSettings {
    /// Settings for the reference optimum that regret is measured against.
    pub fn reference() -> Self {
        Self {
            max_iterations: 20_000,
            gap_tolerance: 1e-10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.gap_tolerance.is_nan() || self.gap_tolerance < 0.0 {
            return Err(Error::InvalidConfig("gap_tolerance must be nonnegative".into()));
        }
        if self.utility_floor.is_nan() || self.utility_floor <= 0.0 {
            return Err(Error::InvalidConfig("utility_floor must be positive".into()));
        }
        Ok(())
    }
}

pub fn nsw_value(policy: &Policy, scores: &ScoreMatrix) -> f64 {
    scores.rows().map(|row| expected_utility(policy, row)).product()
}

pub fn utilitarian_value(policy: &Policy, scores: &ScoreMatrix) -> f64 {
    scores.rows().map(|row| expected_utility(policy, row)).sum()
}

/// NSW of playing `arm` deterministically.
pub fn point_mass_nsw(scores: &ScoreMatrix, arm: usize) -> f64 {
    scores.rows().map(|row| row[arm]).product()
}

/// Sum of absolute entrywise differences; bounds the NSW gap between two
/// score matrices under any policy.
pub fn nsw_lipschitz_bound(_policy: &Policy, s1: &ScoreMatrix, s2: &ScoreMatrix) -> Result<f64> {
    if s1.users() != s2.users() || s1.arms() != s2.arms() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{} score matrices",
            s1.users(),
            s1.arms(),
            s2.users(),
            s2.arms()
        )));
    }
    Ok(s1
        .as_slice()
        .iter()
        .zip(s2.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub policy: Policy,
    /// Unfloored NSW of `policy`.
    pub value: f64,
    pub iterations: usize,
    /// Final Frank-Wolfe gap on the log objective.
    pub gap: f64,
    /// Set when every score is zero and the uniform policy was returned.
    pub degenerate: bool,
}

/// Log objective `sum_d ln(max(<x, s_d>, floor))`.
pub fn log_objective(weights: &[f64], scores: &ScoreMatrix, floor: f64) -> f64 {
    scores.rows().map(|row| dot(weights, row).max(floor).ln()).sum()
}

/// Gradient of [`log_objective`] with respect to the weights.
pub fn log_gradient(weights: &[f64], scores: &ScoreMatrix, floor: f64) -> Vec<f64> {
    let mut grad = vec![0.0; scores.arms()];
    for row in scores.rows() {
        let u = dot(weights, row).max(floor);
        for (g, s) in grad.iter_mut().zip(row) {
            *g += s / u;
        }
    }
    grad
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn maximize_nsw(scores: &ScoreMatrix, settings: &SolverSettings) -> Solution {
    solve(scores, settings, None)
}

/// Like [`maximize_nsw`] but also returns the log objective after each
/// iteration.
pub fn maximize_nsw_traced(scores: &ScoreMatrix, settings: &SolverSettings) -> (Solution, Vec<f64>) {
    let mut trace = Vec::new();
    let sol = solve(scores, settings, Some(&mut trace));
    (sol, trace)
}

/// Away-step Frank-Wolfe on the log objective, starting from uniform.
fn solve(scores: &ScoreMatrix, settings: &SolverSettings, mut trace: Option<&mut Vec<f64>>) -> Solution {
    let k = scores.arms();
    let floor = settings.utility_floor;
    if scores.as_slice().iter().all(|&s| s == 0.0) {
        return Solution {
            policy: Policy::uniform(k),
            value: 0.0,
            iterations: 0,
            gap: 0.0,
            degenerate: true,
        };
    }

    let mut x = vec![1.0 / k as f64; k];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut direction = vec![0.0; k];

    while iterations < settings.max_iterations {
        let grad = log_gradient(&x, scores, floor);
        let gx = dot(&grad, &x);
        let fw = argmax(&grad);
        gap = grad[fw] - gx;
        if gap <= settings.gap_tolerance {
            break;
        }
        iterations += 1;

        // away vertex: worst coordinate still carrying weight
        let away = (0..k)
            .filter(|&a| x[a] > 0.0)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]).then(a.cmp(&b)))
            .expect("weights sum to one");
        let away_gap = gx - grad[away];

        let gamma_max;
        if gap >= away_gap || x[away] >= 1.0 {
            for (a, dv) in direction.iter_mut().enumerate() {
                *dv = -x[a];
            }
            direction[fw] += 1.0;
            gamma_max = 1.0;
        } else {
            for (a, dv) in direction.iter_mut().enumerate() {
                *dv = x[a];
            }
            direction[away] -= 1.0;
            gamma_max = x[away] / (1.0 - x[away]);
        }

        let gamma = line_search(&x, &direction, gamma_max, scores, floor, iterations);
        for (xa, da) in x.iter_mut().zip(&direction) {
            *xa = (*xa + gamma * da).max(0.0);
        }
        // drop numerical drift so the support stays exact
        let total: f64 = x.iter().sum();
        for xa in &mut x {
            *xa /= total;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(log_objective(&x, scores, floor));
        }
    }

    let policy = Policy::new(x).expect("iterates stay on the simplex");
    let value = nsw_value(&policy, scores);
    Solution {
        policy,
        value,
        iterations,
        gap,
        degenerate: false,
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (a, &g) in v.iter().enumerate().skip(1) {
        if g > v[best] {
            best = a;
        }
    }
    best
}

/// Exact step along `direction` by bisection on the derivative of the
/// concave restriction. Falls back to `2 / (k + 2)` when the derivative is
/// not finite at both ends.
fn line_search(x: &[f64], direction: &[f64], gamma_max: f64, scores: &ScoreMatrix, floor: f64, k: usize) -> f64 {
    let rates: Vec<(f64, f64)> = scores.rows().map(|row| (dot(x, row), dot(direction, row))).collect();
    let slope = |g: f64| -> f64 {
        rates
            .iter()
            .map(|&(u, du)| {
                let v = u + g * du;
                if v > floor {
                    du / v
                } else {
                    du / floor
                }
            })
            .sum()
    };

    let (d0, dmax) = (slope(0.0), slope(gamma_max));
    if !d0.is_finite() || !dmax.is_finite() {
        return (2.0 / (k as f64 + 2.0)).min(gamma_max);
    }
    if d0 <= 0.0 {
        return 0.0;
    }
    if dmax >= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Point mass on the arm with the largest column sum, lowest index on ties.
pub fn maximize_utilitarian(scores: &ScoreMatrix) -> Solution {
    let sums: Vec<f64> = (0..scores.arms()).map(|a| scores.column_sum(a)).collect();
    let best = argmax(&sums);
    let policy = Policy::point_mass(scores.arms(), best);
    Solution {
        value: sums[best],
        policy,
        iterations: 0,
        gap: 0.0,
        degenerate: false,
    }
}
