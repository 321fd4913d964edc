//! Confidence, exploration length and exploration rate schedules.

use log::warn;

/// Tournament confidence `min(1, K ln(K/2) / (2 gap_hat T))`, floored at
/// `1/T` so that it stays positive for `K <= 2`.
pub fn compute_delta(arms: usize, horizon: u64, delta_hat: f64) -> f64 {
    let t = horizon.max(1) as f64;
    let k = arms as f64;
    let raw = k * (k / 2.0).ln() / (2.0 * delta_hat * t);
    if raw > 1.0 {
        warn!("confidence {raw} exceeds 1 at horizon {horizon}; clamped to 1");
        return 1.0;
    }
    raw.max(1.0 / t).min(1.0)
}

/// Per-pair exploration length of the explore-then-commit agents.
pub fn compute_l(arms: usize, users: usize, num_winners: usize, horizon: u64, scale: f64) -> u64 {
    let (k, d, w, t) = (arms as f64, users as f64, num_winners.max(1) as f64, horizon as f64);
    let log_term = (d * k * t).ln().max(0.0).cbrt();
    let raw = scale * k.powf(-2.0 / 3.0) * w.powf(-2.0 / 3.0) * (d * t).powf(2.0 / 3.0) * log_term;
    (raw.ceil() as u64).max(1)
}

/// Exploration probability at 1-based step `t` after `t0` identification
/// steps.
pub fn compute_eps_t(users: usize, arms: usize, num_winners: usize, t: u64, t0: u64, scale: f64) -> f64 {
    assert!(t > t0, "exploration rate is defined after identification");
    let (k, d, w) = (arms as f64, users as f64, num_winners.max(1) as f64);
    let elapsed = (t - t0) as f64;
    let log = if t - t0 == 1 {
        (d * k).ln().max(1.0)
    } else {
        (d * k * elapsed).ln()
    };
    let raw = scale * d.powf(2.0 / 3.0) * k.cbrt() * w.cbrt() * elapsed.powf(-1.0 / 3.0) * log.cbrt();
    raw.clamp(0.0, 1.0)
}
