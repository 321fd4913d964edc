use serde::{Deserialize, Serialize};

/// Metric names in reporting order.
pub const METRICS: [&str; 6] = [
    "cumulative_regret",
    "nsw",
    "min_welfare",
    "gini",
    "utilitarian_welfare",
    "truncated_fraction",
];

/// Gini coefficient `sum_i sum_j |u_i - u_j| / (2 D sum u)`. Returns `(0,
/// true)` when every utility is zero.
pub fn gini(utilities: &[f64]) -> (f64, bool) {
    let total: f64 = utilities.iter().sum();
    if total <= 0.0 {
        return (0.0, true);
    }
    let mut diff = 0.0;
    for a in utilities {
        for b in utilities {
            diff += (a - b).abs();
        }
    }
    (diff / (2.0 * utilities.len() as f64 * total), false)
}

/// `(prod u_d)^(1/D)`, evaluated in logs.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    if values.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub cumulative_regret: f64,
    pub nsw: f64,
    pub min_welfare: f64,
    pub gini: f64,
    pub utilitarian_welfare: f64,
    pub truncated: bool,
    /// Gini was undefined because every utility was zero.
    pub gini_degenerate: bool,
}

impl RunMetrics {
    pub fn new(cumulative_regret: f64, utilities: &[f64], truncated: bool) -> Self {
        let (g, degenerate) = gini(utilities);
        Self {
            cumulative_regret,
            nsw: geometric_mean(utilities),
            min_welfare: utilities.iter().copied().fold(f64::INFINITY, f64::min),
            gini: g,
            utilitarian_welfare: utilities.iter().sum(),
            truncated,
            gini_degenerate: degenerate,
        }
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        Some(match metric {
            "cumulative_regret" => self.cumulative_regret,
            "nsw" => self.nsw,
            "min_welfare" => self.min_welfare,
            "gini" => self.gini,
            "utilitarian_welfare" => self.utilitarian_welfare,
            "truncated_fraction" => f64::from(u8::from(self.truncated)),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
    /// Fewer than two samples, so the interval is not informative.
    pub degenerate: bool,
}

impl Stat {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                ci95: 0.0,
                min: f64::NAN,
                max: f64::NAN,
                n,
                degenerate: true,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let (min, max) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        // the mean of identical values can drift past them by an ulp
        let mean = mean.clamp(min, max);
        let ci95 = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            ci95,
            min,
            max,
            n,
            degenerate: n < 2,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    #[serde(flatten)]
    pub stat: Stat,
}

/// Mean and interval of every metric across runs of one cell.
pub fn summary_metrics(runs: &[RunMetrics]) -> Vec<MetricSummary> {
    METRICS
        .iter()
        .map(|&m| {
            let xs: Vec<f64> = runs.iter().filter_map(|r| r.get(m)).collect();
            MetricSummary {
                metric: m.to_string(),
                stat: Stat::from_samples(&xs),
            }
        })
        .collect()
}
