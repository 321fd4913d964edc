//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line shows up in `cargo test`
//! output; the process exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nswduel::agents::{AgentConfig, AgentKind};
use nswduel::condorcet::{default_step_budget, dkwt, round_params};
use nswduel::harness::{run_experiment, ExperimentConfig, ExperimentResult, Stat};
use nswduel::welfare::{log_gradient, log_objective, nsw_lipschitz_bound};
use nswduel::{
    find_true_winners, generate, maximize_nsw, nsw_value, validate_tensor, InstanceSpec, Policy, RngSeed, ScoreMatrix,
    SolverSettings, TensorSampler,
};
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn env_validity() -> Outcome {
    let mut rng = RngSeed::from_master(1001).rng();
    let gaps = [0.05, 0.1, 0.2];
    let mut bad = Vec::new();
    for case in 0..1000u64 {
        let d = rng.random_range(1..=10);
        let k = rng.random_range(2..=10);
        let gap = gaps[rng.random_range(0..gaps.len())];
        let spec = InstanceSpec::random(d, k, gap, RngSeed::new(1001, case));
        let inst = match generate(&spec) {
            Ok(i) => i,
            Err(e) => {
                bad.push(format!("case {case}: {e}"));
                continue;
            }
        };
        if validate_tensor(&inst.tensor).is_err() {
            bad.push(format!("case {case}: invalid tensor"));
        }
        if inst.tensor.min_gap().is_none_or(|g| g < gap) {
            bad.push(format!("case {case}: min gap {:?} < {gap}", inst.tensor.min_gap()));
        }
        match find_true_winners(&inst.tensor) {
            Ok(w) if w.winners() == inst.winners.winners() => {}
            _ => bad.push(format!("case {case}: winners not recovered")),
        }
    }
    outcome(
        bad.is_empty(),
        format!("1000 instances, {} failures {:?}", bad.len(), bad.first()),
    )
}

/// Closed-form score of `arm` for user `u` in the lower-bound instance with
/// `a*_d = (d + 1) mod K` and the first half of users owning good winners.
fn hard_score(d: usize, k: usize, m: usize, eps: f64, eps_prime: f64, u: usize, arm: usize) -> f64 {
    let winner = |x: usize| (x + 1) % k;
    let good: Vec<usize> = (0..d / 2).map(winner).collect();
    let bad: Vec<usize> = (d / 2..d).map(winner).collect();
    let target = good[m];
    let user_is_good = good.contains(&winner(u));
    if good.contains(&arm) {
        if user_is_good {
            if arm == winner(u) {
                1.0
            } else {
                1.0 - 2.0 * eps_prime
            }
        } else if arm == target {
            1.0 - 2.0 * eps_prime
        } else {
            1.0 - 2.0 * (eps_prime + eps)
        }
    } else if bad.contains(&arm) {
        if !user_is_good && arm == winner(u) {
            1.0
        } else {
            0.0
        }
    } else {
        0.0
    }
}

fn hard_exactness() -> Outcome {
    // dyadic parameters keep every closed-form entry exactly representable
    let params = [(0.125, 0.03125), (0.1875, 0.015625)];
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for (d, k) in [(4, 4), (8, 8), (10, 10)] {
        for &(eps, eps_prime) in &params {
            for m in 0..d / 2 {
                let inst = match generate(&InstanceSpec::hard(d, k, eps, eps_prime, m)) {
                    Ok(i) => i,
                    Err(e) => {
                        mismatches.push(format!("D={d} K={k} m={m}: {e}"));
                        continue;
                    }
                };
                for u in 0..d {
                    for a in 0..k {
                        let want = hard_score(d, k, m, eps, eps_prime, u, a);
                        let got = inst.scores.get(u, a);
                        if got != want {
                            mismatches.push(format!("D={d} m={m} s_{u}({a}) = {got}, table {want}"));
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{checked} entries, {} mismatches {:?}",
            mismatches.len(),
            mismatches.first()
        ),
    )
}

/// Best NSW over the simplex grid with spacing `step`.
fn grid_optimum(scores: &ScoreMatrix, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let k = scores.arms();
    let mut best = 0.0f64;
    let mut w = vec![0usize; k];
    fn visit(pos: usize, left: usize, w: &mut [usize], f: &mut dyn FnMut(&[usize])) {
        if pos + 1 == w.len() {
            w[pos] = left;
            f(w);
            return;
        }
        for c in 0..=left {
            w[pos] = c;
            visit(pos + 1, left - c, w, f);
        }
    }
    visit(0, n, &mut w, &mut |w| {
        let weights: Vec<f64> = w.iter().map(|&c| c as f64 / n as f64).collect();
        let total: f64 = weights.iter().sum();
        let p = Policy::new(weights.iter().map(|x| x / total).collect()).unwrap();
        best = best.max(nsw_value(&p, scores));
    });
    best
}

fn random_scores<R: Rng>(rng: &mut R, d: usize, k: usize) -> ScoreMatrix {
    ScoreMatrix::new(d, k, (0..d * k).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn frank_wolfe_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = RngSeed::from_master(1003).rng();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=3);
        let s = random_scores(&mut rng, d, k);
        let fw = maximize_nsw(&s, &SolverSettings::default()).value;
        worst = worst.max((fw - grid_optimum(&s, 0.005)).abs());
    }

    let h = 1e-6;
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let k = rng.random_range(2..=3);
        let s = random_scores(&mut rng, d, k);
        let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let x: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let grad = log_gradient(&x, &s, 1e-12);
        for a in 0..k {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[a] += h;
            down[a] -= h;
            let fd = (log_objective(&up, &s, 1e-12) - log_objective(&down, &s, 1e-12)) / (2.0 * h);
            worst_rel = worst_rel.max((grad[a] - fd).abs() / grad[a].abs().max(f64::MIN_POSITIVE));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && worst_rel <= 1e-4 && secs < 120.0,
        format!("max |FW - grid| = {worst:.2e}, max gradient rel err = {worst_rel:.2e}, {secs:.1}s"),
    )
}

fn lipschitz_property() -> Outcome {
    let mut rng = RngSeed::from_master(1004).rng();
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..1000 {
        let d = rng.random_range(1..=8);
        let k = rng.random_range(1..=8);
        let s1 = random_scores(&mut rng, d, k);
        let s2 = random_scores(&mut rng, d, k);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-9).collect();
        let total: f64 = raw.iter().sum();
        let pi = Policy::new(raw.iter().map(|v| v / total).collect()).unwrap();
        let lhs = (nsw_value(&pi, &s1) - nsw_value(&pi, &s2)).abs();
        let rhs: f64 = s1
            .as_slice()
            .iter()
            .zip(s2.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum();
        if lhs > rhs || nsw_lipschitz_bound(&pi, &s1, &s2).unwrap() != rhs {
            violations += 1;
        }
        tightest = tightest.min(rhs - lhs);
    }
    outcome(
        violations == 0,
        format!("1000 cases, {violations} violations, min slack {tightest:.3e}"),
    )
}

fn dkwt_rate() -> Outcome {
    let start = Instant::now();
    let (d, k, gap, runs) = (5, 5, 0.1, 200u64);
    let budget = default_step_budget(k, d, Some(gap));
    let (mut correct, mut total, mut steps) = (0usize, 0usize, Vec::new());
    let mut errors = 0;
    for run in 0..runs {
        let inst = generate(&InstanceSpec::random(d, k, gap, RngSeed::new(1005, run))).unwrap();
        let mut sampler = TensorSampler::new(&inst.tensor, RngSeed::new(2005, run));
        match dkwt(&mut sampler, 0.05, budget) {
            Ok(out) => {
                correct += (0..d)
                    .filter(|&u| out.winners.winner(u) == inst.winners.winner(u))
                    .count();
                steps.push(out.steps_used);
            }
            Err(_) => errors += 1,
        }
        total += d;
    }
    let rate = correct as f64 / total as f64;
    let mean_steps = steps.iter().sum::<u64>() as f64 / steps.len().max(1) as f64;
    let max_steps = steps.iter().copied().max().unwrap_or(0);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rate >= 0.95 && errors == 0 && secs < 300.0,
        format!(
            "rate {rate:.4} over {runs} runs, steps mean {mean_steps:.0} max {max_steps}, {errors} errors, {secs:.1}s"
        ),
    )
}

fn round_arithmetic() -> Outcome {
    let p = round_params(1, 0.05);
    let delta = 6.0 * 0.05 / (PI * PI);
    let n = (8.0 * (4.0 / delta).ln() / (0.25f64 * 0.25)).ceil() as u64;
    let pass = p.width == 0.25 && p.delta == delta && p.duels == n && n == 625;
    outcome(
        pass,
        format!("width {}, delta {:.6e}, N {} (expected {n})", p.width, p.delta, p.duels),
    )
}

fn agents(kinds: &[AgentKind], horizon: u64) -> Vec<AgentConfig> {
    kinds.iter().map(|&k| AgentConfig::new(k, horizon)).collect()
}

fn sweep(instances: Vec<InstanceSpec>, kinds: &[AgentKind], horizon: u64, master_seed: u64) -> ExperimentResult {
    let mut config = ExperimentConfig::new(instances, agents(kinds, horizon), horizon);
    config.repetitions = 30;
    config.master_seed = master_seed;
    config.checkpoint_stride = horizon;
    run_experiment(&config, None, 0).expect("sweep runs")
}

fn stat(result: &ExperimentResult, instance: &str, agent: &str, metric: &str) -> Stat {
    result
        .summary
        .cell(instance, agent)
        .and_then(|c| c.metric(metric))
        .map(|m| m.stat)
        .unwrap_or_else(|| panic!("missing {instance}/{agent}/{metric}"))
}

fn regret_slope() -> Outcome {
    let start = Instant::now();
    let horizons = [20_000u64, 40_000, 80_000];
    let kinds = [AgentKind::FairEtc, AgentKind::FairEps];
    let spec = InstanceSpec::random(5, 5, 0.1, RngSeed::default());
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut failures = 0;
    for &t in &horizons {
        let result = sweep(vec![spec.clone()], &kinds, t, 7);
        failures += result.failures().count();
        let id = &result.summary.cells[0].instance_id;
        for (slot, kind) in means.iter_mut().zip(kinds) {
            slot.push(stat(&result, id, kind.as_str(), "cumulative_regret").mean);
        }
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| (t as f64).ln()).collect();
    let slope = |ys: &[f64]| {
        let ys: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    };
    let slopes: Vec<f64> = means.iter().map(|m| slope(m)).collect();
    let pass = failures == 0 && slopes.iter().all(|s| (0.45..=0.90).contains(s));
    let detail = kinds
        .iter()
        .zip(&means)
        .zip(&slopes)
        .map(|((k, m), s)| format!("{k}: R_T {:.0}/{:.0}/{:.0} slope {s:.3}", m[0], m[1], m[2]))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, format!("{detail}; {:.0}s", start.elapsed().as_secs_f64()))
}

fn table_orderings() -> Outcome {
    let result = sweep(
        vec![InstanceSpec::random(10, 10, 0.1, RngSeed::default())],
        &AgentKind::ALL,
        50_000,
        8,
    );
    let id = result.summary.cells[0].instance_id.clone();
    let m = |agent: AgentKind, metric: &str| stat(&result, &id, agent.as_str(), metric).mean;
    let uniform = AgentKind::UniformUsers;
    let mut broken = Vec::new();
    for (fair, util) in [
        (AgentKind::FairEtc, AgentKind::UtilEtc),
        (AgentKind::FairEps, AgentKind::UtilEps),
    ] {
        let mut check = |ok: bool, what: String| {
            if !ok {
                broken.push(what);
            }
        };
        let r = m(fair, "cumulative_regret");
        check(r < m(util, "cumulative_regret"), format!("regret {fair} < {util}"));
        check(
            r < m(uniform, "cumulative_regret"),
            format!("regret {fair} < {uniform}"),
        );
        let g = m(fair, "gini");
        check(g < m(util, "gini"), format!("gini {fair} < {util}"));
        check(g > m(uniform, "gini"), format!("gini {fair} > {uniform}"));
        check(
            m(fair, "min_welfare") > m(util, "min_welfare"),
            format!("min welfare {fair} > {util}"),
        );
        check(
            m(util, "utilitarian_welfare") >= m(fair, "utilitarian_welfare"),
            format!("utilitarian welfare {util} >= {fair}"),
        );
    }
    let truncated: Vec<String> = result
        .summary
        .cells
        .iter()
        .map(|c| format!("{}:{}", c.agent, c.truncated_runs))
        .collect();
    let regrets: Vec<String> = AgentKind::ALL
        .iter()
        .map(|&k| format!("{k} {:.1}", m(k, "cumulative_regret")))
        .collect();
    let pass = broken.is_empty() && result.failures().count() == 0;
    outcome(
        pass,
        format!(
            "regret [{}]; truncated runs [{}]; broken: {:?}",
            regrets.join(", "),
            truncated.join(", "),
            broken
        ),
    )
}

fn clustered_fairness() -> Outcome {
    let instances = vec![
        InstanceSpec::clustered(10, 10, 0.1, 0.5, RngSeed::default()),
        InstanceSpec::clustered(10, 10, 0.1, 0.7, RngSeed::default()),
    ];
    let kinds = [
        AgentKind::FairEtc,
        AgentKind::UtilEtc,
        AgentKind::FairEps,
        AgentKind::UtilEps,
    ];
    let result = sweep(instances, &kinds, 100_000, 9);
    let ids: Vec<String> = {
        let mut v: Vec<String> = result.summary.cells.iter().map(|c| c.instance_id.clone()).collect();
        v.dedup();
        v
    };
    let mut broken = Vec::new();
    let mut detail = Vec::new();
    for (idx, id) in ids.iter().enumerate() {
        let strict = idx == 1;
        for (fair, util) in [
            (AgentKind::FairEtc, AgentKind::UtilEtc),
            (AgentKind::FairEps, AgentKind::UtilEps),
        ] {
            let fm = stat(&result, id, fair.as_str(), "min_welfare");
            let um = stat(&result, id, util.as_str(), "min_welfare");
            let fg = stat(&result, id, fair.as_str(), "gini");
            let ug = stat(&result, id, util.as_str(), "gini");
            let (min_ok, gini_ok) = if strict {
                (fm.lower() > um.upper(), fg.upper() < ug.lower())
            } else {
                (fm.mean > um.mean, fg.mean < ug.mean)
            };
            if !min_ok {
                broken.push(format!("{id} min welfare {fair} vs {util}"));
            }
            if !gini_ok {
                broken.push(format!("{id} gini {fair} vs {util}"));
            }
            detail.push(format!(
                "{id} {fair}/{util}: min {:.0}±{:.0} vs {:.0}±{:.0}, gini {:.4}±{:.4} vs {:.4}±{:.4}",
                fm.mean, fm.ci95, um.mean, um.ci95, fg.mean, fg.ci95, ug.mean, ug.ci95
            ));
        }
    }
    let pass = broken.is_empty() && result.failures().count() == 0;
    outcome(pass, format!("{}; broken: {:?}", detail.join("; "), broken))
}

fn determinism() -> Outcome {
    let mut config = ExperimentConfig::new(
        vec![
            InstanceSpec::random(3, 4, 0.1, RngSeed::from_master(5)),
            InstanceSpec::clustered(4, 4, 0.1, 0.5, RngSeed::from_master(6)),
        ],
        agents(&AgentKind::ALL, 3000),
        3000,
    );
    config.repetitions = 3;
    config.master_seed = 10;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&config, Some(a.path()), 1).unwrap();
    run_experiment(&config, Some(b.path()), 0).unwrap();
    let read = |dir: &tempfile::TempDir| std::fs::read(dir.path().join("summary.csv")).unwrap();
    let (x, y) = (read(&a), read(&b));
    outcome(
        !x.is_empty() && x == y,
        format!("summary.csv {} bytes, identical: {}", x.len(), x == y),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("environment validity", env_validity),
        ("hard-instance exactness", hard_exactness),
        ("Frank-Wolfe vs grid oracle", frank_wolfe_oracle),
        ("NSW Lipschitz bound", lipschitz_property),
        ("DKWT identification rate", dkwt_rate),
        ("round-parameter arithmetic", round_arithmetic),
        ("regret sublinearity", regret_slope),
        ("welfare orderings at desk scale", table_orderings),
        ("clustered fairness", clustered_fairness),
        ("sweep determinism", determinism),
    ];
    let filter: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let id = n + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = run();
        println!("{} {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
