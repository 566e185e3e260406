//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{build, full, hand_dags};
use tangle_sim::config::{default_p_grid, ExperimentSpec, Mode};
use tangle_sim::driver::execute;
use tangle_sim::equilibrium::{find_crossing, replicate, sweep, theta0, Sweep};
use tangle_sim::metrics::{approval_cdf, little_check, mean_costs, relative_cost_increase, RunData};
use tangle_sim::walk::{exit_distribution_mc, transition_probs, ExitSolver};
use tangle_sim::{LogicalId, SimConfig, StrategyLabel, Tangle, VertexId, WalkParams};

/// Simulated seconds per replica in the cost sweeps.
const SWEEP_T_END: f64 = 100.0;
const SWEEP_WARMUP: f64 = 25.0;
const REPLICAS: usize = 5;
const LAMBDAS: [f64; 2] = [25.0, 50.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn exit_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (_, edges) in hand_dags() {
        let t = build(&edges);
        let v = full(&t);
        for q in [0.0, 1.0 / 3.0] {
            for alpha in [0.0, 0.5, 2.0] {
                let params = WalkParams::new(alpha, q).unwrap();
                let exact = ExitSolver::default().solve(&v, &params).unwrap();
                let mc = exit_distribution_mc(&v, &params, 100_000, &mut rng).unwrap();
                worst = worst.max(exact.total_variation(&mc));
            }
        }
    }
    outcome(worst <= 0.01, format!("max total variation {worst:.5} over 5 tangles x 6 parameter pairs"))
}

fn random_tangle(rng: &mut ChaCha8Rng, n: u32) -> Tangle {
    let mut t = Tangle::new();
    for k in 1..=n {
        let (a, b) = (rng.random_range(0..k), rng.random_range(0..k));
        t.attach((VertexId(a), VertexId(b)), k as f64, 0, LogicalId(k)).unwrap();
    }
    t
}

fn transition_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut genesis_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(1..80);
        let t = random_tangle(&mut rng, n);
        let v = full(&t);
        let params = WalkParams::new(rng.random_range(0.0..4.0), rng.random_range(0.0..0.49)).unwrap();
        for x in 0..t.len() as u32 {
            let x = VertexId(x);
            if v.is_tip(x) {
                continue;
            }
            let tr = transition_probs(&v, x, &params).unwrap();
            worst = worst.max((tr.iter().map(|s| s.prob).sum::<f64>() - 1.0).abs());
            if x == VertexId::GENESIS {
                genesis_ok &= tr.iter().all(|s| t.parents(x).iter().all(|&p| p != s.target));
                genesis_ok &= tr.iter().all(|s| s.kind == tangle_sim::walk::MoveKind::Forward);
            }
        }
    }
    let t = build(&[(0, 0), (1, 1), (2, 1), (2, 3)]);
    let v = full(&t);
    let params = WalkParams::new(std::f64::consts::LN_2, 1.0 / 3.0).unwrap();
    let tr = transition_probs(&v, VertexId(2), &params).unwrap();
    let get = |id: u32| tr.iter().find(|s| s.target == VertexId(id)).map_or(f64::NAN, |s| s.prob);
    let example = [get(1) - 1.0 / 3.0, get(3) - 4.0 / 9.0, get(4) - 2.0 / 9.0];
    let example_ok = example.iter().all(|d| d.abs() <= 1e-15);
    outcome(
        worst <= 1e-12 && genesis_ok && example_ok,
        format!(
            "max |sum - 1| = {worst:.1e}, genesis forward-only: {genesis_ok}, worked example (1/3; 4/9, 2/9): {}",
            if example_ok { "exact" } else { "off" }
        ),
    )
}

fn cdf_runs(lambda: f64) -> Vec<RunData> {
    let config = SimConfig { t_end: 400.0, warmup: 100.0, seed: 400 + lambda as u64, ..SimConfig::new(lambda, 0.01) };
    replicate(&config, REPLICAS).expect("cdf runs")
}

fn approval_within_five(runs_by_lambda: &[(f64, Vec<RunData>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (lambda, runs) in runs_by_lambda {
        let cdf = approval_cdf(runs, &[5.0, 10.0]).expect("cdf");
        pass &= cdf[0].all >= 0.90;
        parts.push(format!("lambda={lambda}: F(5s)={:.3}, F(10s)={:.3}", cdf[0].all, cdf[1].all));
    }
    outcome(pass, parts.join("; "))
}

fn cost_sweep(lambda: f64, alpha: f64) -> Sweep {
    let config = SimConfig {
        t_end: SWEEP_T_END,
        warmup: SWEEP_WARMUP,
        seed: 1000 + lambda as u64,
        ..SimConfig::new(lambda, alpha)
    };
    sweep(&config, &default_p_grid(), REPLICAS).unwrap_or_else(|f| panic!("sweep failed: {}", f.source))
}

fn equilibrium_direction(sweeps: &[(f64, Sweep)]) -> Outcome {
    let crossings: Vec<Option<f64>> = sweeps.iter().map(|(_, s)| find_crossing(&s.curves).p_bar).collect();
    let text: Vec<String> = sweeps
        .iter()
        .zip(&crossings)
        .map(|((lambda, _), c)| format!("p_bar(lambda={lambda})={}", c.map_or("none".into(), |p| format!("{p:.4}"))))
        .collect();
    let pass = match (crossings[0], crossings[1]) {
        (Some(p25), Some(p50)) => p25 > 0.0 && p25 < 1.0 && p50 > 0.0 && p50 < 1.0 && p50 < p25,
        _ => false,
    };
    outcome(pass, text.join(", "))
}

fn high_alpha_gain(sweeps: &[(f64, Sweep)]) -> Outcome {
    let mut pass = true;
    let (mut worst_order, mut worst_gap): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    for (_, s) in sweeps {
        for point in &s.curves.points {
            if let (Some(s0), Some(s1)) = (point.s0, point.s1) {
                let d = s1.mean - s0.mean;
                pass &= d <= 0.0 && d.abs() <= 0.15;
                worst_order = worst_order.max(d);
                worst_gap = worst_gap.max(d.abs());
            }
        }
    }
    outcome(pass, format!("max (S1 - S0) = {worst_order:+.4}, max |S0 - S1| = {worst_gap:.4}"))
}

fn honest_harm(sweeps: &[(f64, Sweep)]) -> Outcome {
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for (_, s) in sweeps {
        let base = s.curves.points.iter().find(|p| p.p_greedy == 0.0).and_then(|p| p.s0).expect("p = 0 point");
        for point in s.curves.points.iter().filter(|p| p.p_greedy <= 0.5) {
            if let Some(s0) = point.s0 {
                let r = relative_cost_increase(s0.mean, base.mean).expect("positive baseline");
                pass &= r <= 0.5;
                worst = worst.max(r);
            }
        }
    }
    outcome(pass, format!("max relative increase of default cost {worst:+.4}"))
}

fn little(runs: &[RunData]) -> Outcome {
    match little_check(runs) {
        Ok(c) => outcome(
            (0.75..=1.25).contains(&c.ratio),
            format!("observed {:.1}, predicted {:.1} (p = {:.3}), ratio {:.3}", c.observed, c.predicted, c.p, c.ratio),
        ),
        Err(e) => outcome(false, format!("undefined: {e}")),
    }
}

fn invariants(runs: &[RunData]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for _ in 0..200 {
        let n = rng.random_range(1..120);
        let t = random_tangle(&mut rng, n);
        let v = full(&t);
        for x in 0..t.len() as u32 {
            let x = VertexId(x);
            let parents = t.parents(x);
            if x != VertexId::GENESIS && (parents.len() != 2 || !v.references(x, VertexId::GENESIS).unwrap()) {
                failures.push("DAG shape");
            }
            if t.approvers(x).windows(3).any(|w| w[0] == w[2]) {
                failures.push("multiplicity");
            }
            if parents.iter().any(|&p| v.weight(p) < v.weight(x) + 1) {
                failures.push("weight gap");
            }
            if v.is_tip(x) && v.weight(x) != 1 {
                failures.push("tip weight");
            }
        }
    }
    for r in runs {
        if r.rows.iter().any(|row| row.w.is_some_and(|w| w as usize > r.m0)) {
            failures.push("W > M0");
        }
    }
    let grid: Vec<f64> = (0..=80).map(|i| i as f64 * 0.25).collect();
    let cdf = approval_cdf(runs, &grid).expect("cdf");
    if cdf.windows(2).any(|w| w[0].all > w[1].all) || cdf.iter().any(|c| !(0.0..=1.0).contains(&c.all)) {
        failures.push("CDF monotone");
    }
    if theta0(0.3, 0.2) != 1.0 || theta0(0.3, 0.3) != 1.0 || (theta0(0.3, 1.0) - 0.3).abs() > 1e-15 {
        failures.push("theta0 cases");
    }
    failures.dedup();
    outcome(failures.is_empty(), if failures.is_empty() { "all hold".to_string() } else { failures.join(", ") })
}

fn determinism() -> Outcome {
    let sim = SimConfig { t_end: 60.0, warmup: 15.0, p_greedy: 0.3, seed: 99, ..SimConfig::new(25.0, 0.01) };
    let spec = ExperimentSpec { mode: Mode::Single, ..ExperimentSpec::new(sim.clone()) };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut identical = true;
    let reports: Vec<_> = dirs.iter().map(|d| execute(&spec, d.path(), None).expect("single run")).collect();
    for path in &reports[0].files {
        let name = path.file_name().unwrap();
        identical &= fs::read(path).unwrap() == fs::read(dirs[1].path().join(name)).unwrap();
    }

    let base = SimConfig { t_end: 100.0, warmup: 25.0, p_greedy: 0.3, ..SimConfig::new(25.0, 0.01) };
    let summaries: Vec<_> = [11u64, 12]
        .iter()
        .map(|&seed| mean_costs(&replicate(&SimConfig { seed, ..base.clone() }, REPLICAS).unwrap()).unwrap())
        .collect();
    let mut compatible = true;
    let mut parts = Vec::new();
    for label in [StrategyLabel::S0, StrategyLabel::S1] {
        let (a, b) = (summaries[0].label(label).unwrap(), summaries[1].label(label).unwrap());
        let overlap = (a.mean - b.mean).abs() <= 3.0 * (a.se + b.se);
        compatible &= overlap;
        parts.push(format!("{label}: {:.4}+-{:.4} vs {:.4}+-{:.4}", a.mean, 3.0 * a.se, b.mean, 3.0 * b.se));
    }
    outcome(
        identical && compatible,
        format!("{} files byte-identical: {identical}; {}", reports[0].files.len(), parts.join(", ")),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n, name, o: Outcome| {
        println!("criterion {n} ({name}): {} [{:.0?}] {}", if o.pass { "PASS" } else { "FAIL" }, start.elapsed(), o.detail);
        results.push((n, name, o));
    };

    record(1, "exit-distribution oracle", exit_oracle());
    record(2, "transition law", transition_law());

    let cdf: Vec<(f64, Vec<RunData>)> = LAMBDAS.iter().map(|&l| (l, cdf_runs(l))).collect();
    record(3, "approval-time CDF", approval_within_five(&cdf));

    let low: Vec<(f64, Sweep)> = LAMBDAS.iter().map(|&l| (l, cost_sweep(l, 0.01))).collect();
    record(4, "equilibrium direction", equilibrium_direction(&low));

    let high: Vec<(f64, Sweep)> = LAMBDAS.iter().map(|&l| (l, cost_sweep(l, 0.5))).collect();
    record(5, "high-alpha gain", high_alpha_gain(&high));
    record(6, "honest-node harm", honest_harm(&high));

    record(7, "unconfirmed count", little(&cdf[0].1));
    record(8, "invariants", invariants(&cdf[0].1));
    record(9, "determinism", determinism());

    let f = |c: Option<tangle_sim::metrics::LabelCost>| c.map_or("-".into(), |c| format!("{:.4}", c.mean));
    for (alpha, sweeps) in [(0.01, &low), (0.5, &high)] {
        for (lambda, s) in sweeps {
            for point in &s.curves.points {
                println!("  alpha={alpha} lambda={lambda} p={:.3}: S0={} S1={}", point.p_greedy, f(point.s0), f(point.s1));
            }
        }
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0?}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
