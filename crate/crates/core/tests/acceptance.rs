//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use common::dd::DdNetwork;
use common::*;
use sicfsa::baselines::{aloha_structured, DEFAULT_POWER_LEVELS};
use sicfsa::grad::{finite_diff_vectors, max_relative_error, GRAD_CHECK_FLOOR};
use sicfsa::model::{stream, ActivityVector, AllocationMatrix, Network, Stream, ROW_SUM_TOL};
use sicfsa::objective::{
    conditional_objective, exact_expected_objective, mc_expected_objective,
    smoothed_conditional_objective,
};
use sicfsa::optim::{initial_parameters, optimize, project_simplex_rows, OptimizeOptions};
use sicfsa::powerred::reduce_power;
use sicfsa::receiver::sic_decode;
use sicfsa::runner::{builtin_scenario, evaluate, run_experiment, ExperimentConfig, ExperimentOutcome, Method};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn gradient_check() -> Verdict {
    const STEP: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut worst: f64 = 0.0;
    for (index, n) in [(1, 5), (4, 8)] {
        let mut r = rng(1000 + n as u64);
        for t in 0..100 {
            let net = network(index, t);
            let k = net.n_slots();
            let a = interior_alloc(n, k, &mut r);
            let p = interior_power(&net, &mut r);
            let x = random_activity(n, 0.6, &mut r);
            let (analytic, _) = finite_diff_vectors(&a, &p, &x, &net, STEP);
            let mut point = a.as_flat().to_vec();
            point.extend_from_slice(&p);
            let numeric = DdNetwork::new(&net).central_difference(&point, k, &x, STEP);
            worst = worst.max(max_relative_error(&analytic, &numeric, GRAD_CHECK_FLOOR));
        }
    }
    verdict(worst < TOL, format!("max relative error {worst:.2e} (< {TOL:e}) over 2 x 100 points"))
}

/// Allocation that mixes interior rows with one-hot rows.
fn mixed_alloc<R: Rng>(n: usize, k: usize, r: &mut R) -> AllocationMatrix {
    let interior = interior_alloc(n, k, r);
    let rows = (0..n)
        .map(|i| {
            if r.random::<f64>() < 0.3 {
                let mut row = vec![0.0; k];
                row[r.random_range(0..k)] = 1.0;
                row
            } else {
                interior.row(i).to_vec()
            }
        })
        .collect();
    AllocationMatrix::new(rows).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for t in 0..500 {
        let n = r.random_range(2..=8);
        let k = r.random_range(1..=4);
        let net = network_sized(n, k, t);
        let a = mixed_alloc(n, k, &mut r);
        let p = interior_power(&net, &mut r);
        let mut x: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.7).collect();
        while x.iter().filter(|&&b| b).count() > 6 {
            let i = r.random_range(0..n);
            x[i] = false;
        }
        let x = ActivityVector::new(x);
        let got = conditional_objective(&a, &p, &x, &net).value;
        worst = worst.max((got - brute_conditional(&a, &p, &x, &net)).abs());
    }
    let mut mismatches = 0;
    for t in 0..50 {
        let net = network(1, 10_000 + t);
        let p = interior_power(&net, &mut r);
        let s = &net.scenario;
        for mask in 1u32..32 {
            let set: Vec<usize> = (0..5).filter(|i| mask >> i & 1 == 1).collect();
            let got = sic_decode(&set, &p, &net.channel, s.noise_power, s.sinr_threshold).n_decoded;
            if got != sequential_decode(&set, &p, &net.channel, s.noise_power, s.sinr_threshold) {
                mismatches += 1;
            }
        }
    }
    verdict(
        worst <= 1e-9 && mismatches == 0,
        format!("500 instances max |diff| {worst:.1e} (<= 1e-9); 50 x 31 SIC subsets, {mismatches} mismatches"),
    )
}

fn exact_vs_monte_carlo() -> Verdict {
    const TRIALS: u64 = 20;
    const FRAMES: usize = 100_000;
    let mut pass = true;
    let mut counts = Vec::new();
    for index in 1..=4 {
        let net = network(index, 0);
        let s = &net.scenario;
        let (a, p) = aloha_structured(s.n_slots, &net.p_min, s.p_max, DEFAULT_POWER_LEVELS).unwrap();
        let exact = exact_expected_objective(&a, p.values(), &s.activity, &net).unwrap();
        let within = (0..TRIALS)
            .filter(|&t| {
                let (mean, se) = mc_expected_objective(
                    &a,
                    p.values(),
                    &s.activity,
                    &net,
                    FRAMES,
                    &mut stream(t, Stream::Evaluation),
                )
                .unwrap();
                (mean - exact).abs() <= 3.0 * se
            })
            .count();
        pass &= within * 100 >= 95 * TRIALS as usize;
        counts.push(format!("s{index}: {within}/{TRIALS}"));
    }
    verdict(pass, format!("within 3 SE (need >= 95%): {}", counts.join(", ")))
}

fn smoothing_limit() -> Verdict {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    let mut t = 0;
    while used < 200 {
        t += 1;
        let n = r.random_range(2..=6);
        let k = r.random_range(1..=3);
        let mut net = network_sized(n, k, 20_000 + t);
        net.scenario.sharpness = 1e4;
        let a = mixed_alloc(n, k, &mut r);
        let p = interior_power(&net, &mut r);
        let x = random_activity(n, 0.7, &mut r);
        let s = &net.scenario;
        let active = x.active();
        let near = (1u32..1 << active.len()).any(|mask| {
            let set: Vec<usize> =
                active.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i).collect();
            stage_sinrs(&set, &p, &net.channel, s.noise_power)
                .iter()
                .any(|v| (v - s.sinr_threshold).abs() < 0.01 * s.sinr_threshold)
        });
        if near {
            continue;
        }
        used += 1;
        let hard = conditional_objective(&a, &p, &x, &net).value;
        worst = worst.max((smoothed_conditional_objective(&a, &p, &x, &net) - hard).abs());
    }
    verdict(worst < 1e-3, format!("{used} instances, max |smoothed - hard| {worst:.1e} (< 1e-3)"))
}

fn experiment() -> ExperimentOutcome {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&ExperimentConfig::paper_defaults(dir.path(), 10)).unwrap();
    assert!(outcome.failures.is_empty(), "cell failures: {:?}", outcome.failures);
    outcome
}

fn power_reduction_safety(outcome: &ExperimentOutcome) -> Verdict {
    let mut violations = Vec::new();
    let mut reduced = 0;
    let mut cells = 0;
    for cell in outcome.cells.iter().filter(|c| c.record.method == Method::Alg1) {
        cells += 1;
        let index: usize = cell.record.scenario_id.parse().unwrap();
        let net = Network::draw(builtin_scenario(index).unwrap(), cell.record.seed).unwrap();
        let before = cell.power.values();
        let after = reduce_power(&cell.alloc, &cell.power, &net).unwrap();
        let after = after.values();
        let (t0, e0) = evaluate(&cell.alloc, before, &net).unwrap();
        let (t1, e1) = evaluate(&cell.alloc, after, &net).unwrap();
        let tag = format!("s{index} seed {}", cell.record.seed);
        if t1 < t0 - 1e-9 {
            violations.push(format!("{tag}: T^N {t0} -> {t1}"));
        }
        if after.iter().zip(before).any(|(a, b)| a > b) {
            violations.push(format!("{tag}: a power increased"));
        }
        if after.iter().zip(before).any(|(a, b)| a < b) {
            reduced += 1;
            if e1 >= e0 {
                violations.push(format!("{tag}: expected power {e0} -> {e1}"));
            }
        }
    }
    let mut detail = format!("{cells} cells, {reduced} with lowered powers, {} violations", violations.len());
    if !violations.is_empty() {
        detail = format!("{detail}: {}", violations.join("; "));
    }
    verdict(violations.is_empty(), detail)
}

/// Mean (T^N, expected power) per (scenario, method).
fn means(outcome: &ExperimentOutcome) -> BTreeMap<(String, Method), (f64, f64)> {
    let mut acc: BTreeMap<(String, Method), (f64, f64, usize)> = BTreeMap::new();
    for r in outcome.records() {
        let e = acc.entry((r.scenario_id.clone(), r.method)).or_default();
        e.0 += r.t_normalized;
        e.1 += r.expected_power;
        e.2 += 1;
    }
    acc.into_iter().map(|(key, (t, p, n))| (key, (t / n as f64, p / n as f64))).collect()
}

fn throughput_improvement(m: &BTreeMap<(String, Method), (f64, f64)>) -> Verdict {
    let mut failures = Vec::new();
    let mut ratio = 0.0;
    for s in ["1", "2", "3", "4"] {
        let t = |method| m[&(s.to_string(), method)].0;
        let weaker = t(Method::AlohaStructured).min(t(Method::Greedy));
        let stronger = t(Method::AlohaStructured).max(t(Method::Greedy));
        for method in [Method::Alg1, Method::Alg1PowerReduction, Method::Alg1L1] {
            if t(method) < stronger {
                failures.push(format!("s{s} {method} {:.4} < best baseline {stronger:.4}", t(method)));
            }
        }
        if s == "4" {
            ratio = t(Method::Alg1PowerReduction) / weaker;
            if ratio < 1.3 {
                failures.push(format!("s4 ratio {ratio:.3} < 1.3"));
            }
        }
    }
    let mut detail = format!("scenario-4 alg1+alg2 / weaker baseline = {ratio:.3} (>= 1.3)");
    if !failures.is_empty() {
        detail = format!("{detail}; {}", failures.join("; "));
    }
    verdict(failures.is_empty(), detail)
}

fn power_comparison(m: &BTreeMap<(String, Method), (f64, f64)>) -> Verdict {
    let mut failures = Vec::new();
    for s in ["1", "2", "3", "4"] {
        let e = |method| m[&(s.to_string(), method)].1;
        let reduced = e(Method::Alg1PowerReduction);
        for other in [Method::Alg1L1, Method::AlohaStructured, Method::Greedy] {
            if reduced > e(other) {
                failures.push(format!("s{s} alg1+alg2 {reduced:.4} > {other} {:.4}", e(other)));
            }
        }
    }
    let detail = if failures.is_empty() {
        "alg1+alg2 has the lowest mean expected power among (ii), (iii) and both baselines in all 4 scenarios".into()
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

fn projection_correctness() -> Verdict {
    let mut r = rng(8);
    let row = |r: &mut rand_chacha::ChaCha8Rng| {
        let k = r.random_range(1..=4);
        (0..k).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<f64>>()
    };
    let mut worst_qp: f64 = 0.0;
    let mut worst_idem: f64 = 0.0;
    for _ in 0..1000 {
        let v = row(&mut r);
        let projected = project_simplex_rows(std::slice::from_ref(&v)).unwrap();
        let got = projected.row(0);
        let qp = qp_simplex(&v);
        worst_qp = got.iter().zip(&qp).map(|(a, b)| (a - b).abs()).fold(worst_qp, f64::max);
        let again = project_simplex_rows(&[got.to_vec()]).unwrap();
        worst_idem = again.row(0).iter().zip(got).map(|(a, b)| (a - b).abs()).fold(worst_idem, f64::max);
    }
    let mut expansive = 0;
    for _ in 0..1000 {
        let k = r.random_range(1..=4);
        let u: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
        let pu = project_simplex_rows(&[u.clone()]).unwrap();
        let pv = project_simplex_rows(&[v.clone()]).unwrap();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if dist(pu.row(0), pv.row(0)) > dist(&u, &v) + 1e-12 {
            expansive += 1;
        }
    }
    verdict(
        worst_qp <= 1e-8 && worst_idem <= 1e-12 && expansive == 0,
        format!("QP max diff {worst_qp:.1e} (<= 1e-8), idempotence {worst_idem:.1e}, {expansive}/1000 expansive pairs"),
    )
}

fn feasibility_invariant() -> Verdict {
    let scenario = builtin_scenario(4).unwrap();
    let seed = scenario.seed;
    let net = Network::draw(scenario, seed).unwrap();
    let (a0, p0) = initial_parameters(&net, seed);
    let opts = OptimizeOptions::from_network(&net);
    let (p_min, p_max) = (net.p_min.clone(), net.scenario.p_max);
    let mut worst_row: f64 = 0.0;
    let mut box_violations = 0usize;
    let mut negative = 0usize;
    let mut frames = 0usize;
    optimize(&net, &a0, &p0, &opts, &mut stream(seed, Stream::Activity), &mut |v| {
        frames += 1;
        for row in v.alloc.chunks(v.n_slots) {
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
            negative += row.iter().filter(|&&a| a < 0.0).count();
        }
        box_violations += v.power.iter().zip(&p_min).filter(|&(&p, &lo)| p < lo || p > p_max).count();
    })
    .unwrap();
    verdict(
        frames == opts.n_frames && worst_row <= ROW_SUM_TOL && box_violations == 0 && negative == 0,
        format!(
            "{frames} iterates, max |row sum - 1| {worst_row:.1e} (<= 1e-9), {negative} negative entries, {box_violations} box violations"
        ),
    )
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = run();
        all_pass &= v.pass;
        println!(
            "[{}] {id}. {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    };
    report(1, "gradient vs central differences", &mut gradient_check);
    report(2, "oracle equivalence", &mut oracle_equivalence);
    report(3, "exact vs Monte Carlo", &mut exact_vs_monte_carlo);
    report(4, "smoothing limit", &mut smoothing_limit);

    let start = Instant::now();
    let outcome = experiment();
    println!("      experiment grid: 4 scenarios x 5 methods x 10 seeds ({:.1}s)", start.elapsed().as_secs_f64());
    let m = means(&outcome);
    report(5, "power reduction safety", &mut || power_reduction_safety(&outcome));
    report(6, "throughput improvement", &mut || throughput_improvement(&m));
    report(7, "power comparison", &mut || power_comparison(&m));
    report(8, "simplex projection", &mut projection_correctness);
    report(9, "feasibility invariant", &mut feasibility_invariant);

    println!(
        "\n{:<9} {:<17} {:>8} {:>8}",
        "scenario", "method", "mean T^N", "E[P'X]"
    );
    for ((s, method), (t, p)) in &m {
        println!("{:<9} {:<17} {:>8.4} {:>8.4}", s, method.name(), t, p);
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
