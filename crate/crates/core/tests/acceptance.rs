//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Runs on the validation seed against the
//! frozen calibration fixture.

use std::process::ExitCode;
use std::time::Instant;

use kpr_core::alteration::Generator;
use kpr_core::harness::calibration::{self, Calibration};
use kpr_core::harness::stats::Z95;
use kpr_core::harness::suite::{self, VAL_SEED};
use kpr_core::tails::appendix;
use kpr_core::Result;
use statrs::distribution::{Binomial, DiscreteCDF};

// Tolerances.
const BIFACTOR_RATIO: f64 = 1.0 + 1.732_050_807_568_877_2 + 0.2;
const BIFACTOR_SHARE: f64 = 0.95;
const MEDIAN_BASE: f64 = 3.25;
const CENTER_MEAN: f64 = 1.0 + 2.0 / std::f64::consts::E + 0.15;
const LOAD_SLACK: f64 = 1e-9;
const CERT_SHARE: f64 = 0.95;
const TIGHTNESS_FACTOR: f64 = 3.0;
const APPENDIX_SLACK: f64 = 1e-12;

type Outcome = Result<(bool, String)>;

fn ac1() -> Outcome {
    let reps = suite::e_property_runs(VAL_SEED, 500)?;
    let bad = reps.iter().filter(|r| !r.all()).count();
    let worst_b = reps.iter().map(|r| r.max_block_error).fold(0.0, f64::max);
    let worst_k = reps
        .iter()
        .map(|r| r.max_knapsack_error)
        .fold(0.0, f64::max);
    Ok((
        bad == 0,
        format!(
            "{} runs, {bad} failures, max block err {worst_b:.1e}, max knapsack err {worst_k:.1e}",
            reps.len()
        ),
    ))
}

fn ac2() -> Outcome {
    let checks = suite::marginal_runs(VAL_SEED, 10, 20_000)?;
    let bad: Vec<_> = checks.iter().filter(|c| !c.ok()).collect();
    let worst = checks
        .iter()
        .map(|c| (c.mean - c.y).abs() / c.tolerance)
        .fold(0.0, f64::max);
    Ok((
        bad.is_empty(),
        format!(
            "{} coordinates, {} outside tolerance, worst |dev|/tol {worst:.3}",
            checks.len(),
            bad.len()
        ),
    ))
}

fn ac3(cal: &Calibration) -> Outcome {
    let c1 = cal.constants.c1;
    let probes = suite::gap_probes(VAL_SEED, cal.grid.gap_trials)?;
    let mut bound_fail = 0;
    for p in &probes {
        if p.gap() - Z95 * p.stderr > c1 * (p.m * p.m) as f64 / p.t as f64 {
            bound_fail += 1;
        }
    }
    let mut trend_fail = 0;
    for p13 in probes.iter().filter(|p| p.t == 13 * p.m) {
        let p200 = probes
            .iter()
            .find(|p| p.instance == p13.instance && p.probe == p13.probe && p.t == 200 * p.m)
            .expect("grid has 200m");
        let se = (p13.stderr.powi(2) + p200.stderr.powi(2)).sqrt();
        if p200.gap() > p13.gap() + 2.0 * se {
            trend_fail += 1;
        }
    }
    Ok((
        bound_fail == 0 && trend_fail == 0,
        format!(
            "{} probes, c1 = {c1:.3}, {bound_fail} above bound, {trend_fail} trend violations",
            probes.len()
        ),
    ))
}

/// `(1 - delta)`-quantile of `(K - n/2)^+` with `K ~ Bin(n, 1/2)`.
fn binomial_deviation_quantile(n: usize, delta: f64) -> f64 {
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    let k = b.inverse_cdf(1.0 - delta);
    (k as f64 - (n / 2) as f64).max(0.0)
}

fn ac4(cal: &Calibration) -> Outcome {
    let c3 = cal.constants.c3;
    let runs = suite::concentration_runs(VAL_SEED, cal.grid.concentration_trials)?;
    let mut msgs = Vec::new();
    let mut ok = true;
    for (g, s) in &runs {
        let bound = c3 * (s.n as f64 * (1.0 / s.delta).ln()).sqrt();
        if s.greedy_quantile > bound {
            ok = false;
            msgs.push(format!(
                "{g:?} n={} quantile {} > {bound:.2}",
                s.n, s.greedy_quantile
            ));
        }
        if matches!(g, Generator::Bernoulli { .. }) {
            let oracle = binomial_deviation_quantile(s.n, s.delta);
            let within = s.greedy_quantile <= TIGHTNESS_FACTOR * oracle
                && oracle <= TIGHTNESS_FACTOR * s.greedy_quantile;
            if !within {
                ok = false;
            }
            msgs.push(format!("n={} q={} oracle={oracle}", s.n, s.greedy_quantile));
        }
    }
    Ok((ok, format!("c3 = {c3:.3}; {}", msgs.join(", "))))
}

fn ac5(cal: &Calibration) -> Outcome {
    let c4 = cal.constants.c4;
    let cells = suite::pseudo_runs(VAL_SEED, cal.grid.pseudo_trials)?;
    let worst = cells.iter().map(|c| c.success(c4)).fold(1.0, f64::min);
    Ok((
        worst >= 0.95,
        format!(
            "{} cells, c4 = {c4:.3}, lowest certification rate {worst:.3}",
            cells.len()
        ),
    ))
}

fn ac6() -> Outcome {
    let runs = suite::bifactor_runs(VAL_SEED, 50, 0.1)?;
    let accepted: Vec<_> = runs
        .iter()
        .filter_map(|r| r.cost.map(|c| (c, r.opt)))
        .collect();
    let good = accepted
        .iter()
        .filter(|(c, o)| *c <= BIFACTOR_RATIO * o + 1e-12)
        .count();
    let share = if accepted.is_empty() {
        0.0
    } else {
        good as f64 / accepted.len() as f64
    };
    let q_bad = runs.iter().filter(|r| r.q > 4 * r.t).count();
    Ok((
        share >= BIFACTOR_SHARE && q_bad == 0,
        format!(
            "{} accepted of {}, ratio ok in {share:.3}, {q_bad} runs with q > 4t",
            accepted.len(),
            runs.len()
        ),
    ))
}

fn ac7(cal: &Calibration) -> Outcome {
    let invalid = suite::median_validator_runs(VAL_SEED, 200);
    let t = cal.grid.median_t;
    let m = 2usize;
    let bound = MEDIAN_BASE + cal.constants.c_median_lp * (m * m) as f64 / t as f64;
    let runs = suite::median_cost_runs(
        VAL_SEED,
        cal.grid.median_instances,
        cal.grid.median_trials,
        t,
    )?;
    let mut above = 0;
    let mut worst = 0.0f64;
    for r in &runs {
        let s = kpr_core::harness::stats::Summary::of(&r.ratios);
        worst = worst.max(s.mean);
        if s.mean - Z95 * s.stderr() > bound {
            above += 1;
        }
    }
    let out_of_regime = t < 10_000 * m * m;
    Ok((
        invalid.is_empty() && above == 0,
        format!(
            "{} validator failures on 200; t = {t}{}; worst mean cost/LP {worst:.3} vs {bound:.3}",
            invalid.len(),
            if out_of_regime {
                " (out of regime)"
            } else {
                ""
            }
        ),
    ))
}

fn ac8() -> Outcome {
    let runs = suite::center_runs(VAL_SEED, 30, 0.1, None)?;
    let load_bad = runs
        .iter()
        .filter(|r| r.max_load > 1.0 + LOAD_SLACK)
        .count();
    let dist_bad = runs
        .iter()
        .filter(|r| r.max_ratio > 3.0 * (1.0 + LOAD_SLACK))
        .count();
    let mean_bad = runs
        .iter()
        .filter(|r| r.max_mean_ratio > CENTER_MEAN)
        .count();
    let worst = runs.iter().map(|r| r.max_mean_ratio).fold(0.0, f64::max);
    // runs where some round did not land on an optimal set
    let nontrivial = runs
        .iter()
        .filter(|r| r.max_ratio > 1.0 + LOAD_SLACK)
        .count();
    Ok((
        load_bad + dist_bad + mean_bad == 0,
        format!(
            "{} instances ({nontrivial} non-trivial); load {load_bad}, 3*OPT {dist_bad}, mean {mean_bad} failures; worst mean {worst:.3}",
            runs.len()
        ),
    ))
}

fn ac9(cal: &Calibration) -> Outcome {
    let gamma = cal.grid.multi_center_gamma;
    let c6 = cal.constants.c6;
    let q = (c6 * suite::multi_center_unit(2, gamma)).ceil() as usize;
    let runs = suite::multi_center_runs(VAL_SEED, cal.grid.multi_center_instances, gamma, None)?;
    let qs: Vec<usize> = runs
        .iter()
        .flat_map(|r| r.accepted_qs.iter().copied())
        .collect();
    let share = if qs.is_empty() {
        0.0
    } else {
        qs.iter().filter(|&&x| x <= q).count() as f64 / qs.len() as f64
    };
    let dist_bad = runs
        .iter()
        .filter(|r| r.max_ratio > 3.0 * (1.0 + LOAD_SLACK))
        .count();
    Ok((
        share >= CERT_SHARE && dist_bad == 0,
        format!(
            "{} accepted rounds, certified at q = {q} in {share:.3}; {dist_bad} runs above 3*OPT",
            qs.len()
        ),
    ))
}

fn ac10(cal: &Calibration) -> Outcome {
    let c = &cal.constants;
    let g = suite::tail_grid(VAL_SEED, cal.grid.tail_trials, c.c8, c.c9, c.c10)?;
    let fails = |r: &kpr_core::tails::TailReport| r.cells.iter().filter(|c| !c.pass).count();
    let (fs, fl, fu) = (fails(&g.small_q), fails(&g.lower), fails(&g.upper));
    let appendix = [
        ("product", appendix::product_vs_power(100_000, VAL_SEED)),
        ("bernoulli", appendix::bernoulli_inequality(400)),
        ("cosh-shift", appendix::cosh_shift(316, 6)),
        ("exp-step", appendix::exp_step(200)),
    ];
    let app_bad: Vec<_> = appendix
        .iter()
        .filter(|(_, v)| *v > APPENDIX_SLACK)
        .map(|(n, _)| *n)
        .collect();
    let log_ratio = appendix::cosh_log_ratio(60);
    let ok = fs + fl + fu == 0 && app_bad.is_empty() && log_ratio <= 1.0;
    Ok((
        ok,
        format!(
            "cells failing: small-Q {fs}/{}, lower {fl}/{}, upper {fu}/{}; appendix violations {app_bad:?}; cosh-log ratio {log_ratio:.3}",
            g.small_q.cells.len(),
            g.lower.cells.len(),
            g.upper.cells.len()
        ),
    ))
}

fn ac11(cal: &Calibration) -> Outcome {
    let c = cal.constants.c_cylinder;
    let probes = suite::cylinder_probes(VAL_SEED, cal.grid.cylinder_trials)?;
    let bad = probes
        .iter()
        .filter(|p| p.mean - Z95 * p.stderr > (1.0 + c / p.t as f64) * p.target)
        .count();
    let worst = probes
        .iter()
        .filter(|p| p.target > 0.0)
        .map(|p| p.mean / p.target)
        .fold(0.0, f64::max);
    Ok((
        bad == 0,
        format!(
            "{} probes, c = {c:.3}, {bad} above bound, worst mean/target {worst:.4}",
            probes.len()
        ),
    ))
}

fn main() -> ExitCode {
    let cal = match calibration::load() {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL calibration fixture: {e}");
            return ExitCode::FAILURE;
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("AC1 exact invariants", Box::new(ac1)),
        ("AC2 marginals", Box::new(ac2)),
        ("AC3 additive gap", Box::new(|| ac3(&cal))),
        ("AC4 concentration", Box::new(|| ac4(&cal))),
        ("AC5 FullKPR pseudo-solutions", Box::new(|| ac5(&cal))),
        ("AC6 bi-point median", Box::new(ac6)),
        ("AC7 multi-knapsack median", Box::new(|| ac7(&cal))),
        ("AC8 knapsack center", Box::new(ac8)),
        ("AC9 multi-knapsack center", Box::new(|| ac9(&cal))),
        ("AC10 tails", Box::new(|| ac10(&cal))),
        ("AC11 cylinder products", Box::new(|| ac11(&cal))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
