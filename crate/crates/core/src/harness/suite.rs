//! Measurements behind the acceptance criteria and the calibration run.
//!
//! Each function is a pure function of its seed. Calibration runs them on
//! [`CAL_SEED`] to fix the constants; the acceptance suite reruns them on
//! [`VAL_SEED`] and checks against the frozen values.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::brute::{center_opt, median_opt};
use super::generators::{
    bernoulli_indicator, bernoulli_kps, gen_instance, gen_kps, FacilitySpec, KpsSpec,
};
use super::rng::{derive_seed, stream};
use super::stats::{try_monte_carlo, Summary};
use crate::alteration::{concentration_trial, required_q, ConcentrationStats, Generator};
use crate::center::{
    multi_knapsack_center, standard_knapsack_center, CenterMode, MultiCenterConfig,
};
use crate::error::{Error, Result};
use crate::facility::FacilityInstance;
use crate::kps::{q_potential, validate_e_properties, EReport, PartitionSystem, EPS_EQ};
use crate::median_bipoint::km_bifactor;
use crate::median_pairs::MedianPipeline;
use crate::rounding::{full_kpr, kpr, kpr_depround};
use crate::tails::{lower_tail_check, small_q_gap_check, upper_tail_check, TailReport};

pub const CAL_SEED: u64 = 20_240_601;
pub const VAL_SEED: u64 = 7_700_417;

fn instance_rng(seed: u64, tag: &str, k: usize) -> super::rng::Stream {
    stream(seed, tag, k as u64)
}

// ---- exact invariants ----

/// Seeded KPR runs with `n <= 80`, `r <= 25`, `m` cycling through 1..=3 and `t = 13 m`.
pub fn e_property_runs(seed: u64, runs: usize) -> Result<Vec<EReport>> {
    (0..runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = instance_rng(seed, "suite/e-props", k);
            let m = 1 + k % 3;
            let r = rng.gen_range(2..=25);
            let max_size = (80 / r).min(8);
            let spec = KpsSpec {
                blocks: r,
                min_size: 2,
                max_size,
                m,
                tight: k % 2 == 0,
            };
            let (ps, y) = gen_kps(&spec, &mut rng)?;
            let out = kpr(&ps, &y, 13 * m, &mut rng)?;
            validate_e_properties(&y, out.as_slice(), &ps, 13 * m)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub instance: usize,
    pub item: usize,
    pub y: f64,
    pub mean: f64,
    pub tolerance: f64,
}

impl MarginalCheck {
    pub fn ok(&self) -> bool {
        (self.mean - self.y).abs() <= self.tolerance
    }
}

/// Per-coordinate means of KPR outputs; tolerance `4 sqrt(y(1-y)/N) + 1e-3`.
pub fn marginal_runs(seed: u64, instances: usize, trials: usize) -> Result<Vec<MarginalCheck>> {
    let mut out = Vec::new();
    for k in 0..instances {
        let mut rng = instance_rng(seed, "suite/marginal", k);
        let m = 1 + k % 3;
        let spec = KpsSpec {
            blocks: 20,
            min_size: 2,
            max_size: 5,
            m,
            tight: false,
        };
        let (ps, y) = gen_kps(&spec, &mut rng)?;
        let runs = try_monte_carlo(
            trials,
            derive_seed(seed, "suite/marginal", k as u64),
            "kpr",
            |_, rng| Ok(kpr(&ps, &y, 13 * m, rng)?.into_inner()),
        )?;
        for (j, &yj) in y.iter().enumerate() {
            let mean = runs.iter().map(|r| r[j]).sum::<f64>() / trials as f64;
            let tolerance = 4.0 * (yj * (1.0 - yj) / trials as f64).sqrt() + 1e-3;
            out.push(MarginalCheck {
                instance: k,
                item: j,
                y: yj,
                mean,
                tolerance,
            });
        }
    }
    Ok(out)
}

// ---- potential gaps ----

/// Mean of `Q(W, y')` at one `(instance, W, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapProbe {
    pub instance: usize,
    pub probe: usize,
    pub m: usize,
    pub t: usize,
    /// `|Support(W)|`.
    pub d: usize,
    pub q0: f64,
    pub mean: f64,
    pub stderr: f64,
}

impl GapProbe {
    pub fn gap(&self) -> f64 {
        self.mean - self.q0
    }
}

/// One item from each of `blocks` random blocks.
fn random_w<R: Rng + ?Sized>(ps: &PartitionSystem, blocks: usize, rng: &mut R) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..ps.r()).collect();
    ids.shuffle(rng);
    ids.truncate(blocks);
    ids.iter()
        .map(|&b| *ps.block(b).choose(rng).expect("non-empty block"))
        .collect()
}

fn probe_q(
    ps: &PartitionSystem,
    y: &[f64],
    w: &[usize],
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<Summary> {
    let qs = try_monte_carlo(trials, seed, "suite/q", |_, rng| {
        q_potential(w, kpr(ps, y, t, rng)?.as_slice(), ps)
    })?;
    Ok(Summary::of(&qs))
}

/// Additive gap probes on `t in {13m, 50m, 200m}`, `m in {1, 2}`.
pub fn gap_probes(seed: u64, trials: usize) -> Result<Vec<GapProbe>> {
    let mut out = Vec::new();
    for (k, m) in [1usize, 1, 2, 2].into_iter().enumerate() {
        let mut rng = instance_rng(seed, "suite/gap", k);
        let spec = KpsSpec {
            blocks: 100,
            min_size: 3,
            max_size: 5,
            m,
            tight: true,
        };
        let (ps, y) = gen_kps(&spec, &mut rng)?;
        for probe in 0..3 {
            let w = random_w(&ps, 4 + 2 * probe, &mut rng);
            let q0 = q_potential(&w, &y, &ps)?;
            for mult in [13, 50, 200] {
                let t = mult * m;
                let s = probe_q(
                    &ps,
                    &y,
                    &w,
                    t,
                    trials,
                    derive_seed(seed, "suite/gap", (k * 1000 + probe * 10) as u64),
                )?;
                out.push(GapProbe {
                    instance: k,
                    probe,
                    m,
                    t,
                    d: w.len(),
                    q0,
                    mean: s.mean,
                    stderr: s.stderr(),
                });
            }
        }
    }
    Ok(out)
}

/// Multiplicative probes at `t = 10000 m d + 1`.
pub fn mult_probes(seed: u64, trials: usize) -> Result<Vec<GapProbe>> {
    let mut out = Vec::new();
    for (k, m) in [1usize, 2, 3].into_iter().enumerate() {
        let mut rng = instance_rng(seed, "suite/mult", k);
        let spec = KpsSpec {
            blocks: 40,
            min_size: 2,
            max_size: 5,
            m,
            tight: false,
        };
        let (ps, y) = gen_kps(&spec, &mut rng)?;
        for (probe, d) in [1usize, 2, 4].into_iter().enumerate() {
            let w = random_w(&ps, d, &mut rng);
            let t = 10_000 * m * d + 1;
            let q0 = q_potential(&w, &y, &ps)?;
            let s = probe_q(
                &ps,
                &y,
                &w,
                t,
                trials,
                derive_seed(seed, "suite/mult", (k * 10 + probe) as u64),
            )?;
            out.push(GapProbe {
                instance: k,
                probe,
                m,
                t,
                d,
                q0,
                mean: s.mean,
                stderr: s.stderr(),
            });
        }
    }
    Ok(out)
}

// ---- concentration and pseudo-solutions ----

pub const CONCENTRATION_N: [usize; 3] = [64, 256, 1024];
pub const CONCENTRATION_DELTA: f64 = 0.01;

pub fn concentration_generators() -> Vec<Generator> {
    vec![Generator::Bernoulli { p: 0.5 }, Generator::BallsInBins]
}

pub fn concentration_runs(
    seed: u64,
    trials: usize,
) -> Result<Vec<(Generator, ConcentrationStats)>> {
    let mut out = Vec::new();
    for (g, gen) in concentration_generators().into_iter().enumerate() {
        for &n in &CONCENTRATION_N {
            let s = concentration_trial(
                &gen,
                n,
                CONCENTRATION_DELTA,
                trials,
                derive_seed(seed, "suite/conc", (g * 10_000 + n) as u64),
            )?;
            out.push((gen, s));
        }
    }
    Ok(out)
}

pub const PSEUDO_DELTA: f64 = 0.05;

/// Discards needed by FullKPR outputs in one `(m, t)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoCell {
    pub m: usize,
    pub t: usize,
    pub qs: Vec<usize>,
}

impl PseudoCell {
    /// `sqrt(t ln(m / delta))`.
    pub fn unit(&self) -> f64 {
        (self.t as f64 * (self.m as f64 / PSEUDO_DELTA).ln()).sqrt()
    }

    pub fn bound(&self, c4: f64) -> usize {
        (c4 * self.unit()).ceil() as usize
    }

    pub fn success(&self, c4: f64) -> f64 {
        let q = self.bound(c4);
        self.qs.iter().filter(|&&x| x <= q).count() as f64 / self.qs.len() as f64
    }
}

/// `m in {1,2,3}`, `t in {13m, 25m, 50m, 100m}` on tight rows.
pub fn pseudo_runs(seed: u64, trials: usize) -> Result<Vec<PseudoCell>> {
    let mut out = Vec::new();
    for m in 1..=3usize {
        let mut rng = instance_rng(seed, "suite/pseudo", m);
        let spec = KpsSpec {
            blocks: 120,
            min_size: 3,
            max_size: 5,
            m,
            tight: true,
        };
        let (ps, y) = gen_kps(&spec, &mut rng)?;
        for mult in [13usize, 25, 50, 100] {
            let t = mult * m;
            let qs = try_monte_carlo(
                trials,
                derive_seed(seed, "suite/pseudo", (m * 1000 + mult) as u64),
                "full",
                |_, rng| {
                    let yy = full_kpr(&ps, &y, t, rng)?;
                    let s: Vec<usize> = (0..ps.n()).filter(|&j| yy.as_slice()[j] > 0.5).collect();
                    Ok(required_q(&s, ps.rows()))
                },
            )?;
            out.push(PseudoCell { m, t, qs });
        }
    }
    Ok(out)
}

// ---- knapsack median ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifactorRun {
    pub instance: usize,
    pub opt: f64,
    /// `None` when the retry cap was hit.
    pub cost: Option<f64>,
    pub q: usize,
    pub t: usize,
}

pub fn median_instance(
    seed: u64,
    tag: &str,
    k: usize,
    m: usize,
    nf: (usize, usize),
    nc: usize,
) -> Result<FacilityInstance> {
    let mut rng = instance_rng(seed, tag, k);
    let n = rng.gen_range(nf.0..=nf.1);
    gen_instance(&FacilitySpec::new(n, nc, m), &mut rng)
}

pub fn bifactor_runs(seed: u64, instances: usize, gamma: f64) -> Result<Vec<BifactorRun>> {
    (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = median_instance(seed, "suite/bifactor", k, 1, (6, 12), 15)?;
            let (_, opt) = median_opt(&inst)?;
            let mut rng = stream(seed, "suite/bifactor-run", k as u64);
            match km_bifactor(&inst, gamma, &mut rng) {
                Ok(o) => Ok(BifactorRun {
                    instance: k,
                    opt,
                    cost: Some(o.cost),
                    q: o.solution.q,
                    t: o.t,
                }),
                Err(Error::RetryCap { best, .. }) => Ok(BifactorRun {
                    instance: k,
                    opt,
                    cost: None,
                    q: required_q(&best, &inst.weights),
                    t: crate::median_bipoint::bifactor_t(gamma),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Pipeline validators on `instances` two-row instances; one message per failure.
pub fn median_validator_runs(seed: u64, instances: usize) -> Vec<(usize, String)> {
    (0..instances)
        .into_par_iter()
        .filter_map(|k| {
            let check = || -> Result<()> {
                let inst = median_instance(seed, "suite/median-valid", k, 2, (6, 12), 15)?;
                let p = MedianPipeline::prepare(&inst)?;
                p.lp.validate(&inst)?;
                p.bundling.validate(&inst, &p.split)?;
                for block in p.pairs.system.blocks() {
                    let s: f64 = block.iter().map(|&v| p.pairs.z[v]).sum();
                    if (s - 1.0).abs() > EPS_EQ {
                        return Err(Error::Bundling(format!("pair block mass {s}")));
                    }
                }
                Ok(())
            };
            check().err().map(|e| (k, e.to_string()))
        })
        .collect()
}

/// Mean `cost / LP` of FullKPR pair selection at threshold `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianCostRun {
    pub instance: usize,
    pub lp: f64,
    pub ratios: Vec<f64>,
}

pub fn median_cost_runs(
    seed: u64,
    instances: usize,
    trials: usize,
    t: usize,
) -> Result<Vec<MedianCostRun>> {
    (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = median_instance(seed, "suite/median-cost", k, 2, (6, 10), 12)?;
            let p = MedianPipeline::prepare(&inst)?;
            let lp = p.lp.objective;
            let ratios = try_monte_carlo(
                trials,
                derive_seed(seed, "suite/median-cost", k as u64),
                "pairs",
                |_, rng| Ok(p.kpr(&inst, t, rng)?.cost / lp),
            )?;
            Ok(MedianCostRun {
                instance: k,
                lp,
                ratios,
            })
        })
        .collect()
}

/// Gap of `Q(W-bar, Z)` against the per-client scale
/// `(m^2/t)(r_j/R_j + sum_{U_j - W} x_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairProbe {
    pub instance: usize,
    pub client: usize,
    pub t: usize,
    pub q0: f64,
    pub mean: f64,
    pub stderr: f64,
    pub scale: f64,
}

pub fn pair_gap_probes(seed: u64, trials: usize) -> Result<Vec<PairProbe>> {
    let mut out = Vec::new();
    for k in 0..6 {
        let m = 1 + k % 2;
        let inst = median_instance(seed, "suite/pair-gap", k, m, (8, 10), 14)?;
        let p = MedianPipeline::prepare(&inst)?;
        let mut rng = instance_rng(seed, "suite/pair-gap-w", k);
        for (pos, &j) in p.bundling.core.iter().enumerate().take(3) {
            // nearby facilities: the origins of a random half of j's support
            let mut support: Vec<usize> = (0..p.split.columns())
                .filter(|&c| p.split.x[j][c] > EPS_EQ)
                .collect();
            support.shuffle(&mut rng);
            support.truncate(support.len().div_ceil(2));
            let mut w: Vec<usize> = support.iter().map(|&c| p.split.origin[c]).collect();
            w.sort_unstable();
            w.dedup();
            let wbar = p.pairs.lift(&w);
            let q0 = q_potential(&wbar, &p.pairs.z, &p.pairs.system)?;
            let outside: f64 = p.bundling.bundles[pos]
                .iter()
                .filter(|&&c| !w.contains(&p.split.origin[c]))
                .map(|&c| p.split.x[j][c])
                .sum();
            let rr = p.bundling.radius[pos];
            let ratio = if rr.is_finite() && rr > 0.0 {
                p.split.r[j] / rr
            } else {
                0.0
            };
            for mult in [13usize, 26] {
                let t = mult * m;
                let qs = try_monte_carlo(
                    trials,
                    derive_seed(seed, "suite/pair-gap", (k * 100 + pos * 10 + mult) as u64),
                    "z",
                    |_, rng| {
                        let zz = kpr(&p.pairs.system, &p.pairs.z, t, rng)?;
                        q_potential(&wbar, zz.as_slice(), &p.pairs.system)
                    },
                )?;
                let s = Summary::of(&qs);
                let scale = (m * m) as f64 / t as f64 * (ratio + outside);
                out.push(PairProbe {
                    instance: k,
                    client: j,
                    t,
                    q0,
                    mean: s.mean,
                    stderr: s.stderr(),
                    scale,
                });
            }
        }
    }
    Ok(out)
}

// ---- knapsack center ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterRun {
    pub instance: usize,
    pub opt: f64,
    pub radius: f64,
    /// Largest `M(S)` over every round's set.
    pub max_load: f64,
    /// Largest `d(j, S) / OPT` over rounds and clients.
    pub max_ratio: f64,
    /// Largest per-client mean over the output distribution, in units of OPT.
    pub max_mean_ratio: f64,
    pub regret_ok: bool,
    pub mod_ok: bool,
    pub rounds: usize,
}

fn center_instance(
    seed: u64,
    tag: &str,
    k: usize,
    m: usize,
    nf: (usize, usize),
    nc: usize,
) -> Result<FacilityInstance> {
    median_instance(seed, tag, k, m, nf, nc)
}

fn ratio(d: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        d / opt
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn center_runs(
    seed: u64,
    instances: usize,
    gamma: f64,
    rounds: Option<usize>,
) -> Result<Vec<CenterRun>> {
    (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = center_instance(seed, "suite/center", k, 1, (6, 12), 12)?;
            let (_, opt) = center_opt(&inst)?;
            let mut rng = stream(seed, "suite/center-run", k as u64);
            let out = standard_knapsack_center(&inst, gamma, None, rounds, &mut rng)?;
            let max_load = out
                .rounds
                .iter()
                .map(|r| inst.loads(&r.set)[0])
                .fold(0.0, f64::max);
            let max_ratio = out
                .rounds
                .iter()
                .map(|r| ratio(inst.radius(&r.set), opt))
                .fold(0.0, f64::max);
            let max_mean_ratio = out
                .mean_dist
                .iter()
                .map(|&d| ratio(d * out.radius, opt))
                .fold(0.0, f64::max);
            let mod_ok = out
                .rounds
                .iter()
                .all(|r| r.mod_check.is_none_or(|(l, h)| l <= h + 1e-12));
            Ok(CenterRun {
                instance: k,
                opt,
                radius: out.radius,
                max_load,
                max_ratio,
                max_mean_ratio,
                regret_ok: out.regret_ok(),
                mod_ok,
                rounds: out.rounds.len(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiCenterRun {
    pub instance: usize,
    pub opt: f64,
    /// Discards needed by each cost-accepted round's set.
    pub accepted_qs: Vec<usize>,
    pub rounds: usize,
    pub max_ratio: f64,
}

/// `m sqrt(ln(m/gamma)/gamma)`.
pub fn multi_center_unit(m: usize, gamma: f64) -> f64 {
    let mf = m as f64;
    mf * ((mf / gamma).ln() / gamma).sqrt()
}

/// First-mode multi-knapsack center with acceptance on cost only, so the
/// certificate rate can be measured.
pub fn multi_center_runs(
    seed: u64,
    instances: usize,
    gamma: f64,
    rounds: Option<usize>,
) -> Result<Vec<MultiCenterRun>> {
    (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = center_instance(seed, "suite/mcenter", k, 2, (6, 10), 10)?;
            let (_, opt) = center_opt(&inst)?;
            let mut cfg = MultiCenterConfig::new(CenterMode::Multi1, gamma, 1.0);
            cfg.enforce_certificate = false;
            cfg.rounds = rounds;
            let mut rng = stream(seed, "suite/mcenter-run", k as u64);
            let out = multi_knapsack_center(&inst, &cfg, &mut rng)?;
            Ok(MultiCenterRun {
                instance: k,
                opt,
                accepted_qs: out
                    .rounds
                    .iter()
                    .filter(|r| r.accepted)
                    .map(|r| required_q(&r.set, &inst.weights))
                    .collect(),
                rounds: out.rounds.len(),
                max_ratio: out
                    .rounds
                    .iter()
                    .map(|r| ratio(inst.radius(&r.set), opt))
                    .fold(0.0, f64::max),
            })
        })
        .collect()
}

// ---- tails ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailGrid {
    pub small_q: TailReport,
    pub lower: TailReport,
    pub upper: TailReport,
}

/// Small-`Q`: `t in {13m, 50m, 200m}`, `b in {3, 10}`. Tails: Bernoulli-like
/// blocks with `mu = 5`, `t in {13m, 50m}`, `m in {1, 2}`.
pub fn tail_grid(seed: u64, trials: usize, c8: f64, c9: f64, c10: f64) -> Result<TailGrid> {
    let mut small: Option<TailReport> = None;
    for (k, m) in [1usize, 2].into_iter().enumerate() {
        let mut rng = instance_rng(seed, "suite/small-q", k);
        let (ps, y) = gen_kps(
            &KpsSpec {
                blocks: 100,
                min_size: 3,
                max_size: 5,
                m,
                tight: true,
            },
            &mut rng,
        )?;
        let w = random_w(&ps, 8, &mut rng);
        for mult in [13usize, 50, 200] {
            for b in [3.0, 10.0] {
                let rep = small_q_gap_check(
                    &ps,
                    &y,
                    &w,
                    mult * m,
                    b,
                    trials,
                    derive_seed(seed, "suite/small-q", (k * 1000 + mult) as u64),
                    c8,
                )?;
                small = Some(match small {
                    None => rep,
                    Some(s) => s.merge(rep)?,
                });
            }
        }
    }
    let mut lower: Option<TailReport> = None;
    let mut upper: Option<TailReport> = None;
    for (k, m) in [1usize, 2].into_iter().enumerate() {
        let mut rng = instance_rng(seed, "suite/tails", k);
        let (ps, y) = bernoulli_kps(20, 0.25, m, &mut rng)?;
        let w = bernoulli_indicator(20);
        for mult in [13usize, 50] {
            let t = mult * m;
            for (i, d) in [0.2, 0.4, 0.6].into_iter().enumerate() {
                let rep = lower_tail_check(
                    &ps,
                    &y,
                    &w,
                    5.0,
                    d,
                    t,
                    trials,
                    derive_seed(seed, "suite/lower", (k * 1000 + mult * 10 + i) as u64),
                    c9,
                )?;
                lower = Some(match lower {
                    None => rep,
                    Some(s) => s.merge(rep)?,
                });
            }
            for (i, d) in [0.25, 0.5, 1.0].into_iter().enumerate() {
                let rep = upper_tail_check(
                    &ps,
                    &y,
                    &w,
                    5.0,
                    d,
                    t,
                    trials,
                    derive_seed(seed, "suite/upper", (k * 1000 + mult * 10 + i) as u64),
                    c10,
                )?;
                upper = Some(match upper {
                    None => rep,
                    Some(s) => s.merge(rep)?,
                });
            }
        }
    }
    Ok(TailGrid {
        small_q: small.expect("non-empty grid"),
        lower: lower.expect("non-empty grid"),
        upper: upper.expect("non-empty grid"),
    })
}

// ---- cylinder products ----

/// `E[prod_S X_i prod_T (1 - X_i)]` for `X = KPR-DepRound(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderProbe {
    pub t: usize,
    pub s: Vec<usize>,
    pub tt: Vec<usize>,
    pub target: f64,
    pub mean: f64,
    pub stderr: f64,
}

pub fn cylinder_value(x: &[f64], s: &[usize], tt: &[usize]) -> f64 {
    s.iter().map(|&i| x[i]).product::<f64>() * tt.iter().map(|&i| 1.0 - x[i]).product::<f64>()
}

/// 40 coordinates, one row, `t in {13, 26, 52}`, 12 random `(S, T)` with
/// `|S| + |T| <= 3`.
pub fn cylinder_probes(seed: u64, trials: usize) -> Result<Vec<CylinderProbe>> {
    let mut rng = instance_rng(seed, "suite/cylinder", 0);
    let v = 40;
    let x: Vec<f64> = (0..v).map(|_| rng.gen_range(0.2..0.8)).collect();
    let a: Vec<f64> = (0..v).map(|_| rng.gen_range(0.0..1.0)).collect();
    let rows = vec![a];
    let mut sets = Vec::new();
    for k in 0..12 {
        let size = 1 + k % 3;
        let mut ids: Vec<usize> = (0..v).collect();
        ids.shuffle(&mut rng);
        let split = rng.gen_range(0..=size);
        sets.push((ids[..split].to_vec(), ids[split..size].to_vec()));
    }
    let mut out = Vec::new();
    for t in [13usize, 26, 52] {
        let samples = try_monte_carlo(
            trials,
            derive_seed(seed, "suite/cylinder", t as u64),
            "dep",
            |_, rng| kpr_depround(&x, &rows, t, rng),
        )?;
        for (s, tt) in &sets {
            let vals: Vec<f64> = samples.iter().map(|xx| cylinder_value(xx, s, tt)).collect();
            let sm = Summary::of(&vals);
            out.push(CylinderProbe {
                t,
                s: s.clone(),
                tt: tt.clone(),
                target: cylinder_value(&x, s, tt),
                mean: sm.mean,
                stderr: sm.stderr(),
            });
        }
    }
    Ok(out)
}

// ---- pair products under FullKPR ----

/// `E[Y_a Y_b]` against `y_a y_b` for `a`, `b` in distinct blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductProbe {
    pub m: usize,
    pub t: usize,
    pub pair: (usize, usize),
    pub target: f64,
    pub mean: f64,
    pub stderr: f64,
}

pub fn product_probes(seed: u64, trials: usize) -> Result<Vec<ProductProbe>> {
    let mut out = Vec::new();
    for (k, m) in [1usize, 2].into_iter().enumerate() {
        let mut rng = instance_rng(seed, "suite/product", k);
        let (ps, y) = gen_kps(
            &KpsSpec {
                blocks: 30,
                min_size: 2,
                max_size: 4,
                m,
                tight: true,
            },
            &mut rng,
        )?;
        let pairs: Vec<(usize, usize)> = (0..6)
            .map(|_| {
                let w = random_w(&ps, 2, &mut rng);
                (w[0], w[1])
            })
            .collect();
        for mult in [13usize, 26, 52] {
            let t = mult * m;
            let samples = try_monte_carlo(
                trials,
                derive_seed(seed, "suite/product", (k * 100 + mult) as u64),
                "full",
                |_, rng| Ok(full_kpr(&ps, &y, t, rng)?.into_inner()),
            )?;
            for &(a, b) in &pairs {
                let vals: Vec<f64> = samples.iter().map(|yy| yy[a] * yy[b]).collect();
                let sm = Summary::of(&vals);
                out.push(ProductProbe {
                    m,
                    t,
                    pair: (a, b),
                    target: y[a] * y[b],
                    mean: sm.mean,
                    stderr: sm.stderr(),
                });
            }
        }
    }
    Ok(out)
}
