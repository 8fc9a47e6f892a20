//! Knapsack median from a bi-point solution: star rounding, the
//! better-of-two wrapper and the big-facility guessing wrapper.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alteration::{certify_pseudo, max_load, required_q, PseudoSolution};
use crate::error::{Error, Result};
use crate::facility::FacilityInstance;
use crate::harness::brute::{mask_members, MAX_BRUTE_FACILITIES};
use crate::kps::{EPS_EQ, EPS_FRAC};
use crate::rounding::kpr_depround;

/// Two facility sets straddling the budget and the mixing weight `b`, with
/// the per-client and star data derived from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiPointSolution {
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
    pub b: f64,
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// `sigma[k]` is the nearest `F1` facility to `f2[k]`.
    pub sigma: Vec<usize>,
}

fn nearest(set: &[usize], dist: impl Fn(usize) -> f64) -> usize {
    let mut best = set[0];
    for &i in set {
        let (a, b) = (dist(i), dist(best));
        if a < b || (a == b && i < best) {
            best = i;
        }
    }
    best
}

impl BiPointSolution {
    /// Derives client and star data for the triple `(F1, F2, b)`.
    pub fn new(
        inst: &FacilityInstance,
        mut f1: Vec<usize>,
        mut f2: Vec<usize>,
        b: f64,
    ) -> Result<Self> {
        if inst.m() != 1 {
            return Err(Error::InvalidInstance(format!(
                "bi-point rounding needs m = 1, got {}",
                inst.m()
            )));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!("b = {b} outside [0, 1]")));
        }
        f1.sort_unstable();
        f1.dedup();
        f2.sort_unstable();
        f2.dedup();
        let nf = inst.n_facilities();
        if f1.is_empty() || f2.is_empty() {
            return Err(Error::InvalidInstance(
                "bi-point sets must be non-empty".into(),
            ));
        }
        if let Some(&i) = f1.iter().chain(&f2).find(|&&i| i >= nf) {
            return Err(Error::IndexOutOfRange { index: i, n: nf });
        }
        let nc = inst.n_clients();
        let i1: Vec<usize> = (0..nc).map(|j| nearest(&f1, |i| inst.d(j, i))).collect();
        let i2: Vec<usize> = (0..nc).map(|j| nearest(&f2, |i| inst.d(j, i))).collect();
        let d1 = (0..nc).map(|j| inst.d(j, i1[j])).collect();
        let d2 = (0..nc).map(|j| inst.d(j, i2[j])).collect();
        let sigma = f2
            .iter()
            .map(|&k| nearest(&f1, |i| inst.d_ff(k, i)))
            .collect();
        Ok(Self {
            f1,
            f2,
            b,
            i1,
            i2,
            d1,
            d2,
            sigma,
        })
    }

    pub fn weight1(&self, inst: &FacilityInstance) -> f64 {
        inst.loads(&self.f1)[0]
    }

    pub fn weight2(&self, inst: &FacilityInstance) -> f64 {
        inst.loads(&self.f2)[0]
    }

    /// `(1-b) cost(F1) + b cost(F2)`.
    pub fn mixed_cost(&self) -> f64 {
        let c1: f64 = self.d1.iter().sum();
        let c2: f64 = self.d2.iter().sum();
        (1.0 - self.b) * c1 + self.b * c2
    }

    /// Checks the budget properties and the star map; `opt`, when known,
    /// adds the cost property `mixed_cost <= 2 OPT`.
    pub fn validate(&self, inst: &FacilityInstance, opt: Option<f64>) -> Result<()> {
        let (w1, w2) = (self.weight1(inst), self.weight2(inst));
        if w1 > 1.0 + EPS_EQ {
            return Err(Error::InvalidInstance(format!("M(F1) = {w1} exceeds 1")));
        }
        if w2 < 1.0 - EPS_EQ {
            return Err(Error::InvalidInstance(format!("M(F2) = {w2} is below 1")));
        }
        let mix = (1.0 - self.b) * w1 + self.b * w2;
        if mix > 1.0 + EPS_EQ {
            return Err(Error::InvalidInstance(format!(
                "mixed weight {mix} exceeds 1"
            )));
        }
        for (k, &i2) in self.f2.iter().enumerate() {
            let s = self.sigma[k];
            if self.f1.iter().any(|&i| inst.d_ff(i2, i) < inst.d_ff(i2, s)) {
                return Err(Error::InvalidInstance(format!(
                    "sigma({i2}) = {s} is not a nearest F1 facility"
                )));
            }
        }
        if let Some(opt) = opt {
            let mc = self.mixed_cost();
            if mc > 2.0 * opt * (1.0 + EPS_EQ) {
                return Err(Error::InvalidInstance(format!(
                    "mixed cost {mc} exceeds 2 OPT = {}",
                    2.0 * opt
                )));
            }
        }
        Ok(())
    }
}

/// Exhaustive bi-point: the lower convex hull of `{(M(S), cost(S))}` over
/// all non-empty `S`, cut at `M = 1`. Its mixed cost is the Lagrangian
/// bound, so it never exceeds OPT.
pub fn bipoint_oracle(inst: &FacilityInstance) -> Result<BiPointSolution> {
    if inst.m() != 1 {
        return Err(Error::InvalidInstance(format!(
            "bi-point oracle needs m = 1, got {}",
            inst.m()
        )));
    }
    let n = inst.n_facilities();
    if n > MAX_BRUTE_FACILITIES {
        return Err(Error::SizeCap {
            what: "bi-point enumeration",
            size: n,
            cap: MAX_BRUTE_FACILITIES,
        });
    }
    let mut pts: Vec<(f64, f64, u32)> = (1u32..1 << n)
        .into_par_iter()
        .map(|mask| {
            let s = mask_members(mask, n);
            (inst.loads(&s)[0], inst.cost(&s), mask)
        })
        .collect();
    pts.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    if pts[0].0 > 1.0 + EPS_EQ {
        return Err(Error::InvalidInstance("no facility fits the budget".into()));
    }
    if pts[pts.len() - 1].0 < 1.0 - EPS_EQ {
        return Err(Error::InvalidInstance(
            "every facility set fits the budget".into(),
        ));
    }
    let mut hull: Vec<(f64, f64, u32)> = Vec::new();
    for p in pts {
        if hull.last().is_some_and(|q| q.0 == p.0) {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    if let Some(p) = hull.iter().find(|p| (p.0 - 1.0).abs() <= EPS_EQ) {
        let s = mask_members(p.2, n);
        return BiPointSolution::new(inst, s.clone(), s, 0.0);
    }
    let k = hull
        .iter()
        .position(|p| p.0 > 1.0)
        .expect("hull reaches past the budget");
    let (p, q) = (hull[k - 1], hull[k]);
    let b = ((1.0 - p.0) / (q.0 - p.0)).clamp(0.0, 1.0);
    BiPointSolution::new(inst, mask_members(p.2, n), mask_members(q.2, n), b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarsOutcome {
    /// Opened facilities, sorted.
    pub set: Vec<usize>,
    /// Rounded `y` over `F1` and `Z` over `F2`.
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Members of `set` whose rounded value is fractional.
    pub fractional: Vec<usize>,
    /// `sum_{F1} M_i (1 - y_i) + sum_{F2} M_i Z_i`.
    pub weight: f64,
}

/// Rounds a bi-point with two dependent roundings over the stars.
pub fn round_stars<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    bp: &BiPointSolution,
    t: usize,
    rng: &mut R,
) -> Result<StarsOutcome> {
    if t <= 12 {
        return Err(Error::ThresholdTooSmall { t, m: 1 });
    }
    let w = &inst.weights[0];
    let pos1 = |i: usize| bp.f1.binary_search(&i).expect("sigma maps into F1");
    let mut star_weight = vec![0.0; bp.f1.len()];
    for (k, &i) in bp.f2.iter().enumerate() {
        star_weight[pos1(bp.sigma[k])] += w[i];
    }
    let x = vec![bp.b; bp.f1.len()];
    let c: Vec<f64> = bp
        .f1
        .iter()
        .enumerate()
        .map(|(p, &i)| star_weight[p] - w[i])
        .collect();
    let y = kpr_depround(&x, &[c], t, rng)?;
    let z0: Vec<f64> = bp.sigma.iter().map(|&s| y[pos1(s)]).collect();
    let m2: Vec<f64> = bp.f2.iter().map(|&i| w[i]).collect();
    let z = kpr_depround(&z0, &[m2], t, rng)?;

    let mut set = Vec::new();
    let mut fractional = Vec::new();
    let mut weight = 0.0;
    for (p, &i) in bp.f1.iter().enumerate() {
        weight += w[i] * (1.0 - y[p]);
        if y[p] < 1.0 - EPS_FRAC {
            set.push(i);
            if y[p] > EPS_FRAC {
                fractional.push(i);
            }
        }
    }
    for (k, &i) in bp.f2.iter().enumerate() {
        weight += w[i] * z[k];
        if z[k] > EPS_FRAC {
            set.push(i);
            if z[k] < 1.0 - EPS_FRAC {
                fractional.push(i);
            }
        }
    }
    set.sort_unstable();
    set.dedup();
    fractional.sort_unstable();
    fractional.dedup();
    Ok(StarsOutcome {
        set,
        y,
        z,
        fractional,
        weight,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifactorOutcome {
    pub solution: PseudoSolution,
    pub cost: f64,
    pub attempts: usize,
    pub t: usize,
    /// Acceptance threshold on the cost.
    pub threshold: f64,
    pub bipoint: Option<BiPointSolution>,
    pub from_f1: bool,
}

/// `t = ceil(1/gamma)`, raised to 13 when smaller.
pub fn bifactor_t(gamma: f64) -> usize {
    ((1.0 / gamma).ceil() as usize).max(13)
}

/// Cost the repetition loop accepts: `(1 + sqrt 3 + 10 gamma) / 2` times the
/// mixed bi-point cost.
pub fn bifactor_threshold(mix: f64, gamma: f64) -> f64 {
    (1.0 + 3f64.sqrt() + 10.0 * gamma) / 2.0 * mix
}

/// Repeats star rounding until the better of `F1` and the rounded set falls
/// under the acceptance threshold.
pub fn km_bifactor<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    gamma: f64,
    rng: &mut R,
) -> Result<BifactorOutcome> {
    km_bifactor_with(inst, gamma, None, None, rng)
}

/// As [`km_bifactor`] with an optional fixed `t` and user-supplied bi-point.
pub fn km_bifactor_with<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    gamma: f64,
    t_override: Option<usize>,
    bipoint: Option<BiPointSolution>,
    rng: &mut R,
) -> Result<BifactorOutcome> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma = {gamma} outside (0, 1)")));
    }
    let t = t_override.unwrap_or_else(|| bifactor_t(gamma));
    let all: Vec<usize> = (0..inst.n_facilities()).collect();
    if bipoint.is_none() && inst.is_feasible(&all) {
        let solution =
            certify_pseudo(&all, &inst.weights, 0).expect("feasible set needs no discards");
        let cost = inst.cost(&all);
        return Ok(BifactorOutcome {
            solution,
            cost,
            attempts: 0,
            t,
            threshold: cost,
            bipoint: None,
            from_f1: false,
        });
    }
    let bp = match bipoint {
        Some(bp) => bp,
        None => bipoint_oracle(inst)?,
    };
    bp.validate(inst, None)?;
    let threshold = bifactor_threshold(bp.mixed_cost(), gamma);
    let cost1 = inst.cost(&bp.f1);
    let cap = (1e3 / gamma).ceil() as usize;
    let mut best: (f64, Vec<usize>) = (cost1, bp.f1.clone());
    for attempt in 1..=cap {
        let out = round_stars(inst, &bp, t, rng)?;
        let cost_s = inst.cost(&out.set);
        let (cost, set, from_f1) = if cost1 <= cost_s {
            (cost1, bp.f1.clone(), true)
        } else {
            (cost_s, out.set, false)
        };
        if cost < best.0 {
            best = (cost, set.clone());
        }
        if cost <= threshold {
            let q = if from_f1 { 0 } else { 4 * t };
            let solution = certify_pseudo(&set, &inst.weights, q).map_err(|f| {
                Error::Numerical(format!(
                    "star rounding needs {} discards, bound {}",
                    f.required, f.allowed
                ))
            })?;
            return Ok(BifactorOutcome {
                solution,
                cost,
                attempts: attempt,
                t,
                threshold,
                bipoint: Some(bp),
                from_f1,
            });
        }
    }
    Err(Error::RetryCap {
        cap,
        best_cost: best.0,
        best: best.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeOutcome {
    pub set: Vec<usize>,
    pub cost: f64,
    pub max_load: f64,
    pub rho: f64,
    /// The big facilities of the winning guess.
    pub guess: Vec<usize>,
    pub guesses: usize,
    /// Discards the chosen set needs against the original rows.
    pub q: usize,
}

/// Cap on the number of big-facility guesses.
pub const MAX_GUESSES: usize = 100_000;

/// Big-facility threshold `rho = epsilon / (2 t)`: with at most `4 t`
/// small discards the load exceeds 1 by at most `2 epsilon`.
pub fn multiplicative_rho(epsilon: f64, t: usize) -> f64 {
    epsilon / (2.0 * t as f64)
}

fn big_guesses(big: &[usize], w: &[f64], rho: f64) -> Result<Vec<Vec<usize>>> {
    let limit = (1.0 / rho).floor() as usize;
    let mut out = vec![Vec::new()];
    let mut stack: Vec<(Vec<usize>, usize, f64)> = vec![(Vec::new(), 0, 0.0)];
    while let Some((cur, from, load)) = stack.pop() {
        if cur.len() >= limit {
            continue;
        }
        for k in from..big.len() {
            let l = load + w[big[k]];
            if l > 1.0 + EPS_EQ {
                continue;
            }
            let mut next = cur.clone();
            next.push(big[k]);
            out.push(next.clone());
            if out.len() > MAX_GUESSES {
                return Err(Error::SizeCap {
                    what: "big-facility guesses",
                    size: out.len(),
                    cap: MAX_GUESSES,
                });
            }
            stack.push((next, k + 1, l));
        }
    }
    Ok(out)
}

/// Guesses the big facilities of OPT, rounds each residual instance with
/// [`km_bifactor`] and keeps the cheapest set. The result has load at most
/// `1 + 2 epsilon`.
pub fn km_multiplicative<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    gamma: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<MultiplicativeOutcome> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if inst.m() != 1 {
        return Err(Error::InvalidInstance(format!(
            "bi-point rounding needs m = 1, got {}",
            inst.m()
        )));
    }
    let t = bifactor_t(gamma);
    let rho = multiplicative_rho(epsilon, t);
    let w = &inst.weights[0];
    let big: Vec<usize> = (0..inst.n_facilities()).filter(|&i| w[i] >= rho).collect();
    let small: Vec<usize> = (0..inst.n_facilities()).filter(|&i| w[i] < rho).collect();
    let guesses = big_guesses(&big, w, rho)?;
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    for guess in &guesses {
        let used: f64 = guess.iter().map(|&i| w[i]).sum();
        let residual = 1.0 - used;
        let set = if residual <= EPS_EQ || small.is_empty() {
            guess.clone()
        } else {
            // residual instance: the guess at weight 0 plus the small facilities
            let keep: Vec<usize> = guess.iter().chain(&small).copied().collect();
            let row: Vec<f64> = keep
                .iter()
                .map(|&i| {
                    if guess.contains(&i) {
                        0.0
                    } else {
                        w[i] / residual
                    }
                })
                .collect();
            let sub = inst.restrict(&keep, vec![row])?;
            let out = match km_bifactor(&sub, gamma, rng) {
                Ok(out) => out.solution.selected,
                Err(Error::RetryCap { best, .. }) => best,
                Err(e) => return Err(e),
            };
            out.into_iter().map(|k| keep[k]).collect()
        };
        if set.is_empty() {
            continue;
        }
        let cost = inst.cost(&set);
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, set, guess.clone()));
        }
    }
    let (cost, mut set, guess) =
        best.ok_or_else(|| Error::InvalidInstance("no guess yields a set".into()))?;
    set.sort_unstable();
    let load = max_load(&set, &inst.weights);
    if load > 1.0 + 2.0 * epsilon + EPS_EQ {
        return Err(Error::Numerical(format!(
            "load {load} exceeds 1 + 2 epsilon"
        )));
    }
    let q = required_q(&set, &inst.weights);
    Ok(MultiplicativeOutcome {
        set,
        cost,
        max_load: load,
        rho,
        guess,
        guesses: guesses.len(),
        q,
    })
}
