//! Additive pseudo-solutions: discard the few heaviest items so that a
//! randomly rounded set fits its budgets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::stats::{monte_carlo, quantile};
use crate::kps::EPS_EQ;

/// Smallest set of items whose removal brings the remaining total within
/// `budget` (up to `EPS_EQ`). Items go in decreasing value, lower index first
/// on ties; taking the largest items first is optimal for cardinality.
pub fn min_discard_set(values: &[f64], budget: f64) -> Vec<usize> {
    let mut total: f64 = values.iter().sum();
    if total <= budget + EPS_EQ {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut out = Vec::new();
    for i in order {
        if total <= budget + EPS_EQ {
            break;
        }
        total -= values[i];
        out.push(i);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoSolution {
    pub selected: Vec<usize>,
    /// Per knapsack row, the discarded members of `selected`.
    pub discard: Vec<Vec<usize>>,
    pub q: usize,
}

impl PseudoSolution {
    /// Members of `selected` kept for row `k`.
    pub fn core(&self, k: usize) -> Vec<usize> {
        self.selected
            .iter()
            .copied()
            .filter(|i| !self.discard[k].contains(i))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyFailure {
    pub row: usize,
    pub required: usize,
    pub allowed: usize,
}

/// Discard sets of `s` for every row, as item ids.
pub fn discard_sets(s: &[usize], rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    rows.iter()
        .map(|row| {
            let vals: Vec<f64> = s.iter().map(|&i| row[i]).collect();
            min_discard_set(&vals, 1.0)
                .into_iter()
                .map(|k| s[k])
                .collect()
        })
        .collect()
}

/// Smallest `q` for which `s` is a `q`-additive pseudo-solution.
pub fn required_q(s: &[usize], rows: &[Vec<f64>]) -> usize {
    discard_sets(s, rows)
        .iter()
        .map(Vec::len)
        .max()
        .unwrap_or(0)
}

/// Certifies that `s` is a `q`-additive pseudo-solution of the normalized
/// rows, or reports the first row that needs more discards.
pub fn certify_pseudo(
    s: &[usize],
    rows: &[Vec<f64>],
    q: usize,
) -> std::result::Result<PseudoSolution, CertifyFailure> {
    let discard = discard_sets(s, rows);
    if let Some((row, d)) = discard.iter().enumerate().find(|(_, d)| d.len() > q) {
        return Err(CertifyFailure {
            row,
            required: d.len(),
            allowed: q,
        });
    }
    let q = discard.iter().map(Vec::len).max().unwrap_or(0);
    Ok(PseudoSolution {
        selected: s.to_vec(),
        discard,
        q,
    })
}

/// Largest row load `M_k(S)`.
pub fn max_load(s: &[usize], rows: &[Vec<f64>]) -> f64 {
    rows.iter()
        .map(|row| s.iter().map(|&i| row[i]).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Independent non-negative variables with total mean 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `X_i = 1/n` always.
    Constant,
    /// `X_i = B_i / (n p)` with `B_i ~ Bernoulli(p)`.
    Bernoulli { p: f64 },
    /// `X_i ~ U(0, 2/n)`.
    Uniform,
    /// Pareto with scale 1 and the given shape, capped at `cap`, rescaled.
    Pareto { shape: f64, cap: f64 },
    /// `n` balls thrown uniformly into `n` bins; bin `i` weighs `1 + i mod 3`.
    /// The load vector is negatively associated rather than independent.
    BallsInBins,
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Generator::Bernoulli { p } if !(p > 0.0 && p <= 1.0) => Err(Error::Config(format!(
                "bernoulli p = {p} must lie in (0, 1]"
            ))),
            Generator::Pareto { shape, cap } if !(shape > 0.0 && cap > 1.0) => Err(Error::Config(
                format!("pareto needs shape > 0 and cap > 1, got {shape}, {cap}"),
            )),
            _ => Ok(()),
        }
    }

    fn pareto_mean(shape: f64, cap: f64) -> f64 {
        // E[min(P, c)] = 1 + integral_1^c x^-shape dx
        if (shape - 1.0).abs() < 1e-12 {
            1.0 + cap.ln()
        } else {
            1.0 + (cap.powf(1.0 - shape) - 1.0) / (1.0 - shape)
        }
    }

    fn bin_weight(i: usize) -> f64 {
        1.0 + (i % 3) as f64
    }

    fn bin_total(n: usize) -> f64 {
        (0..n).map(Self::bin_weight).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let nf = n as f64;
        match *self {
            Generator::Constant => vec![1.0 / nf; n],
            Generator::Bernoulli { p } => (0..n)
                .map(|_| {
                    if rng.gen::<f64>() < p {
                        1.0 / (nf * p)
                    } else {
                        0.0
                    }
                })
                .collect(),
            Generator::Uniform => (0..n).map(|_| rng.gen::<f64>() * 2.0 / nf).collect(),
            Generator::Pareto { shape, cap } => {
                let scale = 1.0 / (nf * Self::pareto_mean(shape, cap));
                (0..n)
                    .map(|_| {
                        let u: f64 = 1.0 - rng.gen::<f64>();
                        u.powf(-1.0 / shape).min(cap) * scale
                    })
                    .collect()
            }
            Generator::BallsInBins => {
                let mut load = vec![0usize; n];
                for _ in 0..n {
                    load[rng.gen_range(0..n)] += 1;
                }
                let total = Self::bin_total(n);
                load.iter()
                    .enumerate()
                    .map(|(i, &l)| Self::bin_weight(i) * l as f64 / total)
                    .collect()
            }
        }
    }

    /// `Pr(X_i > a)` for item `i` of `n`.
    pub fn survival(&self, n: usize, i: usize, a: f64) -> f64 {
        let nf = n as f64;
        if a < 0.0 {
            return 1.0;
        }
        match *self {
            Generator::Constant => {
                if a < 1.0 / nf {
                    1.0
                } else {
                    0.0
                }
            }
            Generator::Bernoulli { p } => {
                if a < 1.0 / (nf * p) {
                    p
                } else {
                    0.0
                }
            }
            Generator::Uniform => (1.0 - a * nf / 2.0).clamp(0.0, 1.0),
            Generator::Pareto { shape, cap } => {
                let x = a * nf * Self::pareto_mean(shape, cap);
                if x < 1.0 {
                    1.0
                } else if x >= cap {
                    0.0
                } else {
                    x.powf(-shape)
                }
            }
            Generator::BallsInBins => {
                // load_i > a * total / w_i, load_i ~ Bin(n, 1/n)
                let k = a * Self::bin_total(n) / Self::bin_weight(i);
                binomial_survival(n, 1.0 / nf, k)
            }
        }
    }

    /// Largest value any item can take.
    fn max_value(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            Generator::Constant => 1.0 / nf,
            Generator::Bernoulli { p } => 1.0 / (nf * p),
            Generator::Uniform => 2.0 / nf,
            Generator::Pareto { shape, cap } => cap / (nf * Self::pareto_mean(shape, cap)),
            Generator::BallsInBins => 3.0 * nf / Self::bin_total(n),
        }
    }
}

/// `Pr(B > k)` for `B ~ Bin(n, p)`.
fn binomial_survival(n: usize, p: f64, k: f64) -> f64 {
    if k < 0.0 {
        return 1.0;
    }
    let kmax = k.floor() as usize;
    if kmax >= n {
        return 0.0;
    }
    let q = 1.0 - p;
    let mut pmf = q.powi(n as i32);
    let mut cdf = pmf;
    for j in 1..=kmax {
        pmf *= (n - j + 1) as f64 / j as f64 * p / q;
        cdf += pmf;
    }
    (1.0 - cdf).max(0.0)
}

/// Threshold `alpha` with `sum_i Pr(X_i > alpha) = target`, found by bisection.
/// For atomic distributions the sum jumps over the target; the returned
/// `alpha` is then the smallest point where the sum is at most `target`.
pub fn solve_alpha(generator: &Generator, n: usize, target: f64) -> (f64, f64) {
    let f = |a: f64| (0..n).map(|i| generator.survival(n, i, a)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, generator.max_value(n));
    if f(lo) <= target {
        return (0.0, f(0.0) - target);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() <= 1e-10 {
            return (mid, v - target);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    (hi, f(hi) - target)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStats {
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    /// Empirical `(1 - delta)`-quantile of the greedy discard size.
    pub greedy_quantile: f64,
    /// `greedy_quantile / sqrt(n ln(1/delta))`.
    pub ratio: f64,
    pub threshold_quantile: f64,
    pub threshold_ratio: f64,
    /// Fraction of trials where discarding every `X_i > alpha` restores the budget.
    pub threshold_success: f64,
    pub alpha: f64,
    pub alpha_residual: f64,
    pub greedy_sizes: Vec<usize>,
}

/// Default multiplier on `sqrt(n ln(1/delta))` in the threshold equation.
pub const THRESHOLD_KAPPA: f64 = 10.0;

pub fn concentration_trial(
    generator: &Generator,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationStats> {
    generator.validate()?;
    if n == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!(
            "need n >= 1 and delta in (0, 1), got {n}, {delta}"
        )));
    }
    let scale = (n as f64 * (1.0 / delta).ln()).sqrt();
    let target = (THRESHOLD_KAPPA * scale).min(n as f64);
    let (alpha, alpha_residual) = solve_alpha(generator, n, target);
    let rows = monte_carlo(trials, seed, "concentration", |_, rng| {
        let x = generator.sample(n, rng);
        let greedy = min_discard_set(&x, 1.0).len();
        let kept: f64 = x.iter().filter(|&&v| v <= alpha).sum();
        let thr = x.iter().filter(|&&v| v > alpha).count();
        (greedy, thr, kept <= 1.0 + EPS_EQ)
    })?;
    let greedy: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let thr: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
    let greedy_quantile = quantile(&greedy, 1.0 - delta);
    let threshold_quantile = quantile(&thr, 1.0 - delta);
    Ok(ConcentrationStats {
        n,
        delta,
        trials,
        greedy_quantile,
        ratio: greedy_quantile / scale,
        threshold_quantile,
        threshold_ratio: threshold_quantile / scale,
        threshold_success: rows.iter().filter(|r| r.2).count() as f64 / trials as f64,
        alpha,
        alpha_residual,
        greedy_sizes: rows.iter().map(|r| r.0).collect(),
    })
}
