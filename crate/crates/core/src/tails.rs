//! Empirical checks of the small-`Q` bound and the FullKPR tail bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::stats::{monte_carlo, try_monte_carlo, wilson, Summary, Z95};
use crate::kps::{frac_profile, q_potential, PartitionSystem, EPS_EQ};
use crate::rounding::{full_kpr, intra_block_reduce, kpr, kpr_iteration};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    SmallQ,
    Lower,
    Upper,
}

/// One parameter cell. `empirical` is a mean for the small-`Q` check and a
/// probability for the tails; `ci` is the matching 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub t: usize,
    pub m: usize,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub b: Option<f64>,
    pub trials: usize,
    pub empirical: f64,
    pub ci: (f64, f64),
    /// The bound with the constant factor set to 1.
    pub base: f64,
    /// Exponent multiplying the frozen constant.
    pub exponent: f64,
    pub bound: f64,
    pub pass: bool,
    pub out_of_regime: bool,
}

impl TailCell {
    /// Smallest constant `c` with `e^{c x} base >= empirical`, floored at 0.
    pub fn needed_constant(&self) -> f64 {
        if self.empirical <= self.base || self.exponent <= 0.0 {
            return 0.0;
        }
        if self.base <= 0.0 {
            return f64::INFINITY;
        }
        (self.empirical / self.base).ln() / self.exponent
    }

    /// As [`needed_constant`](Self::needed_constant), at the upper end of the CI.
    pub fn needed_constant_upper(&self) -> f64 {
        TailCell {
            empirical: self.ci.1,
            ..self.clone()
        }
        .needed_constant()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub kind: TailKind,
    pub constant: f64,
    pub cells: Vec<TailCell>,
}

impl TailReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn merge(mut self, other: TailReport) -> Result<Self> {
        if self.kind != other.kind || self.constant != other.constant {
            return Err(Error::Config(
                "cannot merge reports of different kinds or constants".into(),
            ));
        }
        self.cells.extend(other.cells);
        Ok(self)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(
            "kind,t,m,mu,delta,b,trials,empirical,ci_lo,ci_hi,bound,pass,out_of_regime\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for c in &self.cells {
            s.push_str(&format!(
                "{:?},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.kind,
                c.t,
                c.m,
                opt(c.mu),
                opt(c.delta),
                opt(c.b),
                c.trials,
                c.empirical,
                c.ci.0,
                c.ci.1,
                c.bound,
                c.pass,
                c.out_of_regime
            ));
        }
        s
    }
}

fn check_t(ps: &PartitionSystem, t: usize) -> Result<()> {
    if t <= 12 * ps.m() {
        return Err(Error::ThresholdTooSmall { t, m: ps.m() });
    }
    Ok(())
}

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Config("tail weights must lie in [0, 1]".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E[Q(W, y')]` for `y' = KPR(y, t)` against `e^{c a}(Q(W, y) + a/b)` with
/// `a = m^2 ln^3 b / t`.
#[allow(clippy::too_many_arguments)]
pub fn small_q_gap_check(
    ps: &PartitionSystem,
    y: &[f64],
    w: &[usize],
    t: usize,
    b: f64,
    trials: usize,
    seed: u64,
    c8: f64,
) -> Result<TailReport> {
    check_t(ps, t)?;
    if !(b > 2.0) {
        return Err(Error::Config(format!("b = {b} must exceed 2")));
    }
    let q0 = q_potential(w, y, ps)?;
    let samples = try_monte_carlo(trials, seed, "tails/small-q", |_, rng| {
        q_potential(w, kpr(ps, y, t, rng)?.as_slice(), ps)
    })?;
    let s = Summary::of(&samples);
    let m = ps.m() as f64;
    let a = m * m * b.ln().powi(3) / t as f64;
    let base = q0 + a / b;
    let bound = (c8 * a).exp() * base;
    let ci = (s.mean - Z95 * s.stderr(), s.mean + Z95 * s.stderr());
    Ok(TailReport {
        kind: TailKind::SmallQ,
        constant: c8,
        cells: vec![TailCell {
            t,
            m: ps.m(),
            mu: None,
            delta: None,
            b: Some(b),
            trials,
            empirical: s.mean,
            ci,
            base,
            exponent: a,
            bound,
            pass: ci.0 <= bound,
            out_of_regime: false,
        }],
    })
}

/// `(e^{-delta} / (1-delta)^{1-delta})^mu`.
pub fn chernoff_lower(mu: f64, delta: f64) -> f64 {
    // (1 - delta) ln(1 - delta) -> 0 at delta = 1
    let xlnx = if delta >= 1.0 {
        0.0
    } else {
        (1.0 - delta) * (1.0 - delta).ln()
    };
    ((-delta - xlnx) * mu).exp()
}

/// `(e^{delta} / (1+delta)^{1+delta})^mu`.
pub fn chernoff_upper(mu: f64, delta: f64) -> f64 {
    ((delta - (1.0 + delta) * (1.0 + delta).ln()) * mu).exp()
}

fn tail_cell(
    hits: u64,
    trials: usize,
    t: usize,
    m: usize,
    mu: f64,
    delta: f64,
    base: f64,
    x: f64,
    c: f64,
) -> TailCell {
    let ci = wilson(hits, trials as u64, Z95);
    let bound = (c * x).exp() * base;
    TailCell {
        t,
        m,
        mu: Some(mu),
        delta: Some(delta),
        b: None,
        trials,
        empirical: hits as f64 / trials as f64,
        ci,
        base,
        exponent: x,
        bound,
        pass: ci.0 <= bound,
        out_of_regime: false,
    }
}

/// `Pr(Y . w <= mu (1 - delta))` for `Y = FullKPR(y, t)` against
/// `e^{c m^2 (1 + delta mu)^3 / t}` times the Chernoff lower-tail term.
#[allow(clippy::too_many_arguments)]
pub fn lower_tail_check(
    ps: &PartitionSystem,
    y: &[f64],
    w: &[f64],
    mu: f64,
    delta: f64,
    t: usize,
    trials: usize,
    seed: u64,
    c9: f64,
) -> Result<TailReport> {
    check_t(ps, t)?;
    check_weights(w, ps.n())?;
    if !(mu >= 1.0) || dot(y, w) < mu - EPS_EQ {
        return Err(Error::Config(format!(
            "need y . w >= mu >= 1, got y . w = {}, mu = {mu}",
            dot(y, w)
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta = {delta} outside [0, 1]")));
    }
    let cut = mu * (1.0 - delta) + EPS_EQ;
    let hits = try_monte_carlo(trials, seed, "tails/lower", |_, rng| {
        Ok(dot(full_kpr(ps, y, t, rng)?.as_slice(), w) <= cut)
    })?
    .into_iter()
    .filter(|&h| h)
    .count() as u64;
    let m = ps.m() as f64;
    let x = m * m * (1.0 + delta * mu).powi(3) / t as f64;
    Ok(TailReport {
        kind: TailKind::Lower,
        constant: c9,
        cells: vec![tail_cell(
            hits,
            trials,
            t,
            ps.m(),
            mu,
            delta,
            chernoff_lower(mu, delta),
            x,
            c9,
        )],
    })
}

/// `Pr(Y . w >= mu (1 + delta))` against `e^{c m^2 (1 + delta mu)^2 / t}`
/// times the Chernoff upper-tail term. Cells with `t <= 10000 m (1 + delta mu)`
/// are flagged out of regime.
#[allow(clippy::too_many_arguments)]
pub fn upper_tail_check(
    ps: &PartitionSystem,
    y: &[f64],
    w: &[f64],
    mu: f64,
    delta: f64,
    t: usize,
    trials: usize,
    seed: u64,
    c10: f64,
) -> Result<TailReport> {
    check_t(ps, t)?;
    check_weights(w, ps.n())?;
    if !(mu >= 0.0) || dot(y, w) > mu + EPS_EQ {
        return Err(Error::Config(format!(
            "need y . w <= mu, got y . w = {}, mu = {mu}",
            dot(y, w)
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(format!(
            "delta = {delta} must be non-negative"
        )));
    }
    let cut = mu * (1.0 + delta) - EPS_EQ;
    let hits = try_monte_carlo(trials, seed, "tails/upper", |_, rng| {
        Ok(dot(full_kpr(ps, y, t, rng)?.as_slice(), w) >= cut)
    })?
    .into_iter()
    .filter(|&h| h)
    .count() as u64;
    let m = ps.m() as f64;
    let x = m * m * (1.0 + delta * mu).powi(2) / t as f64;
    let mut cell = tail_cell(
        hits,
        trials,
        t,
        ps.m(),
        mu,
        delta,
        chernoff_upper(mu, delta),
        x,
        c10,
    );
    cell.out_of_regime = (t as f64) <= 10_000.0 * m * (1.0 + delta * mu);
    Ok(TailReport {
        kind: TailKind::Upper,
        constant: c10,
        cells: vec![cell],
    })
}

/// The epoch-structured loop that the small-`Q` analysis runs; it applies
/// the same iteration until `T(y) <= t`, so its output law matches KPR.
pub fn multi_epoch_kpr<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    w: &[usize],
    t: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_t(ps, t)?;
    if !(beta > (1u64 << 20) as f64) {
        return Err(Error::Config(format!("beta = {beta} must exceed 2^20")));
    }
    let k = beta.log2().ceil() as i32;
    let alpha = |u: i32| if u < 0 { 0.0 } else { 2f64.powi(u) / beta };
    let mut z = intra_block_reduce(ps, y, rng)?.into_inner();
    for u in 0..=k {
        if q_potential(w, &z, ps)? <= alpha(u - 1) && u > 0 {
            continue;
        }
        while frac_profile(&z, ps).total > t && q_potential(w, &z, ps)? <= alpha(u) {
            z = kpr_iteration(ps, &z, rng)?.into_inner();
        }
    }
    Ok(z)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Samples `Q(W, y')` under both loops, for the KS demonstration.
pub fn epoch_vs_kpr_samples(
    ps: &PartitionSystem,
    y: &[f64],
    w: &[usize],
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let beta = (1u64 << 20) as f64 * 2.0;
    let epoch = try_monte_carlo(trials, seed, "tails/epoch", |_, rng| {
        q_potential(w, &multi_epoch_kpr(ps, y, w, t, beta, rng)?, ps)
    })?;
    let direct = try_monte_carlo(trials, seed, "tails/direct", |_, rng| {
        q_potential(w, kpr(ps, y, t, rng)?.as_slice(), ps)
    })?;
    Ok((epoch, direct))
}

/// Numeric forms of the appendix inequalities. Each returns the largest
/// excess `lhs - rhs` found on its grid; non-positive means no violation.
pub mod appendix {
    use super::*;

    /// `prod_i (1 - lambda sum_{G_i} w_j Y_j) >= (1 - lambda)^{Y . w}` for
    /// integral `Y` with at most one item per block.
    pub fn product_vs_power(samples: usize, seed: u64) -> f64 {
        monte_carlo(samples, seed, "appendix/product", |_, rng| {
            let r = rng.gen_range(1..6);
            let lambda: f64 = rng.gen_range(0.0..=1.0);
            let mut lhs = 1.0;
            let mut yw = 0.0;
            for _ in 0..r {
                let size = rng.gen_range(1..5);
                let pick = rng.gen_range(0..=size);
                let w: f64 = rng.gen_range(0.0..=1.0);
                if pick < size {
                    lhs *= 1.0 - lambda * w;
                    yw += w;
                }
            }
            (1.0 - lambda).powf(yw) - lhs
        })
        .expect("samples > 0")
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(1 + a b) >= (1 + a)^b` for `a >= -1`, `b in [0, 1]`.
    pub fn bernoulli_inequality(points: usize) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for p in 0..=points {
            let a = -1.0 + 10.0 * p as f64 / points as f64;
            for q in 0..=points {
                let b = q as f64 / points as f64;
                worst = worst.max((1.0 + a).powf(b) - (1.0 + a * b));
            }
        }
        worst
    }

    /// `s cosh(a (u - ln s)) - s <= a^2 (u + 1)^2` for
    /// `a in [0, 1/(u+1)]`, `s in [0, 1]`, `u = 0..=umax`.
    pub fn cosh_shift(per_axis: usize, umax: u32) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for u in 0..=umax {
            let u = u as f64;
            for p in 0..=per_axis {
                let a = p as f64 / per_axis as f64 / (u + 1.0);
                for q in 1..=per_axis {
                    let s = q as f64 / per_axis as f64;
                    let lhs = s * (a * (u - s.ln())).cosh() - s;
                    worst = worst.max(lhs - a * a * (u + 1.0).powi(2));
                }
            }
        }
        worst
    }

    /// `e^{a(1/t - 1/(T-1))} <= e^{a(1/t - 1/T)} (1 - a / (2 T^2))` for
    /// `T >= t >= 2 sqrt(a) > 0` and `T >= 2`.
    pub fn exp_step(per_axis: usize) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for p in 1..=per_axis {
            let a = 100.0 * p as f64 / per_axis as f64;
            for q in 0..=per_axis {
                let t = (2.0 * a.sqrt()).max(1e-9) * (1.0 + 4.0 * q as f64 / per_axis as f64);
                for r in 0..=8 {
                    let big = (t * (1.0 + r as f64)).max(2.0);
                    let lhs = (a * (1.0 / t - 1.0 / (big - 1.0))).exp();
                    let e = (a * (1.0 / t - 1.0 / big)).exp();
                    worst = worst.max((lhs - (e - a * e / (2.0 * big * big))) / e);
                }
            }
        }
        worst
    }

    /// `s cosh(z ln s) - s <= C a z^2 ln^2 beta` for `s <= a`,
    /// `a >= 1/beta`, `z <= 1/ln beta`, `beta > 2^20`. Returns the largest
    /// ratio `lhs / (a z^2 ln^2 beta)`.
    pub fn cosh_log_ratio(per_axis: usize) -> f64 {
        let mut worst = 0.0f64;
        for lb in [21.0f64, 30.0, 50.0, 100.0] {
            let beta = 2f64.powf(lb);
            let lnb = beta.ln();
            for p in 0..=per_axis {
                // a log-spaced over [1/beta, 1]
                let a = (-(lnb) * (1.0 - p as f64 / per_axis as f64)).exp();
                for q in 1..=per_axis {
                    let z = q as f64 / per_axis as f64 / lnb;
                    for r in 0..=per_axis {
                        let s = a * (-(lnb) * r as f64 / per_axis as f64).exp();
                        let lhs = s * (z * s.ln()).cosh() - s;
                        worst = worst.max(lhs / (a * z * z * lnb * lnb));
                    }
                }
            }
        }
        worst
    }

    /// Same left side divided by `a^2 z^2 ln^2 beta` at `s = a = 1/beta`.
    pub fn cosh_log_quadratic_ratio(beta: f64, z: f64) -> f64 {
        let a = 1.0 / beta;
        let lhs = a * (z * a.ln()).cosh() - a;
        lhs / (a * a * z * z * beta.ln().powi(2))
    }
}
