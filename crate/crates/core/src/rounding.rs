//! The KPR rounding family.
//!
//! `kpr` first walks each block to an extreme point of its own polytope, then
//! repeatedly moves a random group of blocks along a direction that keeps
//! every knapsack row and block sum fixed, until at most `t` surplus
//! fractional entries remain. `full_kpr` finishes with independent selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kps::{frac_profile, is_fractional, snap_blocks, FracVector, PartitionSystem, EPS_EQ};
use crate::linsolve::{extreme_point_walk, max_step, null_vector, LinearSystem, WalkStep};

/// One random decision taken during a rounding run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Walk {
        block: usize,
        steps: Vec<WalkStep>,
    },
    Iteration {
        p: f64,
        /// The sampling probability `3m/T` exceeded 1 and was clamped.
        clamped: bool,
        /// Sampled blocks among those that still hold fractional entries.
        j: Vec<usize>,
        /// Non-zero entries of the applied step, after the sign draw.
        delta: Vec<(usize, f64)>,
        plus: bool,
    },
    Select {
        block: usize,
        item: usize,
    },
}

/// Counters and the optional event log of one run.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    record: bool,
    pub events: Vec<Event>,
    /// Calls to the iteration step.
    pub iterations: usize,
    /// Iterations where the sampled blocks had enough slack to move.
    pub moves: usize,
    pub clamped: usize,
}

impl Trace {
    pub fn recording() -> Self {
        Self {
            record: true,
            ..Self::default()
        }
    }

    fn push(&mut self, e: impl FnOnce() -> Event) {
        if self.record {
            self.events.push(e());
        }
    }
}

fn check_input(ps: &PartitionSystem, y: &[f64]) -> Result<()> {
    ps.check_feasible(y)
}

fn check_t(ps: &PartitionSystem, t: usize) -> Result<()> {
    if t <= 12 * ps.m() {
        return Err(Error::ThresholdTooSmall { t, m: ps.m() });
    }
    Ok(())
}

/// Picks one item per block with probability equal to its mass.
pub fn ind_select<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    rng: &mut R,
) -> Result<FracVector> {
    check_input(ps, y)?;
    let mut trace = Trace::default();
    Ok(FracVector::from_raw(select_inner(ps, y, rng, &mut trace)))
}

fn select_inner<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    rng: &mut R,
    trace: &mut Trace,
) -> Vec<f64> {
    let mut out = vec![0.0; ps.n()];
    for (b, block) in ps.blocks().iter().enumerate() {
        let item = if block.iter().any(|&j| is_fractional(y[j])) {
            let total: f64 = block.iter().map(|&j| y[j].max(0.0)).sum();
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for &j in block {
                if y[j] <= 0.0 {
                    continue;
                }
                acc += y[j];
                pick = Some(j);
                if u < acc {
                    break;
                }
            }
            let item = pick.expect("block has positive mass");
            trace.push(|| Event::Select { block: b, item });
            item
        } else {
            *block
                .iter()
                .find(|&&j| y[j] > 0.5)
                .expect("integral block holds a one")
        };
        out[item] = 1.0;
    }
    out
}

/// Walks each block to an extreme point of
/// `{y' : M y' = M y, y'(G_i) = 1, y' = y off G_i}`.
pub fn intra_block_reduce<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    rng: &mut R,
) -> Result<FracVector> {
    check_input(ps, y)?;
    let mut z = y.to_vec();
    reduce_inner(ps, &mut z, rng, &mut Trace::default())?;
    Ok(FracVector::from_raw(z))
}

fn reduce_inner<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &mut [f64],
    rng: &mut R,
    trace: &mut Trace,
) -> Result<()> {
    for (b, block) in ps.blocks().iter().enumerate() {
        let frac: Vec<usize> = block
            .iter()
            .copied()
            .filter(|&j| is_fractional(y[j]))
            .collect();
        if frac.len() <= 1 {
            continue;
        }
        let mut a: Vec<Vec<f64>> = ps
            .rows()
            .iter()
            .map(|row| frac.iter().map(|&j| row[j]).collect())
            .collect();
        a.push(vec![1.0; frac.len()]);
        let sys = LinearSystem::unit_box(a, frac.len());
        let local: Vec<f64> = frac.iter().map(|&j| y[j]).collect();
        let out = extreme_point_walk(&local, &sys, rng)?;
        for (k, &j) in frac.iter().enumerate() {
            y[j] = out.y[k];
        }
        snap_blocks(y, ps, &[b]);
        trace.push(|| Event::Walk {
            block: b,
            steps: out.steps,
        });
    }
    Ok(())
}

/// Fractional state maintained across iterations.
struct State {
    per_block: Vec<usize>,
    total: usize,
    /// Blocks with a positive count, in a history-determined order.
    active: Vec<usize>,
    pos: Vec<usize>,
}

impl State {
    fn new(ps: &PartitionSystem, y: &[f64]) -> Self {
        let profile = frac_profile(y, ps);
        let mut pos = vec![usize::MAX; ps.r()];
        let mut active = Vec::new();
        for (b, &c) in profile.per_block.iter().enumerate() {
            if c > 0 {
                pos[b] = active.len();
                active.push(b);
            }
        }
        Self {
            per_block: profile.per_block,
            total: profile.total,
            active,
            pos,
        }
    }

    fn refresh(&mut self, ps: &PartitionSystem, y: &[f64], b: usize) {
        let c = ps
            .block(b)
            .iter()
            .filter(|&&j| is_fractional(y[j]))
            .count()
            .saturating_sub(1);
        self.total = self.total + c - self.per_block[b];
        self.per_block[b] = c;
        if c == 0 && self.pos[b] != usize::MAX {
            let i = self.pos[b];
            self.active.swap_remove(i);
            if i < self.active.len() {
                self.pos[self.active[i]] = i;
            }
            self.pos[b] = usize::MAX;
        }
    }
}

/// Bernoulli(p) subset of `items` via geometric skips.
fn sample_subset<R: Rng + ?Sized>(items: &[usize], p: f64, rng: &mut R) -> Vec<usize> {
    if p >= 1.0 {
        return items.to_vec();
    }
    let mut out = Vec::new();
    let ln_q = (1.0 - p).ln();
    let mut i = 0usize;
    loop {
        let u: f64 = rng.gen();
        let skip = ((1.0 - u).ln() / ln_q).floor();
        if !skip.is_finite() || skip >= (items.len() - i) as f64 {
            break;
        }
        i += skip as usize;
        out.push(items[i]);
        i += 1;
        if i >= items.len() {
            break;
        }
    }
    out
}

fn iteration_inner<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &mut [f64],
    state: &mut State,
    rng: &mut R,
    trace: &mut Trace,
) -> Result<()> {
    trace.iterations += 1;
    let m = ps.m();
    let raw = 3.0 * m as f64 / state.total as f64;
    let clamped = raw > 1.0;
    if clamped {
        trace.clamped += 1;
    }
    let p = raw.min(1.0);
    let mut j = sample_subset(&state.active, p, rng);
    j.sort_unstable();
    let slack: usize = j.iter().map(|&b| state.per_block[b]).sum();
    if slack < m + 1 {
        trace.push(|| Event::Iteration {
            p,
            clamped,
            j,
            delta: Vec::new(),
            plus: false,
        });
        return Ok(());
    }
    let vars: Vec<usize> = j
        .iter()
        .flat_map(|&b| ps.block(b).iter().copied().filter(|&k| is_fractional(y[k])))
        .collect();
    let mut a: Vec<Vec<f64>> = ps
        .rows()
        .iter()
        .map(|row| vars.iter().map(|&k| row[k]).collect())
        .collect();
    for &b in &j {
        a.push(
            vars.iter()
                .map(|&k| if ps.block_of(k) == b { 1.0 } else { 0.0 })
                .collect(),
        );
    }
    let sys = LinearSystem::unit_box(a, vars.len());
    let v = null_vector(&sys)
        .ok_or_else(|| Error::Numerical("no null direction despite enough slack".into()))?;
    let local: Vec<f64> = vars.iter().map(|&k| y[k]).collect();
    let step = max_step(&local, &v)?;
    let plus = rng.gen::<bool>();
    let sign = if plus { 1.0 } else { -1.0 };
    let mut delta = Vec::with_capacity(vars.len());
    for (idx, &k) in vars.iter().enumerate() {
        if v[idx] == 0.0 {
            continue;
        }
        let d = sign * step * v[idx];
        let target = y[k] + d;
        // Land exactly on a bound when the step reaches it.
        y[k] = if target <= 1e-12 {
            0.0
        } else if target >= 1.0 - 1e-12 {
            1.0
        } else {
            target
        };
        delta.push((k, d));
    }
    snap_blocks(y, ps, &j);
    for &b in &j {
        state.refresh(ps, y, b);
    }
    trace.moves += 1;
    trace.push(|| Event::Iteration {
        p,
        clamped,
        j,
        delta,
        plus,
    });
    Ok(())
}

/// One KPR iteration on a reduced vector.
pub fn kpr_iteration<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    rng: &mut R,
) -> Result<FracVector> {
    check_input(ps, y)?;
    let mut z = y.to_vec();
    let mut state = State::new(ps, &z);
    if state.total > 0 {
        if let Some(b) = (0..ps.r()).find(|&b| state.per_block[b] > ps.m()) {
            return Err(Error::InvalidSystem(format!(
                "block {b} has {} surplus fractional entries; reduce blocks first",
                state.per_block[b]
            )));
        }
        iteration_inner(ps, &mut z, &mut state, rng, &mut Trace::default())?;
    }
    Ok(FracVector::from_raw(z))
}

fn kpr_inner<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    t: usize,
    rng: &mut R,
    trace: &mut Trace,
) -> Result<Vec<f64>> {
    check_t(ps, t)?;
    check_input(ps, y)?;
    let mut z = y.to_vec();
    reduce_inner(ps, &mut z, rng, trace)?;
    let mut state = State::new(ps, &z);
    let cap = 1000 * (ps.n() + 10);
    while state.total > t {
        if trace.iterations >= cap {
            return Err(Error::Numerical(format!(
                "no termination after {cap} iterations"
            )));
        }
        iteration_inner(ps, &mut z, &mut state, rng, trace)?;
    }
    Ok(z)
}

pub fn kpr<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    t: usize,
    rng: &mut R,
) -> Result<FracVector> {
    Ok(FracVector::from_raw(kpr_inner(
        ps,
        y,
        t,
        rng,
        &mut Trace::default(),
    )?))
}

/// `kpr` that also reports its counters and, if requested, every event.
pub fn kpr_with<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    t: usize,
    rng: &mut R,
    trace: &mut Trace,
) -> Result<FracVector> {
    Ok(FracVector::from_raw(kpr_inner(ps, y, t, rng, trace)?))
}

pub fn full_kpr<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    t: usize,
    rng: &mut R,
) -> Result<FracVector> {
    full_kpr_with(ps, y, t, rng, &mut Trace::default())
}

pub fn full_kpr_with<R: Rng + ?Sized>(
    ps: &PartitionSystem,
    y: &[f64],
    t: usize,
    rng: &mut R,
    trace: &mut Trace,
) -> Result<FracVector> {
    let z = kpr_inner(ps, y, t, rng, trace)?;
    Ok(FracVector::from_raw(select_inner(ps, &z, rng, trace)))
}

/// Builds the two-item-per-element system used by [`kpr_depround`]: item `i`
/// and its dummy `v + i` form a block, and dummies carry zero weight.
pub fn depround_system(x: &[f64], rows: &[Vec<f64>]) -> Result<(PartitionSystem, Vec<f64>)> {
    let v = x.len();
    for (index, &value) in x.iter().enumerate() {
        if !(-EPS_EQ..=1.0 + EPS_EQ).contains(&value) {
            return Err(Error::OutOfBox { index, value });
        }
    }
    let blocks = (0..v).map(|i| vec![i, v + i]).collect();
    let mut ext = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != v {
            return Err(Error::DimensionMismatch {
                expected: v,
                got: row.len(),
            });
        }
        let mut r = row.clone();
        r.resize(2 * v, 0.0);
        ext.push(r);
    }
    let ps = PartitionSystem::signed(2 * v, blocks, ext)?;
    let mut y: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    y.extend(x.iter().map(|v| 1.0 - v.clamp(0.0, 1.0)));
    Ok((ps, y))
}

/// Dependent rounding of `x` that preserves every row of `rows` exactly.
/// Rows may carry negative entries. Returns the first `v` coordinates.
pub fn kpr_depround<R: Rng + ?Sized>(
    x: &[f64],
    rows: &[Vec<f64>],
    t: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (ps, y) = depround_system(x, rows)?;
    let mut out = kpr_inner(&ps, &y, t, rng, &mut Trace::default())?;
    out.truncate(x.len());
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Kpr,
    FullKpr,
}

/// Seeded record of a run; rerunning from the seed reproduces it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub seed: u64,
    pub t: usize,
    pub mode: Mode,
    pub events: Vec<Event>,
    pub output: Vec<f64>,
}

pub fn traced(
    ps: &PartitionSystem,
    y: &[f64],
    t: usize,
    mode: Mode,
    seed: u64,
) -> Result<Transcript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace::recording();
    let out = match mode {
        Mode::Kpr => kpr_with(ps, y, t, &mut rng, &mut trace)?,
        Mode::FullKpr => full_kpr_with(ps, y, t, &mut rng, &mut trace)?,
    };
    Ok(Transcript {
        seed,
        t,
        mode,
        events: trace.events,
        output: out.into_inner(),
    })
}

impl Transcript {
    /// Reruns the recorded configuration and checks that every event and
    /// every output bit match.
    pub fn replay(&self, ps: &PartitionSystem, y: &[f64]) -> Result<bool> {
        let again = traced(ps, y, self.t, self.mode, self.seed)?;
        let same_output = again.output.len() == self.output.len()
            && again
                .output
                .iter()
                .zip(&self.output)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        Ok(same_output && again.events == self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kps::validate_e_properties;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// `r` blocks of `size` items with random masses and one random row.
    fn instance(r: usize, size: usize, m: usize, seed: u64) -> (PartitionSystem, Vec<f64>) {
        let mut g = rng(seed);
        let n = r * size;
        let blocks: Vec<Vec<usize>> = (0..r)
            .map(|b| (b * size..(b + 1) * size).collect())
            .collect();
        let mut y = vec![0.0; n];
        for block in &blocks {
            let raw: Vec<f64> = block.iter().map(|_| g.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for (k, &j) in block.iter().enumerate() {
                y[j] = raw[k] / s;
            }
        }
        let rows = (0..m)
            .map(|_| (0..n).map(|_| g.gen_range(0.0..1.0) / r as f64).collect())
            .collect();
        (PartitionSystem::new(n, blocks, rows).unwrap(), y)
    }

    #[test]
    fn select_integral_is_identity() {
        let ps = PartitionSystem::new(4, vec![vec![0, 1], vec![2, 3]], vec![vec![1.0; 4]]).unwrap();
        let y = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(ind_select(&ps, &y, &mut rng(0)).unwrap().as_slice(), &y);
    }

    #[test]
    fn select_one_per_block() {
        let ps = PartitionSystem::new(3, vec![vec![0, 1, 2]], vec![vec![1.0; 3]]).unwrap();
        let mut g = rng(3);
        for _ in 0..1000 {
            let y = ind_select(&ps, &[0.2, 0.3, 0.5], &mut g).unwrap();
            assert_eq!(y.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(y.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn select_marginal_fair_coin() {
        let ps = PartitionSystem::new(2, vec![vec![0, 1]], vec![vec![1.0; 2]]).unwrap();
        let mut g = rng(11);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| ind_select(&ps, &[0.5, 0.5], &mut g).unwrap()[0] == 1.0)
            .count();
        let mean = hits as f64 / trials as f64;
        let se = (0.25 / trials as f64).sqrt();
        assert!((mean - 0.5).abs() <= 4.0 * se);
    }

    #[test]
    fn select_rejects_bad_block_sum() {
        let ps = PartitionSystem::new(2, vec![vec![0, 1]], vec![vec![1.0; 2]]).unwrap();
        assert!(matches!(
            ind_select(&ps, &[0.5, 0.4], &mut rng(0)),
            Err(Error::BlockSum { .. })
        ));
    }

    #[test]
    fn reduce_integral_is_identity() {
        let (ps, _) = instance(3, 3, 1, 1);
        let y = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(
            intra_block_reduce(&ps, &y, &mut rng(0)).unwrap().as_slice(),
            &y[..]
        );
    }

    #[test]
    fn reduce_with_row_equal_to_block_sum() {
        // The all-ones row coincides with the block sum, so the polytope is
        // the simplex and its vertices have one non-zero entry; the walk may
        // stop with at most two fractional entries.
        let ps = PartitionSystem::new(3, vec![vec![0, 1, 2]], vec![vec![1.0; 3]]).unwrap();
        for seed in 0..100 {
            let out = intra_block_reduce(&ps, &[0.2, 0.3, 0.5], &mut rng(seed)).unwrap();
            assert!(out.iter().filter(|v| is_fractional(**v)).count() <= 2);
            assert!((out.iter().sum::<f64>() - 1.0).abs() <= EPS_EQ);
        }
    }

    #[test]
    fn reduce_preserves_rows_and_limits_fractions() {
        for seed in 0..1000 {
            let (ps, y) = instance(4, 5, 2, seed);
            let out = intra_block_reduce(&ps, &y, &mut rng(seed)).unwrap();
            let rep = validate_e_properties(&y, &out, &ps, 1000).unwrap();
            assert!(rep.e3 && rep.e4 && rep.e6, "{rep:?}");
        }
    }

    #[test]
    fn iteration_on_integral_input_is_identity() {
        let (ps, _) = instance(2, 2, 1, 0);
        let y = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(
            kpr_iteration(&ps, &y, &mut rng(0)).unwrap().as_slice(),
            &y[..]
        );
    }

    #[test]
    fn iteration_keeps_rows_and_mean() {
        let (ps, y0) = instance(10, 3, 1, 5);
        let y = intra_block_reduce(&ps, &y0, &mut rng(5))
            .unwrap()
            .into_inner();
        let trials = 100_000;
        let mut g = rng(99);
        let mut sum = vec![0.0; ps.n()];
        let mut sq = vec![0.0; ps.n()];
        let before = ps.apply(&y);
        for _ in 0..trials {
            let out = kpr_iteration(&ps, &y, &mut g).unwrap();
            let after = ps.apply(&out);
            assert!((before[0] - after[0]).abs() <= EPS_EQ);
            for j in 0..ps.n() {
                sum[j] += out[j];
                sq[j] += out[j] * out[j];
            }
        }
        for j in 0..ps.n() {
            let mean = sum[j] / trials as f64;
            let var = (sq[j] / trials as f64 - mean * mean).max(0.0);
            let se = (var / trials as f64).sqrt();
            assert!((mean - y[j]).abs() <= 4.0 * se + 1e-12, "item {j}");
        }
    }

    #[test]
    fn kpr_rejects_small_t() {
        let (ps, y) = instance(3, 3, 2, 0);
        assert!(matches!(
            kpr(&ps, &y, 24, &mut rng(0)),
            Err(Error::ThresholdTooSmall { t: 24, m: 2 })
        ));
    }

    #[test]
    fn kpr_with_large_t_is_reduce() {
        let (ps, y) = instance(5, 3, 1, 2);
        let a = intra_block_reduce(&ps, &y, &mut rng(8)).unwrap();
        let b = kpr(&ps, &y, 1000, &mut rng(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kpr_ten_blocks() {
        for seed in 0..200 {
            let (ps, y) = instance(10, 4, 1, seed);
            let out = kpr(&ps, &y, 13, &mut rng(seed)).unwrap();
            let rep = validate_e_properties(&y, &out, &ps, 13).unwrap();
            assert!(rep.all(), "{rep:?}");
            assert!(rep.fractional <= 26);
        }
    }

    #[test]
    fn kpr_reaches_small_targets() {
        let (ps, y) = instance(60, 3, 1, 4);
        let out = kpr(&ps, &y, 13, &mut rng(4)).unwrap();
        assert!(frac_profile(&out, &ps).total <= 13);
        assert!(validate_e_properties(&y, &out, &ps, 13).unwrap().all());
    }

    #[test]
    fn full_kpr_is_integral_and_one_per_block() {
        let (ps, y) = instance(30, 3, 2, 6);
        let out = full_kpr(&ps, &y, 25, &mut rng(6)).unwrap();
        assert!(out.is_integral());
        assert!(ps.block_sums(&out).iter().all(|s| *s == 1.0));
    }

    #[test]
    fn depround_integral_and_exact_rows() {
        let x = [1.0, 0.0, 1.0];
        assert_eq!(
            kpr_depround(&x, &[vec![1.0; 3]], 13, &mut rng(0)).unwrap(),
            x.to_vec()
        );
        let x = [0.5; 4];
        for seed in 0..200 {
            let out = kpr_depround(&x, &[vec![1.0; 4]], 13, &mut rng(seed)).unwrap();
            assert!((out.iter().sum::<f64>() - 2.0).abs() <= EPS_EQ);
        }
    }

    #[test]
    fn depround_signed_rows() {
        let x = [0.3, 0.6, 0.2, 0.9];
        let row = vec![1.0, -2.0, 0.5, -0.25];
        let want: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
        for seed in 0..200 {
            let out = kpr_depround(&x, &[row.clone()], 13, &mut rng(seed)).unwrap();
            let got: f64 = row.iter().zip(&out).map(|(a, b)| a * b).sum();
            assert!((got - want).abs() <= EPS_EQ);
        }
    }

    #[test]
    fn transcript_replays() {
        let (ps, y) = instance(40, 3, 1, 12);
        for mode in [Mode::Kpr, Mode::FullKpr] {
            let tr = traced(&ps, &y, 13, mode, 77).unwrap();
            assert!(tr
                .events
                .iter()
                .any(|e| matches!(e, Event::Iteration { .. })));
            assert!(tr.replay(&ps, &y).unwrap());
            let json = serde_json::to_string(&tr).unwrap();
            let back: Transcript = serde_json::from_str(&json).unwrap();
            assert!(back.replay(&ps, &y).unwrap());
            let mut tampered = tr.clone();
            tampered.seed += 1;
            assert!(!tampered.replay(&ps, &y).unwrap() || tampered.output == tr.output);
        }
    }

    #[test]
    fn subset_sampling_rate() {
        let items: Vec<usize> = (0..50).collect();
        let mut g = rng(2);
        let total: usize = (0..20_000)
            .map(|_| sample_subset(&items, 0.1, &mut g).len())
            .sum();
        let mean = total as f64 / 20_000.0;
        // Binomial(50, 0.1): mean 5, sd of the mean 2.12 / sqrt(20000).
        assert!((mean - 5.0).abs() < 4.0 * 2.1213 / (20_000f64).sqrt());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn kpr_e_properties(r in 2usize..20, size in 2usize..5, m in 1usize..4, seed in any::<u64>()) {
                let (ps, y) = instance(r, size, m, seed);
                let t = 13 * m;
                let out = kpr(&ps, &y, t, &mut rng(seed)).unwrap();
                let rep = validate_e_properties(&y, &out, &ps, t).unwrap();
                prop_assert!(rep.all(), "{:?}", rep);
            }

            #[test]
            fn same_seed_same_output(seed in any::<u64>()) {
                let (ps, y) = instance(25, 3, 1, seed);
                let a = kpr(&ps, &y, 13, &mut rng(seed)).unwrap();
                let b = kpr(&ps, &y, 13, &mut rng(seed)).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
