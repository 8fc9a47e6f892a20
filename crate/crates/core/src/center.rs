//! Knapsack center: radius guessing, the assignment LP, block construction
//! with dummy items, sparsification, the two roundings and the MWU driver.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alteration::{certify_pseudo, max_load};
use crate::error::{Error, Result};
use crate::facility::FacilityInstance;
use crate::kps::{is_fractional, q_potential, PartitionSystem, EPS_EQ, EPS_FRAC};
use crate::linsolve::{lp_solve, LinearProgram, Relation};
use crate::median_pairs::{split_facilities, MedianLpSolution};
use crate::rounding::{full_kpr, kpr};

/// Relative slack on `d(i, j) <= R` when forming balls.
pub const EPS_BALL: f64 = 1e-12;

/// Threshold used by the single-knapsack rounding. The analysis wants a
/// constant just above `12 m`.
pub const STANDARD_T: usize = 13;

/// Constant in the modification bound `sum a_j Q(F_j, z) <= c t delta + ...`.
pub const MOD_C7: f64 = 1.0;

/// Cap on LP solves in one sparsification search.
pub const MAX_SPARSIFY_SOLVES: usize = 20_000;

/// Cap on inner retries per weighting.
pub const INNER_RETRIES: usize = 1000;

#[inline]
fn in_ball(d: f64, radius: f64) -> bool {
    d <= radius * (1.0 + EPS_BALL) + EPS_BALL
}

/// All pairwise point distances, deduplicated and ascending.
pub fn guess_radius(inst: &FacilityInstance) -> Vec<f64> {
    let mut pts: Vec<usize> = inst
        .facilities
        .iter()
        .chain(&inst.clients)
        .copied()
        .collect();
    pts.sort_unstable();
    pts.dedup();
    let mut out = vec![0.0];
    for (a, &p) in pts.iter().enumerate() {
        for &q in &pts[a + 1..] {
            out.push(inst.dist[p][q]);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Client weights summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightingFunction(Vec<f64>);

impl WeightingFunction {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        let s: f64 = raw.iter().sum();
        if raw.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || !(s > 0.0) {
            return Err(Error::Config(
                "weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(Self(raw.into_iter().map(|a| a / s).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A solution of the assignment LP at one radius, over the original
/// facilities, with the branch decisions that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterLp {
    pub radius: f64,
    pub y: Vec<f64>,
    /// `x[j][i]`.
    pub x: Vec<Vec<f64>>,
    pub open: Vec<usize>,
    pub closed: Vec<usize>,
}

impl CenterLp {
    /// `H_i`, the clients fractionally served by `i`.
    pub fn served(&self, i: usize) -> Vec<usize> {
        (0..self.x.len())
            .filter(|&j| self.x[j][i] > EPS_FRAC)
            .collect()
    }

    pub fn is_fractional_facility(&self, i: usize) -> bool {
        is_fractional(self.y[i])
    }

    /// Fractional facilities with `a(H_i) > delta`, densest first.
    pub fn dense(&self, a: &[f64], delta: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = (0..self.y.len())
            .filter(|&i| self.is_fractional_facility(i))
            .map(|i| (i, self.served(i).iter().map(|&j| a[j]).sum::<f64>()))
            .filter(|&(_, w)| w > delta + EPS_EQ)
            .collect();
        out.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.cmp(&q.0)));
        out
    }

    pub fn is_sparse(&self, a: &[f64], delta: f64) -> bool {
        self.dense(a, delta).is_empty()
    }

    /// (C1)-(C4) within `EPS_EQ`.
    pub fn validate(&self, inst: &FacilityInstance) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidInstance(s));
        for (j, row) in self.x.iter().enumerate() {
            let mut s = 0.0;
            for (i, &v) in row.iter().enumerate() {
                if v > EPS_FRAC && !in_ball(inst.d(j, i), self.radius) {
                    return bad(format!("client {j} uses facility {i} outside the ball"));
                }
                if v < -EPS_EQ || v > self.y[i] + EPS_EQ {
                    return bad(format!("x[{j}][{i}] = {v} outside [0, y]"));
                }
                s += v;
            }
            if (s - 1.0).abs() > EPS_EQ {
                return bad(format!("client {j} assigned {s}"));
            }
        }
        if let Some((k, l)) = inst
            .weights
            .iter()
            .map(|r| r.iter().zip(&self.y).map(|(w, y)| w * y).sum::<f64>())
            .enumerate()
            .find(|(_, l)| *l > 1.0 + EPS_EQ)
        {
            return bad(format!("row {k} load {l}"));
        }
        Ok(())
    }
}

/// Solves the assignment LP at `radius` with the listed facilities forced
/// open or closed; `None` when infeasible.
pub fn center_lp(
    inst: &FacilityInstance,
    radius: f64,
    open: &[usize],
    closed: &[usize],
) -> Result<Option<CenterLp>> {
    let (nf, nc) = (inst.n_facilities(), inst.n_clients());
    let mut var = vec![vec![None; nf]; nc];
    let mut n = nf;
    for j in 0..nc {
        for i in 0..nf {
            if !closed.contains(&i) && in_ball(inst.d(j, i), radius) {
                var[j][i] = Some(n);
                n += 1;
            }
        }
        if var[j].iter().all(Option::is_none) {
            return Ok(None);
        }
    }
    let mut lp = LinearProgram::new(n);
    for j in 0..nc {
        lp.add(
            var[j].iter().flatten().map(|&v| (v, 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
        for i in 0..nf {
            if let Some(v) = var[j][i] {
                lp.add(vec![(v, 1.0), (i, -1.0)], Relation::Le, 0.0);
            }
        }
    }
    for i in 0..nf {
        if closed.contains(&i) {
            lp.add(vec![(i, 1.0)], Relation::Eq, 0.0);
        } else if open.contains(&i) {
            lp.add(vec![(i, 1.0)], Relation::Eq, 1.0);
        } else {
            lp.add(vec![(i, 1.0)], Relation::Le, 1.0);
        }
    }
    for row in &inst.weights {
        let coeffs: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect();
        if !coeffs.is_empty() {
            lp.add(coeffs, Relation::Le, 1.0);
        }
    }
    let sol = match lp_solve(&lp) {
        Ok(s) => s,
        Err(Error::Infeasible) => return Ok(None),
        Err(e) => return Err(e),
    };
    let clean = |v: f64| {
        if v <= EPS_FRAC {
            0.0
        } else if v >= 1.0 - EPS_FRAC {
            1.0
        } else {
            v
        }
    };
    let mut x = vec![vec![0.0; nf]; nc];
    for j in 0..nc {
        for i in 0..nf {
            if let Some(v) = var[j][i] {
                x[j][i] = clean(sol.x[v]);
            }
        }
        let s: f64 = x[j].iter().sum();
        x[j].iter_mut().for_each(|v| *v /= s);
    }
    // y_i above every x_ij only spends budget
    let y: Vec<f64> = (0..nf)
        .map(|i| {
            if open.contains(&i) {
                1.0
            } else {
                clean((0..nc).map(|j| x[j][i]).fold(0.0, f64::max))
            }
        })
        .collect();
    for row in x.iter_mut() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = v.min(y[i]);
        }
    }
    Ok(Some(CenterLp {
        radius,
        y,
        x,
        open: open.to_vec(),
        closed: closed.to_vec(),
    }))
}

/// Smallest candidate radius with a feasible LP. Feasibility is monotone in
/// the radius, so binary search over the candidates finds the same value as
/// an ascending scan.
pub fn min_feasible_radius(inst: &FacilityInstance) -> Result<(usize, Vec<f64>)> {
    let cands = guess_radius(inst);
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    if center_lp(inst, cands[hi], &[], &[])?.is_none() {
        return Err(Error::InvalidInstance(
            "assignment LP infeasible at every radius".into(),
        ));
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if center_lp(inst, cands[mid], &[], &[])?.is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok((lo, cands))
}

/// LP solves at one radius, memoized by branch decisions.
pub struct CenterContext<'a> {
    pub inst: &'a FacilityInstance,
    pub radius: f64,
    cache: RefCell<HashMap<(Vec<usize>, Vec<usize>), Option<CenterLp>>>,
    solves: Cell<usize>,
}

impl<'a> CenterContext<'a> {
    pub fn new(inst: &'a FacilityInstance, radius: f64) -> Self {
        Self {
            inst,
            radius,
            cache: RefCell::new(HashMap::new()),
            solves: Cell::new(0),
        }
    }

    pub fn solves(&self) -> usize {
        self.solves.get()
    }

    pub fn solve(&self, open: &[usize], closed: &[usize]) -> Result<Option<CenterLp>> {
        let mut key = (open.to_vec(), closed.to_vec());
        key.0.sort_unstable();
        key.1.sort_unstable();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        self.solves.set(self.solves.get() + 1);
        let out = center_lp(self.inst, self.radius, &key.0, &key.1)?;
        self.cache.borrow_mut().insert(key, out.clone());
        Ok(out)
    }

    fn search(
        &self,
        a: &[f64],
        delta: f64,
        first_only: bool,
        out: &mut Vec<CenterLp>,
    ) -> Result<()> {
        let mut stack: Vec<(Vec<usize>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
        let mut visited = 0usize;
        while let Some((open, closed)) = stack.pop() {
            visited += 1;
            if visited > MAX_SPARSIFY_SOLVES {
                return Err(Error::SizeCap {
                    what: "sparsification nodes",
                    size: visited,
                    cap: MAX_SPARSIFY_SOLVES,
                });
            }
            let Some(sol) = self.solve(&open, &closed)? else {
                continue;
            };
            match sol.dense(a, delta).first() {
                None => {
                    out.push(sol);
                    if first_only {
                        return Ok(());
                    }
                }
                Some(&(i, _)) => {
                    // pushed last, explored first: the open branch
                    let mut c = closed.clone();
                    c.push(i);
                    stack.push((open.clone(), c));
                    let mut o = open;
                    o.push(i);
                    stack.push((o, closed));
                }
            }
        }
        Ok(())
    }
}

/// All feasible leaves of the branch-and-fix search on dense facilities.
pub fn sparsify(ctx: &CenterContext, a: &WeightingFunction, delta: f64) -> Result<Vec<CenterLp>> {
    check_delta(delta)?;
    let mut out = Vec::new();
    ctx.search(a.as_slice(), delta, false, &mut out)?;
    if out.is_empty() {
        return Err(Error::NoFeasibleLeaf);
    }
    Ok(out)
}

/// First feasible leaf in depth-first order, open branches first.
pub fn sparsify_first(ctx: &CenterContext, a: &WeightingFunction, delta: f64) -> Result<CenterLp> {
    check_delta(delta)?;
    let mut out = Vec::new();
    ctx.search(a.as_slice(), delta, true, &mut out)?;
    out.pop().ok_or(Error::NoFeasibleLeaf)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Config(format!("delta = {delta} outside (0, 1]")));
    }
    Ok(())
}

/// A split LP solution ready for block construction: integral facilities
/// opened, their clients within the radius removed, the rest split so that
/// `x_{jc} in {0, y_c}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterLpSolution {
    pub radius: f64,
    /// Facilities opened outright.
    pub integral: Vec<usize>,
    /// Clients still to serve, original ids.
    pub clients: Vec<usize>,
    /// Split columns over `clients` (row `k` of `split.x` is `clients[k]`).
    pub split: MedianLpSolution,
    /// `F_j` as column lists, aligned with `clients`.
    pub f: Vec<Vec<usize>>,
    /// Positions in `clients` forming `C'`.
    pub core: Vec<usize>,
    /// Columns outside every `F_j` of `C'`.
    pub f0: Vec<usize>,
}

pub fn prepare_center(inst: &FacilityInstance, lp: &CenterLp) -> CenterLpSolution {
    let nf = inst.n_facilities();
    let integral: Vec<usize> = (0..nf).filter(|&i| lp.y[i] >= 1.0 - EPS_FRAC).collect();
    let clients: Vec<usize> = (0..inst.n_clients())
        .filter(|&j| !integral.iter().any(|&i| in_ball(inst.d(j, i), lp.radius)))
        .collect();
    let frac: Vec<usize> = (0..nf)
        .filter(|&i| lp.y[i] > EPS_FRAC && lp.y[i] < 1.0 - EPS_FRAC)
        .collect();
    let base = MedianLpSolution {
        origin: frac.clone(),
        y: frac.iter().map(|&i| lp.y[i]).collect(),
        x: clients
            .iter()
            .map(|&j| frac.iter().map(|&i| lp.x[j][i]).collect())
            .collect(),
        r: vec![0.0; clients.len()],
        objective: 0.0,
    };
    let split = split_facilities(&base);
    let f: Vec<Vec<usize>> = (0..clients.len())
        .map(|k| {
            (0..split.columns())
                .filter(|&c| split.x[k][c] > EPS_FRAC)
                .collect()
        })
        .collect();
    let mut used = vec![false; split.columns()];
    let mut core = Vec::new();
    for (k, fj) in f.iter().enumerate() {
        if fj.iter().all(|&c| !used[c]) {
            fj.iter().for_each(|&c| used[c] = true);
            core.push(k);
        }
    }
    let f0 = (0..split.columns()).filter(|&c| !used[c]).collect();
    CenterLpSolution {
        radius: lp.radius,
        integral,
        clients,
        split,
        f,
        core,
        f0,
    }
}

/// The partition system over columns plus one dummy per `F_0` column.
#[derive(Clone, Debug)]
pub struct CenterBlocks {
    pub system: PartitionSystem,
    pub y: Vec<f64>,
    /// Item to column; `None` for dummies.
    pub column: Vec<Option<usize>>,
}

pub fn build_center_blocks(
    inst: &FacilityInstance,
    sol: &CenterLpSolution,
) -> Result<CenterBlocks> {
    let ncol = sol.split.columns();
    let mut column: Vec<Option<usize>> = (0..ncol).map(Some).collect();
    let mut y = sol.split.y.clone();
    let mut blocks: Vec<Vec<usize>> = sol.core.iter().map(|&k| sol.f[k].clone()).collect();
    for &c in &sol.f0 {
        blocks.push(vec![c, column.len()]);
        column.push(None);
        y.push(1.0 - sol.split.y[c]);
    }
    let mut seen = vec![false; ncol];
    for b in &blocks {
        for &v in b {
            if v < ncol {
                if seen[v] {
                    return Err(Error::InvalidSystem(format!("column {v} in two blocks")));
                }
                seen[v] = true;
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..inst.m())
        .map(|k| {
            column
                .iter()
                .map(|c| c.map_or(0.0, |c| sol.split.weight(inst, k, c)))
                .collect()
        })
        .collect();
    let system = PartitionSystem::new(column.len(), blocks, rows)?;
    system.check_feasible(&y)?;
    Ok(CenterBlocks { system, y, column })
}

impl CenterBlocks {
    /// Facilities opened by an integral item vector, with the integral ones.
    pub fn open_set(&self, sol: &CenterLpSolution, yy: &[f64]) -> Vec<usize> {
        let mut s = sol.integral.clone();
        for (v, c) in self.column.iter().enumerate() {
            if let Some(c) = c {
                if yy[v] > 1.0 - EPS_FRAC {
                    s.push(sol.split.origin[*c]);
                }
            }
        }
        s.sort_unstable();
        s.dedup();
        s
    }

    /// `sum_j a_j Q(F_j, y)` over the clients still to serve.
    pub fn weighted_q(&self, sol: &CenterLpSolution, a: &[f64], y: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for (k, fj) in sol.f.iter().enumerate() {
            s += a[sol.clients[k]] * q_potential(fj, y, &self.system)?;
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterRound {
    pub set: Vec<usize>,
    /// Per client `d(j, S) / R`.
    pub dist: Vec<f64>,
    pub loads: Vec<f64>,
    /// Column entries changed by the smallest-weight step.
    pub modified: usize,
    /// `(sum a Q(F_j, z), c t delta + sum a Q(F_j, y'))` when a step ran.
    pub mod_check: Option<(f64, f64)>,
}

fn rescaled(inst: &FacilityInstance, set: &[usize], radius: f64) -> Vec<f64> {
    (0..inst.n_clients())
        .map(|j| {
            let d = inst.dist_to_set(j, set);
            if radius > 0.0 {
                d / radius
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

fn check_hard_cap(dist: &[f64]) -> Result<()> {
    if let Some((j, d)) = dist
        .iter()
        .enumerate()
        .find(|(_, d)| **d > 3.0 * (1.0 + 1e-9))
    {
        return Err(Error::Numerical(format!("client {j} at {d} R exceeds 3 R")));
    }
    Ok(())
}

fn integral_only(inst: &FacilityInstance, sol: &CenterLpSolution) -> Result<CenterRound> {
    let set = sol.integral.clone();
    let dist = rescaled(inst, &set, sol.radius);
    check_hard_cap(&dist)?;
    Ok(CenterRound {
        loads: inst.loads(&set),
        set,
        dist,
        modified: 0,
        mod_check: None,
    })
}

/// KPR at `t = 13`, then every fractional block moves its mass onto its
/// lightest fractional item. Keeps `M(S) <= 1` exactly.
pub fn standard_center_round<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    sol: &CenterLpSolution,
    a: &WeightingFunction,
    delta: f64,
    rng: &mut R,
) -> Result<CenterRound> {
    if inst.m() != 1 {
        return Err(Error::InvalidInstance(format!(
            "standard center rounding needs m = 1, got {}",
            inst.m()
        )));
    }
    if sol.split.columns() == 0 {
        return integral_only(inst, sol);
    }
    let blocks = build_center_blocks(inst, sol)?;
    let yp = kpr(&blocks.system, &blocks.y, STANDARD_T, rng)?.into_inner();
    let w = blocks.system.row(0);
    let mut z = yp.clone();
    let mut modified = 0;
    for block in blocks.system.blocks() {
        let frac: Vec<usize> = block
            .iter()
            .copied()
            .filter(|&v| is_fractional(yp[v]))
            .collect();
        let Some(&pick) = frac
            .iter()
            .min_by(|&&p, &&q| w[p].total_cmp(&w[q]).then(p.cmp(&q)))
        else {
            continue;
        };
        for &v in &frac {
            z[v] = if v == pick { 1.0 } else { 0.0 };
            if blocks.column[v].is_some() {
                modified += 1;
            }
        }
    }
    let mod_check = if modified > 0 {
        let lhs = blocks.weighted_q(sol, a.as_slice(), &z)?;
        let rhs = MOD_C7 * modified as f64 * delta + blocks.weighted_q(sol, a.as_slice(), &yp)?;
        Some((lhs, rhs))
    } else {
        None
    };
    let set = blocks.open_set(sol, &z);
    let loads = inst.loads(&set);
    if loads[0] > 1.0 + EPS_EQ {
        return Err(Error::Numerical(format!(
            "standard rounding load {} exceeds 1",
            loads[0]
        )));
    }
    let dist = rescaled(inst, &set, sol.radius);
    check_hard_cap(&dist)?;
    Ok(CenterRound {
        set,
        dist,
        loads,
        modified,
        mod_check,
    })
}

/// FullKPR on the center blocks.
pub fn multi_center_round<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    sol: &CenterLpSolution,
    t: usize,
    rng: &mut R,
) -> Result<CenterRound> {
    if t <= 12 * inst.m() {
        return Err(Error::ThresholdTooSmall { t, m: inst.m() });
    }
    if sol.split.columns() == 0 {
        return integral_only(inst, sol);
    }
    let blocks = build_center_blocks(inst, sol)?;
    let yy = full_kpr(&blocks.system, &blocks.y, t, rng)?;
    let set = blocks.open_set(sol, &yy);
    let loads = inst.loads(&set);
    let dist = rescaled(inst, &set, sol.radius);
    check_hard_cap(&dist)?;
    Ok(CenterRound {
        set,
        dist,
        loads,
        modified: 0,
        mod_check: None,
    })
}

/// What one call of the inner algorithm returns to the MWU driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub set: Vec<usize>,
    pub dist: Vec<f64>,
    /// `sum_j a_j d(j, S) / R` for the weighting used.
    pub weighted: f64,
    pub accepted: bool,
    pub attempts: usize,
    pub mod_check: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MwuOutcome {
    pub radius: f64,
    pub set: Vec<usize>,
    pub chosen_round: usize,
    pub rounds: Vec<InnerResult>,
    /// Per client, `(1/v) sum_k d(j, S_k) / R`: the exact mean over the
    /// output distribution of this run.
    pub mean_dist: Vec<f64>,
    /// `(1 + 3 eps) mean_k beta_k + ln n / (v eps)`.
    pub regret_bound: f64,
    pub failed_rounds: usize,
}

impl MwuOutcome {
    pub fn regret_ok(&self) -> bool {
        self.mean_dist
            .iter()
            .all(|&d| d <= self.regret_bound * (1.0 + 1e-12))
    }
}

/// Number of MWU rounds, `ceil(ln n / gamma^2)` and at least 1.
pub fn mwu_rounds(n: usize, gamma: f64) -> usize {
    (((n as f64).ln() / (gamma * gamma)).ceil() as usize).max(1)
}

/// Multiplicative weights over clients with `eps = gamma`; returns a
/// uniformly chosen round's set.
pub fn knapsack_mwu<R, F>(
    n: usize,
    gamma: f64,
    rounds: usize,
    mut inner: F,
    rng: &mut R,
) -> Result<MwuOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&WeightingFunction, &mut R) -> Result<InnerResult>,
{
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::Config(format!("gamma = {gamma} outside (0, 1/2]")));
    }
    let eps = gamma;
    let mut log_a = vec![0.0f64; n];
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let top = log_a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let a = WeightingFunction::new(log_a.iter().map(|l| (l - top).exp()).collect())?;
        let res = inner(&a, rng)?;
        for (l, d) in log_a.iter_mut().zip(&res.dist) {
            *l += eps * d;
        }
        out.push(res);
    }
    let v = out.len();
    let mean_dist: Vec<f64> = (0..n)
        .map(|j| out.iter().map(|r| r.dist[j]).sum::<f64>() / v as f64)
        .collect();
    let beta = out.iter().map(|r| r.weighted).sum::<f64>() / v as f64;
    let regret_bound = (1.0 + 3.0 * eps) * beta + (n as f64).ln() / (v as f64 * eps);
    let k = rng.gen_range(0..v);
    Ok(MwuOutcome {
        radius: 0.0,
        set: out[k].set.clone(),
        chosen_round: k,
        failed_rounds: out.iter().filter(|r| !r.accepted).count(),
        rounds: out,
        mean_dist,
        regret_bound,
    })
}

/// `delta = gamma / ln(1/gamma)`.
pub fn standard_delta(gamma: f64) -> f64 {
    gamma / (1.0 / gamma).ln()
}

/// Target the inner loop accepts: `1 + 2/e + 10 gamma`.
pub fn inner_target(gamma: f64) -> f64 {
    1.0 + 2.0 / std::f64::consts::E + 10.0 * gamma
}

fn weighted(a: &WeightingFunction, dist: &[f64]) -> f64 {
    a.as_slice().iter().zip(dist).map(|(a, d)| a * d).sum()
}

/// Runs the MWU driver at the smallest LP-feasible radius, moving to the
/// next candidate whenever some weighting has no feasible sparse leaf.
fn with_radius<R, F>(
    inst: &FacilityInstance,
    gamma: f64,
    rounds: Option<usize>,
    mut run: F,
    rng: &mut R,
) -> Result<MwuOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&FacilityInstance, f64, usize, &mut R) -> Result<MwuOutcome>,
{
    let (start, cands) = min_feasible_radius(inst)?;
    let v = rounds.unwrap_or_else(|| mwu_rounds(inst.n_clients(), gamma));
    for &radius in &cands[start..] {
        match run(inst, radius, v, rng) {
            Ok(mut out) => {
                out.radius = radius;
                return Ok(out);
            }
            Err(Error::NoFeasibleLeaf) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoFeasibleLeaf)
}

/// Single-knapsack center: sparsify at `delta = gamma / ln(1/gamma)`, round
/// with [`standard_center_round`] until the weighted distance is at most
/// [`inner_target`], under [`knapsack_mwu`].
pub fn standard_knapsack_center<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    gamma: f64,
    delta_override: Option<f64>,
    rounds: Option<usize>,
    rng: &mut R,
) -> Result<MwuOutcome> {
    let delta = delta_override.unwrap_or_else(|| standard_delta(gamma));
    let target = inner_target(gamma);
    with_radius(
        inst,
        gamma,
        rounds,
        |inst, radius, v, rng| {
            let ctx = CenterContext::new(inst, radius);
            knapsack_mwu(
                inst.n_clients(),
                gamma,
                v,
                |a, rng| {
                    let leaf = sparsify_first(&ctx, a, delta)?;
                    let sol = prepare_center(inst, &leaf);
                    let mut best: Option<InnerResult> = None;
                    for attempt in 1..=INNER_RETRIES {
                        let r = standard_center_round(inst, &sol, a, delta, rng)?;
                        let wd = weighted(a, &r.dist);
                        let res = InnerResult {
                            set: r.set,
                            dist: r.dist,
                            weighted: wd,
                            accepted: wd <= target,
                            attempts: attempt,
                            mod_check: r.mod_check,
                        };
                        if res.accepted {
                            return Ok(res);
                        }
                        if best.as_ref().is_none_or(|b| wd < b.weighted) {
                            best = Some(res);
                        }
                    }
                    Ok(best.expect("at least one attempt"))
                },
                rng,
            )
        },
        rng,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterMode {
    Multi1,
    Multi2,
    Multi3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiCenterConfig {
    pub mode: CenterMode,
    pub gamma: f64,
    /// Needed by the big-facility mode.
    pub epsilon: Option<f64>,
    /// Constant in the discard bound of the chosen mode.
    pub c_q: f64,
    /// Require the discard certificate for acceptance, not just the cost.
    pub enforce_certificate: bool,
    pub delta_override: Option<f64>,
    pub t_override: Option<usize>,
    pub rounds: Option<usize>,
}

impl MultiCenterConfig {
    pub fn new(mode: CenterMode, gamma: f64, c_q: f64) -> Self {
        Self {
            mode,
            gamma,
            epsilon: None,
            c_q,
            enforce_certificate: true,
            delta_override: None,
            t_override: None,
            rounds: None,
        }
    }

    pub fn t(&self, m: usize) -> usize {
        self.t_override.unwrap_or(match self.mode {
            CenterMode::Multi1 => (((m * m) as f64 / self.gamma).ceil() as usize).max(12 * m + 1),
            CenterMode::Multi2 | CenterMode::Multi3 => 12 * m * m + 1,
        })
    }

    pub fn delta(&self, m: usize) -> f64 {
        self.delta_override.unwrap_or(match self.mode {
            CenterMode::Multi1 => 1.0,
            CenterMode::Multi2 | CenterMode::Multi3 => {
                (self.gamma / ((m * m) as f64 * (1.0 / self.gamma).ln())).min(1.0)
            }
        })
    }

    /// Discards allowed: `c m sqrt(ln(m/gamma)/gamma)` in the first mode,
    /// `c sqrt(m max(ln m, 1))` in the others.
    pub fn q(&self, m: usize) -> usize {
        let mf = m as f64;
        let v = match self.mode {
            CenterMode::Multi1 => self.c_q * mf * ((mf / self.gamma).ln() / self.gamma).sqrt(),
            CenterMode::Multi2 | CenterMode::Multi3 => self.c_q * (mf * mf.ln().max(1.0)).sqrt(),
        };
        v.ceil() as usize
    }

    /// Big-facility threshold `epsilon / sqrt(m max(ln m, 1))`.
    pub fn rho(&self, m: usize) -> Option<f64> {
        let mf = m as f64;
        self.epsilon.map(|e| e / (mf * mf.ln().max(1.0)).sqrt())
    }
}

/// One residual instance per big-facility guess.
struct Guess {
    keep: Vec<usize>,
    sub: FacilityInstance,
}

fn center_guesses(inst: &FacilityInstance, rho: f64) -> Result<Vec<Guess>> {
    let nf = inst.n_facilities();
    let m = inst.m();
    let is_big = |i: usize| inst.weights.iter().any(|row| row[i] >= rho);
    let big: Vec<usize> = (0..nf).filter(|&i| is_big(i)).collect();
    let small: Vec<usize> = (0..nf).filter(|&i| !is_big(i)).collect();
    let limit = (m as f64 / rho).floor() as usize;
    let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
    let mut stack: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), 0)];
    while let Some((cur, from)) = stack.pop() {
        if cur.len() >= limit {
            continue;
        }
        for k in from..big.len() {
            let mut next = cur.clone();
            next.push(big[k]);
            if !inst.is_feasible(&next) {
                continue;
            }
            sets.push(next.clone());
            if sets.len() > crate::median_pairs::MAX_MKM_GUESSES {
                return Err(Error::SizeCap {
                    what: "big-facility guesses",
                    size: sets.len(),
                    cap: crate::median_pairs::MAX_MKM_GUESSES,
                });
            }
            stack.push((next, k + 1));
        }
    }
    let mut out = Vec::new();
    for g in sets {
        let used = inst.loads(&g);
        let keep: Vec<usize> = g.iter().chain(&small).copied().collect();
        if keep.is_empty() {
            continue;
        }
        let rows: Vec<Vec<f64>> = inst
            .weights
            .iter()
            .zip(&used)
            .map(|(row, &u)| {
                keep.iter()
                    .map(|&i| {
                        if g.contains(&i) {
                            0.0
                        } else if 1.0 - u > EPS_EQ {
                            row[i] / (1.0 - u)
                        } else if row[i] > 0.0 {
                            // no room left: any positive weight is unaffordable
                            2.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        out.push(Guess {
            sub: inst.restrict(&keep, rows)?,
            keep,
        });
    }
    Ok(out)
}

/// Multi-knapsack center under the MWU driver.
pub fn multi_knapsack_center<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    cfg: &MultiCenterConfig,
    rng: &mut R,
) -> Result<MwuOutcome> {
    let m = inst.m();
    let (t, delta, q) = (cfg.t(m), cfg.delta(m), cfg.q(m));
    let target = inner_target(cfg.gamma);
    let guesses = match cfg.mode {
        CenterMode::Multi3 => {
            let rho = cfg
                .rho(m)
                .ok_or_else(|| Error::Config("big-facility mode needs epsilon".into()))?;
            Some(center_guesses(inst, rho)?)
        }
        _ => None,
    };
    let load_cap = cfg.epsilon.map(|e| 1.0 + 2.0 * e);
    with_radius(
        inst,
        cfg.gamma,
        cfg.rounds,
        |inst, radius, v, rng| {
            let contexts: Vec<(Vec<usize>, CenterContext)> = match &guesses {
                Some(gs) => gs
                    .iter()
                    .map(|g| (g.keep.clone(), CenterContext::new(&g.sub, radius)))
                    .collect(),
                None => vec![(
                    (0..inst.n_facilities()).collect(),
                    CenterContext::new(inst, radius),
                )],
            };
            knapsack_mwu(
                inst.n_clients(),
                cfg.gamma,
                v,
                |a, rng| {
                    let mut leaves = Vec::new();
                    for (keep, ctx) in &contexts {
                        match sparsify_first(ctx, a, delta) {
                            Ok(leaf) => {
                                leaves.push((keep, ctx.inst, prepare_center(ctx.inst, &leaf)))
                            }
                            Err(Error::NoFeasibleLeaf) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    if leaves.is_empty() {
                        return Err(Error::NoFeasibleLeaf);
                    }
                    let mut best: Option<InnerResult> = None;
                    for attempt in 1..=INNER_RETRIES {
                        let mut round_best: Option<InnerResult> = None;
                        for (keep, sub, sol) in &leaves {
                            let r = multi_center_round(sub, sol, t, rng)?;
                            let set: Vec<usize> = {
                                let mut s: Vec<usize> = r.set.iter().map(|&k| keep[k]).collect();
                                s.sort_unstable();
                                s
                            };
                            let dist = rescaled(inst, &set, radius);
                            let wd = weighted(a, &dist);
                            let certified = certify_pseudo(&set, &inst.weights, q).is_ok();
                            let load_ok = load_cap
                                .is_none_or(|c| max_load(&set, &inst.weights) <= c + EPS_EQ);
                            let accepted =
                                wd <= target && load_ok && (certified || !cfg.enforce_certificate);
                            let res = InnerResult {
                                set,
                                dist,
                                weighted: wd,
                                accepted,
                                attempts: attempt,
                                mod_check: None,
                            };
                            let better = match &round_best {
                                None => true,
                                Some(b) => {
                                    (res.accepted, -res.weighted) > (b.accepted, -b.weighted)
                                }
                            };
                            if better {
                                round_best = Some(res);
                            }
                        }
                        let res = round_best.expect("at least one leaf");
                        if res.accepted {
                            return Ok(res);
                        }
                        if best.as_ref().is_none_or(|b| res.weighted < b.weighted) {
                            best = Some(res);
                        }
                    }
                    Ok(best.expect("at least one attempt"))
                },
                rng,
            )
        },
        rng,
    )
}
