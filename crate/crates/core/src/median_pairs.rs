//! Multi-knapsack median: LP, facility splitting, bundling, the pair
//! system over matched bundles, and independent or KPR selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alteration::{certify_pseudo, max_load, required_q, PseudoSolution};
use crate::error::{Error, Result};
use crate::facility::FacilityInstance;
use crate::kps::{PartitionSystem, EPS_EQ, EPS_FRAC};
use crate::linsolve::{lp_solve, LinearProgram, Relation};
use crate::rounding::{full_kpr, ind_select};

/// Two client fractions closer than this are the same split level.
pub const EPS_LEVEL: f64 = 1e-9;

/// Fractional median solution over facility columns. Before splitting the
/// columns are the facilities; after splitting several columns may be
/// co-located copies of one facility (`origin`). Every copy carries the
/// full weight of its facility, so `M y` is unchanged by splitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianLpSolution {
    pub origin: Vec<usize>,
    pub y: Vec<f64>,
    /// `x[j][c]`, client `j` served by column `c`.
    pub x: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    pub objective: f64,
}

impl MedianLpSolution {
    pub fn columns(&self) -> usize {
        self.y.len()
    }

    /// `d(j, c)` through the column's facility.
    #[inline]
    pub fn d(&self, inst: &FacilityInstance, j: usize, c: usize) -> f64 {
        inst.d(j, self.origin[c])
    }

    pub fn weight(&self, inst: &FacilityInstance, k: usize, c: usize) -> f64 {
        inst.weights[k][self.origin[c]]
    }

    /// `sum_c M_{k,c} y_c` per row.
    pub fn loads(&self, inst: &FacilityInstance) -> Vec<f64> {
        (0..inst.m())
            .map(|k| {
                (0..self.columns())
                    .map(|c| self.weight(inst, k, c) * self.y[c])
                    .sum()
            })
            .collect()
    }

    pub fn is_split(&self) -> bool {
        self.x.iter().all(|row| {
            row.iter()
                .zip(&self.y)
                .all(|(&x, &y)| x <= EPS_LEVEL || (x - y).abs() <= EPS_LEVEL)
        })
    }

    pub fn validate(&self, inst: &FacilityInstance) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidInstance(s));
        for (j, row) in self.x.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > EPS_EQ {
                return bad(format!("client {j} assigned {s}"));
            }
            for (c, &x) in row.iter().enumerate() {
                if x < -EPS_EQ || x > self.y[c] + EPS_EQ {
                    return bad(format!("x[{j}][{c}] = {x} outside [0, y = {}]", self.y[c]));
                }
            }
            let r: f64 = row
                .iter()
                .enumerate()
                .map(|(c, &x)| x * self.d(inst, j, c))
                .sum();
            if (r - self.r[j]).abs() > EPS_EQ * r.max(1.0) {
                return bad(format!("r[{j}] = {} but assignment cost is {r}", self.r[j]));
            }
        }
        if let Some(c) = self
            .y
            .iter()
            .position(|&y| !(-EPS_EQ..=1.0 + EPS_EQ).contains(&y))
        {
            return bad(format!("y[{c}] = {} outside [0, 1]", self.y[c]));
        }
        if let Some((k, l)) = self
            .loads(inst)
            .into_iter()
            .enumerate()
            .find(|(_, l)| *l > 1.0 + EPS_EQ)
        {
            return bad(format!("row {k} load {l} exceeds 1"));
        }
        Ok(())
    }
}

/// Solves `min sum d(i,j) x_ij` with `sum_i x_ij = 1`, `x_ij <= y_i <= 1`
/// and `M y <= 1`.
pub fn solve_median_lp(inst: &FacilityInstance) -> Result<MedianLpSolution> {
    let (nf, nc) = (inst.n_facilities(), inst.n_clients());
    let xv = |j: usize, i: usize| nf + j * nf + i;
    let mut lp = LinearProgram::new(nf + nf * nc);
    for j in 0..nc {
        for i in 0..nf {
            lp.objective[xv(j, i)] = inst.d(j, i);
        }
        lp.add(
            (0..nf).map(|i| (xv(j, i), 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
        for i in 0..nf {
            lp.add(vec![(xv(j, i), 1.0), (i, -1.0)], Relation::Le, 0.0);
        }
    }
    for i in 0..nf {
        lp.add(vec![(i, 1.0)], Relation::Le, 1.0);
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
    let sol = lp_solve(&lp)?;
    let clean = |v: f64| if v.abs() <= EPS_FRAC { 0.0 } else { v };
    let y: Vec<f64> = (0..nf).map(|i| clean(sol.x[i]).clamp(0.0, 1.0)).collect();
    let x: Vec<Vec<f64>> = (0..nc)
        .map(|j| {
            let mut row: Vec<f64> = (0..nf)
                .map(|i| clean(sol.x[xv(j, i)]).clamp(0.0, y[i]))
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();
    let r: Vec<f64> = (0..nc)
        .map(|j| (0..nf).map(|i| x[j][i] * inst.d(j, i)).sum())
        .collect();
    let objective = r.iter().sum();
    Ok(MedianLpSolution {
        origin: (0..nf).collect(),
        y,
        x,
        r,
        objective,
    })
}

/// Level-set splitting: a column whose clients use distinct fractions
/// `v_1 > ... > v_k` becomes copies of mass `v_l - v_{l+1}`, and a client
/// using `v_l` is served fully by the copies at levels `l..k`. Mass above
/// `v_1` becomes one unused copy; zero columns are dropped.
pub fn split_facilities(sol: &MedianLpSolution) -> MedianLpSolution {
    let nc = sol.x.len();
    let mut origin = Vec::new();
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for c in 0..sol.columns() {
        if sol.y[c] <= EPS_FRAC {
            continue;
        }
        let mut levels: Vec<f64> = (0..nc)
            .map(|j| sol.x[j][c])
            .filter(|&v| v > EPS_FRAC)
            .collect();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup_by(|a, b| (*a - *b).abs() <= EPS_LEVEL);
        let top = levels.first().copied().unwrap_or(0.0);
        if sol.y[c] - top > EPS_LEVEL {
            origin.push(sol.origin[c]);
            y.push(sol.y[c] - top);
            cols.push(vec![0.0; nc]);
        }
        for (l, &v) in levels.iter().enumerate() {
            let next = levels.get(l + 1).copied().unwrap_or(0.0);
            let mass = v - next;
            origin.push(sol.origin[c]);
            y.push(mass);
            // served by this copy: every client whose fraction reaches level l
            cols.push(
                (0..nc)
                    .map(|j| {
                        if sol.x[j][c] >= v - EPS_LEVEL {
                            mass
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
        }
    }
    let x: Vec<Vec<f64>> = (0..nc)
        .map(|j| cols.iter().map(|col| col[j]).collect())
        .collect();
    MedianLpSolution {
        origin,
        y,
        x,
        r: sol.r.clone(),
        objective: sol.objective,
    }
}

/// Bundles of columns claimed by well-separated clients, and the matching
/// that pairs them. Positions `p` index `core`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bundling {
    /// `C'` in admission order.
    pub core: Vec<usize>,
    /// Per client, the position in `core` of `sigma(j)`.
    pub sigma: Vec<usize>,
    pub bundles: Vec<Vec<usize>>,
    /// `R_j = d(j, C' - j) / 2`, infinite when `C'` has one client.
    pub radius: Vec<f64>,
    /// Matched pairs of positions; a lone client appears as `(p, None)`.
    pub edges: Vec<(usize, Option<usize>)>,
}

impl Bundling {
    pub fn mass(&self, sol: &MedianLpSolution, p: usize) -> f64 {
        self.bundles[p].iter().map(|&c| sol.y[c]).sum()
    }

    pub fn position(&self, j: usize) -> Option<usize> {
        self.core.iter().position(|&k| k == j)
    }

    /// Checks disjointness, bundle mass in `[1/2, 1]`, `x_{c,j} = y_c` on
    /// bundles, `(B4)` and `(B6)`.
    pub fn validate(&self, inst: &FacilityInstance, sol: &MedianLpSolution) -> Result<()> {
        let bad = |s: String| Err(Error::Bundling(s));
        let mut owner = vec![None; sol.columns()];
        for (p, u) in self.bundles.iter().enumerate() {
            let j = self.core[p];
            for &c in u {
                if let Some(q) = owner[c] {
                    return bad(format!("column {c} in bundles {q} and {p}"));
                }
                owner[c] = Some(p);
                if (sol.x[j][c] - sol.y[c]).abs() > EPS_LEVEL {
                    return bad(format!(
                        "column {c} in bundle of {j} with x = {} < y = {}",
                        sol.x[j][c], sol.y[c]
                    ));
                }
            }
            let mass = self.mass(sol, p);
            if !(0.5 - EPS_EQ..=1.0 + EPS_EQ).contains(&mass) {
                return bad(format!("bundle of client {j} has mass {mass}"));
            }
            // (B6): the open ball of radius R_j inside the support lies in U_j
            for c in 0..sol.columns() {
                if sol.x[j][c] > EPS_FRAC
                    && sol.d(inst, j, c) < self.radius[p]
                    && owner_of(&self.bundles[p], c).is_none()
                {
                    return bad(format!(
                        "column {c} at distance {} < R = {} missing from bundle of {j}",
                        sol.d(inst, j, c),
                        self.radius[p]
                    ));
                }
            }
        }
        for j in 0..inst.n_clients() {
            let s = self.core[self.sigma[j]];
            let d = inst.d_cc(j, s);
            if d > 4.0 * sol.r[j] + EPS_EQ * sol.r[j].max(1.0) {
                return bad(format!(
                    "d({j}, sigma) = {d} exceeds 4 r = {}",
                    4.0 * sol.r[j]
                ));
            }
            if sol.r[s] > sol.r[j] + EPS_EQ * sol.r[j].max(1.0) {
                return bad(format!(
                    "r(sigma({j})) = {} exceeds r = {}",
                    sol.r[s], sol.r[j]
                ));
            }
        }
        let mut seen = vec![0usize; self.core.len()];
        let mut lone = 0;
        for &(p, q) in &self.edges {
            seen[p] += 1;
            match q {
                Some(q) => seen[q] += 1,
                None => lone += 1,
            }
        }
        if seen.iter().any(|&s| s != 1) || lone > 1 {
            return bad("matching does not cover C' exactly once".into());
        }
        Ok(())
    }
}

fn owner_of(u: &[usize], c: usize) -> Option<usize> {
    u.iter().position(|&k| k == c)
}

/// Bundling on a split solution.
///
/// Clients are admitted to `C'` by nondecreasing `r_j` when every admitted
/// client lies farther than `4 r_j`. `sigma(j)` is the nearest client
/// admitted no later than `j`, which keeps `r_{sigma(j)} <= r_j`. `U_j` takes
/// the support columns of `j` within `1.5 R_j` that are strictly nearer to
/// `j` than to any other `C'` client (ties to the lower client index).
/// Matching pairs the closest unmatched clients greedily.
pub fn bundle(inst: &FacilityInstance, sol: &MedianLpSolution) -> Result<Bundling> {
    if !sol.is_split() {
        return Err(Error::Bundling("solution is not split".into()));
    }
    let nc = inst.n_clients();
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by(|&a, &b| sol.r[a].total_cmp(&sol.r[b]).then(a.cmp(&b)));
    let mut core: Vec<usize> = Vec::new();
    let mut sigma = vec![usize::MAX; nc];
    for &j in &order {
        if core.iter().all(|&k| inst.d_cc(j, k) > 4.0 * sol.r[j]) {
            sigma[j] = core.len();
            core.push(j);
        } else {
            let mut best = 0;
            for (p, &k) in core.iter().enumerate() {
                let (a, b) = (inst.d_cc(j, k), inst.d_cc(j, core[best]));
                if a < b || (a == b && k < core[best]) {
                    best = p;
                }
            }
            sigma[j] = best;
        }
    }
    let radius: Vec<f64> = core
        .iter()
        .map(|&j| {
            let near = core
                .iter()
                .filter(|&&k| k != j)
                .map(|&k| inst.d_cc(j, k))
                .fold(f64::INFINITY, f64::min);
            near / 2.0
        })
        .collect();
    let mut bundles = Vec::with_capacity(core.len());
    for (p, &j) in core.iter().enumerate() {
        let mut u: Vec<usize> = (0..sol.columns())
            .filter(|&c| sol.x[j][c] > EPS_FRAC && sol.d(inst, j, c) <= 1.5 * radius[p])
            .filter(|&c| {
                let dj = sol.d(inst, j, c);
                core.iter().all(|&k| {
                    let dk = sol.d(inst, k, c);
                    k == j || dj < dk || (dj == dk && j < k)
                })
            })
            .collect();
        let mut mass: f64 = u.iter().map(|&c| sol.y[c]).sum();
        if mass > 1.0 + EPS_EQ {
            u.sort_by(|&a, &b| {
                sol.d(inst, j, a)
                    .total_cmp(&sol.d(inst, j, b))
                    .then(a.cmp(&b))
            });
            while mass > 1.0 + EPS_EQ {
                let c = u.pop().expect("non-empty while over mass");
                mass -= sol.y[c];
            }
            u.sort_unstable();
        }
        bundles.push(u);
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for p in 0..core.len() {
        for q in p + 1..core.len() {
            pairs.push((inst.d_cc(core[p], core[q]), p, q));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matched = vec![false; core.len()];
    let mut edges = Vec::new();
    for (_, p, q) in pairs {
        if !matched[p] && !matched[q] {
            matched[p] = true;
            matched[q] = true;
            edges.push((p, Some(q)));
        }
    }
    if let Some(p) = matched.iter().position(|m| !m) {
        edges.push((p, None));
    }
    let b = Bundling {
        core,
        sigma,
        bundles,
        radius,
        edges,
    };
    b.validate(inst, sol)?;
    Ok(b)
}

/// A pair of columns, `None` standing for the dummy facility `0`.
pub type Pair = (Option<usize>, Option<usize>);

/// The selection phase as a partition system over pairs, one block per
/// matching edge, with lifted weights `M(i, i') = M_i + M_{i'}`.
#[derive(Clone, Debug)]
pub struct PairSystem {
    pub pairs: Vec<Pair>,
    pub edge_of: Vec<usize>,
    pub z: Vec<f64>,
    pub system: PartitionSystem,
    /// Column to facility.
    pub origin: Vec<usize>,
}

impl PairSystem {
    fn members(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let (a, b) = self.pairs[v];
        a.into_iter().chain(b).map(|c| self.origin[c])
    }

    /// `W-bar`: pairs with a member facility in `w`.
    pub fn lift(&self, w: &[usize]) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&v| self.members(v).any(|f| w.contains(&f)))
            .collect()
    }

    /// Pairs with a member among the given columns.
    pub fn lift_columns(&self, cols: &[usize]) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&v| {
                let (a, b) = self.pairs[v];
                a.into_iter().chain(b).any(|c| cols.contains(&c))
            })
            .collect()
    }

    /// Facilities opened by an integral pair vector, sorted.
    pub fn open_facilities(&self, zz: &[f64]) -> Vec<usize> {
        let mut s: Vec<usize> = (0..self.pairs.len())
            .filter(|&v| zz[v] > 1.0 - EPS_FRAC)
            .flat_map(|v| self.members(v))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Chosen pair indices of an integral pair vector.
    pub fn chosen(&self, zz: &[f64]) -> Vec<usize> {
        (0..self.pairs.len())
            .filter(|&v| zz[v] > 1.0 - EPS_FRAC)
            .collect()
    }
}

/// Builds the pair blocks and the fractional vector `z`. A lone client's
/// block holds `(i, 0)` with mass `y_i` and a no-open pair `(0, 0)` with
/// mass `1 - y(U_j)`.
pub fn build_pair_system(
    inst: &FacilityInstance,
    sol: &MedianLpSolution,
    b: &Bundling,
) -> Result<PairSystem> {
    let mut pairs: Vec<Pair> = Vec::new();
    let mut z = Vec::new();
    let mut edge_of = Vec::new();
    let mut blocks = Vec::new();
    for (e, &(p, q)) in b.edges.iter().enumerate() {
        let mut block = Vec::new();
        let mut push = |pair: Pair, mass: f64, block: &mut Vec<usize>| {
            block.push(pairs.len());
            pairs.push(pair);
            z.push(mass.max(0.0));
            edge_of.push(e);
        };
        let yu = b.mass(sol, p);
        match q {
            Some(q) => {
                let yv = b.mass(sol, q);
                for &i in &b.bundles[p] {
                    push((Some(i), None), (1.0 - yv) * sol.y[i] / yu, &mut block);
                }
                for &k in &b.bundles[q] {
                    push((None, Some(k)), (1.0 - yu) * sol.y[k] / yv, &mut block);
                }
                for &i in &b.bundles[p] {
                    for &k in &b.bundles[q] {
                        push(
                            (Some(i), Some(k)),
                            (yu + yv - 1.0) * sol.y[i] * sol.y[k] / (yu * yv),
                            &mut block,
                        );
                    }
                }
            }
            None => {
                for &i in &b.bundles[p] {
                    push((Some(i), None), sol.y[i], &mut block);
                }
                push((None, None), 1.0 - yu, &mut block);
            }
        }
        let mass: f64 = block.iter().map(|&v| z[v]).sum();
        if (mass - 1.0).abs() > EPS_EQ {
            return Err(Error::Bundling(format!("edge {e} block mass {mass}")));
        }
        blocks.push(block);
    }
    let n = pairs.len();
    let rows: Vec<Vec<f64>> = (0..inst.m())
        .map(|k| {
            pairs
                .iter()
                .map(|&(a, c)| {
                    a.into_iter()
                        .chain(c)
                        .map(|col| sol.weight(inst, k, col))
                        .sum()
                })
                .collect()
        })
        .collect();
    let system = PartitionSystem::new(n, blocks, rows)?;
    let ps = PairSystem {
        pairs,
        edge_of,
        z,
        system,
        origin: sol.origin.clone(),
    };
    let lifted = ps.system.apply(&ps.z);
    for (k, (&l, &base)) in lifted.iter().zip(&sol.loads(inst)).enumerate() {
        if l > base + EPS_EQ {
            return Err(Error::Bundling(format!(
                "row {k}: lifted mean weight {l} exceeds M y = {base}"
            )));
        }
    }
    Ok(ps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub set: Vec<usize>,
    pub cost: f64,
    /// Per client `d(j, S)`.
    pub dist: Vec<f64>,
    /// Chosen pair indices.
    pub chosen: Vec<usize>,
    /// Largest `d(j, S) / R_j` over `C'` (the measured `beta`).
    pub beta: f64,
}

/// LP, split, bundling and pair system prepared once for repeated selection.
#[derive(Clone, Debug)]
pub struct MedianPipeline {
    pub lp: MedianLpSolution,
    pub split: MedianLpSolution,
    pub bundling: Bundling,
    pub pairs: PairSystem,
}

impl MedianPipeline {
    pub fn prepare(inst: &FacilityInstance) -> Result<Self> {
        let lp = solve_median_lp(inst)?;
        lp.validate(inst)?;
        let split = split_facilities(&lp);
        split.validate(inst)?;
        let bundling = bundle(inst, &split)?;
        let pairs = build_pair_system(inst, &split, &bundling)?;
        Ok(Self {
            lp,
            split,
            bundling,
            pairs,
        })
    }

    fn outcome(&self, inst: &FacilityInstance, zz: &[f64]) -> SelectionOutcome {
        let set = self.pairs.open_facilities(zz);
        let dist: Vec<f64> = (0..inst.n_clients())
            .map(|j| inst.dist_to_set(j, &set))
            .collect();
        let beta = self
            .bundling
            .core
            .iter()
            .enumerate()
            .filter(|(p, _)| self.bundling.radius[*p].is_finite())
            .map(|(p, &j)| dist[j] / self.bundling.radius[p])
            .fold(0.0, f64::max);
        SelectionOutcome {
            cost: dist.iter().sum(),
            set,
            dist,
            chosen: self.pairs.chosen(zz),
            beta,
        }
    }

    /// Independent selection: one pair per block drawn from `z`.
    pub fn independent<R: Rng + ?Sized>(
        &self,
        inst: &FacilityInstance,
        rng: &mut R,
    ) -> Result<SelectionOutcome> {
        let zz = ind_select(&self.pairs.system, &self.pairs.z, rng)?;
        Ok(self.outcome(inst, &zz))
    }

    /// FullKPR selection at threshold `t`.
    pub fn kpr<R: Rng + ?Sized>(
        &self,
        inst: &FacilityInstance,
        t: usize,
        rng: &mut R,
    ) -> Result<SelectionOutcome> {
        let zz = full_kpr(&self.pairs.system, &self.pairs.z, t, rng)?;
        Ok(self.outcome(inst, &zz))
    }
}

/// Whether `t` is below the regime `t >= 10000 m^2` the cost guarantee is
/// stated for.
pub fn out_of_regime(t: usize, m: usize) -> bool {
    t < 10_000 * m * m
}

/// Opens the facilities of the pairs chosen by FullKPR on the pair system.
pub fn knapsack_median_rounding<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    t: usize,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    if t <= 12 * inst.m() {
        return Err(Error::ThresholdTooSmall { t, m: inst.m() });
    }
    MedianPipeline::prepare(inst)?.kpr(inst, t, rng)
}

/// Independent selection baseline on the same pair system.
pub fn cl_independent_selection<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    MedianPipeline::prepare(inst)?.independent(inst, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkmConfig {
    pub gamma: f64,
    /// Constant in the FullKPR discard bound `c4 sqrt(t ln(m/gamma))`.
    pub c4: f64,
    pub t: Option<usize>,
    pub max_attempts: Option<usize>,
}

impl MkmConfig {
    pub fn new(gamma: f64, c4: f64) -> Self {
        Self {
            gamma,
            c4,
            t: None,
            max_attempts: None,
        }
    }

    /// `t = ceil(m^2 / gamma)`, raised to `12 m + 1` when smaller.
    pub fn threshold(&self, m: usize) -> usize {
        self.t
            .unwrap_or_else(|| ((m * m) as f64 / self.gamma).ceil() as usize)
            .max(12 * m + 1)
    }

    /// Discards allowed on the pair system.
    pub fn pair_q(&self, m: usize) -> usize {
        let t = self.threshold(m) as f64;
        (self.c4 * (t * (m as f64 / self.gamma).ln()).sqrt()).ceil() as usize
    }

    /// Discards allowed on the facilities, twice the pair bound.
    pub fn facility_q(&self, m: usize) -> usize {
        2 * self.pair_q(m)
    }

    fn cap(&self) -> usize {
        self.max_attempts
            .unwrap_or_else(|| (1e3 / self.gamma).ceil() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkmOutcome {
    pub solution: PseudoSolution,
    pub cost: f64,
    pub lp_objective: f64,
    pub attempts: usize,
    pub t: usize,
    pub q_bound: usize,
    pub out_of_regime: bool,
}

/// Repeats KPR selection until the pair vector certifies at the FullKPR
/// discard bound and the cost is at most `(3.25 + 2 gamma)` times the LP.
pub fn mkm_additive<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    cfg: &MkmConfig,
    rng: &mut R,
) -> Result<MkmOutcome> {
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(Error::Config(format!(
            "gamma = {} outside (0, 1)",
            cfg.gamma
        )));
    }
    let m = inst.m();
    let t = cfg.threshold(m);
    let (qz, qs) = (cfg.pair_q(m), cfg.facility_q(m));
    let pipe = MedianPipeline::prepare(inst)?;
    let target = (3.25 + 2.0 * cfg.gamma) * pipe.lp.objective;
    let cap = cfg.cap();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for attempt in 1..=cap {
        let out = pipe.kpr(inst, t, rng)?;
        if best.as_ref().is_none_or(|b| out.cost < b.0) {
            best = Some((out.cost, out.set.clone()));
        }
        if out.cost > target * (1.0 + EPS_EQ) + EPS_EQ {
            continue;
        }
        if certify_pseudo(&out.chosen, pipe.pairs.system.rows(), qz).is_err() {
            continue;
        }
        let solution = certify_pseudo(&out.set, &inst.weights, qs).map_err(|f| {
            Error::Numerical(format!(
                "facility set needs {} discards, pair bound gives {}",
                f.required, f.allowed
            ))
        })?;
        return Ok(MkmOutcome {
            solution,
            cost: out.cost,
            lp_objective: pipe.lp.objective,
            attempts: attempt,
            t,
            q_bound: qs,
            out_of_regime: out_of_regime(t, m),
        });
    }
    let (best_cost, best) = best.unwrap_or((f64::INFINITY, Vec::new()));
    Err(Error::RetryCap {
        cap,
        best_cost,
        best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MkmMultOutcome {
    pub set: Vec<usize>,
    pub cost: f64,
    pub max_load: f64,
    pub rho: f64,
    pub guess: Vec<usize>,
    pub guesses: usize,
    pub q: usize,
}

/// Cap on the number of big-facility guesses.
pub const MAX_MKM_GUESSES: usize = 100_000;

/// `rho = 2 epsilon / q` with `q` the facility discard bound, so `q` small
/// discards add at most `2 epsilon` to any row.
pub fn mkm_rho(cfg: &MkmConfig, m: usize, epsilon: f64) -> f64 {
    2.0 * epsilon / cfg.facility_q(m).max(1) as f64
}

/// Guesses the big facilities, zeroes their weight, drops the other big
/// facilities and runs [`mkm_additive`] on each residual instance.
pub fn mkm_multiplicative<R: Rng + ?Sized>(
    inst: &FacilityInstance,
    cfg: &MkmConfig,
    epsilon: f64,
    rng: &mut R,
) -> Result<MkmMultOutcome> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let m = inst.m();
    let rho = mkm_rho(cfg, m, epsilon);
    let nf = inst.n_facilities();
    let is_big = |i: usize| inst.weights.iter().any(|row| row[i] > rho);
    let big: Vec<usize> = (0..nf).filter(|&i| is_big(i)).collect();
    let small: Vec<usize> = (0..nf).filter(|&i| !is_big(i)).collect();
    let limit = (m as f64 / rho).floor() as usize;

    let mut guesses: Vec<Vec<usize>> = vec![Vec::new()];
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
            guesses.push(next.clone());
            if guesses.len() > MAX_MKM_GUESSES {
                return Err(Error::SizeCap {
                    what: "big-facility guesses",
                    size: guesses.len(),
                    cap: MAX_MKM_GUESSES,
                });
            }
            stack.push((next, k + 1));
        }
    }

    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    for guess in &guesses {
        let used = inst.loads(guess);
        let set = if used.iter().any(|&u| 1.0 - u <= EPS_EQ) || small.is_empty() {
            guess.clone()
        } else {
            let keep: Vec<usize> = guess.iter().chain(&small).copied().collect();
            let rows: Vec<Vec<f64>> = inst
                .weights
                .iter()
                .zip(&used)
                .map(|(row, &u)| {
                    keep.iter()
                        .map(|&i| {
                            if guess.contains(&i) {
                                0.0
                            } else {
                                row[i] / (1.0 - u)
                            }
                        })
                        .collect()
                })
                .collect();
            let sub = inst.restrict(&keep, rows)?;
            let local = match mkm_additive(&sub, cfg, rng) {
                Ok(out) => out.solution.selected,
                Err(Error::RetryCap { best, .. }) => best,
                Err(e) => return Err(e),
            };
            local.into_iter().map(|k| keep[k]).collect()
        };
        if set.is_empty() || max_load(&set, &inst.weights) > 1.0 + 2.0 * epsilon + EPS_EQ {
            continue;
        }
        let cost = inst.cost(&set);
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, set, guess.clone()));
        }
    }
    let (cost, mut set, guess) = best.ok_or_else(|| {
        Error::InvalidInstance("no guess yields a set within 1 + 2 epsilon".into())
    })?;
    set.sort_unstable();
    let load = max_load(&set, &inst.weights);
    let q = required_q(&set, &inst.weights);
    Ok(MkmMultOutcome {
        set,
        cost,
        max_load: load,
        rho,
        guess,
        guesses: guesses.len(),
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facility::euclidean;
    use crate::harness::brute::median_opt;
    use crate::kps::q_potential;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, nf: usize, nc: usize, m: usize) -> FacilityInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..nf + nc).map(|_| (rng.gen(), rng.gen())).collect();
        let rows = (0..m)
            .map(|_| (0..nf).map(|_| rng.gen_range(0.05..0.45)).collect())
            .collect();
        FacilityInstance::normalized(
            euclidean(&pts),
            (0..nf).collect(),
            (nf..nf + nc).collect(),
            rows,
        )
        .unwrap()
    }

    #[test]
    fn lp_single_facility() {
        let d = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let inst = FacilityInstance::normalized(d, vec![0], vec![1], vec![vec![0.5]]).unwrap();
        let lp = solve_median_lp(&inst).unwrap();
        assert!((lp.y[0] - 1.0).abs() < 1e-9);
        assert!((lp.objective - 2.0).abs() < 1e-9);
        lp.validate(&inst).unwrap();
    }

    #[test]
    fn lp_is_below_integral_opt() {
        for seed in 0..15 {
            let inst = random_instance(seed, 8, 10, 1 + seed as usize % 2);
            let lp = solve_median_lp(&inst).unwrap();
            lp.validate(&inst).unwrap();
            let opt = median_opt(&inst).unwrap().1;
            assert!(
                lp.objective <= opt * (1.0 + 1e-7),
                "seed {seed}: {} > {opt}",
                lp.objective
            );
        }
    }

    #[test]
    fn split_by_levels() {
        // one facility, y = 0.6, clients at fractions 0.6 and 0.4
        let sol = MedianLpSolution {
            origin: vec![0, 1],
            y: vec![0.6, 1.0],
            x: vec![vec![0.6, 0.4], vec![0.4, 0.6]],
            r: vec![0.0, 0.0],
            objective: 0.0,
        };
        let s = split_facilities(&sol);
        assert!(s.is_split());
        let copies: Vec<f64> = (0..s.columns())
            .filter(|&c| s.origin[c] == 0)
            .map(|c| s.y[c])
            .collect();
        assert_eq!(copies.len(), 2);
        assert!((copies[0] - 0.2).abs() < 1e-12 && (copies[1] - 0.4).abs() < 1e-12);
        for j in 0..2 {
            let total: f64 = s.x[j].iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // already split input is unchanged
        let again = split_facilities(&s);
        assert_eq!(again.y, s.y);
        assert_eq!(again.x, s.x);
    }

    #[test]
    fn split_preserves_objective_and_loads() {
        for seed in 0..10 {
            let inst = random_instance(50 + seed, 8, 12, 2);
            let lp = solve_median_lp(&inst).unwrap();
            let s = split_facilities(&lp);
            s.validate(&inst).unwrap();
            assert!(s.is_split());
            let obj: f64 = (0..inst.n_clients())
                .map(|j| {
                    (0..s.columns())
                        .map(|c| s.x[j][c] * s.d(&inst, j, c))
                        .sum::<f64>()
                })
                .sum();
            assert!((obj - lp.objective).abs() <= 1e-9 * lp.objective.max(1.0));
            for (a, b) in lp.loads(&inst).iter().zip(s.loads(&inst)) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn bundling_single_client() {
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let inst = FacilityInstance::normalized(d, vec![0], vec![1], vec![vec![0.5]]).unwrap();
        let pipe = MedianPipeline::prepare(&inst).unwrap();
        assert_eq!(pipe.bundling.core, vec![0]);
        assert_eq!(pipe.bundling.bundles, vec![vec![0]]);
        assert_eq!(pipe.bundling.edges, vec![(0, None)]);
    }

    #[test]
    fn bundling_two_far_clients() {
        let pts = [(0.0, 0.0), (100.0, 0.0), (0.0, 1.0), (100.0, 1.0)];
        let inst = FacilityInstance::normalized(
            euclidean(&pts),
            vec![0, 1],
            vec![2, 3],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let pipe = MedianPipeline::prepare(&inst).unwrap();
        assert_eq!(pipe.bundling.core.len(), 2);
        assert_eq!(pipe.bundling.edges, vec![(0, Some(1))]);
        for p in 0..2 {
            assert!((pipe.bundling.mass(&pipe.split, p) - 1.0).abs() < 1e-9);
        }
        // unit bundles put all mass on two-facility pairs
        for (v, pair) in pipe.pairs.pairs.iter().enumerate() {
            if pair.0.is_none() || pair.1.is_none() {
                assert!(pipe.pairs.z[v].abs() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = pipe.independent(&inst, &mut rng).unwrap();
        assert_eq!(out.set, vec![0, 1]);
    }

    #[test]
    fn pair_masses_for_half_bundle() {
        // y(U_j) = 1, y(U_j') = 1/2: singletons of j carry 1/2, two-pairs 1/2
        let sol = MedianLpSolution {
            origin: vec![0, 1, 2],
            y: vec![1.0, 0.5, 0.5],
            x: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
            r: vec![0.0, 0.5],
            objective: 0.5,
        };
        let pts = [
            (0.0, 0.0),
            (10.0, 0.0),
            (11.0, 0.0),
            (0.0, 0.0),
            (10.0, 0.0),
        ];
        let inst = FacilityInstance::normalized(
            euclidean(&pts),
            vec![0, 1, 2],
            vec![3, 4],
            vec![vec![0.3, 0.3, 0.3]],
        )
        .unwrap();
        let b = Bundling {
            core: vec![0, 1],
            sigma: vec![0, 1],
            bundles: vec![vec![0], vec![1]],
            radius: vec![5.0, 5.0],
            edges: vec![(0, Some(1))],
        };
        let ps = build_pair_system(&inst, &sol, &b).unwrap();
        let mass = |f: &dyn Fn(&Pair) -> bool| -> f64 {
            ps.pairs
                .iter()
                .zip(&ps.z)
                .filter(|(p, _)| f(p))
                .map(|(_, z)| z)
                .sum()
        };
        assert!((mass(&|p| p.0.is_some() && p.1.is_none()) - 0.5).abs() < 1e-12);
        assert!((mass(&|p| p.0.is_some() && p.1.is_some()) - 0.5).abs() < 1e-12);
        assert!(mass(&|p| p.0.is_none()).abs() < 1e-12);
    }

    #[test]
    fn bundling_validates_on_random_instances() {
        for seed in 0..40 {
            let inst = random_instance(300 + seed, 8, 14, 1 + seed as usize % 3);
            let pipe = MedianPipeline::prepare(&inst).unwrap();
            pipe.bundling.validate(&inst, &pipe.split).unwrap();
            for block in pipe.pairs.system.blocks() {
                let s: f64 = block.iter().map(|&v| pipe.pairs.z[v]).sum();
                assert!((s - 1.0).abs() <= EPS_EQ);
            }
        }
    }

    #[test]
    fn qbnd_holds_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..20 {
            let inst = random_instance(400 + seed, 8, 12, 2);
            let pipe = MedianPipeline::prepare(&inst).unwrap();
            let b = &pipe.bundling;
            for p in 0..b.core.len() {
                let x: Vec<usize> = (0..inst.n_facilities())
                    .filter(|_| rng.gen_bool(0.5))
                    .collect();
                // U_j-bar ∩ X-bar, as pair indices
                let u_bar: Vec<usize> = pipe.pairs.lift_columns(&b.bundles[p]);
                let x_bar = pipe.pairs.lift(&x);
                let both: Vec<usize> = u_bar.into_iter().filter(|v| x_bar.contains(v)).collect();
                let lhs = q_potential(&both, &pipe.pairs.z, &pipe.pairs.system).unwrap();
                let y_ux: f64 = b.bundles[p]
                    .iter()
                    .filter(|&&c| x.contains(&pipe.split.origin[c]))
                    .map(|&c| pipe.split.y[c])
                    .sum();
                assert!(lhs <= 1.0 - y_ux + 1e-9, "{lhs} > {}", 1.0 - y_ux);
            }
        }
    }

    #[test]
    fn lift_matches_opened_sets_exhaustively() {
        // every integral choice and every facility subset on a small system
        let inst = random_instance(7, 6, 8, 1);
        let pipe = MedianPipeline::prepare(&inst).unwrap();
        let ps = &pipe.pairs;
        assert!(ps.system.r() <= 4);
        let blocks = ps.system.blocks().to_vec();
        let mut idx = vec![0usize; blocks.len()];
        loop {
            let mut zz = vec![0.0; ps.pairs.len()];
            for (b, &k) in idx.iter().enumerate() {
                zz[blocks[b][k]] = 1.0;
            }
            let s = ps.open_facilities(&zz);
            for mask in 0u32..1 << inst.n_facilities() {
                let w: Vec<usize> = (0..inst.n_facilities())
                    .filter(|&i| mask >> i & 1 == 1)
                    .collect();
                let disjoint = s.iter().all(|i| !w.contains(i));
                let q = q_potential(&ps.lift(&w), &zz, &ps.system).unwrap();
                assert_eq!(disjoint, q == 1.0);
            }
            let mut b = 0;
            while b < blocks.len() {
                idx[b] += 1;
                if idx[b] < blocks[b].len() {
                    break;
                }
                idx[b] = 0;
                b += 1;
            }
            if b == blocks.len() {
                break;
            }
        }
    }

    #[test]
    fn independent_selection_respects_b1() {
        let inst = random_instance(21, 8, 12, 2);
        let pipe = MedianPipeline::prepare(&inst).unwrap();
        let trials = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = vec![0usize; inst.n_facilities()];
        for _ in 0..trials {
            for i in pipe.independent(&inst, &mut rng).unwrap().set {
                hits[i] += 1;
            }
        }
        let mut y = vec![0.0; inst.n_facilities()];
        for c in 0..pipe.split.columns() {
            y[pipe.split.origin[c]] += pipe.split.y[c];
        }
        for i in 0..inst.n_facilities() {
            let p = hits[i] as f64 / trials as f64;
            let se = (y[i].min(1.0) * (1.0 - y[i].min(1.0)) / trials as f64)
                .sqrt()
                .max(1.0 / trials as f64);
            assert!(p <= y[i] + 4.0 * se, "facility {i}: {p} > {}", y[i]);
        }
    }

    #[test]
    fn kpr_selection_rejects_small_t() {
        let inst = random_instance(1, 6, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            knapsack_median_rounding(&inst, 24, &mut rng),
            Err(Error::ThresholdTooSmall { .. })
        ));
        knapsack_median_rounding(&inst, 25, &mut rng).unwrap();
    }

    #[test]
    fn mkm_integral_lp_needs_no_discards() {
        // every client sits on a facility and all facilities fit
        let pts = [(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)];
        let inst = FacilityInstance::normalized(
            euclidean(&pts),
            vec![0, 1, 2],
            vec![0, 1, 2],
            vec![vec![0.3, 0.3, 0.3]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = mkm_additive(&inst, &MkmConfig::new(0.25, 1.0), &mut rng).unwrap();
        assert_eq!(out.solution.q, 0);
        assert!((out.cost - out.lp_objective).abs() < 1e-9);
    }

    #[test]
    fn mkm_multiplicative_load_bound() {
        for seed in 0..4 {
            let inst = random_instance(500 + seed, 8, 10, 2);
            let eps = 0.3;
            let cfg = MkmConfig::new(0.25, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = mkm_multiplicative(&inst, &cfg, eps, &mut rng).unwrap();
            assert!(out.max_load <= 1.0 + 2.0 * eps + EPS_EQ);
        }
    }
}
