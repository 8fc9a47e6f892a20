//! Dense two-phase tableau simplex for small LPs.
//!
//! Entering columns follow Dantzig's rule with lowest-index ties; after a run
//! of degenerate pivots the solver switches to Bland's rule for good, so every
//! run is deterministic and terminates.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) -> Self {
        Self { coeffs, rel, rhs }
    }
}

/// `min c x` over `x >= 0` subject to the listed constraints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, rel, rhs));
    }

    /// Largest constraint violation of `x`, including negativity.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, v| w.max(-v));
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.rel {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    bland: bool,
    degenerate: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn row(&self, r: usize) -> &[f64] {
        let w = self.cols + 1;
        &self.data[r * w..(r + 1) * w]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let piv = self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v /= piv;
        }
        let prow: Vec<f64> = self.row(pr).to_vec();
        // The objective lives in row `rows`.
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            let dst = &mut self.data[r * w..(r + 1) * w];
            for (d, s) in dst.iter_mut().zip(&prow) {
                *d -= f * s;
            }
            dst[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn entering(&self, allowed: usize) -> Option<usize> {
        let obj = self.rows;
        if self.bland {
            (0..allowed).find(|&c| self.at(obj, c) < -TOL)
        } else {
            let mut best = None;
            let mut val = -TOL;
            for c in 0..allowed {
                let v = self.at(obj, c);
                if v < val {
                    val = v;
                    best = Some(c);
                }
            }
            best
        }
    }

    fn leaving(&self, pc: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > TOL {
                let ratio = self.rhs(r) / a;
                match best {
                    None => best = Some((r, ratio)),
                    Some((br, bv)) => {
                        if ratio < bv - TOL || (ratio <= bv + TOL && self.basis[r] < self.basis[br])
                        {
                            best = Some((r, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(r, _)| r)
    }

    /// Runs simplex iterations over the first `allowed` columns.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let cap = 50_000 + 100 * (self.rows + self.cols);
        for _ in 0..cap {
            let Some(pc) = self.entering(allowed) else {
                return Ok(());
            };
            let Some(pr) = self.leaving(pc) else {
                return Err(Error::Unbounded);
            };
            if self.rhs(pr).abs() <= TOL {
                self.degenerate += 1;
                if self.degenerate >= DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                self.degenerate = 0;
            }
            self.pivot(pr, pc);
        }
        Err(Error::Numerical("simplex iteration cap reached".into()))
    }
}

/// Solves the LP to optimality.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n_vars;
    if lp.objective.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lp.objective.len(),
        });
    }
    for c in &lp.constraints {
        for &(j, a) in &c.coeffs {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            if !a.is_finite() {
                return Err(Error::Numerical(format!("non-finite coefficient {a}")));
            }
        }
    }
    // Normalize to non-negative right-hand sides.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.constraints.len());
    for c in &lp.constraints {
        let mut dense = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            dense[j] += a;
        }
        let (mut rel, mut rhs) = (c.rel, c.rhs);
        if rhs < 0.0 {
            dense.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows.push((dense, rel, rhs));
    }
    let p = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = n + n_slack + n_art;
    let w = cols + 1;
    let mut t = Tableau {
        rows: p,
        cols,
        data: vec![0.0; (p + 1) * w],
        basis: vec![0; p],
        bland: false,
        degenerate: 0,
    };
    let (mut s, mut a) = (n, n + n_slack);
    for (r, (dense, rel, rhs)) in rows.iter().enumerate() {
        t.data[r * w..r * w + n].copy_from_slice(dense);
        t.data[r * w + cols] = *rhs;
        match rel {
            Relation::Le => {
                t.data[r * w + s] = 1.0;
                t.basis[r] = s;
                s += 1;
            }
            Relation::Ge => {
                t.data[r * w + s] = -1.0;
                s += 1;
                t.data[r * w + a] = 1.0;
                t.basis[r] = a;
                a += 1;
            }
            Relation::Eq => {
                t.data[r * w + a] = 1.0;
                t.basis[r] = a;
                a += 1;
            }
        }
    }
    let art_start = n + n_slack;

    if n_art > 0 {
        // Phase one: minimize the sum of artificials.
        let obj = p * w;
        for r in 0..p {
            if t.basis[r] >= art_start {
                for c in 0..=cols {
                    if c < art_start || c == cols {
                        t.data[obj + c] -= t.data[r * w + c];
                    }
                }
            }
        }
        t.optimize(cols)?;
        if -t.data[obj + cols] > 1e-7 * (1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max)) {
            return Err(Error::Infeasible);
        }
        // Drive remaining artificials out of the basis.
        let mut r = 0;
        while r < t.rows {
            if t.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| t.at(r, c).abs() > TOL) {
                    t.pivot(r, c);
                } else {
                    // Redundant row: remove it.
                    let w = t.cols + 1;
                    t.data.drain(r * w..(r + 1) * w);
                    t.basis.remove(r);
                    t.rows -= 1;
                    continue;
                }
            }
            r += 1;
        }
        t.bland = false;
        t.degenerate = 0;
    }

    // Phase two.
    let obj = t.rows * w;
    for c in 0..=cols {
        t.data[obj + c] = if c < n { lp.objective[c] } else { 0.0 };
    }
    for r in 0..t.rows {
        let b = t.basis[r];
        let cb = if b < n { lp.objective[b] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..=cols {
                t.data[obj + c] -= cb * t.data[r * w + c];
            }
        }
    }
    t.optimize(art_start)?;

    let mut x = vec![0.0; n];
    for r in 0..t.rows {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lower_bound() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add(vec![(0, 1.0)], Relation::Ge, 3.0);
        let sol = lp_solve(&lp).unwrap();
        assert!((sol.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn covering_in_unit_box() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 1.0);
        lp.add(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add(vec![(1, 1.0)], Relation::Le, 1.0);
        let sol = lp_solve(&lp).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded_are_distinct() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add(vec![(0, 1.0)], Relation::Ge, 2.0);
        lp.add(vec![(0, 1.0)], Relation::Le, 1.0);
        assert!(matches!(lp_solve(&lp), Err(Error::Infeasible)));

        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        lp.add(vec![(0, 1.0)], Relation::Ge, 1.0);
        assert!(matches!(lp_solve(&lp), Err(Error::Unbounded)));
    }

    #[test]
    fn negative_rhs_and_equalities() {
        // max x + 2y s.t. x + y = 1, -x <= -0.25 (x >= 0.25)
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -2.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add(vec![(0, -1.0)], Relation::Le, -0.25);
        let sol = lp_solve(&lp).unwrap();
        assert!((sol.x[0] - 0.25).abs() < 1e-9);
        assert!((sol.value + 1.75).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let sol = lp_solve(&lp).unwrap();
        assert!(sol.value.abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
    }

    /// Vertex enumeration over `x >= 0`, `A x <= b`: solve every square
    /// subsystem of tight constraints and keep the best feasible point.
    fn enumerate_vertices(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
        let n = c.len();
        let mut all: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = -1.0;
            all.push((e, 0.0));
        }
        let mut best = f64::INFINITY;
        let k = all.len();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let mut m: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    let mut row = all[i].0.clone();
                    row.push(all[i].1);
                    row
                })
                .collect();
            if let Some(x) = gauss_solve(&mut m, n) {
                let ok = all.iter().all(|(row, rhs)| {
                    row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9
                });
                if ok {
                    best = best.min(c.iter().zip(&x).map(|(p, q)| p * q).sum());
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for j in i + 1..n {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    fn gauss_solve(m: &mut [Vec<f64>], n: usize) -> Option<Vec<f64>> {
        for col in 0..n {
            let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
            if m[piv][col].abs() < 1e-12 {
                return None;
            }
            m.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        Some((0..n).map(|r| m[r][n] / m[r][r]).collect())
    }

    #[test]
    fn tiny_median_lp_matches_vertex_enumeration() {
        // Two facilities, two clients. Variables y0 y1 x00 x01 x10 x11 (x_ij:
        // facility i serves client j). Assignment is written as two
        // inequalities so the oracle sees only <= rows.
        let d = [[1.0, 3.0], [2.5, 1.0]];
        let weights = [0.7, 0.6];
        let c = vec![0.0, 0.0, d[0][0], d[0][1], d[1][0], d[1][1]];
        let mut a = Vec::new();
        let mut b = Vec::new();
        for j in 0..2 {
            let mut row = vec![0.0; 6];
            row[2 + j] = 1.0;
            row[4 + j] = 1.0;
            a.push(row.iter().map(|v| -v).collect());
            b.push(-1.0);
            a.push(row);
            b.push(1.0);
        }
        for i in 0..2 {
            for j in 0..2 {
                let mut row = vec![0.0; 6];
                row[2 + 2 * i + j] = 1.0;
                row[i] = -1.0;
                a.push(row);
                b.push(0.0);
            }
            let mut row = vec![0.0; 6];
            row[i] = 1.0;
            a.push(row);
            b.push(1.0);
        }
        a.push(vec![weights[0], weights[1], 0.0, 0.0, 0.0, 0.0]);
        b.push(1.0);

        let mut lp = LinearProgram::new(6);
        lp.objective = c.clone();
        for (row, rhs) in a.iter().zip(&b) {
            lp.add(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect(),
                Relation::Le,
                *rhs,
            );
        }
        let sol = lp_solve(&lp).unwrap();
        let oracle = enumerate_vertices(&c, &a, &b);
        assert!(
            (sol.value - oracle).abs() < 1e-7,
            "{} vs {}",
            sol.value,
            oracle
        );
        assert!(lp.violation(&sol.x) < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn random_packing_matches_enumeration(
                c in proptest::collection::vec(-3.0f64..1.0, 3),
                a in proptest::collection::vec(0.1f64..2.0, 9),
                b in proptest::collection::vec(0.5f64..3.0, 3),
            ) {
                let rows: Vec<Vec<f64>> = a.chunks(3).map(|r| r.to_vec()).collect();
                let mut lp = LinearProgram::new(3);
                lp.objective = c.clone();
                for (row, rhs) in rows.iter().zip(&b) {
                    lp.add(row.iter().copied().enumerate().collect(), Relation::Le, *rhs);
                }
                let sol = lp_solve(&lp).unwrap();
                let oracle = enumerate_vertices(&c, &rows, &b);
                prop_assert!((sol.value - oracle).abs() <= 1e-7 * (1.0 + oracle.abs()));
            }
        }
    }
}
