//! Knapsack-partition systems.
//!
//! A system is a partition of the ground set `0..n` into blocks together with
//! an `m x n` weight matrix whose rows are knapsack constraints normalized to
//! budget 1. A fractional point assigns each item a value in `[0, 1]` so that
//! every block carries total mass 1.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values within this distance of 0 or 1 count as integral.
pub const EPS_FRAC: f64 = 1e-9;
/// Tolerance on equality constraints (block sums, knapsack rows).
pub const EPS_EQ: f64 = 1e-7;
/// Tolerance on the `[0, 1]` box.
pub const EPS_BOX: f64 = 1e-9;

#[inline]
pub fn is_fractional(v: f64) -> bool {
    v > EPS_FRAC && v < 1.0 - EPS_FRAC
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSystem {
    n: usize,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
    rows: Vec<Vec<f64>>,
    budgets: Vec<f64>,
    signed: bool,
}

impl PartitionSystem {
    /// Builds a system whose rows are already normalized to budget 1.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let budgets = vec![1.0; rows.len()];
        Self::build(n, blocks, rows, budgets, false)
    }

    /// Builds a system from raw rows and budgets; each row is divided by its budget.
    pub fn with_budgets(
        n: usize,
        blocks: Vec<Vec<usize>>,
        rows: Vec<Vec<f64>>,
        budgets: Vec<f64>,
    ) -> Result<Self> {
        if budgets.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: budgets.len(),
            });
        }
        let mut normalized = rows;
        for (row, &b) in normalized.iter_mut().zip(&budgets) {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidSystem(format!("budget {b} must be positive")));
            }
            row.iter_mut().for_each(|w| *w /= b);
        }
        Self::build(n, blocks, normalized, budgets, false)
    }

    /// Like [`PartitionSystem::new`] but rows may carry negative entries.
    ///
    /// Rounding only ever uses rows through their null space, so signed rows
    /// are fine for it; they arise from the star-cost rows in bi-point rounding.
    pub fn signed(n: usize, blocks: Vec<Vec<usize>>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let budgets = vec![1.0; rows.len()];
        Self::build(n, blocks, rows, budgets, true)
    }

    fn build(
        n: usize,
        blocks: Vec<Vec<usize>>,
        rows: Vec<Vec<f64>>,
        budgets: Vec<f64>,
        signed: bool,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidSystem(
                "at least one block is required".into(),
            ));
        }
        if rows.is_empty() {
            return Err(Error::InvalidSystem(
                "at least one knapsack row is required".into(),
            ));
        }
        let mut block_of = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidSystem(format!("block {b} is empty")));
            }
            for &j in block {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, n });
                }
                if block_of[j] != usize::MAX {
                    return Err(Error::InvalidSystem(format!(
                        "item {j} appears in two blocks"
                    )));
                }
                block_of[j] = b;
            }
        }
        if let Some(j) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidSystem(format!(
                "item {j} is not covered by any block"
            )));
        }
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for &w in row {
                if !w.is_finite() || (!signed && w < 0.0) {
                    return Err(Error::InvalidSystem(format!("invalid weight {w}")));
                }
            }
        }
        Ok(Self {
            n,
            blocks,
            block_of,
            rows,
            budgets,
            signed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Number of blocks.
    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    pub fn block_of(&self, j: usize) -> usize {
        self.block_of[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// Original budgets before normalization.
    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// `M y`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(y).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn block_sums(&self, y: &[f64]) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&j| y[j]).sum())
            .collect()
    }

    /// Checks that `y` is a fractional point of the system: inside the box
    /// and with unit mass on every block.
    pub fn check_feasible(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: y.len(),
            });
        }
        check_box(y)?;
        for (block, sum) in self.block_sums(y).into_iter().enumerate() {
            if (sum - 1.0).abs() > EPS_EQ {
                return Err(Error::BlockSum { block, sum });
            }
        }
        Ok(())
    }
}

fn check_box(y: &[f64]) -> Result<()> {
    for (index, &value) in y.iter().enumerate() {
        if !(value >= -EPS_BOX && value <= 1.0 + EPS_BOX) {
            return Err(Error::OutOfBox { index, value });
        }
    }
    Ok(())
}

/// A vector in `[0, 1]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FracVector(Vec<f64>);

impl FracVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_box(&values)?;
        Ok(Self(
            values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        ))
    }

    /// Wraps values produced internally by the rounding routines.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_integral(&self) -> bool {
        self.0.iter().all(|&v| !is_fractional(v))
    }
}

impl Deref for FracVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Fractional-entry counters `T(y, i)` and `T(y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FracProfile {
    pub per_block: Vec<usize>,
    pub total: usize,
    pub frac_set: Vec<usize>,
}

pub fn frac_profile(y: &[f64], ps: &PartitionSystem) -> FracProfile {
    let mut per_block = Vec::with_capacity(ps.r());
    let mut frac_set = Vec::new();
    for block in ps.blocks() {
        let before = frac_set.len();
        frac_set.extend(block.iter().copied().filter(|&j| is_fractional(y[j])));
        per_block.push((frac_set.len() - before).saturating_sub(1));
    }
    frac_set.sort_unstable();
    let total = per_block.iter().sum();
    FracProfile {
        per_block,
        total,
        frac_set,
    }
}

/// An index set grouped by block, for repeated evaluation of `Q(W, .)`.
#[derive(Clone, Debug)]
pub struct BlockedSet {
    groups: Vec<(usize, Vec<usize>)>,
}

impl BlockedSet {
    pub fn new(w: &[usize], ps: &PartitionSystem) -> Result<Self> {
        let mut items: Vec<usize> = w.to_vec();
        items.sort_unstable();
        items.dedup();
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut keyed = Vec::with_capacity(items.len());
        for j in items {
            if j >= ps.n() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    n: ps.n(),
                });
            }
            keyed.push((ps.block_of(j), j));
        }
        keyed.sort_unstable();
        for (b, j) in keyed {
            match groups.last_mut() {
                Some((last, members)) if *last == b => members.push(j),
                _ => groups.push((b, vec![j])),
            }
        }
        Ok(Self { groups })
    }

    /// Blocks touched by the set, i.e. `Support(W)`.
    pub fn support(&self) -> Vec<usize> {
        self.groups.iter().map(|(b, _)| *b).collect()
    }

    pub fn q(&self, y: &[f64]) -> f64 {
        self.q_detailed(y).value
    }

    pub fn q_detailed(&self, y: &[f64]) -> QValue {
        let mut value = 1.0;
        let mut clamped = 0;
        for (_, members) in &self.groups {
            let mut factor = 1.0 - members.iter().map(|&j| y[j]).sum::<f64>();
            if factor < 0.0 {
                factor = 0.0;
                clamped += 1;
            }
            value *= factor;
        }
        QValue { value, clamped }
    }
}

/// A potential value together with the number of block factors that were
/// clamped from a tiny negative value to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QValue {
    pub value: f64,
    pub clamped: usize,
}

/// `Q(W, y) = prod_i (1 - y(W ∩ G_i))`.
pub fn q_potential(w: &[usize], y: &[f64], ps: &PartitionSystem) -> Result<f64> {
    Ok(q_potential_detailed(w, y, ps)?.value)
}

pub fn q_potential_detailed(w: &[usize], y: &[f64], ps: &PartitionSystem) -> Result<QValue> {
    if y.len() != ps.n() {
        return Err(Error::DimensionMismatch {
            expected: ps.n(),
            got: y.len(),
        });
    }
    Ok(BlockedSet::new(w, ps)?.q_detailed(y))
}

/// Blocks intersecting `w`, ascending.
pub fn support(w: &[usize], ps: &PartitionSystem) -> Result<Vec<usize>> {
    Ok(BlockedSet::new(w, ps)?.support())
}

/// `W ∧ X`: the members of `w` lying in one of the blocks listed in `x`.
pub fn wedge(w: &[usize], x: &[usize], ps: &PartitionSystem) -> Result<Vec<usize>> {
    let mut keep = vec![false; ps.r()];
    for &b in x {
        if b >= ps.r() {
            return Err(Error::IndexOutOfRange {
                index: b,
                n: ps.r(),
            });
        }
        keep[b] = true;
    }
    let mut out = Vec::new();
    for &j in w {
        if j >= ps.n() {
            return Err(Error::IndexOutOfRange {
                index: j,
                n: ps.n(),
            });
        }
        if keep[ps.block_of(j)] {
            out.push(j);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Outcome of checking the deterministic rounding guarantees on an output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EReport {
    /// Block sums equal 1.
    pub e3: bool,
    /// `M y_out = M y_in`.
    pub e4: bool,
    /// At most `2t` fractional entries.
    pub e5: bool,
    /// At most `m + 1` fractional entries per block.
    pub e6: bool,
    pub max_block_error: f64,
    pub max_knapsack_error: f64,
    pub fractional: usize,
    pub max_fractional_per_block: usize,
}

impl EReport {
    pub fn all(&self) -> bool {
        self.e3 && self.e4 && self.e5 && self.e6
    }
}

pub fn validate_e_properties(
    y_in: &[f64],
    y_out: &[f64],
    ps: &PartitionSystem,
    t: usize,
) -> Result<EReport> {
    for y in [y_in, y_out] {
        if y.len() != ps.n() {
            return Err(Error::DimensionMismatch {
                expected: ps.n(),
                got: y.len(),
            });
        }
    }
    let max_block_error = ps
        .block_sums(y_out)
        .into_iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    let before = ps.apply(y_in);
    let after = ps.apply(y_out);
    let max_knapsack_error = before
        .iter()
        .zip(&after)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let profile = frac_profile(y_out, ps);
    let fractional = profile.frac_set.len();
    let max_fractional_per_block = ps
        .blocks()
        .iter()
        .map(|b| b.iter().filter(|&&j| is_fractional(y_out[j])).count())
        .max()
        .unwrap_or(0);
    Ok(EReport {
        e3: max_block_error <= EPS_EQ,
        e4: max_knapsack_error <= EPS_EQ,
        e5: fractional <= 2 * t,
        e6: max_fractional_per_block <= ps.m() + 1,
        max_block_error,
        max_knapsack_error,
        fractional,
        max_fractional_per_block,
    })
}

/// Snaps near-integral entries of the given blocks onto `{0, 1}` and restores
/// each block sum to exactly 1 by adjusting its largest fractional entry.
pub(crate) fn snap_blocks(y: &mut [f64], ps: &PartitionSystem, blocks: &[usize]) {
    for &b in blocks {
        let block = ps.block(b);
        for &j in block {
            if y[j] <= EPS_FRAC {
                y[j] = 0.0;
            } else if y[j] >= 1.0 - EPS_FRAC {
                y[j] = 1.0;
            }
        }
        let sum: f64 = block.iter().map(|&j| y[j]).sum();
        let drift = 1.0 - sum;
        if drift == 0.0 {
            continue;
        }
        let pick = block
            .iter()
            .copied()
            .filter(|&j| is_fractional(y[j]))
            .max_by(|&a, &b| {
                y[a].min(1.0 - y[a])
                    .total_cmp(&y[b].min(1.0 - y[b]))
                    .then(b.cmp(&a))
            });
        if let Some(j) = pick {
            y[j] = (y[j] + drift).clamp(0.0, 1.0);
        }
    }
}

/// Serialized form of a knapsack-partition instance with a starting point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KpsInstance {
    pub n: usize,
    pub blocks: Vec<Vec<usize>>,
    #[serde(rename = "M")]
    pub weights: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl KpsInstance {
    pub fn into_parts(self) -> Result<(PartitionSystem, FracVector)> {
        let ps = PartitionSystem::new(self.n, self.blocks, self.weights)?;
        let y = FracVector::new(self.y)?;
        ps.check_feasible(&y)?;
        Ok((ps, y))
    }

    pub fn from_parts(ps: &PartitionSystem, y: &FracVector) -> Self {
        Self {
            n: ps.n(),
            blocks: ps.blocks().to_vec(),
            weights: ps.rows().to_vec(),
            y: y.to_vec(),
        }
    }
}
