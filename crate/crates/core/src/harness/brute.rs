//! Exhaustive optima for desk-scale facility instances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::facility::FacilityInstance;

/// Largest facility count the subset enumerations accept.
pub const MAX_BRUTE_FACILITIES: usize = 20;

pub fn mask_members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

fn check_size(inst: &FacilityInstance) -> Result<usize> {
    let n = inst.n_facilities();
    if n > MAX_BRUTE_FACILITIES {
        return Err(Error::SizeCap {
            what: "facility enumeration",
            size: n,
            cap: MAX_BRUTE_FACILITIES,
        });
    }
    Ok(n)
}

fn best_feasible<F>(inst: &FacilityInstance, objective: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let n = check_size(inst)?;
    let best = (1u32..1 << n)
        .into_par_iter()
        .filter_map(|mask| {
            let s = mask_members(mask, n);
            inst.is_feasible(&s).then(|| (objective(&s), mask))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    match best {
        Some((v, mask)) => Ok((mask_members(mask, n), v)),
        None => Err(Error::InvalidInstance(
            "no non-empty facility set fits the budgets".into(),
        )),
    }
}

/// Optimal median cost over feasible facility sets, ties to the lowest mask.
pub fn median_opt(inst: &FacilityInstance) -> Result<(Vec<usize>, f64)> {
    best_feasible(inst, |s| inst.cost(s))
}

/// Optimal center radius over feasible facility sets.
pub fn center_opt(inst: &FacilityInstance) -> Result<(Vec<usize>, f64)> {
    best_feasible(inst, |s| inst.radius(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facility::euclidean;

    #[test]
    fn picks_cheapest_feasible() {
        let pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 1.0), (10.0, 1.0)];
        // facilities 0,1 at the two ends; opening both is over budget
        let inst = FacilityInstance::normalized(
            euclidean(&pts),
            vec![0, 1],
            vec![2, 3],
            vec![vec![0.6, 0.6]],
        )
        .unwrap();
        let (s, c) = median_opt(&inst).unwrap();
        assert_eq!(s, vec![0]);
        assert!((c - (1.0 + 101f64.sqrt())).abs() < 1e-12);
        let (s, r) = center_opt(&inst).unwrap();
        assert_eq!(s, vec![0]);
        assert!((r - 101f64.sqrt()).abs() < 1e-12);
    }
}
