//! Facility-location instances shared by the median and center solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed in the triangle inequality.
pub const EPS_METRIC: f64 = 1e-9;

/// Clients and facilities living in one finite metric. Facility `i` sits at
/// point `facilities[i]` and client `j` at point `clients[j]`. Weight rows
/// are stored normalized to budget 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacilityInstance {
    pub dist: Vec<Vec<f64>>,
    pub facilities: Vec<usize>,
    pub clients: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub budgets: Vec<f64>,
}

impl FacilityInstance {
    /// Builds and validates an instance; `weights` are divided by `budgets`.
    pub fn new(
        dist: Vec<Vec<f64>>,
        facilities: Vec<usize>,
        clients: Vec<usize>,
        weights: Vec<Vec<f64>>,
        budgets: Vec<f64>,
    ) -> Result<Self> {
        if budgets.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                got: budgets.len(),
            });
        }
        let mut weights = weights;
        for (row, &b) in weights.iter_mut().zip(&budgets) {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidInstance(format!(
                    "budget {b} must be positive"
                )));
            }
            row.iter_mut().for_each(|w| *w /= b);
        }
        let inst = Self {
            dist,
            facilities,
            clients,
            weights,
            budgets,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Rows already normalized to budget 1.
    pub fn normalized(
        dist: Vec<Vec<f64>>,
        facilities: Vec<usize>,
        clients: Vec<usize>,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = weights.len();
        Self::new(dist, facilities, clients, weights, vec![1.0; m])
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dist.len();
        for row in &self.dist {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
        }
        for &x in self.facilities.iter().chain(&self.clients) {
            if x >= p {
                return Err(Error::IndexOutOfRange { index: x, n: p });
            }
        }
        if self.facilities.is_empty() || self.clients.is_empty() {
            return Err(Error::InvalidInstance(
                "need at least one facility and one client".into(),
            ));
        }
        if self.weights.is_empty() {
            return Err(Error::InvalidInstance(
                "need at least one weight row".into(),
            ));
        }
        for row in &self.weights {
            if row.len() != self.facilities.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.facilities.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidInstance(
                    "weights must be finite and non-negative".into(),
                ));
            }
        }
        check_metric(&self.dist)
    }

    pub fn n_facilities(&self) -> usize {
        self.facilities.len()
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    /// Distance from client `j` to facility `i`.
    #[inline]
    pub fn d(&self, j: usize, i: usize) -> f64 {
        self.dist[self.clients[j]][self.facilities[i]]
    }

    #[inline]
    pub fn d_ff(&self, i: usize, k: usize) -> f64 {
        self.dist[self.facilities[i]][self.facilities[k]]
    }

    #[inline]
    pub fn d_cc(&self, j: usize, k: usize) -> f64 {
        self.dist[self.clients[j]][self.clients[k]]
    }

    /// `d(j, S)`; infinite for the empty set.
    pub fn dist_to_set(&self, j: usize, s: &[usize]) -> f64 {
        s.iter()
            .map(|&i| self.d(j, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Median objective `sum_j d(j, S)`.
    pub fn cost(&self, s: &[usize]) -> f64 {
        (0..self.n_clients()).map(|j| self.dist_to_set(j, s)).sum()
    }

    /// Center objective `max_j d(j, S)`.
    pub fn radius(&self, s: &[usize]) -> f64 {
        (0..self.n_clients())
            .map(|j| self.dist_to_set(j, s))
            .fold(0.0, f64::max)
    }

    /// Row loads `M_k(S)`.
    pub fn loads(&self, s: &[usize]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| s.iter().map(|&i| row[i]).sum())
            .collect()
    }

    pub fn is_feasible(&self, s: &[usize]) -> bool {
        self.loads(s).iter().all(|&l| l <= 1.0 + crate::kps::EPS_EQ)
    }

    /// Same metric and clients over a subset of facilities with new weights.
    pub fn restrict(&self, keep: &[usize], weights: Vec<Vec<f64>>) -> Result<Self> {
        let facilities = keep.iter().map(|&i| self.facilities[i]).collect();
        let inst = Self {
            dist: self.dist.clone(),
            facilities,
            clients: self.clients.clone(),
            weights,
            budgets: vec![1.0; self.m()],
        };
        inst.validate()?;
        Ok(inst)
    }
}

pub fn check_metric(d: &[Vec<f64>]) -> Result<()> {
    let p = d.len();
    let scale = d
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1.0);
    for x in 0..p {
        if d[x][x] != 0.0 {
            return Err(Error::InvalidInstance(format!(
                "d({x},{x}) = {} is not zero",
                d[x][x]
            )));
        }
        for y in 0..p {
            let v = d[x][y];
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "d({x},{y}) = {v} is invalid"
                )));
            }
            if (v - d[y][x]).abs() > EPS_METRIC * scale {
                return Err(Error::InvalidInstance(format!(
                    "d({x},{y}) is not symmetric"
                )));
            }
        }
    }
    for x in 0..p {
        for y in 0..p {
            for z in 0..p {
                if d[x][z] > d[x][y] + d[y][z] + EPS_METRIC * scale {
                    return Err(Error::InvalidInstance(format!(
                        "triangle inequality fails at ({x},{y},{z})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Euclidean distance matrix of planar points.
pub fn euclidean(points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> FacilityInstance {
        // points on a line at 0, 1, 3; facilities at 0 and 3, clients at 1 and 3
        let pts = [(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)];
        FacilityInstance::new(
            euclidean(&pts),
            vec![0, 2],
            vec![1, 2],
            vec![vec![2.0, 4.0]],
            vec![4.0],
        )
        .unwrap()
    }

    #[test]
    fn costs_and_loads() {
        let inst = line();
        assert_eq!(inst.weights, vec![vec![0.5, 1.0]]);
        assert_eq!(inst.cost(&[0]), 1.0 + 3.0);
        assert_eq!(inst.cost(&[0, 1]), 1.0);
        assert_eq!(inst.radius(&[1]), 2.0);
        assert!(inst.cost(&[]).is_infinite());
        assert!(inst.is_feasible(&[1]));
        assert!(!inst.is_feasible(&[0, 1]));
    }

    #[test]
    fn metric_violations_rejected() {
        let bad = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        assert!(check_metric(&bad).is_err());
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(check_metric(&asym).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = line();
        let s = serde_json::to_string(&inst).unwrap();
        let back: FacilityInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(inst, back);
    }
}
