use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nullspace::{apply_step, null_vector, LinearSystem};
use crate::error::{Error, Result};
use crate::kps::{EPS_EQ, EPS_FRAC};

/// One move of the walk: `y += a v` with `a` signed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkStep {
    pub up: bool,
    pub a: f64,
}

#[derive(Clone, Debug)]
pub struct WalkOutcome {
    pub y: Vec<f64>,
    pub steps: Vec<WalkStep>,
}

fn interior(sys: &LinearSystem, y: &[f64], j: usize) -> bool {
    y[j] > sys.lower[j] + EPS_FRAC && y[j] < sys.upper[j] - EPS_FRAC
}

fn room(sys: &LinearSystem, y: &[f64], v: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..y.len() {
        if v[j] > 0.0 {
            best = best.min((sys.upper[j] - y[j]).max(0.0) / v[j]);
        } else if v[j] < 0.0 {
            best = best.min((y[j] - sys.lower[j]).max(0.0) / -v[j]);
        }
    }
    best
}

/// Walks from `y` to an extreme point of `{x : A x = A y, lower <= x <= upper}`
/// with fixed variables held in place, keeping `E[x] = y`.
///
/// Each move goes to the boundary along a null direction of the interior
/// free coordinates, up with probability `a- / (a+ + a-)` and down otherwise.
pub fn extreme_point_walk<R: Rng + ?Sized>(
    y: &[f64],
    sys: &LinearSystem,
    rng: &mut R,
) -> Result<WalkOutcome> {
    if y.len() != sys.q {
        return Err(Error::DimensionMismatch {
            expected: sys.q,
            got: y.len(),
        });
    }
    for (j, &v) in y.iter().enumerate() {
        if v < sys.lower[j] - EPS_EQ || v > sys.upper[j] + EPS_EQ {
            return Err(Error::OutOfBox { index: j, value: v });
        }
    }
    let mut x = y.to_vec();
    let mut steps = Vec::new();
    loop {
        let mask: Vec<bool> = (0..sys.q)
            .map(|j| sys.fixed.get(j).copied().unwrap_or(false) || !interior(sys, &x, j))
            .collect();
        let local = LinearSystem {
            fixed: mask,
            ..sys.clone()
        };
        let Some(v) = null_vector(&local) else { break };
        let up = room(sys, &x, &v);
        let neg: Vec<f64> = v.iter().map(|c| -c).collect();
        let down = room(sys, &x, &neg);
        if !(up.is_finite() && down.is_finite()) || up + down <= 0.0 {
            return Err(Error::Numerical("walk direction has no room".into()));
        }
        let go_up = rng.gen::<f64>() < down / (up + down);
        let (a, dir) = if go_up { (up, &v) } else { (down, &neg) };
        apply_step(&mut x, dir, a);
        // The coordinate that defined the step lands on its bound exactly.
        let mut hit = None;
        let mut best = f64::INFINITY;
        for j in 0..sys.q {
            if dir[j] == 0.0 {
                continue;
            }
            let gap = if dir[j] > 0.0 {
                sys.upper[j] - x[j]
            } else {
                x[j] - sys.lower[j]
            };
            if gap < best {
                best = gap;
                hit = Some(j);
            }
        }
        if let Some(j) = hit {
            x[j] = if dir[j] > 0.0 {
                sys.upper[j]
            } else {
                sys.lower[j]
            };
        }
        for j in 0..sys.q {
            if x[j] <= sys.lower[j] + EPS_FRAC {
                x[j] = sys.lower[j];
            } else if x[j] >= sys.upper[j] - EPS_FRAC {
                x[j] = sys.upper[j];
            }
        }
        steps.push(WalkStep { up: go_up, a });
    }
    Ok(WalkOutcome { y: x, steps })
}
