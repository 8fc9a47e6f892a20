use crate::error::{Error, Result};

/// Equality constraints `A x = A x0` over `q` variables, with a box per
/// variable and an optional mask of variables that may not move.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: Vec<Vec<f64>>,
    pub q: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl LinearSystem {
    /// System over the unit box with no fixed variables.
    pub fn unit_box(a: Vec<Vec<f64>>, q: usize) -> Self {
        Self {
            a,
            q,
            lower: vec![0.0; q],
            upper: vec![1.0; q],
            fixed: vec![false; q],
        }
    }

    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn residual(&self, x: &[f64], x0: &[f64]) -> f64 {
        self.a
            .iter()
            .map(|row| {
                row.iter()
                    .zip(x.iter().zip(x0))
                    .map(|(a, (u, v))| a * (u - v))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

const PIVOT_TOL: f64 = 1e-11;

/// A non-zero vector in the null space of `sys.a` that vanishes on fixed
/// variables, or `None` when that null space is trivial.
///
/// The vector is the first basis vector of the reduced row-echelon null
/// basis: the lowest-index free column is set to 1. Entries are scaled so the
/// largest magnitude is 1.
pub fn null_vector(sys: &LinearSystem) -> Option<Vec<f64>> {
    let cols: Vec<usize> = (0..sys.q)
        .filter(|&j| !sys.fixed.get(j).copied().unwrap_or(false))
        .collect();
    if cols.is_empty() {
        return None;
    }
    let mut mat: Vec<Vec<f64>> = sys
        .a
        .iter()
        .map(|row| cols.iter().map(|&j| row[j]).collect())
        .collect();
    let sub = null_vector_dense(&mut mat, cols.len())?;
    let mut v = vec![0.0; sys.q];
    for (k, &j) in cols.iter().enumerate() {
        v[j] = sub[k];
    }
    Some(v)
}

/// Reduces `mat` (rows of width `q`) in place and returns the first null
/// basis vector.
pub(crate) fn null_vector_dense(mat: &mut [Vec<f64>], q: usize) -> Option<Vec<f64>> {
    let scale = mat
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1.0);
    let tol = PIVOT_TOL * scale;
    let p = mat.len();
    let mut pivots: Vec<usize> = Vec::with_capacity(p.min(q));
    let mut row = 0;
    let mut free = None;
    for col in 0..q {
        if row == p {
            free = Some(col);
            break;
        }
        let (best, mag) = (row..p)
            .map(|r| (r, mat[r][col].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= tol {
            for r in row..p {
                mat[r][col] = 0.0;
            }
            // Pivots to the right of the first free column do not enter the
            // first basis vector.
            free = Some(col);
            break;
        }
        mat.swap(row, best);
        let piv = mat[row][col];
        for v in mat[row][col..].iter_mut() {
            *v /= piv;
        }
        for r in 0..p {
            if r != row && mat[r][col] != 0.0 {
                let f = mat[r][col];
                let (src, dst) = if r < row {
                    let (a, b) = mat.split_at_mut(row);
                    (&b[0], &mut a[r])
                } else {
                    let (a, b) = mat.split_at_mut(r);
                    (&a[row], &mut b[0])
                };
                for c in col..q {
                    dst[c] -= f * src[c];
                }
                dst[col] = 0.0;
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free = free?;
    let mut v = vec![0.0; q];
    v[free] = 1.0;
    for (r, &pc) in pivots.iter().enumerate() {
        if pc < free {
            v[pc] = -mat[r][free];
        }
    }
    let norm = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    for x in &mut v {
        *x /= norm;
        if x.abs() < 1e-13 {
            *x = 0.0;
        }
    }
    Some(v)
}

/// Largest `a >= 0` with both `y + a v` and `y - a v` inside `[0, 1]^n`.
pub fn max_step(y: &[f64], v: &[f64]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (j, (&yj, &vj)) in y.iter().zip(v).enumerate() {
        if vj == 0.0 {
            continue;
        }
        let room = yj.min(1.0 - yj).max(0.0);
        if room == 0.0 {
            return Err(Error::PinnedStep { index: j });
        }
        best = best.min(room / vj.abs());
    }
    if best.is_infinite() {
        return Err(Error::UnboundedStep);
    }
    Ok(best)
}

/// Largest `a >= 0` with `y + a v` inside `[0, 1]^n`.
pub fn one_sided_step(y: &[f64], v: &[f64]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (&yj, &vj) in y.iter().zip(v) {
        if vj > 0.0 {
            best = best.min((1.0 - yj).max(0.0) / vj);
        } else if vj < 0.0 {
            best = best.min(yj.max(0.0) / -vj);
        }
    }
    if best.is_infinite() {
        return Err(Error::UnboundedStep);
    }
    Ok(best)
}

/// `y += a v`.
pub(crate) fn apply_step(y: &mut [f64], v: &[f64], a: f64) {
    for (yj, &vj) in y.iter_mut().zip(v) {
        if vj != 0.0 {
            *yj += a * vj;
        }
    }
}

/// Checks that a direction is a null vector within tolerance.
#[cfg(test)]
pub(crate) fn is_null(a: &[Vec<f64>], v: &[f64]) -> bool {
    let vmax = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    a.iter().all(|row| {
        row.iter().zip(v).map(|(p, q)| p * q).sum::<f64>().abs()
            <= crate::kps::EPS_EQ * vmax.max(1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proportional(v: &[f64], w: &[f64]) -> bool {
        let k = w.iter().position(|x| *x != 0.0).unwrap();
        let ratio = v[k] / w[k];
        v.iter().zip(w).all(|(a, b)| (a - ratio * b).abs() < 1e-12)
    }

    #[test]
    fn null_of_single_row() {
        let v = null_vector(&LinearSystem::unit_box(vec![vec![1.0, 1.0]], 2)).unwrap();
        assert!(proportional(&v, &[1.0, -1.0]));
    }

    #[test]
    fn identity_has_trivial_null_space() {
        let sys = LinearSystem::unit_box(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 2);
        assert!(null_vector(&sys).is_none());
    }

    #[test]
    fn null_of_two_by_three() {
        // Hand elimination: x0 = 2 x2, x1 = -3 x2.
        let a = vec![vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 4.0]];
        let v = null_vector(&LinearSystem::unit_box(a.clone(), 3)).unwrap();
        assert!(proportional(&v, &[2.0, -3.0, 1.0]));
        assert!(is_null(&a, &v));
    }

    #[test]
    fn null_respects_fixed_mask() {
        let a = vec![vec![1.0, 1.0, 1.0]];
        let sys = LinearSystem::unit_box(a, 3).with_fixed(vec![true, false, false]);
        let v = null_vector(&sys).unwrap();
        assert_eq!(v[0], 0.0);
        assert!(proportional(&v, &[0.0, 1.0, -1.0]));
    }

    #[test]
    fn null_with_zero_leading_column() {
        let a = vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]];
        let v = null_vector(&LinearSystem::unit_box(a, 3)).unwrap();
        assert!(proportional(&v, &[1.0, 0.0, 0.0]));
    }

    #[test]
    fn null_with_wide_matrix() {
        let a = vec![vec![1.0, 2.0, 0.0, 1.0]];
        let v = null_vector(&LinearSystem::unit_box(a.clone(), 4)).unwrap();
        assert!(proportional(&v, &[-2.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn max_step_examples() {
        assert_eq!(max_step(&[0.5, 0.5], &[1.0, -1.0]).unwrap(), 0.5);
        assert!((max_step(&[0.2, 0.8], &[1.0, -1.0]).unwrap() - 0.2).abs() < 1e-15);
        let a = max_step(&[0.3, 0.25, 0.45], &[2.0, -3.0, 1.0]).unwrap();
        // boundary distances: 0.3/2, 0.25/3, 0.45/1
        assert!((a - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn max_step_errors() {
        assert!(matches!(
            max_step(&[0.5], &[0.0]),
            Err(Error::UnboundedStep)
        ));
        assert!(matches!(
            max_step(&[0.0, 0.5], &[1.0, -1.0]),
            Err(Error::PinnedStep { index: 0 })
        ));
    }

    #[test]
    fn one_sided_examples() {
        assert!(
            (one_sided_step(&[0.3, 0.25, 0.45], &[2.0, -3.0, 1.0]).unwrap() - 0.25 / 3.0).abs()
                < 1e-15
        );
        assert!(
            (one_sided_step(&[0.3, 0.25, 0.45], &[-2.0, 3.0, -1.0]).unwrap() - 0.15).abs() < 1e-15
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn null_vector_is_null(rows in 1usize..4, extra in 1usize..4, seed in proptest::collection::vec(-3i32..4, 28)) {
                let q = rows + extra;
                let a: Vec<Vec<f64>> = (0..rows).map(|r| (0..q).map(|c| seed[r * 7 + c] as f64).collect()).collect();
                let v = null_vector(&LinearSystem::unit_box(a.clone(), q)).expect("wide system has a null vector");
                prop_assert!(v.iter().any(|x| *x != 0.0));
                prop_assert!(is_null(&a, &v));
            }

            #[test]
            fn max_step_is_tight(y in proptest::collection::vec(0.01f64..0.99, 1..6), v in proptest::collection::vec(-2.0f64..2.0, 6)) {
                let v: Vec<f64> = v[..y.len()].to_vec();
                prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
                let a = max_step(&y, &v).unwrap();
                let inside = |s: f64| y.iter().zip(&v).all(|(p, q)| {
                    let (u, w) = (p + s * q, p - s * q);
                    u >= -1e-12 && u <= 1.0 + 1e-12 && w >= -1e-12 && w <= 1.0 + 1e-12
                });
                prop_assert!(inside(a));
                prop_assert!(!inside(a + 1e-6));
            }
        }
    }
}
