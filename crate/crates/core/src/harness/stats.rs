//! Monte-Carlo aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{stream, Stream};
use crate::error::{Error, Result};

/// Running moments; `merge` is associative so partial sums can be combined
/// in any grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn push(&mut self, x: f64) {
        self.merge(&Summary {
            n: 1,
            mean: x,
            m2: 0.0,
            min: x,
            max: x,
        });
    }

    pub fn merge(&mut self, o: &Summary) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        self.mean = mean;
        self.n = n;
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    pub fn of(xs: &[f64]) -> Self {
        let mut s = Self::default();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    /// Sample variance.
    pub fn var(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.var() / self.n as f64).sqrt()
        }
    }

    /// Upper end of a one-sided normal interval at `z` standard errors.
    pub fn upper(&self, z: f64) -> f64 {
        self.mean + z * self.stderr()
    }
}

/// 1.96: two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Empirical `q`-quantile: the smallest sample value with at least a `q`
/// fraction of samples at or below it.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

/// Runs `op` once per trial on its own stream and returns results in trial
/// order.
pub fn monte_carlo<T, F>(trials: usize, seed: u64, tag: &str, op: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut Stream) -> T + Sync,
{
    if trials == 0 {
        return Err(Error::Config("monte carlo needs at least one trial".into()));
    }
    Ok((0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, tag, i as u64);
            op(i, &mut rng)
        })
        .collect())
}

/// Like [`monte_carlo`] for fallible trials; the first error wins.
pub fn try_monte_carlo<T, F>(trials: usize, seed: u64, tag: &str, op: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut Stream) -> Result<T> + Sync,
{
    monte_carlo(trials, seed, tag, op)?.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_has_zero_stderr() {
        let xs = monte_carlo(100, 1, "c", |_, _| 2.5).unwrap();
        let s = Summary::of(&xs);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.stderr(), 0.0);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(monte_carlo(0, 1, "c", |_, _| 0.0).is_err());
    }

    #[test]
    fn fair_coin_regression() {
        let xs = monte_carlo(10_000, 20240601, "coin", |_, r| {
            if r.gen::<bool>() {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let mean = Summary::of(&xs).mean;
        assert!((mean - 0.5).abs() <= 0.02, "{mean}");
    }

    #[test]
    fn merge_is_order_independent() {
        let xs = monte_carlo(1000, 3, "u", |_, r| r.gen::<f64>()).unwrap();
        let serial = Summary::of(&xs);
        let chunked = xs
            .par_chunks(37)
            .map(Summary::of)
            .reduce(Summary::default, |mut a, b| {
                a.merge(&b);
                a
            });
        assert_eq!(serial.n, chunked.n);
        assert!((serial.mean - chunked.mean).abs() < 1e-12);
        assert!((serial.var() - chunked.var()).abs() < 1e-12);
        assert_eq!(serial.max, chunked.max);
    }

    #[test]
    fn results_do_not_depend_on_trial_count() {
        let a = monte_carlo(10, 9, "t", |_, r| r.gen::<u64>()).unwrap();
        let b = monte_carlo(20, 9, "t", |_, r| r.gen::<u64>()).unwrap();
        assert_eq!(a[..], b[..10]);
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson(50, 100, Z95);
        assert!((lo - 0.403832).abs() < 1e-5 && (hi - 0.596168).abs() < 1e-5);
        let (lo, hi) = wilson(0, 100, Z95);
        // statsmodels proportion_confint(0, 100, method="wilson")
        assert!(lo.abs() < 1e-12);
        assert!((hi - 0.036993).abs() < 1e-5);
    }

    #[test]
    fn quantile_examples() {
        let xs: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(quantile(&xs, 0.99), 99.0);
        assert_eq!(quantile(&xs, 1.0), 100.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
    }
}
