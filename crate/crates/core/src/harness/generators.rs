//! Seeded instance generators.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facility::{euclidean, FacilityInstance};
use crate::kps::PartitionSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricSpec {
    /// Points uniform in the unit square.
    UniformSquare,
    /// Nodes of a random recursive tree with edge lengths in `[0.1, 1)`.
    RandomTree,
    /// Gaussian clusters around uniform centres.
    ClusteredGaussian { clusters: usize, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightModel {
    /// Weights uniform in `[0.1, 1)`.
    Uniform,
    /// A `big_fraction` share of facilities weighs `big`, the rest `small`.
    TwoScale {
        big_fraction: f64,
        big: f64,
        small: f64,
    },
    /// Every facility weighs 1.
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacilitySpec {
    pub metric: MetricSpec,
    pub n_facilities: usize,
    pub n_clients: usize,
    pub m: usize,
    pub weights: WeightModel,
    /// Budget as a share of the row total; raised so every single facility fits.
    pub budget_fraction: f64,
}

impl FacilitySpec {
    pub fn new(n_facilities: usize, n_clients: usize, m: usize) -> Self {
        Self {
            metric: MetricSpec::UniformSquare,
            n_facilities,
            n_clients,
            m,
            weights: WeightModel::Uniform,
            budget_fraction: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::Config(s.into()));
        if self.n_facilities == 0 || self.n_clients == 0 || self.m == 0 {
            return bad("need at least one facility, client and row");
        }
        if !(self.budget_fraction > 0.0 && self.budget_fraction <= 1.0) {
            return bad("budget_fraction must lie in (0, 1]");
        }
        if let MetricSpec::ClusteredGaussian { clusters, sigma } = self.metric {
            if clusters == 0 || !(sigma > 0.0) {
                return bad("clustered metric needs clusters >= 1 and sigma > 0");
            }
        }
        if let WeightModel::TwoScale {
            big_fraction,
            big,
            small,
        } = self.weights
        {
            if !(0.0..=1.0).contains(&big_fraction) || !(big > 0.0) || !(small > 0.0) {
                return bad("two-scale weights need a fraction in [0, 1] and positive sizes");
            }
        }
        Ok(())
    }
}

fn tree_metric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for v in 1..n {
        let p = rng.gen_range(0..v);
        let len = rng.gen_range(0.1..1.0);
        for u in 0..v {
            let x = d[p][u] + len;
            d[v][u] = x;
            d[u][v] = x;
        }
    }
    d
}

pub fn gen_metric<R: Rng + ?Sized>(spec: &MetricSpec, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    match *spec {
        MetricSpec::UniformSquare => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            euclidean(&pts)
        }
        MetricSpec::RandomTree => tree_metric(n, rng),
        MetricSpec::ClusteredGaussian { clusters, sigma } => {
            let centres: Vec<(f64, f64)> = (0..clusters).map(|_| (rng.gen(), rng.gen())).collect();
            let noise = Normal::new(0.0, sigma).expect("sigma validated");
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let c = centres[rng.gen_range(0..clusters)];
                    (c.0 + noise.sample(rng), c.1 + noise.sample(rng))
                })
                .collect();
            euclidean(&pts)
        }
    }
}

/// Facilities are points `0..nf`, clients the next `nc`.
pub fn gen_instance<R: Rng + ?Sized>(spec: &FacilitySpec, rng: &mut R) -> Result<FacilityInstance> {
    spec.validate()?;
    let (nf, nc) = (spec.n_facilities, spec.n_clients);
    let dist = gen_metric(&spec.metric, nf + nc, rng);
    let mut weights = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let row: Vec<f64> = match spec.weights {
            WeightModel::Uniform => (0..nf).map(|_| rng.gen_range(0.1..1.0)).collect(),
            WeightModel::Unit => vec![1.0; nf],
            WeightModel::TwoScale {
                big_fraction,
                big,
                small,
            } => {
                let n_big = (big_fraction * nf as f64).round() as usize;
                let mut row: Vec<f64> = (0..nf)
                    .map(|i| if i < n_big { big } else { small })
                    .collect();
                row.shuffle(rng);
                row
            }
        };
        weights.push(row);
    }
    let budgets = weights
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            (spec.budget_fraction * total).max(row.iter().copied().fold(0.0, f64::max))
        })
        .collect();
    FacilityInstance::new(
        dist,
        (0..nf).collect(),
        (nf..nf + nc).collect(),
        weights,
        budgets,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpsSpec {
    pub blocks: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub m: usize,
    /// Scale each row so that `M y = 1` exactly.
    #[serde(default)]
    pub tight: bool,
}

/// Random block sizes in `[min_size, max_size]`, masses in `[0.05, 1)`
/// normalized per block, and rows in `[0, 1/r)` unless `tight`.
pub fn gen_kps<R: Rng + ?Sized>(
    spec: &KpsSpec,
    rng: &mut R,
) -> Result<(PartitionSystem, Vec<f64>)> {
    if spec.blocks == 0 || spec.min_size == 0 || spec.min_size > spec.max_size || spec.m == 0 {
        return Err(Error::Config(
            "need blocks, m >= 1 and 1 <= min_size <= max_size".into(),
        ));
    }
    let mut blocks = Vec::with_capacity(spec.blocks);
    let mut y = Vec::new();
    for _ in 0..spec.blocks {
        let size = rng.gen_range(spec.min_size..=spec.max_size);
        let raw: Vec<f64> = (0..size).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        blocks.push((y.len()..y.len() + size).collect());
        y.extend(raw.iter().map(|v| v / s));
    }
    let n = y.len();
    let r = spec.blocks as f64;
    let mut rows: Vec<Vec<f64>> = (0..spec.m)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0) / r).collect())
        .collect();
    if spec.tight {
        for row in rows.iter_mut() {
            let load: f64 = row.iter().zip(&y).map(|(a, b)| a * b).sum();
            row.iter_mut().for_each(|a| *a /= load);
        }
    }
    Ok((PartitionSystem::new(n, blocks, rows)?, y))
}

/// `r` blocks `{2b, 2b+1}` with `y_{2b} = p`; the rows weigh only the even
/// items. Rounding these behaves like `r` Bernoulli(`p`) draws.
pub fn bernoulli_kps<R: Rng + ?Sized>(
    r: usize,
    p: f64,
    m: usize,
    rng: &mut R,
) -> Result<(PartitionSystem, Vec<f64>)> {
    if r == 0 || m == 0 || !(0.0..=1.0).contains(&p) {
        return Err(Error::Config("need r, m >= 1 and p in [0, 1]".into()));
    }
    let blocks = (0..r).map(|b| vec![2 * b, 2 * b + 1]).collect();
    let y = (0..2 * r)
        .map(|j| if j % 2 == 0 { p } else { 1.0 - p })
        .collect();
    let rows = (0..m)
        .map(|_| {
            (0..2 * r)
                .map(|j| {
                    if j % 2 == 0 {
                        rng.gen_range(0.0..1.0) / r as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok((PartitionSystem::new(2 * r, blocks, rows)?, y))
}

/// Indicator of the even items of [`bernoulli_kps`].
pub fn bernoulli_indicator(r: usize) -> Vec<f64> {
    (0..2 * r)
        .map(|j| if j % 2 == 0 { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facility::check_metric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn specs() -> Vec<FacilitySpec> {
        let mut out = Vec::new();
        for metric in [
            MetricSpec::UniformSquare,
            MetricSpec::RandomTree,
            MetricSpec::ClusteredGaussian {
                clusters: 3,
                sigma: 0.05,
            },
        ] {
            for weights in [
                WeightModel::Uniform,
                WeightModel::Unit,
                WeightModel::TwoScale {
                    big_fraction: 0.25,
                    big: 0.5,
                    small: 0.05,
                },
            ] {
                out.push(FacilitySpec {
                    metric: metric.clone(),
                    weights,
                    ..FacilitySpec::new(8, 12, 2)
                });
            }
        }
        out
    }

    #[test]
    fn single_point_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inst = gen_instance(&FacilitySpec::new(1, 1, 1), &mut rng).unwrap();
        assert_eq!(inst.n_facilities(), 1);
        assert!(inst.is_feasible(&[0]));
    }

    #[test]
    fn generated_metrics_are_valid() {
        for (k, spec) in specs().iter().enumerate() {
            for seed in 0..5 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64);
                let inst = gen_instance(spec, &mut rng).unwrap();
                check_metric(&inst.dist).unwrap();
                for i in 0..inst.n_facilities() {
                    assert!(inst.is_feasible(&[i]));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        for spec in specs() {
            let a = gen_instance(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = gen_instance(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(
                serde_json::to_vec(&a).unwrap(),
                serde_json::to_vec(&b).unwrap()
            );
        }
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in specs() {
            let s = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<FacilitySpec>(&s).unwrap(), spec);
        }
    }

    #[test]
    fn kps_generators_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = KpsSpec {
            blocks: 10,
            min_size: 2,
            max_size: 5,
            m: 3,
            tight: false,
        };
        let (ps, y) = gen_kps(&spec, &mut rng).unwrap();
        ps.check_feasible(&y).unwrap();
        let (ps, y) = gen_kps(
            &KpsSpec {
                tight: true,
                ..spec
            },
            &mut rng,
        )
        .unwrap();
        assert!(ps.apply(&y).iter().all(|l| (l - 1.0).abs() < 1e-12));
        let (ps, y) = bernoulli_kps(20, 0.3, 2, &mut rng).unwrap();
        ps.check_feasible(&y).unwrap();
        let mu: f64 = y
            .iter()
            .zip(bernoulli_indicator(20))
            .map(|(a, b)| a * b)
            .sum();
        assert!((mu - 6.0).abs() < 1e-12);
    }
}
