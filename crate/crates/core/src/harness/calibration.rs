//! Frozen constants for the statistical checks.
//!
//! `calibrate` runs the measurement suite on [`CAL_SEED`], takes the largest
//! constant each measurement needs and multiplies it by [`MULTIPLIER`].
//! Measurements with a standard error are read at the upper end of their 95%
//! interval, so a zero-effect probe does not freeze its own noise. The
//! result is written once to `fixtures/calibration.json` and only read after
//! that. A missing fixture is an error; nothing recalibrates implicitly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::Z95;
use super::suite::{self, CAL_SEED};
use crate::error::{Error, Result};

pub const FIXTURE_VERSION: u32 = 1;
pub const FIXTURE_FILE: &str = "calibration.json";
pub const FIXTURE_DIR_ENV: &str = "KPR_FIXTURE_DIR";
pub const MULTIPLIER: f64 = 1.5;

/// Trial counts and instance counts shared by calibration and acceptance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub gap_trials: usize,
    pub mult_trials: usize,
    pub concentration_trials: usize,
    pub pseudo_trials: usize,
    pub pair_trials: usize,
    pub median_instances: usize,
    pub median_trials: usize,
    pub median_t: usize,
    pub multi_center_instances: usize,
    pub multi_center_gamma: f64,
    pub tail_trials: usize,
    pub cylinder_trials: usize,
    pub product_trials: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            gap_trials: 4000,
            mult_trials: 2000,
            concentration_trials: 10_000,
            pseudo_trials: 400,
            pair_trials: 2000,
            median_instances: 40,
            median_trials: 200,
            median_t: 800,
            multi_center_instances: 30,
            multi_center_gamma: 0.25,
            tail_trials: 4000,
            cylinder_trials: 20_000,
            product_trials: 10_000,
        }
    }
}

impl Grid {
    /// Small counts for smoke tests.
    pub fn quick() -> Self {
        Self {
            gap_trials: 60,
            mult_trials: 30,
            concentration_trials: 200,
            pseudo_trials: 10,
            pair_trials: 30,
            median_instances: 2,
            median_trials: 10,
            median_t: 800,
            multi_center_instances: 2,
            multi_center_gamma: 0.25,
            tail_trials: 60,
            cylinder_trials: 200,
            product_trials: 100,
        }
    }
}

/// One value per calibrated bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Additive potential gap, `c1 m^2 / t`.
    pub c1: f64,
    /// Multiplicative potential gap, `exp(c2 m^2 d^2 / t)`.
    pub c2: f64,
    /// Discard quantile, `c3 sqrt(n ln(1/delta))`.
    pub c3: f64,
    /// FullKPR discards, `c4 sqrt(t ln(m/delta))`.
    pub c4: f64,
    /// Pair-system gap per client.
    pub c5: f64,
    /// Multi-knapsack center discards, `c6 m sqrt(ln(m/gamma)/gamma)`.
    pub c6: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    /// Median cost slack, `(3.25 + c m^2/t) * LP`.
    pub c_median_lp: f64,
    /// Cylinder products, `(1 + c/t)`.
    pub c_cylinder: f64,
    /// FullKPR pair products, `(1 + c/t)`.
    pub c_product: f64,
}

impl Constants {
    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            c1: f(self.c1),
            c2: f(self.c2),
            c3: f(self.c3),
            c4: f(self.c4),
            c5: f(self.c5),
            c6: f(self.c6),
            c8: f(self.c8),
            c9: f(self.c9),
            c10: f(self.c10),
            c_median_lp: f(self.c_median_lp),
            c_cylinder: f(self.c_cylinder),
            c_product: f(self.c_product),
        }
    }

    fn values(&self) -> [(&'static str, f64); 12] {
        [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
            ("c6", self.c6),
            ("c8", self.c8),
            ("c9", self.c9),
            ("c10", self.c10),
            ("c_median_lp", self.c_median_lp),
            ("c_cylinder", self.c_cylinder),
            ("c_product", self.c_product),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub version: u32,
    pub seed: u64,
    pub multiplier: f64,
    pub grid: Grid,
    /// Largest value each measurement needed, floored at 0.
    pub observed: Constants,
    pub constants: Constants,
}

fn max0(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

pub fn observe(seed: u64, grid: &Grid) -> Result<Constants> {
    let gaps = suite::gap_probes(seed, grid.gap_trials)?;
    let c1 = max0(
        gaps.iter()
            .map(|p| (p.gap() + Z95 * p.stderr) * p.t as f64 / (p.m * p.m) as f64),
    );

    let mults = suite::mult_probes(seed, grid.mult_trials)?;
    let c2 = max0(mults.iter().filter(|p| p.q0 > 0.0).map(|p| {
        ((p.mean + Z95 * p.stderr) / p.q0).ln() * p.t as f64 / ((p.m * p.m * p.d * p.d) as f64)
    }));

    let conc = suite::concentration_runs(seed, grid.concentration_trials)?;
    let c3 = max0(conc.iter().map(|(_, s)| s.ratio));

    let pseudo = suite::pseudo_runs(seed, grid.pseudo_trials)?;
    let c4 = max0(
        pseudo
            .iter()
            .map(|c| c.qs.iter().copied().max().unwrap_or(0) as f64 / c.unit()),
    );

    let pairs = suite::pair_gap_probes(seed, grid.pair_trials)?;
    let c5 = max0(
        pairs
            .iter()
            .filter(|p| p.scale > 0.0)
            .map(|p| (p.mean + Z95 * p.stderr - p.q0) / p.scale),
    );

    let mc = suite::multi_center_runs(
        seed,
        grid.multi_center_instances,
        grid.multi_center_gamma,
        None,
    )?;
    let unit = suite::multi_center_unit(2, grid.multi_center_gamma);
    let c6 = max0(
        mc.iter()
            .flat_map(|r| r.accepted_qs.iter().map(|&q| q as f64 / unit)),
    );

    let tails = suite::tail_grid(seed, grid.tail_trials, 0.0, 0.0, 0.0)?;
    let needed =
        |r: &crate::tails::TailReport| max0(r.cells.iter().map(|c| c.needed_constant_upper()));
    let (c8, c9, c10) = (
        needed(&tails.small_q),
        needed(&tails.lower),
        needed(&tails.upper),
    );

    let median = suite::median_cost_runs(
        seed,
        grid.median_instances,
        grid.median_trials,
        grid.median_t,
    )?;
    let scale = grid.median_t as f64 / 4.0;
    let c_median_lp = max0(median.iter().map(|r| {
        let s = super::stats::Summary::of(&r.ratios);
        (s.mean + Z95 * s.stderr() - 3.25) * scale
    }));

    let cyl = suite::cylinder_probes(seed, grid.cylinder_trials)?;
    let c_cylinder = max0(
        cyl.iter()
            .filter(|p| p.target > 0.0)
            .map(|p| ((p.mean + Z95 * p.stderr) / p.target - 1.0) * p.t as f64),
    );

    let prod = suite::product_probes(seed, grid.product_trials)?;
    let c_product = max0(
        prod.iter()
            .filter(|p| p.target > 0.0)
            .map(|p| ((p.mean + Z95 * p.stderr) / p.target - 1.0) * p.t as f64),
    );

    let out = Constants {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c8,
        c9,
        c10,
        c_median_lp,
        c_cylinder,
        c_product,
    };
    if let Some((name, v)) = out.values().into_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical(format!("calibrated {name} is {v}")));
    }
    Ok(out)
}

pub fn calibrate(seed: u64, grid: Grid) -> Result<Calibration> {
    let observed = observe(seed, &grid)?;
    Ok(Calibration {
        version: FIXTURE_VERSION,
        seed,
        multiplier: MULTIPLIER,
        constants: observed.map(|v| v * MULTIPLIER),
        observed,
        grid,
    })
}

/// The default calibration run.
pub fn calibrate_default() -> Result<Calibration> {
    calibrate(CAL_SEED, Grid::default())
}

pub fn fixture_dir() -> PathBuf {
    match std::env::var_os(FIXTURE_DIR_ENV) {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"),
    }
}

pub fn load_from(path: &Path) -> Result<Calibration> {
    let missing = |reason: String| Error::MissingFixture {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| missing(e.to_string()))?;
    let cal: Calibration = serde_json::from_str(&text).map_err(|e| missing(e.to_string()))?;
    if cal.version != FIXTURE_VERSION {
        return Err(missing(format!(
            "version {} but expected {FIXTURE_VERSION}",
            cal.version
        )));
    }
    Ok(cal)
}

pub fn load() -> Result<Calibration> {
    load_from(&fixture_dir().join(FIXTURE_FILE))
}

pub fn save(cal: &Calibration, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(cal)? + "\n")?;
    Ok(())
}
