use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use kpr_core::alteration::{concentration_trial, max_load, required_q, Generator};
use kpr_core::center::{
    multi_knapsack_center, standard_knapsack_center, CenterMode, MultiCenterConfig,
};
use kpr_core::facility::FacilityInstance;
use kpr_core::harness::calibration::{self, Grid};
use kpr_core::harness::generators::{gen_instance, FacilitySpec};
use kpr_core::harness::rng::stream;
use kpr_core::harness::suite;
use kpr_core::kps::{validate_e_properties, PartitionSystem};
use kpr_core::median_bipoint::km_bifactor;
use kpr_core::median_pairs::{mkm_additive, mkm_multiplicative, MkmConfig};
use kpr_core::rounding::{full_kpr, kpr, kpr_depround};
use kpr_core::tails::{lower_tail_check, upper_tail_check, TailReport};

#[derive(Parser)]
#[command(name = "kpr", about = "Knapsack-partition rounding experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Round a partition system read from JSON `{n, blocks, rows, y}`.
    Round {
        input: PathBuf,
        #[arg(long)]
        t: usize,
        /// Finish with independent selection.
        #[arg(long)]
        full: bool,
    },
    /// Dependent rounding of `{x, rows}`.
    Depround {
        input: PathBuf,
        #[arg(long)]
        t: usize,
    },
    /// Discard-set statistics for one generator.
    Concentration {
        #[arg(long, value_enum, default_value_t = GenKind::Bernoulli)]
        generator: GenKind,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
    },
    MedianBipoint {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
    },
    MedianPairs {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        /// Run the big-facility guessing variant at this epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    Center {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Standard)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
        /// MWU rounds; the default comes from gamma.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Tail grid as CSV; the grid is read from JSON when given.
    Tails {
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Check a facility set against an instance.
    Verify {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Comma-separated facility indices.
        #[arg(long, value_delimiter = ',')]
        set: Vec<usize>,
    },
    /// Recompute the frozen constants and write the fixture.
    Calibrate {
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON; a random instance is generated when absent.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    facilities: usize,
    #[arg(long, default_value_t = 15)]
    clients: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Constant,
    Bernoulli,
    Uniform,
    Pareto,
    BallsInBins,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    Multi1,
    Multi2,
    Multi3,
}

#[derive(Deserialize)]
struct RoundInput {
    n: usize,
    blocks: Vec<Vec<usize>>,
    rows: Vec<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Deserialize)]
struct DepInput {
    x: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

/// Bernoulli-like tail grid.
#[derive(Deserialize)]
struct TailGridSpec {
    r: usize,
    p: f64,
    ms: Vec<usize>,
    /// `t = mult * m`.
    t_mults: Vec<usize>,
    lower_deltas: Vec<f64>,
    upper_deltas: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, v: &T) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(v)?)
}

fn load_instance(a: &InstanceArgs, seed: u64) -> Result<FacilityInstance> {
    match &a.instance {
        Some(p) => {
            let inst: FacilityInstance = read_json(p)?;
            inst.validate()?;
            Ok(inst)
        }
        None => Ok(gen_instance(
            &FacilitySpec::new(a.facilities, a.clients, a.m),
            &mut stream(seed, "cli/instance", 0),
        )?),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let Common {
        seed,
        trials,
        workers,
        out,
    } = cli.common;
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()?;
    }
    let mut rng = stream(seed, "cli", 0);
    match cli.cmd {
        Cmd::Round { input, t, full } => {
            let inp: RoundInput = read_json(&input)?;
            let ps = PartitionSystem::new(inp.n, inp.blocks, inp.rows)?;
            let y = if full {
                full_kpr(&ps, &inp.y, t, &mut rng)?
            } else {
                kpr(&ps, &inp.y, t, &mut rng)?
            };
            let report = validate_e_properties(&inp.y, y.as_slice(), &ps, t)?;
            emit_json(&out, &serde_json::json!({ "y": y, "checks": report }))
        }
        Cmd::Depround { input, t } => {
            let inp: DepInput = read_json(&input)?;
            let x = kpr_depround(&inp.x, &inp.rows, t, &mut rng)?;
            emit_json(&out, &x)
        }
        Cmd::Concentration {
            generator,
            n,
            delta,
        } => {
            let g = match generator {
                GenKind::Constant => Generator::Constant,
                GenKind::Bernoulli => Generator::Bernoulli { p: 0.5 },
                GenKind::Uniform => Generator::Uniform,
                GenKind::Pareto => Generator::Pareto {
                    shape: 2.5,
                    cap: 50.0,
                },
                GenKind::BallsInBins => Generator::BallsInBins,
            };
            let mut s = concentration_trial(&g, n, delta, trials.unwrap_or(10_000), seed)?;
            s.greedy_sizes.clear();
            emit_json(&out, &s)
        }
        Cmd::MedianBipoint { inst, gamma } => {
            let inst = load_instance(&inst, seed)?;
            let o = km_bifactor(&inst, gamma, &mut rng)?;
            emit_json(
                &out,
                &serde_json::json!({
                    "set": o.solution.selected,
                    "q": o.solution.q,
                    "cost": o.cost,
                    "attempts": o.attempts,
                    "t": o.t,
                    "threshold": o.threshold,
                    "from_f1": o.from_f1,
                }),
            )
        }
        Cmd::MedianPairs {
            inst,
            gamma,
            epsilon,
        } => {
            let inst = load_instance(&inst, seed)?;
            let cal = calibration::load()?;
            let cfg = MkmConfig::new(gamma, cal.constants.c4);
            match epsilon {
                None => {
                    let o = mkm_additive(&inst, &cfg, &mut rng)?;
                    emit_json(
                        &out,
                        &serde_json::json!({
                            "set": o.solution.selected,
                            "q": o.solution.q,
                            "cost": o.cost,
                            "lp": o.lp_objective,
                            "attempts": o.attempts,
                            "t": o.t,
                            "out_of_regime": o.out_of_regime,
                        }),
                    )
                }
                Some(eps) => {
                    let o = mkm_multiplicative(&inst, &cfg, eps, &mut rng)?;
                    emit_json(
                        &out,
                        &serde_json::json!({
                            "set": o.set,
                            "cost": o.cost,
                            "max_load": o.max_load,
                            "rho": o.rho,
                            "guess": o.guess,
                            "q": o.q,
                        }),
                    )
                }
            }
        }
        Cmd::Center {
            inst,
            mode,
            gamma,
            epsilon,
            rounds,
        } => {
            let inst = load_instance(&inst, seed)?;
            let o = match mode {
                ModeArg::Standard => {
                    standard_knapsack_center(&inst, gamma, None, rounds, &mut rng)?
                }
                m => {
                    let mode = match m {
                        ModeArg::Multi1 => CenterMode::Multi1,
                        ModeArg::Multi2 => CenterMode::Multi2,
                        _ => CenterMode::Multi3,
                    };
                    let cal = calibration::load()?;
                    let mut cfg = MultiCenterConfig::new(mode, gamma, cal.constants.c6);
                    cfg.epsilon = Some(epsilon);
                    cfg.rounds = rounds;
                    multi_knapsack_center(&inst, &cfg, &mut rng)?
                }
            };
            emit_json(
                &out,
                &serde_json::json!({
                    "radius": o.radius,
                    "set": o.set,
                    "max_distance": inst.radius(&o.set),
                    "loads": inst.loads(&o.set),
                    "rounds": o.rounds.len(),
                    "failed_rounds": o.failed_rounds,
                    "regret_ok": o.regret_ok(),
                }),
            )
        }
        Cmd::Tails { grid } => {
            let cal = calibration::load()?;
            let c = &cal.constants;
            let trials = trials.unwrap_or(4000);
            let reports: Vec<TailReport> = match grid {
                None => {
                    let g = suite::tail_grid(seed, trials, c.c8, c.c9, c.c10)?;
                    vec![g.small_q, g.lower, g.upper]
                }
                Some(p) => {
                    let spec: TailGridSpec = read_json(&p)?;
                    let w = kpr_core::harness::generators::bernoulli_indicator(spec.r);
                    let mu = spec.p * spec.r as f64;
                    let mut out = Vec::new();
                    for &m in &spec.ms {
                        let (ps, y) = kpr_core::harness::generators::bernoulli_kps(
                            spec.r, spec.p, m, &mut rng,
                        )?;
                        for &k in &spec.t_mults {
                            for &d in &spec.lower_deltas {
                                out.push(lower_tail_check(
                                    &ps,
                                    &y,
                                    &w,
                                    mu,
                                    d,
                                    k * m,
                                    trials,
                                    seed,
                                    c.c9,
                                )?);
                            }
                            for &d in &spec.upper_deltas {
                                out.push(upper_tail_check(
                                    &ps,
                                    &y,
                                    &w,
                                    mu,
                                    d,
                                    k * m,
                                    trials,
                                    seed,
                                    c.c10,
                                )?);
                            }
                        }
                    }
                    out
                }
            };
            let text: Vec<String> = reports.iter().map(TailReport::csv).collect();
            emit(&out, &text.join("\n"))
        }
        Cmd::Verify { inst, set } => {
            let inst = load_instance(&inst, seed)?;
            if let Some(&bad) = set.iter().find(|&&i| i >= inst.n_facilities()) {
                bail!("facility {bad} out of range");
            }
            emit_json(
                &out,
                &serde_json::json!({
                    "feasible": inst.is_feasible(&set),
                    "loads": inst.loads(&set),
                    "max_load": max_load(&set, &inst.weights),
                    "required_q": required_q(&set, &inst.weights),
                    "median_cost": inst.cost(&set),
                    "center_radius": inst.radius(&set),
                }),
            )
        }
        Cmd::Calibrate { quick } => {
            let grid = if quick {
                Grid::quick()
            } else {
                Grid::default()
            };
            let cal = calibration::calibrate(suite::CAL_SEED, grid)?;
            let path =
                out.unwrap_or_else(|| calibration::fixture_dir().join(calibration::FIXTURE_FILE));
            calibration::save(&cal, &path)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}
