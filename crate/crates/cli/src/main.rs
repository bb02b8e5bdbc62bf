//! `coatplan`: fit coating-breakdown models to inspection records, predict
//! future defects, and plan inspections.
//!
//! Exit codes: 0 success, 2 data error, 3 MCMC convergence failure,
//! 4 usage or configuration error.

mod config;
mod error;
mod fit;
mod output;
mod plan;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coatplan::planner::{GAConfig, PlannerKind, SweepAxis};
use coatplan::inference::MCMCConfig;
use coatplan::simulator::AgeAccounting;

use config::{FitKind, RunConfig};
use error::{Failure, EXIT_CONFIG};
use output::Outputs;

#[derive(Parser, Debug)]
#[command(name = "coatplan", version, about = "Coating breakdown modelling and inspection planning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Inspection records CSV.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Short MCMC runs and a small GA.
    #[arg(long, global = true)]
    fast: bool,
    /// Posterior draws written by `fit`.
    #[arg(long, global = true)]
    samples: Option<PathBuf>,
    /// Explicit parameters CSV: ship_id,compartment_id,a,b[,group].
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[arg(long, global = true)]
    t_now: Option<f64>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    delta_t: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit compartment models and write posterior draws or MLEs.
    Fit {
        #[arg(long, value_enum)]
        mode: Option<FitKind>,
        /// Fit only records up to this age.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Exit 0 even when convergence diagnostics fail.
        #[arg(long)]
        allow_warnings: bool,
    },
    /// Cumulative predicted-count curves and held-out validation.
    Predict {
        /// Curve start; defaults to each compartment's last observation.
        #[arg(long)]
        from: Option<f64>,
        /// Months ahead.
        #[arg(long)]
        window: Option<f64>,
        /// Validate against records after this age.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Predict a new ship from its sister ships' posteriors.
        #[arg(long, requires = "sisters")]
        new_ship: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sisters: Vec<String>,
    },
    /// Build an inspection plan and price it.
    Optimize {
        #[arg(long, value_enum)]
        planner: Option<PlannerArg>,
        /// Also solve by exhaustive enumeration (tiny instances only).
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Re-plan across a range of cost settings.
    Sensitivity {
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Monte Carlo cost of a plan next to its analytic cost.
    Simulate {
        /// Plan CSV from `optimize`; otherwise the configured planner runs.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum)]
        planner: Option<PlannerArg>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, value_enum)]
        accounting: Option<AccountingArg>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Generate a synthetic fleet with known parameters.
    Synth {
        #[arg(long)]
        ships: Option<usize>,
        #[arg(long)]
        compartments: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlannerArg {
    Interval,
    Schedule,
    Practice,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Beta,
    Setup,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AccountingArg {
    Realized,
    ExpectedAge,
}

impl From<PlannerArg> for PlannerKind {
    fn from(p: PlannerArg) -> Self {
        match p {
            PlannerArg::Interval => PlannerKind::Interval,
            PlannerArg::Schedule => PlannerKind::Schedule,
            PlannerArg::Practice => PlannerKind::Practice,
        }
    }
}

fn resolve(common: &Common, command: &Command) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(p) = &common.data {
        cfg.data.path = Some(p.clone());
    }
    if let Some(p) = &common.out {
        cfg.data.out = p.clone();
    }
    if let Some(p) = &common.samples {
        cfg.data.samples = Some(p.clone());
    }
    if let Some(p) = &common.params {
        cfg.data.params = Some(p.clone());
    }
    if let Some(t) = common.t_now {
        cfg.horizon.t_now = t;
    }
    if let Some(t) = common.t_end {
        cfg.horizon.t_end = t;
    }
    if let Some(t) = common.delta_t {
        cfg.horizon.delta_t = t;
    }
    if common.fast {
        let seed = cfg.seed.unwrap_or(0);
        cfg.model.mcmc = MCMCConfig { thin: cfg.model.mcmc.thin, ..MCMCConfig::fast(seed) };
        cfg.planner.ga = GAConfig::fast(seed);
    }
    match command {
        Command::Fit { mode, cutoff, .. } => {
            if let Some(m) = mode {
                cfg.model.mode = *m;
            }
            if cutoff.is_some() {
                cfg.data.cutoff = *cutoff;
            }
        }
        Command::Predict { window, cutoff, .. } => {
            if let Some(w) = window {
                cfg.model.prediction_window = *w;
            }
            if cutoff.is_some() {
                cfg.data.cutoff = *cutoff;
            }
        }
        Command::Optimize { planner, groups, .. } => {
            if let Some(p) = planner {
                cfg.planner.kind = (*p).into();
            }
            if let Some(g) = groups {
                cfg.planner.n_groups = *g;
            }
        }
        Command::Sensitivity { axis, values, groups } => {
            if let Some(a) = axis {
                cfg.planner.sweep_axis = match a {
                    AxisArg::Beta => SweepAxis::Beta,
                    AxisArg::Setup => SweepAxis::ShipSetup,
                };
            }
            if !values.is_empty() {
                cfg.planner.sweep_values = values.clone();
            }
            if let Some(g) = groups {
                cfg.planner.n_groups = *g;
            }
        }
        Command::Simulate { planner, paths, accounting, groups, .. } => {
            if let Some(p) = planner {
                cfg.planner.kind = (*p).into();
            }
            if let Some(n) = paths {
                cfg.planner.simulation_paths = *n;
            }
            if let Some(a) = accounting {
                cfg.planner.accounting = match a {
                    AccountingArg::Realized => AgeAccounting::Realized,
                    AccountingArg::ExpectedAge => AgeAccounting::ExpectedAge,
                };
            }
            if let Some(g) = groups {
                cfg.planner.n_groups = *g;
            }
        }
        Command::Synth { ships, compartments } => {
            if let Some(s) = ships {
                cfg.data.synth.ships = *s;
            }
            if let Some(c) = compartments {
                cfg.data.synth.compartments_per_ship = *c;
            }
        }
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    let cfg = resolve(&cli.common, &cli.command)?;
    let name = match &cli.command {
        Command::Fit { .. } => "fit",
        Command::Predict { .. } => "predict",
        Command::Optimize { .. } => "optimize",
        Command::Sensitivity { .. } => "sensitivity",
        Command::Simulate { .. } => "simulate",
        Command::Synth { .. } => "synth",
    };
    let mut out = Outputs::new(name, &cfg)?;
    let result = match &cli.command {
        Command::Fit { allow_warnings, .. } => fit::fit(&cfg, &mut out, *allow_warnings),
        Command::Predict { from, new_ship, sisters, .. } => fit::predict(&cfg, &mut out, *from, new_ship.as_deref(), sisters),
        Command::Optimize { oracle, .. } => plan::optimize(&cfg, &mut out, *oracle),
        Command::Sensitivity { .. } => plan::sensitivity(&cfg, &mut out),
        Command::Simulate { plan, .. } => plan::simulate(&cfg, &mut out, plan.as_deref()),
        Command::Synth { .. } => plan::synth(&cfg, &mut out),
    };
    if !out.written().is_empty() {
        log::info!("wrote {}", output::display(out.written()));
    }
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
