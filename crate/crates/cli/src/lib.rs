//! Command-line front end: bound curves, coherence Monte Carlo, scenario
//! runs and controller tuning. Each command writes its outputs and the
//! fully resolved config into `--out`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_grid, resolve_seed, Mode, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "cohsync", version, about = "Two-tone ranging and coherent array simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed. Falls back to the config, then COHSYNC_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Range and delay bound over a grid of 2E/N0 values.
    Crlb {
        #[command(flatten)]
        common: Common,
        /// Half the tone separation, Hz.
        #[arg(long)]
        delta_f: Option<f64>,
        /// 2E/N0 grid in dB: `a,b,c`, `start:stop:step` or `geom:start:stop:n`.
        #[arg(long)]
        snr_grid: Option<String>,
    },
    /// Probability of coherent gain above a threshold versus ranging error.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Ranging errors in wavelengths, same forms as --snr-grid.
        #[arg(long)]
        sigma_grid: Option<String>,
    },
    /// Trace-driven ranging run with fixed or controlled tone separation.
    Run {
        #[command(flatten)]
        common: Common,
        /// Environment trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, conflicts_with = "fixed")]
        adaptive: bool,
        #[arg(long)]
        fixed: bool,
        /// Simulated seconds; defaults to the whole trace.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Ziegler-Nichols tuning of the tone-separation controller.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Proportional gains to try, same forms as --snr-grid.
        #[arg(long)]
        k_grid: Option<String>,
    },
    /// Renders the config's [trace] program to a trace CSV.
    Trace {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, u64)> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    let seed = resolve_seed(common.seed, cfg.seed)?;
    cfg.seed = Some(seed);
    Ok((cfg, seed))
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Crlb { common, delta_f, snr_grid } => {
            let (mut cfg, _) = load(&common)?;
            if let Some(d) = delta_f {
                cfg.crlb.delta_f = d;
            }
            if let Some(g) = snr_grid {
                cfg.crlb.snr_grid_db = parse_grid(&g)?;
            }
            let path = commands::crlb(&cfg, &common.out)?;
            log::info!("wrote {}", path.display());
        }
        Command::Montecarlo { common, nodes, threshold, trials, sigma_grid } => {
            let (mut cfg, seed) = load(&common)?;
            let mc = &mut cfg.montecarlo;
            mc.nodes = nodes.unwrap_or(mc.nodes);
            mc.threshold = threshold.unwrap_or(mc.threshold);
            mc.trials = trials.unwrap_or(mc.trials);
            if let Some(g) = sigma_grid {
                mc.sigma_grid = parse_grid(&g)?;
            }
            let r = commands::montecarlo(&cfg, seed, &common.out)?;
            let show = |v: Option<f64>| v.map_or("not reached".to_string(), |x| format!("{x:.4}"));
            println!(
                "sigma_d/lambda at P = 0.9 / 0.8 / 0.7: {} / {} / {}",
                show(r.p90),
                show(r.p80),
                show(r.p70)
            );
        }
        Command::Run { common, trace, adaptive, fixed, duration } => {
            let (mut cfg, seed) = load(&common)?;
            if trace.is_some() {
                cfg.run.trace = trace;
            }
            if adaptive {
                cfg.run.mode = Mode::Adaptive;
            } else if fixed {
                cfg.run.mode = Mode::Fixed;
            }
            if duration.is_some() {
                cfg.run.duration_s = duration;
            }
            let r = commands::run_scenario(&cfg, seed, &common.out)?;
            let s = &r.summary;
            println!(
                "{} intervals, mean sigma_d {} m, final f2 {} Hz",
                s.intervals, s.mean_sigma_d_m, s.final_f2_hz
            );
        }
        Command::Tune { common, k_grid } => {
            let (mut cfg, seed) = load(&common)?;
            if let Some(g) = k_grid {
                cfg.tune.k_grid = parse_grid(&g)?;
            }
            let r = commands::tune(&cfg, seed, &common.out)?;
            println!("K_u = {}, T_u = {} s, K_p = {}, T_i = {} s", r.k_u, r.t_u_s, r.k_p, r.t_i_s);
        }
        Command::Trace { common } => {
            let (cfg, seed) = load(&common)?;
            let path = commands::write_trace(&cfg, seed, &common.out)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}
