use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use slip_cli::commands::{self, AnalysisKind, Analysis};
use slip_cli::config::{self, EnergySweep};
use slip_cli::{CliError, CliResult, ResultStore, RunConfig};
use slip_core::section::GaitKind;
use slip_core::transitions::Strategy;

#[derive(Debug, Parser)]
#[command(name = "slip", version, about = "Biped spring-mass gait regions, transitions and signal analysis")]
struct Cli {
    /// Run configuration file (sectioned `key = value`).
    #[arg(long, global = true, alias = "config")]
    params: Option<PathBuf>,

    /// Single energy level (J); overrides the configured sweep.
    #[arg(long, global = true)]
    energy: Option<f64>,

    /// Angle-window widths in degrees, comma separated.
    #[arg(long, global = true)]
    delta_alpha: Option<String>,

    /// Grid nodes, `N` or `NRxNVY`.
    #[arg(long, global = true)]
    grid: Option<String>,

    /// Angle sampling resolution (deg).
    #[arg(long, global = true)]
    resolution: Option<f64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Region cache directory (default `<out>/cache`).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    #[arg(long, global = true)]
    no_cache: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Viability, robust and transition regions over the sweep, with per-grid CSVs.
    Regions,
    /// Region areas and Froude ranges over the sweep only.
    SweepSummary,
    /// Plan and execute a gait transition.
    Transition {
        #[arg(long, default_value = "walking")]
        from: GaitKind,
        #[arg(long, default_value = "running")]
        to: GaitKind,
        /// constant-froude, constant-hip, fit-hip or fit-hip:<relative change>.
        #[arg(long, default_value = "constant-froude")]
        strategy: Strategy,
        /// Periodic steps executed before and after the plan.
        #[arg(long, default_value_t = 2)]
        steady: usize,
        /// Execute a saved plan instead of planning.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Alternating walking and running steps.
    Hopping {
        #[arg(long, default_value_t = 10)]
        cycles: usize,
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Phase-change or touchdown analysis of a `time,value` CSV.
    Analyze {
        input: PathBuf,
        #[arg(long, default_value = "phase")]
        kind: AnalysisKind,
    },
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.params {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(e) = cli.energy {
        cfg.sweep = EnergySweep::single(e);
    }
    if let Some(d) = &cli.delta_alpha {
        cfg.delta_alpha_deg = config::parse_deg_list("delta-alpha", d)?;
    }
    if let Some(g) = &cli.grid {
        cfg.grid = config::parse_grid(g)?;
    }
    if let Some(r) = cli.resolution {
        cfg.angle_resolution_deg = r;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("run.cfg"), cfg.to_text())?;
    let store = if cli.no_cache {
        None
    } else {
        Some(ResultStore::open(cli.cache.clone().unwrap_or_else(|| cfg.out_dir.join("cache")))?)
    };

    let files = match cli.command {
        Command::Regions => commands::cmd_regions(&cfg, store.as_ref(), true)?,
        Command::SweepSummary => commands::cmd_regions(&cfg, store.as_ref(), false)?,
        Command::Transition { from, to, strategy, steady, replay } => {
            commands::cmd_transition(&cfg, from, to, strategy, steady, replay.as_deref())?
        }
        Command::Hopping { cycles, replay } => commands::cmd_hopping(&cfg, cycles, replay.as_deref())?,
        Command::Analyze { input, kind } => {
            let (a, path) = commands::cmd_analyze(&cfg, &input, kind)?;
            if let Analysis::Phase(p) = &a {
                match (p.transition_index, p.phase_change_deg) {
                    (Some(i), Some(d)) => println!("transition at sample {i}, phase change {d:.2} deg"),
                    (Some(i), None) => println!("transition at sample {i}, too few cycles for a phase change"),
                    _ => println!("no transition detected"),
                }
            }
            vec![path]
        }
    };
    if let Some(s) = &store {
        if s.hits() + s.misses() > 0 {
            eprintln!("cache: {} hits, {} misses", s.hits(), s.misses());
        }
    }
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
