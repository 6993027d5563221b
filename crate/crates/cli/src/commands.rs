use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use slip_core::dynamics::ModelParams;
use slip_core::observables::{froude_number, ground_reaction_forces, write_trajectory_csv};
use slip_core::regions::{region_area, write_region_csv, EnergyLevel, RegionGrid, RegionKind, RegionOptions};
use slip_core::section::GaitKind;
use slip_core::signal::{analyze_phase, estimate_touchdown_angles, read_series_csv, PhaseAnalysis, SignalOptions, Touchdown};
use slip_core::transitions::{execute_plan, read_plan_json, write_plan_json, ExecutedPlan, PlanOptions, Planner, StepPlan, Strategy};
use slip_core::SlipError;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::store::{RegionKey, ResultStore};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible at stage `{stage}`: {reason}")]
    Infeasible { stage: String, reason: String },
    #[error("numeric failure: {0}")]
    Numeric(SlipError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SlipError> for CliError {
    fn from(e: SlipError) -> Self {
        match e {
            SlipError::Infeasible { stage, reason } => CliError::Infeasible { stage, reason },
            SlipError::InvalidParams(_) | SlipError::Domain(_) | SlipError::Parse(_) | SlipError::Io(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

const GAITS: [GaitKind; 2] = [GaitKind::Walking, GaitKind::Running];

/// All grids computed for one (energy, Δα), indexed like [`GAITS`].
#[derive(Debug, Clone)]
pub struct LevelRegions {
    pub energy: f64,
    pub delta_alpha: f64,
    pub viability: [RegionGrid; 2],
    pub robust: [RegionGrid; 2],
    /// Outside the robust region of `GAITS[i]`, one step of the other gait into it.
    pub viable_to_robust: [RegionGrid; 2],
    /// Robust region of `GAITS[i]` with a window into the other robust region.
    pub robust_to_robust: [RegionGrid; 2],
}

fn other(g: GaitKind) -> GaitKind {
    if g == GaitKind::Walking {
        GaitKind::Running
    } else {
        GaitKind::Walking
    }
}

fn keys(cfg: &RunConfig, energy: f64, delta_alpha: f64) -> Vec<RegionKey> {
    let key = |gait, kind| RegionKey {
        params: cfg.params,
        energy,
        gait,
        kind,
        delta_alpha,
        grid: cfg.grid,
        opts: cfg.region_options(),
    };
    let mut out = Vec::new();
    for g in GAITS {
        out.push(key(g, RegionKind::Viability));
    }
    for g in GAITS {
        out.push(key(g, RegionKind::Robust));
    }
    // stored under the stepping gait
    for g in GAITS {
        out.push(key(other(g), RegionKind::ViableToRobust));
    }
    out.push(key(GaitKind::Walking, RegionKind::WalkToRun));
    out.push(key(GaitKind::Running, RegionKind::RunToWalk));
    out
}

fn assemble(energy: f64, delta_alpha: f64, mut grids: Vec<RegionGrid>) -> LevelRegions {
    let mut take = || grids.remove(0);
    LevelRegions {
        energy,
        delta_alpha,
        viability: [take(), take()],
        robust: [take(), take()],
        viable_to_robust: [take(), take()],
        robust_to_robust: [take(), take()],
    }
}

fn compute_level(level: &EnergyLevel, delta_alpha: f64) -> slip_core::Result<Vec<RegionGrid>> {
    let mut out = Vec::new();
    for g in GAITS {
        out.push(level.viability(g, delta_alpha)?);
    }
    let rho: Vec<RegionGrid> = GAITS.iter().map(|g| level.robust(*g, delta_alpha)).collect::<slip_core::Result<_>>()?;
    for r in &rho {
        out.push(r.clone());
    }
    for r in &rho {
        out.push(level.viable_to_robust(r)?);
    }
    let mut w2r = level.window_into(GaitKind::Walking, delta_alpha, &rho[0].member, &rho[1].member)?;
    w2r.kind = RegionKind::WalkToRun;
    let mut r2w = level.window_into(GaitKind::Running, delta_alpha, &rho[1].member, &rho[0].member)?;
    r2w.kind = RegionKind::RunToWalk;
    out.push(w2r);
    out.push(r2w);
    Ok(out)
}

/// Computes (or loads from `store`) every region of every Δα at one energy.
pub fn energy_regions(cfg: &RunConfig, energy: f64, store: Option<&ResultStore>) -> CliResult<Vec<LevelRegions>> {
    let opts = cfg.region_options();
    let mut level: Option<EnergyLevel> = None;
    let mut out = Vec::new();
    for deg in &cfg.delta_alpha_deg {
        let da = deg.to_radians();
        let ks = keys(cfg, energy, da);
        let cached: Option<Vec<RegionGrid>> = store.and_then(|s| ks.iter().map(|k| s.get(k)).collect());
        let grids = match cached {
            Some(g) => g,
            None => {
                if level.is_none() {
                    level = Some(EnergyLevel::both(energy, cfg.grid, &cfg.params, &opts)?);
                }
                let grids = compute_level(level.as_ref().expect("built"), da)?;
                if let Some(s) = store {
                    for (k, g) in ks.iter().zip(&grids) {
                        s.put(k, g)?;
                    }
                }
                grids
            }
        };
        out.push(assemble(energy, da, grids));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub energy: f64,
    pub gait: String,
    pub delta_alpha_deg: f64,
    pub viability_area: f64,
    pub robust_area: f64,
    pub transition_to_robust_area: f64,
    pub robust_to_robust_area: f64,
    pub froude_min: Option<f64>,
    pub froude_max: Option<f64>,
}

pub fn summarize(l: &LevelRegions, deg: f64, p: &ModelParams) -> CliResult<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (i, g) in GAITS.iter().enumerate() {
        let mut fr: Option<(f64, f64)> = None;
        for s in l.robust[i].member_states() {
            let f = froude_number(&s, p)?;
            fr = Some(fr.map_or((f, f), |(lo, hi)| (lo.min(f), hi.max(f))));
        }
        rows.push(SummaryRow {
            energy: l.energy,
            gait: g.name().to_string(),
            delta_alpha_deg: deg,
            viability_area: region_area(&l.viability[i]),
            robust_area: region_area(&l.robust[i]),
            transition_to_robust_area: region_area(&l.viable_to_robust[i]),
            robust_to_robust_area: region_area(&l.robust_to_robust[i]),
            froude_min: fr.map(|f| f.0),
            froude_max: fr.map(|f| f.1),
        });
    }
    Ok(rows)
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn grid_file(dir: &Path, g: &RegionGrid, label: GaitKind, deg: f64) -> PathBuf {
    dir.join(format!("E{}_{}_da{}_{}.csv", g.energy, label.name(), deg, g.kind.name()))
}

/// Sweeps energies and Δα, writing per-grid CSVs (when `grids`) and `summary.csv`.
pub fn cmd_regions(cfg: &RunConfig, store: Option<&ResultStore>, grids: bool) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let dir = cfg.out_dir.join("regions");
    for e in cfg.sweep.energies() {
        eprintln!("energy {e} J");
        let levels = energy_regions(cfg, e, store)?;
        for (l, deg) in levels.iter().zip(&cfg.delta_alpha_deg) {
            rows.extend(summarize(l, *deg, &cfg.params)?);
            if !grids {
                continue;
            }
            for (i, gait) in GAITS.iter().enumerate() {
                for g in [&l.viability[i], &l.robust[i], &l.viable_to_robust[i], &l.robust_to_robust[i]] {
                    let path = grid_file(&dir, g, *gait, *deg);
                    let mut w = create(&path)?;
                    write_region_csv(g, &mut w)?;
                    w.flush()?;
                    files.push(path);
                }
            }
        }
    }
    let path = cfg.out_dir.join("summary.csv");
    write_summary(&rows, &path)?;
    files.push(path);
    Ok(files)
}

fn single_energy(cfg: &RunConfig) -> CliResult<f64> {
    match cfg.sweep.energies().as_slice() {
        [e] => Ok(*e),
        _ => Err(CliError::Config("this command needs a single energy (use --energy)".into())),
    }
}

fn single_delta(cfg: &RunConfig) -> CliResult<f64> {
    match cfg.delta_alpha_deg.as_slice() {
        [d] => Ok(d.to_radians()),
        _ => Err(CliError::Config("this command needs a single Δα (use --delta-alpha)".into())),
    }
}

#[derive(Debug, Serialize)]
struct ObservableRow {
    step: usize,
    gait: String,
    realized: String,
    role: String,
    angle_deg: f64,
    window_lo_deg: f64,
    window_hi_deg: f64,
    t_start: f64,
    t_end: f64,
    froude: f64,
    hip_excursion_m: f64,
    duty_factor: f64,
    mean_speed: f64,
}

#[derive(Debug, Serialize)]
struct GrfRow {
    time: f64,
    step: usize,
    phase: &'static str,
    grf_leg1_norm: f64,
    grf_leg2_norm: f64,
    contact1: u8,
    contact2: u8,
}

/// Writes plan JSON plus trajectory, observables and GRF CSVs for an executed plan.
pub fn write_plan_outputs(plan: &StepPlan, run: &ExecutedPlan, executed: &StepPlan, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    let path = dir.join("plan.json");
    let mut w = create(&path)?;
    write_plan_json(plan, &mut w)?;
    w.flush()?;
    files.push(path);

    let path = dir.join("trajectory.csv");
    let mut w = create(&path)?;
    write_trajectory_csv(&run.trajectory, &mut w)?;
    w.flush()?;
    files.push(path);

    let path = dir.join("observables.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    for (i, (st, sum)) in executed.steps.iter().zip(&run.summaries).enumerate() {
        let (t0, t1) = run.trajectory.step_span(i)?;
        let role = serde_json::to_value(st.role).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        w.serialize(ObservableRow {
            step: i,
            gait: st.gait.name().into(),
            realized: run.realized[i].name().into(),
            role,
            angle_deg: st.alpha.to_degrees(),
            window_lo_deg: st.window.lo.to_degrees(),
            window_hi_deg: st.window.hi.to_degrees(),
            t_start: t0,
            t_end: t1,
            froude: sum.froude,
            hip_excursion_m: sum.hip_excursion,
            duty_factor: sum.duty_factor,
            mean_speed: sum.mean_speed,
        })
        .map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.flush()?;
    files.push(path);

    let path = dir.join("grf.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let grf = ground_reaction_forces(&run.trajectory);
    let cross = &run.trajectory.crossings;
    for (s, f) in run.trajectory.samples.iter().zip(grf) {
        let step = cross.partition_point(|c| *c <= s.t).saturating_sub(1);
        w.serialize(GrfRow {
            time: s.t,
            step,
            phase: s.phase.name(),
            grf_leg1_norm: f[0],
            grf_leg2_norm: f[1],
            contact1: u8::from(s.contact[0]),
            contact2: u8::from(s.contact[1]),
        })
        .map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.flush()?;
    files.push(path);
    Ok(files)
}

fn planner_level(cfg: &RunConfig) -> CliResult<(EnergyLevel, f64)> {
    let e = single_energy(cfg)?;
    let da = single_delta(cfg)?;
    let opts: RegionOptions = cfg.region_options();
    eprintln!("building landing tables at {e} J");
    Ok((EnergyLevel::both(e, cfg.grid, &cfg.params, &opts)?, da))
}

fn execute(plan: &StepPlan, steady: usize, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let executed = plan.with_steady(steady, steady);
    let run = execute_plan(&executed, &plan.params)?;
    write_plan_outputs(plan, &run, &executed, &cfg.out_dir)
}

/// Plans and executes a gait transition, or replays a saved plan.
pub fn cmd_transition(
    cfg: &RunConfig,
    from: GaitKind,
    to: GaitKind,
    strategy: Strategy,
    steady: usize,
    replay: Option<&Path>,
) -> CliResult<Vec<PathBuf>> {
    let plan = match replay {
        Some(path) => read_plan_json(open(path)?)?,
        None => {
            let (level, da) = planner_level(cfg)?;
            Planner::new(&level, da, PlanOptions::default())?.plan(from, to, strategy)?
        }
    };
    execute(&plan, steady, cfg)
}

pub fn cmd_hopping(cfg: &RunConfig, cycles: usize, replay: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    if cycles == 0 {
        return Err(CliError::Config("cycles must be >= 1".into()));
    }
    let plan = match replay {
        Some(path) => read_plan_json(open(path)?)?,
        None => {
            let (level, da) = planner_level(cfg)?;
            Planner::new(&level, da, PlanOptions::default())?.hopping(cycles)?
        }
    };
    execute(&plan, 0, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    Phase,
    Touchdown,
}

impl std::str::FromStr for AnalysisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "phase" | "hip" => Ok(AnalysisKind::Phase),
            "touchdown" | "limb" => Ok(AnalysisKind::Touchdown),
            _ => Err(format!("unknown analysis `{s}` (expected phase or touchdown)")),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TouchdownReport {
    pub status: &'static str,
    pub units: String,
    pub sample_rate: f64,
    pub touchdowns: Vec<Touchdown>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Analysis {
    Phase(PhaseAnalysis),
    Touchdown(TouchdownReport),
}

pub fn analyze_file(input: &Path, kind: AnalysisKind, opts: &SignalOptions) -> CliResult<Analysis> {
    let series = read_series_csv(open(input)?)?;
    Ok(match kind {
        AnalysisKind::Phase => Analysis::Phase(analyze_phase(&series, opts)?),
        AnalysisKind::Touchdown => {
            let touchdowns = estimate_touchdown_angles(&series, opts)?;
            let status = if touchdowns.is_empty() { "no-touchdown" } else { "ok" };
            Analysis::Touchdown(TouchdownReport { status, units: series.units.clone(), sample_rate: series.sample_rate, touchdowns })
        }
    })
}

/// Runs the signal pipeline on a `time,value` CSV and writes `analysis.json`.
pub fn cmd_analyze(cfg: &RunConfig, input: &Path, kind: AnalysisKind) -> CliResult<(Analysis, PathBuf)> {
    let a = analyze_file(input, kind, &SignalOptions::default())?;
    let path = cfg.out_dir.join("analysis.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &a).map_err(|e| CliError::Config(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok((a, path))
}
