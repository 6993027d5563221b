//! The midstance section and the step maps acting on it.
//!
//! A section state is observed in single stance with the support leg
//! vertical. At fixed total energy it is described by the leg length `r`
//! and the vertical velocity `vy`; the forward speed follows from energy
//! conservation and is always taken positive (`thetadot = vx / r > 0`).
//!
//! Step computations are organised around [`AngleSweep`]: the part of a
//! step that does not depend on the angle of attack is integrated once and
//! then reused for every angle. [`step`] is a sweep over a single angle, so
//! a sweep and the corresponding individual steps agree bit for bit.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    failure_watches, initial_failure, integrate_steps, scan_step, switch_phase, EventKind, FailureKind,
    HybridState, IntegratorOptions, ModelParams, Phase, PhaseEvent, PhaseField, Segment, StanceState, StepRun,
    Terminal, Watch,
};
use crate::error::{Result, SlipError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionState {
    pub r: f64,
    pub vy: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaitKind {
    Running,
    Walking,
    GroundedRunning,
}

impl GaitKind {
    pub const ALL: [GaitKind; 3] = [GaitKind::Running, GaitKind::Walking, GaitKind::GroundedRunning];

    pub fn name(self) -> &'static str {
        match self {
            GaitKind::Running => "running",
            GaitKind::Walking => "walking",
            GaitKind::GroundedRunning => "grounded-running",
        }
    }

    /// Walking and grounded running share the stance/double/stance sequence.
    pub fn uses_double_stance(self) -> bool {
        !matches!(self, GaitKind::Running)
    }
}

impl fmt::Display for GaitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GaitKind {
    type Err = SlipError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "running" | "run" | "r" => Ok(GaitKind::Running),
            "walking" | "walk" | "w" => Ok(GaitKind::Walking),
            "grounded-running" | "grounded" | "g" => Ok(GaitKind::GroundedRunning),
            other => Err(SlipError::Parse(format!("unknown gait `{other}`"))),
        }
    }
}

/// Classifies a single-to-double switch by the sign of the vertical velocity.
pub fn classify_double_touchdown(vy: f64) -> GaitKind {
    if vy > 0.0 {
        GaitKind::GroundedRunning
    } else {
        GaitKind::Walking
    }
}

impl SectionState {
    pub fn new(r: f64, vy: f64, energy: f64) -> Self {
        Self { r, vy, energy }
    }

    /// Squared forward speed implied by energy conservation.
    pub fn vx_squared(&self, p: &ModelParams) -> f64 {
        2.0 * (self.energy - 0.5 * p.stiffness * (p.rest_length - self.r).powi(2) - p.weight() * self.r) / p.mass
            - self.vy * self.vy
    }

    /// Whether the state lies inside the energy ellipsoid with a physical leg.
    pub fn is_valid(&self, p: &ModelParams) -> bool {
        self.r > 0.0 && self.r <= p.rest_length && self.vx_squared(p) >= 0.0
    }

    pub fn vx(&self, p: &ModelParams) -> Result<f64> {
        let v2 = self.vx_squared(p);
        if !(self.r > 0.0 && self.r <= p.rest_length) || !(v2 >= 0.0) {
            return Err(SlipError::Domain(format!(
                "section state (r={}, vy={}) outside the energy ellipsoid at E={}",
                self.r, self.vy, self.energy
            )));
        }
        Ok(v2.sqrt())
    }

    /// Reads a single-stance state with a vertical leg back into the section.
    pub fn observe(s: &StanceState, p: &ModelParams) -> Self {
        let energy = HybridState::Stance(*s).energy(p);
        Self { r: s.r, vy: s.rdot, energy }
    }
}

/// Single-stance state with the leg vertical and the foot at `foot_x`.
pub fn embed(s: &SectionState, p: &ModelParams) -> Result<StanceState> {
    let vx = s.vx(p)?;
    Ok(StanceState::new(s.r, FRAC_PI_2, s.vy, vx / s.r, 0.0))
}

/// Leg-length range of the section at energy `e`, capped at the rest length.
pub fn r_bounds(e: f64, p: &ModelParams) -> Option<(f64, f64)> {
    // 0.5 k (r0 - r)^2 + m g r = e
    let (k, r0, w) = (p.stiffness, p.rest_length, p.weight());
    let a = 0.5 * k;
    let b = -k * r0 + w;
    let c = 0.5 * k * r0 * r0 - e;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let lo = (-b - sq) / (2.0 * a);
    let hi = ((-b + sq) / (2.0 * a)).min(r0);
    (lo < hi && lo > 0.0).then_some((lo, hi))
}

/// Largest vertical speed on the section at energy `e`.
pub fn vy_max(e: f64, p: &ModelParams) -> Option<f64> {
    let (lo, hi) = r_bounds(e, p)?;
    let r_star = (p.rest_length - p.weight() / p.stiffness).clamp(lo, hi);
    let pot = 0.5 * p.stiffness * (p.rest_length - r_star).powi(2) + p.weight() * r_star;
    Some((2.0 * (e - pot) / p.mass).max(0.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct StepSuccess {
    pub next: SectionState,
    pub realized: GaitKind,
    pub duration: f64,
    /// Stance state at the end of the step, in the new support foot's chart.
    pub end_state: StanceState,
    /// Phase switches in order (the last one is the section crossing).
    pub events: Vec<PhaseEvent>,
    /// Dense samples, present when a sample stride was requested.
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Success(StepSuccess),
    Failure { kind: FailureKind, time: f64, phase: Phase },
}

impl StepOutcome {
    pub fn success(&self) -> Option<&StepSuccess> {
        match self {
            StepOutcome::Success(s) => Some(s),
            StepOutcome::Failure { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<FailureKind> {
        match self {
            StepOutcome::Failure { kind, .. } => Some(*kind),
            StepOutcome::Success(_) => None,
        }
    }

    /// Next section state if the step realized `gait`.
    pub fn landing(&self, gait: GaitKind) -> Option<SectionState> {
        self.success().filter(|s| s.realized == gait).map(|s| s.next)
    }
}

/// Step options: integrator settings and the start time / foot position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub integrator: IntegratorOptions,
    pub t0: f64,
    pub foot_x: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { integrator: IntegratorOptions::default(), t0: 0.0, foot_x: 0.0 }
    }
}

/// The angle-independent prefix of a step from one section state.
pub struct AngleSweep {
    params: ModelParams,
    opts: StepOptions,
    gait: GaitKind,
    start: HybridState,
    prefix: Prefix,
}

enum Prefix {
    Invalid(FailureKind),
    /// Stance from the section until the loaded leg would lift off.
    Walking { stance: StepRun },
    /// Stance to takeoff, then flight until the ground.
    Running { stance: StepRun, flight: Option<(PhaseEvent, StepRun)> },
}

impl AngleSweep {
    pub fn new(s: &SectionState, gait: GaitKind, p: &ModelParams, opts: &StepOptions) -> Result<Self> {
        let mut st = embed(s, p)?;
        st.foot_x = opts.foot_x;
        Ok(Self::from_stance(st, gait, p, opts))
    }

    /// Builds the prefix from an arbitrary single-stance state at the section.
    pub fn from_stance(st: StanceState, gait: GaitKind, p: &ModelParams, opts: &StepOptions) -> Self {
        let start = HybridState::Stance(st);
        let field = PhaseField::Stance { foot_x: st.foot_x };
        let y0 = [st.r, st.theta, st.rdot, st.thetadot];
        let iopt = &opts.integrator;
        let prefix = if let Some(kind) = initial_failure(&field, &y0) {
            Prefix::Invalid(kind)
        } else if gait.uses_double_stance() {
            let watches = failure_watches(Phase::SingleStance, &[]);
            Prefix::Walking { stance: integrate_steps(field, y0, opts.t0, &watches, p, iopt) }
        } else {
            let mut watches = vec![Watch::new(EventKind::Takeoff, 0.0)];
            watches.extend(failure_watches(Phase::SingleStance, &[EventKind::Takeoff]));
            let stance = integrate_steps(field, y0, opts.t0, &watches, p, iopt);
            let flight = (stance.terminal.kind == EventKind::Takeoff).then(|| {
                let ev = PhaseEvent { kind: EventKind::Takeoff, time: stance.terminal.time, state: stance.end_state() };
                let fl = switch_phase(&ev, 0.0, p).expect("takeoff from stance");
                let (ff, fy) = PhaseField::of(&fl);
                let fw = failure_watches(Phase::Flight, &[]);
                (ev, integrate_steps(ff, fy, ev.time, &fw, p, iopt))
            });
            Prefix::Running { stance, flight }
        };
        Self { params: *p, opts: *opts, gait, start, prefix }
    }

    pub fn gait(&self) -> GaitKind {
        self.gait
    }

    /// Simulates the step with angle of attack `alpha`.
    pub fn outcome(&self, alpha: f64, record: bool) -> StepOutcome {
        let p = &self.params;
        let iopt = &self.opts.integrator;
        let stride = if record { iopt.sample_stride } else { None };
        let mut rec = Recorder { stride, segments: Vec::new(), events: Vec::new() };
        let fail = |kind, time, phase| StepOutcome::Failure { kind, time, phase };

        match &self.prefix {
            Prefix::Invalid(kind) => fail(*kind, self.opts.t0, Phase::SingleStance),
            Prefix::Walking { stance } => {
                let watch = Watch::new(EventKind::StanceToDouble, alpha);
                let Some((t_ev, y_ev)) = first_in_run(stance, &watch, p, iopt) else {
                    return fail(failure_of(stance.terminal.kind), stance.terminal.time, Phase::SingleStance);
                };
                rec.push_run(stance, t_ev);
                let ev = PhaseEvent { kind: EventKind::StanceToDouble, time: t_ev, state: stance.field.state(&y_ev) };
                let realized = classify_double_touchdown(stance.field.vy(&y_ev));
                rec.events.push(ev);
                let Ok(double) = switch_phase(&ev, alpha, p) else {
                    return fail(FailureKind::ForbiddenTransition, t_ev, Phase::SingleStance);
                };
                let (run, ev) = run_phase(&double, t_ev, EventKind::DoubleToStance, alpha, p, iopt);
                rec.push_run(&run, ev.time);
                if ev.kind != EventKind::DoubleToStance {
                    return fail(failure_of(ev.kind), ev.time, Phase::DoubleStance);
                }
                rec.events.push(ev);
                let single = switch_phase(&ev, alpha, p).expect("double to stance");
                match single {
                    HybridState::Stance(s) if s.theta < FRAC_PI_2 => {}
                    _ => return fail(FailureKind::ForbiddenTransition, ev.time, Phase::DoubleStance),
                }
                self.finish(single, ev.time, realized, alpha, rec)
            }
            Prefix::Running { stance, flight } => {
                let Some((takeoff, flight_run)) = flight else {
                    return fail(failure_of(stance.terminal.kind), stance.terminal.time, Phase::SingleStance);
                };
                rec.push_run(stance, takeoff.time);
                rec.events.push(*takeoff);
                let watch = Watch::new(EventKind::Touchdown, alpha);
                let Some((t_ev, y_ev)) = first_in_run(flight_run, &watch, p, iopt) else {
                    return fail(failure_of(flight_run.terminal.kind), flight_run.terminal.time, Phase::Flight);
                };
                rec.push_run(flight_run, t_ev);
                let ev = PhaseEvent { kind: EventKind::Touchdown, time: t_ev, state: flight_run.field.state(&y_ev) };
                rec.events.push(ev);
                let stance2 = switch_phase(&ev, alpha, p).expect("touchdown from flight");
                self.finish(stance2, t_ev, GaitKind::Running, alpha, rec)
            }
        }
    }

    fn finish(&self, st: HybridState, t0: f64, realized: GaitKind, alpha: f64, mut rec: Recorder) -> StepOutcome {
        let p = &self.params;
        let (run, ev) = run_phase(&st, t0, EventKind::SectionCrossing, alpha, p, &self.opts.integrator);
        rec.push_run(&run, ev.time);
        if ev.kind != EventKind::SectionCrossing {
            return StepOutcome::Failure { kind: failure_of(ev.kind), time: ev.time, phase: Phase::SingleStance };
        }
        rec.events.push(ev);
        let HybridState::Stance(end) = ev.state else { unreachable!() };
        let next = SectionState { r: end.r, vy: end.rdot, energy: self.start.energy(p) };
        StepOutcome::Success(StepSuccess {
            next,
            realized,
            duration: ev.time - self.opts.t0,
            end_state: end,
            events: rec.events,
            segments: rec.segments,
        })
    }
}

struct Recorder {
    stride: Option<f64>,
    segments: Vec<Segment>,
    events: Vec<PhaseEvent>,
}

impl Recorder {
    fn push_run(&mut self, run: &StepRun, t_end: f64) {
        let Some(stride) = self.stride else { return };
        let samples = run.samples(stride).into_iter().filter(|(t, _)| *t < t_end).collect();
        self.segments.push(Segment { phase: run.field.phase(), t_start: run.t0, t_end, samples });
    }
}

fn failure_of(kind: EventKind) -> FailureKind {
    match kind {
        EventKind::Failure(k) => k,
        // a watched phase switch that is not part of the requested sequence
        _ => FailureKind::ForbiddenTransition,
    }
}

/// First firing of `watch` within the run, before the run's own terminal.
fn first_in_run(run: &StepRun, watch: &Watch, p: &ModelParams, opts: &IntegratorOptions) -> Option<(f64, [f64; 4])> {
    let last = run.steps.len().checked_sub(1)?;
    for (i, st) in run.steps.iter().enumerate() {
        if let Some((tau, y)) = scan_step(st, &run.field, watch, p, opts) {
            let t = st.t + tau;
            if i < last || t <= run.terminal.time {
                return Some((t, y));
            }
            return None;
        }
    }
    None
}

/// Integrates one phase until `target` or a failure; the returned event
/// carries the terminal kind.
fn run_phase(
    s: &HybridState,
    t0: f64,
    target: EventKind,
    alpha: f64,
    p: &ModelParams,
    opts: &IntegratorOptions,
) -> (StepRun, PhaseEvent) {
    let (field, y0) = PhaseField::of(s);
    let mut watches = vec![Watch::new(target, alpha)];
    watches.extend(failure_watches(field.phase(), &[target]));
    let run = match initial_failure(&field, &y0) {
        Some(kind) => StepRun {
            field,
            t0,
            y0,
            steps: Vec::new(),
            terminal: Terminal { kind: EventKind::Failure(kind), time: t0, y: y0 },
        },
        None => integrate_steps(field, y0, t0, &watches, p, opts),
    };
    let ev = PhaseEvent { kind: run.terminal.kind, time: run.terminal.time, state: run.end_state() };
    (run, ev)
}

/// One step of `gait` with angle of attack `alpha` from section state `s`.
pub fn step(s: &SectionState, gait: GaitKind, alpha: f64, p: &ModelParams) -> Result<StepOutcome> {
    step_with(s, gait, alpha, p, &StepOptions::default())
}

pub fn step_with(s: &SectionState, gait: GaitKind, alpha: f64, p: &ModelParams, opts: &StepOptions) -> Result<StepOutcome> {
    check_angle(alpha)?;
    Ok(AngleSweep::new(s, gait, p, opts)?.outcome(alpha, true))
}

fn check_angle(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return Err(SlipError::Domain(format!("angle of attack {alpha} outside (0, pi/2)")));
    }
    Ok(())
}

/// Outcome of a hopping step: a walking step followed by a running step,
/// with the intermediate section state exposed.
#[derive(Debug, Clone)]
pub struct HoppingOutcome {
    pub walk: StepOutcome,
    pub run: Option<StepOutcome>,
}

impl HoppingOutcome {
    pub fn next(&self) -> Option<SectionState> {
        self.walk.success()?;
        self.run.as_ref()?.success().map(|s| s.next)
    }

    pub fn failure(&self) -> Option<FailureKind> {
        self.walk.failure().or_else(|| self.run.as_ref().and_then(|r| r.failure()))
    }
}

/// Hopping step: walk with `alpha`, then run with `beta`.
pub fn step_hopping(s: &SectionState, alpha: f64, beta: f64, p: &ModelParams) -> Result<HoppingOutcome> {
    check_angle(beta)?;
    let walk = step(s, GaitKind::Walking, alpha, p)?;
    let run = match walk.success() {
        Some(w) => Some(step(&w.next, GaitKind::Running, beta, p)?),
        None => None,
    };
    Ok(HoppingOutcome { walk, run })
}

/// An angle interval `[lo, hi]` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AngleInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo && a <= self.hi
    }
}

/// Sample angles `k * resolution` strictly inside `(0, pi/2)`.
pub fn angle_samples(resolution: f64) -> Vec<f64> {
    let n = (FRAC_PI_2 / resolution - 1e-9).ceil() as usize;
    (1..n).map(|k| k as f64 * resolution).collect()
}

/// Maximal angle intervals over which a step of `gait` succeeds, realizes
/// `gait`, and (when given) lands where `accept` says yes. Interval ends are
/// refined by bisection to a tenth of the sweep resolution.
pub fn valid_angle_set(
    s: &SectionState,
    gait: GaitKind,
    p: &ModelParams,
    accept: Option<&dyn Fn(&SectionState) -> bool>,
    resolution: f64,
) -> Result<Vec<AngleInterval>> {
    if !(resolution > 0.0) {
        return Err(SlipError::Domain("angle resolution must be positive".into()));
    }
    if !s.is_valid(p) {
        return Ok(Vec::new());
    }
    let sweep = AngleSweep::new(s, gait, p, &StepOptions::default())?;
    let ok = |a: f64| -> bool {
        match sweep.outcome(a, false).landing(gait) {
            Some(next) => accept.is_none_or(|f| f(&next)),
            None => false,
        }
    };
    let angles = angle_samples(resolution);
    let flags: Vec<bool> = angles.iter().map(|&a| ok(a)).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < flags.len() {
        if !flags[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < flags.len() && flags[i + 1] {
            i += 1;
        }
        let (a0, a1) = (angles[start], angles[i]);
        let lo = refine_edge(&ok, (a0 - resolution).max(0.0), a0, resolution / 10.0);
        let hi = refine_edge(&ok, (a1 + resolution).min(FRAC_PI_2), a1, resolution / 10.0);
        out.push(AngleInterval { lo, hi });
        i += 1;
    }
    Ok(out)
}

/// Bisects between a failing angle `bad` and a valid angle `good`; returns
/// the outermost angle known to be valid.
fn refine_edge(ok: &dyn Fn(f64) -> bool, mut bad: f64, mut good: f64, tol: f64) -> f64 {
    while (good - bad).abs() > tol {
        let mid = 0.5 * (good + bad);
        if mid <= 0.0 || mid >= FRAC_PI_2 {
            break;
        }
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}
