//! Dormand-Prince 5(4) integration with event location.
//!
//! Accepted steps are kept with their stages so that events can be located
//! after the fact by re-stepping from the start of the bracketing step. The
//! step-size sequence never depends on which events are watched, which lets
//! a single integrated prefix be scanned for many different angles with
//! results bit-identical to integrating each angle separately.

use super::{EventKind, FailureKind, HybridState, ModelParams, Phase, PhaseEvent, PhaseField, Vec4};
use crate::error::Result;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Shampine's continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// An event being watched during integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Watch {
    pub kind: EventKind,
    pub alpha: f64,
    pub direction: Direction,
}

impl Watch {
    pub fn new(kind: EventKind, alpha: f64) -> Self {
        Self { kind, alpha, direction: super::natural_direction(kind) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: f64,
    /// Maximum simulated time per phase; `None` means `10 sqrt(r0 / g)`.
    pub horizon: Option<f64>,
    pub event_time_tol: f64,
    /// Dense output stride (s); `None` disables sampling.
    pub sample_stride: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            max_step: 0.02,
            initial_step: 1e-3,
            horizon: None,
            event_time_tol: 1e-12,
            sample_stride: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_samples(mut self, stride: f64) -> Self {
        self.sample_stride = Some(stride);
        self
    }

    pub(crate) fn horizon(&self, p: &ModelParams) -> f64 {
        self.horizon.unwrap_or(10.0 * p.time_scale())
    }
}

/// One accepted Runge-Kutta step, with stages for dense output.
#[derive(Debug, Clone)]
pub struct AcceptedStep {
    pub t: f64,
    pub h: f64,
    pub y0: Vec4,
    pub y1: Vec4,
    k: [Vec4; 7],
}

impl AcceptedStep {
    /// Dense-output interpolant at absolute time `t` within the step.
    pub fn interpolate(&self, t: f64) -> Vec4 {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        let h = self.h;
        let k = &self.k;
        let mut out = [0.0; 4];
        for i in 0..4 {
            let r2 = self.y1[i] - self.y0[i];
            let r3 = h * k[0][i] - r2;
            let r4 = r2 - h * k[6][i] - r3;
            let r5 = h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
            out[i] = self.y0[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
        }
        out
    }

    /// Fifth-order solution after `tau` from the start of the step.
    pub(crate) fn restep(&self, field: &PhaseField, p: &ModelParams, tau: f64) -> Vec4 {
        if tau == self.h {
            return self.y1;
        }
        dp_stages(field, p, &self.y0, &self.k[0], tau).0
    }
}

/// A terminal event inside the last accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terminal {
    pub kind: EventKind,
    pub time: f64,
    pub y: Vec4,
}

/// Accepted steps of one phase up to its first watched event.
#[derive(Debug, Clone)]
pub struct StepRun {
    pub field: PhaseField,
    pub t0: f64,
    pub y0: Vec4,
    pub steps: Vec<AcceptedStep>,
    pub terminal: Terminal,
}

impl StepRun {
    pub fn end_state(&self) -> HybridState {
        self.field.state(&self.terminal.y)
    }

    /// Dense samples at absolute times `k * stride` in `[t0, terminal.time)`.
    pub fn samples(&self, stride: f64) -> Vec<(f64, HybridState)> {
        let mut out = Vec::new();
        let t_end = self.terminal.time;
        let mut k = (self.t0 / stride).ceil() as i64;
        let mut idx = 0;
        loop {
            let t = k as f64 * stride;
            if t >= t_end {
                break;
            }
            if t >= self.t0 {
                while idx + 1 < self.steps.len() && t > self.steps[idx].t + self.steps[idx].h {
                    idx += 1;
                }
                let y = match self.steps.get(idx) {
                    Some(s) => s.interpolate(t),
                    None => self.y0,
                };
                out.push((t, self.field.state(&y)));
            }
            k += 1;
        }
        out
    }
}

/// A dense trajectory segment of one phase.
#[derive(Debug, Clone)]
pub struct Segment {
    pub phase: Phase,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: Vec<(f64, HybridState)>,
}

fn add(y: &Vec4, h: f64, terms: &[(f64, &Vec4)]) -> Vec4 {
    let mut out = *y;
    for i in 0..4 {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Stages of one Dormand-Prince step. Returns `(y5, error estimate, stages)`.
fn dp_stages(field: &PhaseField, p: &ModelParams, y: &Vec4, k1: &Vec4, h: f64) -> (Vec4, Vec4, [Vec4; 7]) {
    let k2 = field.eval(&add(y, h, &[(A21, k1)]), p);
    let k3 = field.eval(&add(y, h, &[(A31, k1), (A32, &k2)]), p);
    let k4 = field.eval(&add(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]), p);
    let k5 = field.eval(&add(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]), p);
    let k6 = field.eval(&add(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]), p);
    let y5 = add(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = field.eval(&y5, p);
    let mut err = [0.0; 4];
    for i in 0..4 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err, [*k1, k2, k3, k4, k5, k6, k7])
}

fn crossed(dir: Direction, g0: f64, g1: f64) -> bool {
    match dir {
        Direction::Rising => g0 <= 0.0 && g1 > 0.0,
        Direction::Falling => g0 >= 0.0 && g1 < 0.0,
        Direction::Either => (g0 <= 0.0 && g1 > 0.0) || (g0 >= 0.0 && g1 < 0.0),
    }
}

/// Locates the first crossing of `watch` inside `step`. Returns the offset
/// from the step start and the state there, taken on the far side of the
/// crossing.
pub(crate) fn scan_step(
    step: &AcceptedStep,
    field: &PhaseField,
    watch: &Watch,
    p: &ModelParams,
    opts: &IntegratorOptions,
) -> Option<(f64, Vec4)> {
    let res = |y: &Vec4| field.residual(watch.kind, y, watch.alpha, p);
    let g0 = res(&step.y0)?.residual;
    let g1 = res(&step.y1)?.residual;
    if !crossed(watch.direction, g0, g1) {
        return None;
    }
    let post = g1.signum();
    let (mut a, mut fa) = (0.0, g0);
    let (mut b, mut fb) = (step.h, g1);
    let mut yb = step.y1;
    let mut side = 0i8;
    for _ in 0..200 {
        if b - a <= opts.event_time_tol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let yc = step.restep(field, p, c);
        let fc = res(&yc)?.residual;
        // `b` always carries the post-event sign
        if fc * post > 0.0 {
            b = c;
            fb = fc;
            yb = yc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
    }
    let r = res(&yb)?;
    if !r.guard {
        return None;
    }
    Some((b, yb))
}

/// Integrates one phase from `y0` until the earliest watched event. Hitting
/// the phase horizon yields a `ForbiddenTransition` terminal.
pub(crate) fn integrate_steps(
    field: PhaseField,
    y0: Vec4,
    t0: f64,
    watches: &[Watch],
    p: &ModelParams,
    opts: &IntegratorOptions,
) -> StepRun {
    let t_end = t0 + opts.horizon(p);
    let mut steps = Vec::new();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = field.eval(&y, p);
    let mut h = opts.initial_step.min(opts.max_step);
    loop {
        if t >= t_end {
            let terminal = Terminal { kind: EventKind::Failure(FailureKind::ForbiddenTransition), time: t_end, y };
            return StepRun { field, t0, y0, steps, terminal };
        }
        let h_try = h.min(t_end - t);
        let (y5, err, k) = dp_stages(&field, p, &y, &k1, h_try);
        let mut norm = 0.0;
        for i in 0..4 {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        let norm = (norm / 4.0).sqrt();
        let finite = y5.iter().all(|v| v.is_finite());
        if !finite || norm > 1.0 {
            let fac = if finite { (0.9 * norm.powf(-0.2)).max(0.2) } else { 0.25 };
            h = h_try * fac;
            if h < 1e-14 {
                let terminal = Terminal { kind: EventKind::Failure(FailureKind::Fall), time: t, y };
                return StepRun { field, t0, y0, steps, terminal };
            }
            continue;
        }
        let step = AcceptedStep { t, h: h_try, y0: y, y1: y5, k };
        let mut first: Option<(f64, EventKind, Vec4)> = None;
        for w in watches {
            if let Some((tau, yy)) = scan_step(&step, &field, w, p, opts) {
                if first.is_none_or(|(ft, _, _)| tau < ft) {
                    first = Some((tau, w.kind, yy));
                }
            }
        }
        let t_step = step.t;
        k1 = step.k[6];
        steps.push(step);
        if let Some((tau, kind, yy)) = first {
            let terminal = Terminal { kind, time: t_step + tau, y: yy };
            return StepRun { field, t0, y0, steps, terminal };
        }
        t = t_step + h_try;
        y = y5;
        let fac = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h_try * fac).min(opts.max_step);
    }
}

/// Failure watches that apply to every phase, plus leg lift-off while a
/// leg is loaded unless `Takeoff` itself is being watched.
pub(crate) fn failure_watches(phase: Phase, watched: &[EventKind]) -> Vec<Watch> {
    let mut w = vec![
        Watch::new(EventKind::Failure(FailureKind::Fall), 0.0),
        Watch::new(EventKind::Failure(FailureKind::Backwards), 0.0),
    ];
    let lift_watched = phase == Phase::SingleStance && watched.contains(&EventKind::Takeoff);
    if phase != Phase::Flight && !lift_watched {
        w.push(Watch::new(EventKind::Failure(FailureKind::ForbiddenTransition), 0.0));
    }
    w
}

/// Immediate failure of a state that already violates a failure rule.
pub(crate) fn initial_failure(field: &PhaseField, y: &Vec4) -> Option<FailureKind> {
    if !(field.height(y) > 0.0) {
        Some(FailureKind::Fall)
    } else if field.vx(y) < 0.0 {
        Some(FailureKind::Backwards)
    } else {
        None
    }
}

/// Integrates `s0` from time `t0` until the first of `watched` fires (or a
/// failure occurs), returning the event and the dense segment.
pub fn integrate_until_event(
    s0: &HybridState,
    t0: f64,
    watched: &[EventKind],
    alpha: f64,
    p: &ModelParams,
    opts: &IntegratorOptions,
) -> Result<(PhaseEvent, Segment)> {
    let (field, y0) = PhaseField::of(s0);
    for kind in watched {
        if field.residual(*kind, &y0, alpha, p).is_none() {
            return Err(crate::SlipError::IncompatiblePhase { event: kind.name(), phase: field.phase().name() });
        }
    }
    if let Some(kind) = initial_failure(&field, &y0) {
        let ev = PhaseEvent { kind: EventKind::Failure(kind), time: t0, state: *s0 };
        return Ok((ev, Segment { phase: field.phase(), t_start: t0, t_end: t0, samples: Vec::new() }));
    }
    let mut watches: Vec<Watch> = watched.iter().map(|k| Watch::new(*k, alpha)).collect();
    watches.extend(failure_watches(field.phase(), watched));
    let run = integrate_steps(field, y0, t0, &watches, p, opts);
    let ev = PhaseEvent { kind: run.terminal.kind, time: run.terminal.time, state: run.end_state() };
    let samples = opts.sample_stride.map(|s| run.samples(s)).unwrap_or_default();
    Ok((ev, Segment { phase: field.phase(), t_start: t0, t_end: ev.time, samples }))
}
