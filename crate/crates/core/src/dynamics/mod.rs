//! Continuous phases of the bipedal SLIP model and the discrete switches
//! between them.
//!
//! Three coordinate charts are used:
//!
//! * flight: Cartesian `(x, y, vx, vy)` of the point mass;
//! * single stance: polar `(r, theta, rdot, thetadot)` about the support
//!   foot, `theta` measured from the horizontal and growing clockwise, so
//!   the mass sits at `(foot_x - r cos theta, r sin theta)`;
//! * double stance: the same polar chart about the *front* (newest) foot,
//!   plus the horizontal separation `x_sep` to the back foot.
//!
//! The angle of attack `alpha` is the angle between the landing leg and the
//! horizontal, so a leg of natural length touches the ground when the hip
//! height equals `r0 sin alpha`.

mod integrator;

use std::f64::consts::FRAC_PI_2;
use std::fmt;

pub use integrator::{
    integrate_until_event, AcceptedStep, Direction, IntegratorOptions, Segment, StepRun, Terminal, Watch,
};
pub(crate) use integrator::{failure_watches, initial_failure, integrate_steps, scan_step};

use crate::error::{Result, SlipError};

pub type Vec4 = [f64; 4];

/// Mechanical constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelParams {
    /// Point mass (kg).
    pub mass: f64,
    /// Leg stiffness (N/m).
    pub stiffness: f64,
    /// Natural leg length (m).
    pub rest_length: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { mass: 80.0, stiffness: 20_000.0, rest_length: 1.0, gravity: 9.81 }
    }
}

impl ModelParams {
    pub fn new(mass: f64, stiffness: f64, rest_length: f64, gravity: f64) -> Result<Self> {
        let p = Self { mass, stiffness, rest_length, gravity };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("stiffness", self.stiffness),
            ("rest_length", self.rest_length),
            ("gravity", self.gravity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SlipError::InvalidParams(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the bit patterns of the four parameters.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in [self.mass, self.stiffness, self.rest_length, self.gravity] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Weight `m g` (N).
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub(crate) fn k_over_m(&self) -> f64 {
        self.stiffness / self.mass
    }

    /// Time scale `sqrt(r0 / g)`.
    pub fn time_scale(&self) -> f64 {
        (self.rest_length / self.gravity).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StanceState {
    pub r: f64,
    pub theta: f64,
    pub rdot: f64,
    pub thetadot: f64,
    /// World-frame horizontal position of the support foot.
    pub foot_x: f64,
}

/// Double support in the chart of the front leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleStanceState {
    pub front: StanceState,
    /// Horizontal distance from the back foot to the front foot.
    pub x_sep: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Flight,
    SingleStance,
    DoubleStance,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Flight => "flight",
            Phase::SingleStance => "single",
            Phase::DoubleStance => "double",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = SlipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flight" => Ok(Phase::Flight),
            "single" => Ok(Phase::SingleStance),
            "double" => Ok(Phase::DoubleStance),
            _ => Err(SlipError::Parse(format!("unknown phase {s:?}"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HybridState {
    Flight(FlightState),
    Stance(StanceState),
    Double(DoubleStanceState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureKind {
    /// The mass reached the ground (`y <= 0`).
    Fall,
    /// A phase switch outside the allowed sequence, or the phase horizon ran out.
    ForbiddenTransition,
    /// Horizontal velocity became negative.
    Backwards,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Fall => "fall",
            FailureKind::ForbiddenTransition => "forbidden-transition",
            FailureKind::Backwards => "backwards",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Touchdown,
    Takeoff,
    StanceToDouble,
    DoubleToStance,
    SectionCrossing,
    Failure(FailureKind),
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Touchdown => "touchdown",
            EventKind::Takeoff => "takeoff",
            EventKind::StanceToDouble => "stance-to-double",
            EventKind::DoubleToStance => "double-to-stance",
            EventKind::SectionCrossing => "section-crossing",
            EventKind::Failure(FailureKind::Fall) => "failure:fall",
            EventKind::Failure(FailureKind::ForbiddenTransition) => "failure:forbidden-transition",
            EventKind::Failure(FailureKind::Backwards) => "failure:backwards",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEvent {
    pub kind: EventKind,
    pub time: f64,
    pub state: HybridState,
}

/// Residual of an event function together with its guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventResidual {
    pub residual: f64,
    pub guard: bool,
}

impl StanceState {
    pub fn new(r: f64, theta: f64, rdot: f64, thetadot: f64, foot_x: f64) -> Self {
        Self { r, theta, rdot, thetadot, foot_x }
    }

    pub(crate) fn chart(&self) -> Vec4 {
        [self.r, self.theta, self.rdot, self.thetadot]
    }

    pub(crate) fn from_chart(y: &Vec4, foot_x: f64) -> Self {
        Self { r: y[0], theta: y[1], rdot: y[2], thetadot: y[3], foot_x }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.foot_x - self.r * self.theta.cos(), self.r * self.theta.sin())
    }

    pub fn velocity(&self) -> (f64, f64) {
        polar_velocity(&self.chart())
    }
}

impl DoubleStanceState {
    pub fn back_foot_x(&self) -> f64 {
        self.front.foot_x - self.x_sep
    }
}

impl FlightState {
    pub(crate) fn chart(&self) -> Vec4 {
        [self.x, self.y, self.vx, self.vy]
    }

    pub(crate) fn from_chart(y: &Vec4) -> Self {
        Self { x: y[0], y: y[1], vx: y[2], vy: y[3] }
    }
}

/// Cartesian velocity of the mass from the polar chart.
pub(crate) fn polar_velocity(y: &Vec4) -> (f64, f64) {
    let (s, c) = y[1].sin_cos();
    (-y[2] * c + y[0] * y[3] * s, y[2] * s + y[0] * y[3] * c)
}

impl HybridState {
    pub fn phase(&self) -> Phase {
        match self {
            HybridState::Flight(_) => Phase::Flight,
            HybridState::Stance(_) => Phase::SingleStance,
            HybridState::Double(_) => Phase::DoubleStance,
        }
    }

    /// World-frame position of the mass.
    pub fn position(&self) -> (f64, f64) {
        match self {
            HybridState::Flight(f) => (f.x, f.y),
            HybridState::Stance(s) => s.position(),
            HybridState::Double(d) => d.front.position(),
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        match self {
            HybridState::Flight(f) => (f.vx, f.vy),
            HybridState::Stance(s) => s.velocity(),
            HybridState::Double(d) => d.front.velocity(),
        }
    }

    /// Total mechanical energy, including the back-leg spring in double stance.
    pub fn energy(&self, p: &ModelParams) -> f64 {
        let (_, y) = self.position();
        let (vx, vy) = self.velocity();
        let kinetic = 0.5 * p.mass * (vx * vx + vy * vy);
        let potential = p.mass * p.gravity * y;
        let spring = |len: f64| 0.5 * p.stiffness * (p.rest_length - len).powi(2);
        let elastic = match self {
            HybridState::Flight(_) => 0.0,
            HybridState::Stance(s) => spring(s.r),
            HybridState::Double(d) => spring(d.front.r) + spring(back_leg_length(d)),
        };
        kinetic + potential + elastic
    }
}

pub fn flight_derivatives(s: &FlightState, p: &ModelParams) -> FlightState {
    let d = flight_field(&s.chart(), p.gravity);
    FlightState::from_chart(&d)
}

/// Time derivative of the single-stance chart `(r, theta, rdot, thetadot)`.
pub fn single_stance_derivatives(s: &StanceState, p: &ModelParams) -> Result<Vec4> {
    if !(s.r > 0.0) {
        return Err(SlipError::Singularity("leg length must be positive"));
    }
    Ok(stance_field(&s.chart(), p))
}

/// Length of the back leg during double support.
pub fn back_leg_length(s: &DoubleStanceState) -> f64 {
    back_leg_len(s.front.r, s.front.theta, s.x_sep)
}

/// Time derivative of the double-stance chart.
pub fn double_stance_derivatives(s: &DoubleStanceState, p: &ModelParams) -> Result<Vec4> {
    if !(s.front.r > 0.0) {
        return Err(SlipError::Singularity("front leg length must be positive"));
    }
    if !(back_leg_length(s) > 0.0) {
        return Err(SlipError::Singularity("back leg length must be positive"));
    }
    Ok(double_field(&s.front.chart(), s.x_sep, p))
}

#[inline]
pub(crate) fn back_leg_len(r: f64, theta: f64, x_sep: f64) -> f64 {
    (r * r + x_sep * x_sep - 2.0 * r * x_sep * theta.cos()).sqrt()
}

#[inline]
pub(crate) fn flight_field(y: &Vec4, g: f64) -> Vec4 {
    [y[2], y[3], 0.0, -g]
}

#[inline]
pub(crate) fn stance_field(y: &Vec4, p: &ModelParams) -> Vec4 {
    let [r, theta, rdot, thetadot] = *y;
    let (s, c) = theta.sin_cos();
    [
        rdot,
        thetadot,
        p.k_over_m() * (p.rest_length - r) + r * thetadot * thetadot - p.gravity * s,
        -(2.0 * rdot * thetadot + p.gravity * c) / r,
    ]
}

#[inline]
pub(crate) fn double_field(y: &Vec4, x_sep: f64, p: &ModelParams) -> Vec4 {
    let [r, theta, rdot, thetadot] = *y;
    let (s, c) = theta.sin_cos();
    let r_back = back_leg_len(r, theta, x_sep);
    let km = p.k_over_m();
    let back = 1.0 - p.rest_length / r_back;
    [
        rdot,
        thetadot,
        km * ((p.rest_length - r) + back * (x_sep * c - r)) + r * thetadot * thetadot - p.gravity * s,
        -(km * back * x_sep * s + 2.0 * rdot * thetadot + p.gravity * c) / r,
    ]
}

/// Vector field of one phase, with the constants it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseField {
    Flight,
    Stance { foot_x: f64 },
    Double { foot_x: f64, x_sep: f64 },
}

impl PhaseField {
    pub fn phase(&self) -> Phase {
        match self {
            PhaseField::Flight => Phase::Flight,
            PhaseField::Stance { .. } => Phase::SingleStance,
            PhaseField::Double { .. } => Phase::DoubleStance,
        }
    }

    pub fn of(state: &HybridState) -> (Self, Vec4) {
        match state {
            HybridState::Flight(f) => (PhaseField::Flight, f.chart()),
            HybridState::Stance(s) => (PhaseField::Stance { foot_x: s.foot_x }, s.chart()),
            HybridState::Double(d) => {
                (PhaseField::Double { foot_x: d.front.foot_x, x_sep: d.x_sep }, d.front.chart())
            }
        }
    }

    #[inline]
    pub(crate) fn eval(&self, y: &Vec4, p: &ModelParams) -> Vec4 {
        match *self {
            PhaseField::Flight => flight_field(y, p.gravity),
            PhaseField::Stance { .. } => stance_field(y, p),
            PhaseField::Double { x_sep, .. } => double_field(y, x_sep, p),
        }
    }

    pub fn state(&self, y: &Vec4) -> HybridState {
        match *self {
            PhaseField::Flight => HybridState::Flight(FlightState::from_chart(y)),
            PhaseField::Stance { foot_x } => HybridState::Stance(StanceState::from_chart(y, foot_x)),
            PhaseField::Double { foot_x, x_sep } => HybridState::Double(DoubleStanceState {
                front: StanceState::from_chart(y, foot_x),
                x_sep,
            }),
        }
    }

    /// Hip height.
    #[inline]
    pub(crate) fn height(&self, y: &Vec4) -> f64 {
        match self {
            PhaseField::Flight => y[1],
            _ => y[0] * y[1].sin(),
        }
    }

    #[inline]
    pub(crate) fn vx(&self, y: &Vec4) -> f64 {
        match self {
            PhaseField::Flight => y[2],
            _ => polar_velocity(y).0,
        }
    }

    #[inline]
    pub(crate) fn vy(&self, y: &Vec4) -> f64 {
        match self {
            PhaseField::Flight => y[3],
            _ => polar_velocity(y).1,
        }
    }

    /// Scalar residual and guard of `kind` in this phase, if defined here.
    pub(crate) fn residual(&self, kind: EventKind, y: &Vec4, alpha: f64, p: &ModelParams) -> Option<EventResidual> {
        let landing = p.rest_length * alpha.sin();
        let phase = self.phase();
        let res = match (kind, phase) {
            (EventKind::Touchdown, Phase::Flight) => {
                EventResidual { residual: y[1] - landing, guard: y[3] < 0.0 }
            }
            (EventKind::Takeoff, Phase::SingleStance) => {
                EventResidual { residual: y[0] - p.rest_length, guard: true }
            }
            (EventKind::StanceToDouble, Phase::SingleStance) => {
                EventResidual { residual: y[0] * y[1].sin() - landing, guard: y[1] > FRAC_PI_2 }
            }
            (EventKind::DoubleToStance, Phase::DoubleStance) => {
                let PhaseField::Double { x_sep, .. } = *self else { unreachable!() };
                EventResidual { residual: back_leg_len(y[0], y[1], x_sep) - p.rest_length, guard: true }
            }
            (EventKind::SectionCrossing, Phase::SingleStance) => {
                EventResidual { residual: y[1] - FRAC_PI_2, guard: true }
            }
            (EventKind::Failure(FailureKind::Fall), _) => {
                EventResidual { residual: self.height(y), guard: true }
            }
            (EventKind::Failure(FailureKind::Backwards), _) => {
                EventResidual { residual: self.vx(y), guard: true }
            }
            // Any attempt of a loaded leg to leave the ground.
            (EventKind::Failure(FailureKind::ForbiddenTransition), Phase::SingleStance | Phase::DoubleStance) => {
                EventResidual { residual: y[0] - p.rest_length, guard: true }
            }
            _ => return None,
        };
        Some(res)
    }
}

/// Evaluates the residual of `kind` at `s`. The event fires where the
/// residual changes sign (in the direction of [`natural_direction`]) with
/// the guard satisfied.
pub fn evaluate_event(kind: EventKind, s: &HybridState, alpha: f64, p: &ModelParams) -> Result<EventResidual> {
    let (field, y) = PhaseField::of(s);
    field.residual(kind, &y, alpha, p).ok_or(SlipError::IncompatiblePhase {
        event: kind.name(),
        phase: s.phase().name(),
    })
}

/// Crossing direction used when watching `kind`.
pub fn natural_direction(kind: EventKind) -> Direction {
    match kind {
        EventKind::Touchdown => Direction::Falling,
        EventKind::Takeoff => Direction::Rising,
        EventKind::StanceToDouble => Direction::Either,
        EventKind::DoubleToStance => Direction::Rising,
        EventKind::SectionCrossing => Direction::Rising,
        EventKind::Failure(FailureKind::Fall) => Direction::Falling,
        EventKind::Failure(FailureKind::Backwards) => Direction::Falling,
        EventKind::Failure(FailureKind::ForbiddenTransition) => Direction::Rising,
    }
}

/// Maps the state at a fired event into the chart of the following phase.
///
/// `Takeoff` goes to flight, `Touchdown` and `StanceToDouble` put a new leg
/// down at natural length with angle `alpha`, `DoubleToStance` drops the
/// back leg. `SectionCrossing` and failures leave the state untouched.
pub fn switch_phase(event: &PhaseEvent, alpha: f64, p: &ModelParams) -> Result<HybridState> {
    let forbidden = || SlipError::Domain(format!("forbidden transition at {}", event.kind.name()));
    match (event.kind, event.state) {
        (EventKind::Takeoff, HybridState::Stance(s)) => {
            let (x, y) = s.position();
            let (vx, vy) = s.velocity();
            Ok(HybridState::Flight(FlightState { x, y, vx, vy }))
        }
        (EventKind::Touchdown, HybridState::Flight(f)) => {
            let new = leg_down(f.x, f.vx, f.vy, alpha, p);
            Ok(HybridState::Stance(new))
        }
        (EventKind::StanceToDouble, HybridState::Stance(s)) => {
            let (x, _) = s.position();
            let (vx, vy) = s.velocity();
            let front = leg_down(x, vx, vy, alpha, p);
            let x_sep = front.foot_x - s.foot_x;
            if !(x_sep > 0.0) {
                return Err(forbidden());
            }
            Ok(HybridState::Double(DoubleStanceState { front, x_sep }))
        }
        (EventKind::DoubleToStance, HybridState::Double(d)) => Ok(HybridState::Stance(d.front)),
        (EventKind::SectionCrossing, st) => Ok(st),
        (kind, st) => Err(SlipError::IncompatiblePhase { event: kind.name(), phase: st.phase().name() }),
    }
}

/// Polar chart of a leg placed at natural length with angle `alpha`, for a
/// mass at horizontal position `x` moving with `(vx, vy)`.
fn leg_down(x: f64, vx: f64, vy: f64, alpha: f64, p: &ModelParams) -> StanceState {
    let (s, c) = alpha.sin_cos();
    let r0 = p.rest_length;
    StanceState {
        r: r0,
        theta: alpha,
        rdot: -vx * c + vy * s,
        thetadot: (vx * s + vy * c) / r0,
        foot_x: x + r0 * c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn flight_derivative_is_ballistic() {
        let d = flight_derivatives(&FlightState { x: 0.0, y: 1.0, vx: 2.0, vy: 0.0 }, &p());
        assert_eq!(d, FlightState { x: 2.0, y: 0.0, vx: 0.0, vy: -9.81 });
        let d = flight_derivatives(&FlightState { x: 3.0, y: 0.2, vx: 0.0, vy: 0.0 }, &p());
        assert_eq!(d, FlightState { x: 0.0, y: 0.0, vx: 0.0, vy: -9.81 });
    }

    #[test]
    fn stance_vertical_leg_at_rest_length() {
        let p = p();
        let w = 1.7;
        let d = single_stance_derivatives(&StanceState::new(1.0, PI / 2.0, 0.0, w, 0.0), &p).unwrap();
        assert!((d[2] - (w * w - p.gravity)).abs() < 1e-12);
        assert!(d[3].abs() < 1e-12);

        let w = (p.gravity / p.rest_length).sqrt();
        let d = single_stance_derivatives(&StanceState::new(1.0, PI / 2.0, 0.0, w, 0.0), &p).unwrap();
        assert!(d[2].abs() < 1e-12);
    }

    #[test]
    fn stance_matches_term_by_term_formula() {
        let p = ModelParams::new(70.0, 15_000.0, 0.95, 9.8).unwrap();
        let (r, th, rd, thd) = (0.91, 1.2, -0.3, 1.1);
        let d = single_stance_derivatives(&StanceState::new(r, th, rd, thd, 0.0), &p).unwrap();
        let rdd = 15_000.0 / 70.0 * (0.95 - r) + r * thd * thd - 9.8 * th.sin();
        let thdd = -(2.0 * rd * thd + 9.8 * th.cos()) / r;
        assert_eq!(d[0], rd);
        assert_eq!(d[1], thd);
        assert!((d[2] - rdd).abs() < 1e-12);
        assert!((d[3] - thdd).abs() < 1e-12);
    }

    #[test]
    fn zero_length_leg_is_singular() {
        let e = single_stance_derivatives(&StanceState::new(0.0, 1.0, 0.0, 0.0, 0.0), &p());
        assert!(matches!(e, Err(SlipError::Singularity(_))));
        let d = DoubleStanceState { front: StanceState::new(0.0, 1.0, 0.0, 0.0, 0.0), x_sep: 0.3 };
        assert!(double_stance_derivatives(&d, &p()).is_err());
        // back leg of zero length: back foot directly under... the mass
        let d = DoubleStanceState { front: StanceState::new(0.5, 0.0, 0.0, 0.0, 0.0), x_sep: 0.5 };
        assert!(matches!(double_stance_derivatives(&d, &p()), Err(SlipError::Singularity(_))));
    }

    #[test]
    fn back_leg_law_of_cosines() {
        let mk = |r, th, xs| DoubleStanceState { front: StanceState::new(r, th, 0.0, 0.0, 0.0), x_sep: xs };
        assert_eq!(back_leg_length(&mk(0.9, 1.1, 0.0)), 0.9);
        assert!((back_leg_length(&mk(0.9, PI / 2.0, 0.4)) - (0.81f64 + 0.16).sqrt()).abs() < 1e-15);
        // triangle: back foot at (-x_sep, 0), mass at (-r cos th, r sin th)
        let (r, th, xs) = (0.93, 1.3, 0.52);
        let (mx, my) = (-r * f64::cos(th), r * f64::sin(th));
        let direct = ((mx + xs).powi(2) + my * my).sqrt();
        assert!((back_leg_length(&mk(r, th, xs)) - direct).abs() < 1e-14);
    }

    #[test]
    fn double_reduces_to_single_when_back_leg_unloaded() {
        let p = p();
        // choose x_sep so that the back leg is exactly at rest length:
        // x² - 2 r cos(th) x + r² - r0² = 0
        let (r, th) = (0.95, 1.25);
        let b = r * f64::cos(th);
        let xs = b + (b * b - r * r + 1.0).sqrt();
        let front = StanceState::new(r, th, 0.2, 1.3, 0.0);
        let d = DoubleStanceState { front, x_sep: xs };
        assert!((back_leg_length(&d) - 1.0).abs() < 1e-15);
        let dd = double_stance_derivatives(&d, &p).unwrap();
        let ds = single_stance_derivatives(&front, &p).unwrap();
        for i in 0..4 {
            assert!((dd[i] - ds[i]).abs() <= 1e-12 * ds[i].abs().max(1.0), "{i}: {dd:?} vs {ds:?}");
        }
    }

    #[test]
    fn coincident_feet_double_the_stiffness() {
        let p = p();
        let front = StanceState::new(0.96, 1.4, -0.1, 0.9, 0.0);
        let d = DoubleStanceState { front, x_sep: 0.0 };
        let dd = double_stance_derivatives(&d, &p).unwrap();
        let (r, th, thd) = (0.96, 1.4f64, 0.9);
        let rdd = 2.0 * p.k_over_m() * (1.0 - r) + r * thd * thd - p.gravity * th.sin();
        assert!((dd[2] - rdd).abs() < 1e-10);
        let ds = single_stance_derivatives(&front, &p).unwrap();
        assert!((dd[3] - ds[3]).abs() < 1e-12);
    }

    #[test]
    fn double_matches_term_by_term_formula() {
        let p = ModelParams::new(75.0, 18_000.0, 1.0, 9.81).unwrap();
        let (r, th, rd, thd, xs) = (0.94f64, 1.05f64, 0.12, 1.4, 0.61);
        let d = DoubleStanceState { front: StanceState::new(r, th, rd, thd, 2.0), x_sep: xs };
        let dd = double_stance_derivatives(&d, &p).unwrap();
        // Newton in Cartesian coordinates, projected back onto the polar chart.
        let (mx, my) = (-r * th.cos(), r * th.sin());
        let front_len = r;
        let back = ((mx + xs).powi(2) + my * my).sqrt();
        let ff = 18_000.0 * (1.0 - front_len) / front_len;
        let fb = 18_000.0 * (1.0 - back) / back;
        let ax = (ff * mx + fb * (mx + xs)) / 75.0;
        let ay = (ff * my + fb * my) / 75.0 - 9.81;
        // radial unit (-cos, sin), angular unit (sin, cos)
        let a_r = -ax * th.cos() + ay * th.sin();
        let a_t = ax * th.sin() + ay * th.cos();
        let rdd = a_r + r * thd * thd;
        let thdd = (a_t - 2.0 * rd * thd) / r;
        assert!((dd[2] - rdd).abs() < 1e-9, "{} vs {}", dd[2], rdd);
        assert!((dd[3] - thdd).abs() < 1e-9, "{} vs {}", dd[3], thdd);
    }

    #[test]
    fn event_residuals() {
        let p = p();
        let alpha = 1.2f64;
        let fl = |vy| HybridState::Flight(FlightState { x: 0.0, y: alpha.sin(), vx: 1.0, vy });
        let e = evaluate_event(EventKind::Touchdown, &fl(-1.0), alpha, &p).unwrap();
        assert_eq!(e.residual, 0.0);
        assert!(e.guard);
        let e = evaluate_event(EventKind::Touchdown, &fl(1.0), alpha, &p).unwrap();
        assert!(!e.guard);

        let st = HybridState::Stance(StanceState::new(1.0, 1.9, 0.1, 1.0, 0.0));
        assert_eq!(evaluate_event(EventKind::Takeoff, &st, alpha, &p).unwrap().residual, 0.0);
        assert!(matches!(
            evaluate_event(EventKind::Touchdown, &st, alpha, &p),
            Err(SlipError::IncompatiblePhase { .. })
        ));
        assert!(evaluate_event(EventKind::DoubleToStance, &fl(0.0), alpha, &p).is_err());
    }

    #[test]
    fn takeoff_maps_to_cartesian() {
        let p = p();
        let s = StanceState::new(1.0, 2.0, 0.4, 1.1, 0.7);
        let ev = PhaseEvent { kind: EventKind::Takeoff, time: 0.0, state: HybridState::Stance(s) };
        let HybridState::Flight(f) = switch_phase(&ev, 1.2, &p).unwrap() else { panic!() };
        assert!((f.x - (0.7 - 2f64.cos())).abs() < 1e-15);
        assert!((f.y - 2f64.sin()).abs() < 1e-15);
        assert!((f.vx - (-0.4 * 2f64.cos() + 1.1 * 2f64.sin())).abs() < 1e-15);
        assert!((f.vy - (0.4 * 2f64.sin() + 1.1 * 2f64.cos())).abs() < 1e-15);
    }

    #[test]
    fn round_trip_conserves_energy() {
        let p = p();
        let s = StanceState::new(1.0, 1.9, 0.35, 1.3, 0.0);
        let e0 = HybridState::Stance(s).energy(&p);
        let ev = PhaseEvent { kind: EventKind::Takeoff, time: 0.0, state: HybridState::Stance(s) };
        let fl = switch_phase(&ev, 0.0, &p).unwrap();
        assert!((fl.energy(&p) - e0).abs() <= 1e-12 * e0);
        // put a leg down whose angle matches the current height
        let HybridState::Flight(f) = fl else { panic!() };
        let alpha = (f.y / p.rest_length).asin();
        let ev = PhaseEvent { kind: EventKind::Touchdown, time: 0.0, state: fl };
        let st = switch_phase(&ev, alpha, &p).unwrap();
        assert!((st.energy(&p) - e0).abs() <= 1e-12 * e0);
        let (x1, _) = st.position();
        assert!((x1 - f.x).abs() < 1e-12);
    }

    #[test]
    fn double_to_stance_is_identity() {
        let p = p();
        let front = StanceState::new(0.97, 1.3, 0.1, 1.0, 4.0);
        let d = HybridState::Double(DoubleStanceState { front, x_sep: 0.5 });
        let ev = PhaseEvent { kind: EventKind::DoubleToStance, time: 1.0, state: d };
        assert_eq!(switch_phase(&ev, 1.2, &p).unwrap(), HybridState::Stance(front));
    }

    #[test]
    fn stance_to_double_separation() {
        let p = p();
        let alpha = 1.25f64;
        // old leg tilted forward with hip at landing height
        let theta = PI - 1.3;
        let r = alpha.sin() / theta.sin();
        let s = StanceState::new(r, theta, -0.1, 1.2, 0.0);
        let ev = PhaseEvent { kind: EventKind::StanceToDouble, time: 0.0, state: HybridState::Stance(s) };
        let HybridState::Double(d) = switch_phase(&ev, alpha, &p).unwrap() else { panic!() };
        assert!((d.x_sep - (alpha.cos() - r * theta.cos())).abs() < 1e-15);
        assert_eq!(d.front.r, 1.0);
        assert_eq!(d.front.theta, alpha);
        assert!((back_leg_length(&d) - r).abs() < 1e-12);
        let e0 = HybridState::Stance(s).energy(&p);
        assert!((HybridState::Double(d).energy(&p) - e0).abs() < 1e-10 * e0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, f64::NAN, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, -1.0, 1.0).is_err());
    }
}
