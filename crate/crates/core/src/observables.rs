//! Biomechanical observables: Froude number, hip excursion, duty factor and
//! vertical ground reaction forces.
//!
//! Legs are numbered 0 and 1. A trajectory is a uniformly sampled series
//! assembled step by step; the support leg alternates from one step to the
//! next.

use std::io::{Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dynamics::{back_leg_length, HybridState, ModelParams, Phase};
use crate::error::{Result, SlipError};
use crate::section::{embed, SectionState, StepSuccess};

/// Froude number `thetadot^2 * r0 / g` at the section.
pub fn froude_number(s: &SectionState, p: &ModelParams) -> Result<f64> {
    let st = embed(s, p)?;
    Ok(st.thetadot * st.thetadot * p.rest_length / p.gravity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub phase: Phase,
    /// Vertical ground reaction force per leg, in body weights.
    pub grf: [f64; 2],
    pub contact: [bool; 2],
}

/// Vertical leg forces of a hybrid state, given which leg is the support
/// (or front) leg.
pub fn leg_forces(s: &HybridState, front: usize, p: &ModelParams) -> ([f64; 2], [bool; 2]) {
    let mut grf = [0.0; 2];
    let mut contact = [false; 2];
    let back = 1 - front;
    match s {
        HybridState::Flight(_) => {}
        HybridState::Stance(st) => {
            grf[front] = p.stiffness * (p.rest_length - st.r) * st.theta.sin();
            contact[front] = true;
        }
        HybridState::Double(d) => {
            let f = &d.front;
            grf[front] = p.stiffness * (p.rest_length - f.r) * f.theta.sin();
            let rb = back_leg_length(d);
            grf[back] = p.stiffness * (p.rest_length - rb) * f.r * f.theta.sin() / rb;
            contact = [true; 2];
        }
    }
    (grf, contact)
}

/// Uniformly sampled trajectory with the section crossing times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Section crossing times; step `i` spans `crossings[i]..crossings[i + 1]`.
    pub crossings: Vec<f64>,
    /// Exact ground-contact intervals per leg, from the phase switch times.
    pub contact_spans: [Vec<(f64, f64)>; 2],
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a recorded step whose initial support leg is `support`.
    pub fn push_step(&mut self, step: &StepSuccess, t_start: f64, support: usize, p: &ModelParams) {
        if self.crossings.is_empty() {
            self.crossings.push(t_start);
        }
        let mut leg = support;
        let mut switched = false;
        for seg in &step.segments {
            if matches!(seg.phase, Phase::Flight | Phase::DoubleStance) && !switched {
                leg = 1 - support;
                switched = true;
            }
            let legs: &[usize] = match seg.phase {
                Phase::Flight => &[],
                Phase::SingleStance => std::slice::from_ref(&leg),
                Phase::DoubleStance => &[0, 1],
            };
            for &l in legs {
                let spans = &mut self.contact_spans[l];
                match spans.last_mut() {
                    Some(last) if last.1 == seg.t_start => last.1 = seg.t_end,
                    _ => spans.push((seg.t_start, seg.t_end)),
                }
            }
            for (t, s) in &seg.samples {
                let (x, y) = s.position();
                let (vx, vy) = s.velocity();
                let (f, contact) = leg_forces(s, leg, p);
                let grf = [f[0] / p.weight(), f[1] / p.weight()];
                self.samples.push(TrajectorySample { t: *t, x, y, vx, vy, phase: s.phase(), grf, contact });
            }
        }
        self.crossings.push(t_start + step.duration);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.crossings.len().saturating_sub(1)
    }

    /// Samples with `t` in `[t0, t1)`.
    pub fn window(&self, t0: f64, t1: f64) -> &[TrajectorySample] {
        let a = self.samples.partition_point(|s| s.t < t0);
        let b = self.samples.partition_point(|s| s.t < t1);
        &self.samples[a..b]
    }

    /// Gait cycle (two steps) starting at step `i`.
    pub fn cycle(&self, i: usize) -> Result<(f64, f64)> {
        match (self.crossings.get(i), self.crossings.get(i + 2)) {
            (Some(a), Some(b)) => Ok((*a, *b)),
            _ => Err(SlipError::Domain(format!("no complete cycle starting at step {i}"))),
        }
    }

    /// Time span of step `i`.
    pub fn step_span(&self, i: usize) -> Result<(f64, f64)> {
        match (self.crossings.get(i), self.crossings.get(i + 1)) {
            (Some(a), Some(b)) => Ok((*a, *b)),
            _ => Err(SlipError::Domain(format!("no step {i}"))),
        }
    }

    /// Leg in single support at the start of step `i`.
    pub fn support_leg(&self, i: usize) -> Option<usize> {
        let t = *self.crossings.get(i)?;
        let s = self.window(t, f64::INFINITY).first()?;
        match s.contact {
            [true, false] => Some(0),
            [false, true] => Some(1),
            _ => None,
        }
    }

    /// Contact episodes of `leg` as sample index ranges.
    pub fn contact_episodes(&self, leg: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, s) in self.samples.iter().enumerate() {
            match (s.contact[leg], start) {
                (true, None) => start = Some(i),
                (false, Some(a)) => {
                    out.push(a..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(a) = start {
            out.push(a..self.samples.len());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub froude: f64,
    pub hip_excursion: f64,
    pub duty_factor: f64,
    pub mean_speed: f64,
}

/// Peak-to-peak vertical excursion of the mass over `[t0, t1)`. The sampled
/// extremes are refined by a parabola through the neighbouring samples when
/// its vertex falls inside the window.
pub fn hip_excursion(t: &Trajectory, cycle: (f64, f64)) -> Result<f64> {
    let w = t.window(cycle.0, cycle.1);
    if w.len() < 2 {
        return Err(SlipError::Domain("hip excursion needs at least 2 samples".into()));
    }
    let pick = |better: fn(f64, f64) -> bool| {
        let k = (1..w.len()).fold(0, |k, i| if better(w[i].y, w[k].y) { i } else { k });
        let mut v = w[k].y;
        if w.len() >= 3 {
            let c = k.clamp(1, w.len() - 2);
            if let Some((tv, yv)) = vertex(&w[c - 1], &w[c], &w[c + 1]) {
                if tv >= cycle.0 && tv < cycle.1 && better(yv, v) {
                    v = yv;
                }
            }
        }
        v
    };
    Ok(pick(|a, b| a > b) - pick(|a, b| a < b))
}

fn vertex(a: &TrajectorySample, b: &TrajectorySample, c: &TrajectorySample) -> Option<(f64, f64)> {
    let (h1, h2) = (b.t - a.t, c.t - b.t);
    let d1 = (b.y - a.y) / h1;
    let d2 = (c.y - b.y) / h2;
    let curv = (d2 - d1) / (h1 + h2);
    if curv == 0.0 || !curv.is_finite() {
        return None;
    }
    // y = b.y + s (t - b.t) + curv (t - b.t)^2 around the middle sample
    let slope = d1 + curv * h1;
    let dt = -slope / (2.0 * curv);
    (dt.abs() <= h1.max(h2)).then(|| (b.t + dt, b.y - slope * slope / (4.0 * curv)))
}

/// Fraction of `[t0, t1)` during which `leg` touches the ground, measured on
/// the exact contact intervals when known and on the samples otherwise.
pub fn duty_factor(t: &Trajectory, cycle: (f64, f64), leg: usize) -> Result<f64> {
    let w = t.window(cycle.0, cycle.1);
    if w.len() < 2 || leg > 1 || !(cycle.1 > cycle.0) {
        return Err(SlipError::Domain("duty factor needs a complete cycle".into()));
    }
    let spans = &t.contact_spans[leg];
    if spans.is_empty() && t.contact_spans[1 - leg].is_empty() {
        return Ok(w.iter().filter(|s| s.contact[leg]).count() as f64 / w.len() as f64);
    }
    let on: f64 = spans.iter().map(|(a, b)| (b.min(cycle.1) - a.max(cycle.0)).max(0.0)).sum();
    Ok(on / (cycle.1 - cycle.0))
}

/// Per-leg vertical forces normalized by body weight.
pub fn ground_reaction_forces(t: &Trajectory) -> Vec<[f64; 2]> {
    t.samples.iter().map(|s| s.grf).collect()
}

/// Mean horizontal speed over `[t0, t1)`.
pub fn mean_speed(t: &Trajectory, cycle: (f64, f64)) -> Result<f64> {
    let w = t.window(cycle.0, cycle.1);
    match (w.first(), w.last()) {
        (Some(a), Some(b)) if b.t > a.t => Ok((b.x - a.x) / (b.t - a.t)),
        _ => Err(SlipError::Domain("mean speed needs at least 2 samples".into())),
    }
}

/// Observables of step `i`: Froude number at its start, and hip excursion,
/// duty factor and speed over the gait cycle containing it.
pub fn summarize_step(t: &Trajectory, i: usize, start: &SectionState, p: &ModelParams) -> Result<ObservableSummary> {
    let cycle = if i + 2 < t.crossings.len() { t.cycle(i)? } else { t.cycle(i.saturating_sub(1))? };
    let leg = t
        .support_leg(i)
        .ok_or_else(|| SlipError::Domain(format!("step {i} does not start in single support")))?;
    Ok(ObservableSummary {
        froude: froude_number(start, p)?,
        hip_excursion: hip_excursion(t, t.step_span(i)?)?,
        duty_factor: duty_factor(t, cycle, leg)?,
        mean_speed: mean_speed(t, cycle)?,
    })
}

/// Local maxima of `xs` whose prominence exceeds `min_prominence`.
pub fn local_maxima(xs: &[f64], min_prominence: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let n = xs.len();
    let mut i = 1;
    while i + 1 < n {
        // plateaus count once
        let mut j = i;
        while j + 1 < n && xs[j + 1] == xs[i] {
            j += 1;
        }
        if j + 1 < n && xs[i] > xs[i - 1] && xs[i] > xs[j + 1] {
            let left = xs[..i].iter().rev().take_while(|v| **v <= xs[i]).fold(xs[i], |m, v| m.min(*v));
            let right = xs[j + 1..].iter().take_while(|v| **v <= xs[i]).fold(xs[i], |m, v| m.min(*v));
            if xs[i] - left.max(right) > min_prominence {
                out.push(i);
            }
        }
        i = j + 1;
    }
    out
}

const CSV_HEADER: [&str; 10] = ["time", "x", "y", "vx", "vy", "phase", "grf_leg1_norm", "grf_leg2_norm", "contact1", "contact2"];

/// Writes the trajectory as CSV with forces normalized by body weight.
pub fn write_trajectory_csv<W: Write>(t: &Trajectory, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER).map_err(csv_err)?;
    for s in &t.samples {
        out.write_record([
            s.t.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            s.vx.to_string(),
            s.vy.to_string(),
            s.phase.name().to_string(),
            s.grf[0].to_string(),
            s.grf[1].to_string(),
            u8::from(s.contact[0]).to_string(),
            u8::from(s.contact[1]).to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trajectory CSV written by [`write_trajectory_csv`]. Crossing
/// times are not part of the format.
pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Trajectory> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(SlipError::Parse("unexpected trajectory header".into()));
    }
    let mut t = Trajectory::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| SlipError::Parse(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            match &rec[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(SlipError::Parse(format!("column {}: bad flag {v:?}", CSV_HEADER[i]))),
            }
        };
        let phase = rec[5].parse::<Phase>()?;
        let s = TrajectorySample {
            t: num(0)?,
            x: num(1)?,
            y: num(2)?,
            vx: num(3)?,
            vy: num(4)?,
            phase,
            grf: [num(6)?, num(7)?],
            contact: [flag(8)?, flag(9)?],
        };
        let values = [s.t, s.x, s.y, s.vx, s.vy, s.grf[0], s.grf[1]];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SlipError::Parse("non-finite trajectory value".into()));
        }
        if (0..2).any(|k| !s.contact[k] && s.grf[k] != 0.0) {
            return Err(SlipError::Parse(format!("force without contact at t={}", s.t)));
        }
        if t.samples.last().is_some_and(|prev| !(s.t > prev.t)) {
            return Err(SlipError::Parse("timestamps must be strictly increasing".into()));
        }
        t.samples.push(s);
    }
    Ok(t)
}

pub(crate) fn csv_err(e: csv::Error) -> SlipError {
    SlipError::Parse(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DoubleStanceState, StanceState};

    fn flat(ys: &[f64]) -> Trajectory {
        let samples = ys
            .iter()
            .enumerate()
            .map(|(i, y)| TrajectorySample {
                t: i as f64 * 1e-3,
                x: i as f64 * 1e-3,
                y: *y,
                vx: 1.0,
                vy: 0.0,
                phase: Phase::SingleStance,
                grf: [0.0; 2],
                contact: [true, false],
            })
            .collect();
        Trajectory { samples, crossings: vec![0.0, ys.len() as f64 * 1e-3], ..Default::default() }
    }

    #[test]
    fn froude_examples() {
        let p = ModelParams::default();
        let rest = SectionState::new(1.0, 0.0, p.weight());
        assert_eq!(froude_number(&rest, &p).unwrap(), 0.0);
        // vx = sqrt(g r0) at r = r0
        let e = p.weight() + 0.5 * p.mass * p.gravity;
        let f = froude_number(&SectionState::new(1.0, 0.0, e), &p).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn excursion_and_duty_definitions() {
        let t = flat(&[1.0; 50]);
        assert_eq!(hip_excursion(&t, (0.0, 1.0)).unwrap(), 0.0);
        assert_eq!(duty_factor(&t, (0.0, 1.0), 0).unwrap(), 1.0);
        assert_eq!(duty_factor(&t, (0.0, 1.0), 1).unwrap(), 0.0);
        assert!(hip_excursion(&t, (0.0, 0.0005)).is_err());

        let d = 0.07;
        let ys: Vec<f64> = (0..1000).map(|i| 1.0 + 0.5 * d * (i as f64 * 0.0314159).sin()).collect();
        let h = hip_excursion(&flat(&ys), (0.0, 1.0)).unwrap();
        assert!((h - d).abs() < 1e-4);
    }

    #[test]
    fn forces_at_section_and_in_flight() {
        let p = ModelParams::default();
        let st = StanceState::new(0.95, std::f64::consts::FRAC_PI_2, 0.0, 1.0, 0.0);
        let (f, c) = leg_forces(&HybridState::Stance(st), 1, &p);
        assert_eq!(c, [false, true]);
        assert!((f[1] - p.stiffness * 0.05).abs() < 1e-9);
        assert_eq!(f[0], 0.0);
        let (f, c) = leg_forces(&HybridState::Flight(crate::dynamics::FlightState { x: 0.0, y: 1.0, vx: 1.0, vy: 0.0 }), 0, &p);
        assert_eq!((f, c), ([0.0; 2], [false; 2]));
    }

    #[test]
    fn back_leg_force_is_vertical_component() {
        let p = ModelParams::default();
        let front = StanceState::new(0.97, 1.3, -0.1, 1.2, 0.5);
        let d = DoubleStanceState { front, x_sep: 0.6 };
        let (f, _) = leg_forces(&HybridState::Double(d), 0, &p);
        // independent geometry: back foot at x_b, mass at (x, y)
        let (x, y) = front.position();
        let xb = front.foot_x - d.x_sep;
        let len = ((x - xb).powi(2) + y * y).sqrt();
        let expect = p.stiffness * (p.rest_length - len) * y / len;
        assert!((f[1] - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }

    #[test]
    fn maxima_with_prominence() {
        let xs = [0.0, 1.0, 0.5, 0.52, 0.5, 2.0, 2.0, 0.0];
        assert_eq!(local_maxima(&xs, 0.1), vec![1, 5]);
        assert_eq!(local_maxima(&xs, 0.0), vec![1, 3, 5]);
        assert!(local_maxima(&[1.0, 1.0, 1.0], 0.0).is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let mut t = flat(&[1.0, 0.99, 0.98]);
        t.samples[1].grf = [0.1 + 0.2, 7.0 / 3.0];
        t.samples[1].contact = [true, true];
        t.samples[2].contact = [true, true];
        t.samples[2].phase = Phase::DoubleStance;
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples, t.samples);
        let mut again = Vec::new();
        write_trajectory_csv(&back, &mut again).unwrap();
        assert_eq!(again, buf);

        t.samples[0].grf[1] = 0.5;
        buf.clear();
        write_trajectory_csv(&t, &mut buf).unwrap();
        assert!(read_trajectory_csv(buf.as_slice()).is_err());
    }
}
