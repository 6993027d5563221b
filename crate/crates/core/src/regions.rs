//! Viability, robustness and transition regions on a grid over the section.
//!
//! Every grid node `(r, vy)` at energy `E` is stepped once per sampled
//! angle of attack and the landing node is recorded in a [`LandingTable`].
//! All set computations (viability, the robust greatest fixed point,
//! transition regions) then work on the table without further simulation.
//!
//! An angle window of width `delta_alpha` is admissible only when *every*
//! sampled angle inside it is admissible.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ModelParams;
use crate::error::{Result, SlipError};
use crate::observables::froude_number;
use crate::section::{angle_samples, r_bounds, vy_max, AngleSweep, GaitKind, SectionState, StepOptions};

/// Node counts of a region grid; bounds follow from the energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_vy: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_r: 201, n_vy: 201 }
    }
}

impl GridSpec {
    pub fn square(n: usize) -> Self {
        Self { n_r: n, n_vy: n }
    }
}

/// Uniform axes over `r in [r_min(E), r0]` and `vy in [-vy_max(E), vy_max(E)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub vy_min: f64,
    pub vy_max: f64,
    pub n_vy: usize,
}

impl GridAxes {
    pub fn for_energy(energy: f64, spec: GridSpec, p: &ModelParams) -> Result<Self> {
        if spec.n_r < 2 || spec.n_vy < 2 {
            return Err(SlipError::Domain("grid needs at least 2 nodes per axis".into()));
        }
        let (r_min, r_max) = r_bounds(energy, p)
            .ok_or_else(|| SlipError::Domain(format!("energy {energy} J admits no section states")))?;
        let v = vy_max(energy, p).unwrap_or(0.0);
        if !(v > 0.0) {
            return Err(SlipError::Domain(format!("energy {energy} J admits no vertical motion")));
        }
        Ok(Self { r_min, r_max, n_r: spec.n_r, vy_min: -v, vy_max: v, n_vy: spec.n_vy })
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_vy
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_r - 1) as f64
    }

    pub fn dvy(&self) -> f64 {
        (self.vy_max - self.vy_min) / (self.n_vy - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        if i + 1 == self.n_r {
            self.r_max
        } else {
            self.r_min + i as f64 * self.dr()
        }
    }

    pub fn vy(&self, j: usize) -> f64 {
        if j + 1 == self.n_vy {
            self.vy_max
        } else {
            self.vy_min + j as f64 * self.dvy()
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_vy + j
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.n_vy, node % self.n_vy)
    }

    pub fn state(&self, node: usize, energy: f64) -> SectionState {
        let (i, j) = self.coords(node);
        SectionState::new(self.r(i), self.vy(j), energy)
    }

    /// Fractional grid coordinates of `(r, vy)`.
    pub fn locate(&self, r: f64, vy: f64) -> (f64, f64) {
        ((r - self.r_min) / self.dr(), (vy - self.vy_min) / self.dvy())
    }

    /// Node whose cell contains `(r, vy)`, if inside the grid.
    pub fn nearest(&self, r: f64, vy: f64) -> Option<usize> {
        let (u, v) = self.locate(r, vy);
        let (i, j) = (u.round(), v.round());
        (i >= 0.0 && j >= 0.0 && i < self.n_r as f64 && j < self.n_vy as f64)
            .then(|| self.index(i as usize, j as usize))
    }

    /// Lower-left node of the grid square containing `(r, vy)`.
    pub fn corner(&self, r: f64, vy: f64) -> Option<usize> {
        let (u, v) = self.locate(r, vy);
        if !(u >= 0.0 && v >= 0.0 && u <= (self.n_r - 1) as f64 && v <= (self.n_vy - 1) as f64) {
            return None;
        }
        let i = (u.floor() as usize).min(self.n_r - 2);
        let j = (v.floor() as usize).min(self.n_vy - 2);
        Some(self.index(i, j))
    }

    /// Ellipsoid-interior mask.
    pub fn interior(&self, energy: f64, p: &ModelParams) -> Vec<bool> {
        (0..self.len()).map(|n| self.state(n, energy).is_valid(p)).collect()
    }
}

/// How a landing state is matched against a member set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snap {
    /// The node whose cell contains the landing state.
    #[default]
    Nearest,
    /// All four corners of the grid square containing the landing state.
    Conservative,
}

/// Target of the viability condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViabilityTarget {
    /// The landing state must itself admit a step of the same gait.
    #[default]
    SameGait,
    /// Any successful step of the gait counts.
    AnyValid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    /// Angle sweep resolution (rad).
    pub angle_resolution: f64,
    pub snap: Snap,
    pub viability_target: ViabilityTarget,
    pub max_sweeps: usize,
    pub step: StepOptions,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            angle_resolution: 0.05f64.to_radians(),
            snap: Snap::Nearest,
            viability_target: ViabilityTarget::SameGait,
            max_sweeps: 200,
            step: StepOptions::default(),
        }
    }
}

impl RegionOptions {
    pub fn with_resolution_deg(mut self, deg: f64) -> Self {
        self.angle_resolution = deg.to_radians();
        self
    }

    /// Number of sample spacings a window of `delta_alpha` spans.
    pub fn window_steps(&self, delta_alpha: f64) -> usize {
        (delta_alpha / self.angle_resolution - 1e-9).ceil().max(1.0) as usize
    }
}

/// Landing of one sampled step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Landing {
    pub gait: GaitKind,
    pub nearest: Option<u32>,
    pub corner: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Packed {
    // 0 = failure, 1 = running, 2 = walking, 3 = grounded running
    code: u8,
    nearest: u32,
    corner: u32,
}

const NONE: u32 = u32::MAX;

impl Packed {
    fn unpack(self) -> Option<Landing> {
        let gait = match self.code {
            1 => GaitKind::Running,
            2 => GaitKind::Walking,
            3 => GaitKind::GroundedRunning,
            _ => return None,
        };
        let opt = |v: u32| (v != NONE).then_some(v);
        Some(Landing { gait, nearest: opt(self.nearest), corner: opt(self.corner) })
    }
}

/// Step outcomes of every grid node for every sampled angle, for one phase
/// sequence (running, or walking/grounded running).
#[derive(Debug, Clone)]
pub struct LandingTable {
    pub energy: f64,
    pub axes: GridAxes,
    pub sequence: GaitKind,
    pub angle_resolution: f64,
    pub n_angles: usize,
    // per node: first stored angle index and range into `data`
    first: Vec<u32>,
    offset: Vec<u32>,
    data: Vec<Packed>,
}

impl LandingTable {
    pub fn build(energy: f64, sequence: GaitKind, axes: GridAxes, p: &ModelParams, opts: &RegionOptions) -> Self {
        let angles = angle_samples(opts.angle_resolution);
        let rows: Vec<(u32, Vec<Packed>)> = (0..axes.len())
            .into_par_iter()
            .map(|node| {
                let s = axes.state(node, energy);
                if !s.is_valid(p) {
                    return (0, Vec::new());
                }
                let sweep = match AngleSweep::new(&s, sequence, p, &opts.step) {
                    Ok(sw) => sw,
                    Err(_) => return (0, Vec::new()),
                };
                let row: Vec<Packed> = angles
                    .iter()
                    .map(|&a| match sweep.outcome(a, false).success() {
                        Some(ok) => Packed {
                            code: match ok.realized {
                                GaitKind::Running => 1,
                                GaitKind::Walking => 2,
                                GaitKind::GroundedRunning => 3,
                            },
                            nearest: axes.nearest(ok.next.r, ok.next.vy).map_or(NONE, |v| v as u32),
                            corner: axes.corner(ok.next.r, ok.next.vy).map_or(NONE, |v| v as u32),
                        },
                        None => Packed::default(),
                    })
                    .collect();
                let lo = row.iter().position(|x| x.code != 0);
                match lo {
                    None => (0, Vec::new()),
                    Some(lo) => {
                        let hi = row.iter().rposition(|x| x.code != 0).unwrap();
                        (lo as u32, row[lo..=hi].to_vec())
                    }
                }
            })
            .collect();
        let mut first = Vec::with_capacity(rows.len());
        let mut offset = Vec::with_capacity(rows.len() + 1);
        let mut data = Vec::new();
        offset.push(0);
        for (f, row) in rows {
            first.push(f);
            data.extend(row);
            offset.push(data.len() as u32);
        }
        Self { energy, axes, sequence, angle_resolution: opts.angle_resolution, n_angles: angles.len(), first, offset, data }
    }

    /// Angle of sample `k` (rad).
    pub fn angle(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.angle_resolution
    }

    /// Stored samples of `node` as `(angle index, landing)`.
    pub fn row(&self, node: usize) -> impl Iterator<Item = (usize, Option<Landing>)> + '_ {
        let f = self.first[node] as usize;
        let (a, b) = (self.offset[node] as usize, self.offset[node + 1] as usize);
        self.data[a..b].iter().enumerate().map(move |(k, d)| (f + k, d.unpack()))
    }

    /// Longest run of consecutive samples of `node` satisfying `ok`, as
    /// `(first angle index, sample count)`.
    pub fn longest_run(&self, node: usize, ok: impl Fn(&Landing) -> bool) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut cur: Option<(usize, usize)> = None;
        for (k, l) in self.row(node) {
            if l.as_ref().is_some_and(&ok) {
                cur = Some(match cur {
                    Some((s, n)) => (s, n + 1),
                    None => (k, 1),
                });
                if best.is_none_or(|b| cur.unwrap().1 > b.1) {
                    best = cur;
                }
            } else {
                cur = None;
            }
        }
        best
    }

    /// All maximal runs of samples satisfying `ok`.
    pub fn runs(&self, node: usize, ok: impl Fn(&Landing) -> bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut cur: Option<(usize, usize)> = None;
        for (k, l) in self.row(node) {
            if l.as_ref().is_some_and(&ok) {
                cur = Some(match cur {
                    Some((s, n)) => (s, n + 1),
                    None => (k, 1),
                });
            } else if let Some(c) = cur.take() {
                out.push(c);
            }
        }
        out.extend(cur);
        out
    }

    pub fn stored_samples(&self) -> usize {
        self.data.len()
    }
}

/// Whether the landing lies in `set` under the snapping rule.
pub fn lands_in(l: &Landing, set: &[bool], axes: &GridAxes, snap: Snap) -> bool {
    match snap {
        Snap::Nearest => l.nearest.is_some_and(|n| set[n as usize]),
        Snap::Conservative => l.corner.is_some_and(|c| {
            let (i, j) = axes.coords(c as usize);
            [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)].iter().all(|&(a, b)| set[axes.index(a, b)])
        }),
    }
}

/// Which construction produced a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Viability,
    Robust,
    WalkToRun,
    RunToWalk,
    RobustToViable,
    Gateway,
    /// Outside a gait's robust region, one step of the other gait into it.
    ViableToRobust,
    Other,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            RegionKind::Viability => "viability",
            RegionKind::Robust => "robust",
            RegionKind::WalkToRun => "walk-to-run",
            RegionKind::RunToWalk => "run-to-walk",
            RegionKind::RobustToViable => "robust-to-viable",
            RegionKind::Gateway => "gateway",
            RegionKind::ViableToRobust => "viable-to-robust",
            RegionKind::Other => "other",
        }
    }
}

/// Boolean region over the grid, with the widest admissible angle window
/// per node (rad, zero for non-members).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    pub kind: RegionKind,
    pub energy: f64,
    pub gait: GaitKind,
    pub delta_alpha: f64,
    pub axes: GridAxes,
    pub member: Vec<bool>,
    pub interval: Vec<f64>,
    pub interior: Vec<bool>,
}

impl RegionGrid {
    pub fn empty(energy: f64, gait: GaitKind, delta_alpha: f64, axes: GridAxes, interior: Vec<bool>) -> Self {
        let n = axes.len();
        Self { kind: RegionKind::Other, energy, gait, delta_alpha, axes, member: vec![false; n], interval: vec![0.0; n], interior }
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|m| **m).count()
    }

    pub fn is_subset_of(&self, other: &RegionGrid) -> bool {
        self.member.iter().zip(&other.member).all(|(a, b)| !*a || *b)
    }

    pub fn contains(&self, s: &SectionState) -> bool {
        self.axes.nearest(s.r, s.vy).is_some_and(|n| self.member[n])
    }

    pub fn member_states(&self) -> impl Iterator<Item = SectionState> + '_ {
        (0..self.axes.len()).filter(|n| self.member[*n]).map(|n| self.axes.state(n, self.energy))
    }
}

/// Fraction of the ellipsoid interior covered by the region.
pub fn region_area(g: &RegionGrid) -> f64 {
    let interior = g.interior.iter().filter(|m| **m).count();
    if interior == 0 {
        return 0.0;
    }
    let members = g.member.iter().zip(&g.interior).filter(|(m, i)| **m && **i).count();
    members as f64 / interior as f64
}

/// Landing tables for both phase sequences at one energy.
#[derive(Debug, Clone)]
pub struct EnergyLevel {
    pub energy: f64,
    pub axes: GridAxes,
    pub params: ModelParams,
    pub opts: RegionOptions,
    pub interior: Vec<bool>,
    pub running: Option<LandingTable>,
    pub walking: Option<LandingTable>,
}

impl EnergyLevel {
    /// Builds tables for the sequences needed by `gaits`.
    pub fn build(energy: f64, spec: GridSpec, gaits: &[GaitKind], p: &ModelParams, opts: &RegionOptions) -> Result<Self> {
        p.validate()?;
        if !(opts.angle_resolution > 0.0) {
            return Err(SlipError::Domain("angle resolution must be positive".into()));
        }
        let axes = GridAxes::for_energy(energy, spec, p)?;
        let interior = axes.interior(energy, p);
        let running = gaits
            .contains(&GaitKind::Running)
            .then(|| LandingTable::build(energy, GaitKind::Running, axes, p, opts));
        let walking = gaits
            .iter()
            .any(|g| g.uses_double_stance())
            .then(|| LandingTable::build(energy, GaitKind::Walking, axes, p, opts));
        Ok(Self { energy, axes, params: *p, opts: *opts, interior, running, walking })
    }

    pub fn both(energy: f64, spec: GridSpec, p: &ModelParams, opts: &RegionOptions) -> Result<Self> {
        Self::build(energy, spec, &[GaitKind::Running, GaitKind::Walking], p, opts)
    }

    pub fn table(&self, gait: GaitKind) -> Result<&LandingTable> {
        let t = if gait.uses_double_stance() { &self.walking } else { &self.running };
        t.as_ref().ok_or_else(|| SlipError::Domain(format!("no landing table for {gait}")))
    }

    fn check_delta(delta_alpha: f64) -> Result<()> {
        if !(delta_alpha > 0.0) {
            return Err(SlipError::Domain("delta_alpha must be positive".into()));
        }
        Ok(())
    }

    /// Nodes with at least one successful step realizing `gait`.
    pub fn one_step_valid(&self, gait: GaitKind) -> Result<Vec<bool>> {
        let t = self.table(gait)?;
        Ok((0..self.axes.len()).map(|n| t.row(n).any(|(_, l)| l.is_some_and(|l| l.gait == gait))).collect())
    }

    /// Nodes with a `delta_alpha` window of `gait` steps all landing in `target`.
    pub fn window_into(&self, gait: GaitKind, delta_alpha: f64, from: &[bool], target: &[bool]) -> Result<RegionGrid> {
        Self::check_delta(delta_alpha)?;
        let t = self.table(gait)?;
        let w = self.opts.window_steps(delta_alpha);
        let mut g = RegionGrid::empty(self.energy, gait, delta_alpha, self.axes, self.interior.clone());
        for n in 0..self.axes.len() {
            if !from[n] || !self.interior[n] {
                continue;
            }
            let run = t.longest_run(n, |l| l.gait == gait && lands_in(l, target, &self.axes, self.opts.snap));
            if let Some((_, len)) = run {
                if len > w {
                    g.member[n] = true;
                    g.interval[n] = (len - 1) as f64 * t.angle_resolution;
                }
            }
        }
        Ok(g)
    }

    pub fn viability(&self, gait: GaitKind, delta_alpha: f64) -> Result<RegionGrid> {
        let target = match self.opts.viability_target {
            ViabilityTarget::SameGait => self.one_step_valid(gait)?,
            ViabilityTarget::AnyValid => vec![true; self.axes.len()],
        };
        let all = vec![true; self.axes.len()];
        let mut g = self.window_into(gait, delta_alpha, &all, &target)?;
        g.kind = RegionKind::Viability;
        Ok(g)
    }

    /// Greatest subset of the viability region that maps into itself with
    /// a `delta_alpha` window.
    pub fn robust(&self, gait: GaitKind, delta_alpha: f64) -> Result<RegionGrid> {
        let v = self.viability(gait, delta_alpha)?;
        self.prune(v)
    }

    /// Iterates the pruning operator from `start` until nothing is removed.
    pub fn prune(&self, start: RegionGrid) -> Result<RegionGrid> {
        let mut cur = start;
        for _ in 0..self.opts.max_sweeps {
            let mut next = self.window_into(cur.gait, cur.delta_alpha, &cur.member, &cur.member)?;
            if next.member == cur.member {
                next.kind = RegionKind::Robust;
                return Ok(next);
            }
            cur = next;
        }
        let next = self.window_into(cur.gait, cur.delta_alpha, &cur.member, &cur.member)?;
        let remaining = next.member.iter().zip(&cur.member).filter(|(a, b)| a != b).count();
        Err(SlipError::NoConvergence { sweeps: self.opts.max_sweeps, remaining })
    }

    /// Nodes outside `robust` from which one window of the other gait lands in it.
    pub fn viable_to_robust(&self, robust: &RegionGrid) -> Result<RegionGrid> {
        let other = if robust.gait.uses_double_stance() { GaitKind::Running } else { GaitKind::Walking };
        let outside: Vec<bool> = robust.member.iter().map(|m| !*m).collect();
        let mut g = self.window_into(other, robust.delta_alpha, &outside, &robust.member)?;
        g.kind = RegionKind::ViableToRobust;
        Ok(g)
    }

    pub fn transitions(&self, delta_alpha: f64) -> Result<TransitionRegions> {
        let rho_w = self.robust(GaitKind::Walking, delta_alpha)?;
        let rho_r = self.robust(GaitKind::Running, delta_alpha)?;
        let v_w = self.viability(GaitKind::Walking, delta_alpha)?;
        self.transitions_from(delta_alpha, &v_w, &rho_w, &rho_r)
    }

    pub fn transitions_from(
        &self,
        delta_alpha: f64,
        v_w: &RegionGrid,
        rho_w: &RegionGrid,
        rho_r: &RegionGrid,
    ) -> Result<TransitionRegions> {
        let kinded = |mut g: RegionGrid, k| {
            g.kind = k;
            g
        };
        let walk_to_run = kinded(self.window_into(GaitKind::Walking, delta_alpha, &rho_w.member, &rho_r.member)?, RegionKind::WalkToRun);
        let run_to_walk = kinded(self.window_into(GaitKind::Running, delta_alpha, &rho_r.member, &rho_w.member)?, RegionKind::RunToWalk);
        // viable-but-not-robust walking states that reach robust running
        let outside: Vec<bool> = v_w.member.iter().zip(&rho_w.member).map(|(v, r)| *v && !*r).collect();
        let gateway = kinded(self.window_into(GaitKind::Walking, delta_alpha, &outside, &rho_r.member)?, RegionKind::Gateway);
        let robust_to_viable = kinded(
            self.window_into(GaitKind::Walking, delta_alpha, &rho_w.member, &gateway.member)?,
            RegionKind::RobustToViable,
        );
        Ok(TransitionRegions { walk_to_run, run_to_walk, robust_to_viable, gateway })
    }
}

/// One-step transition regions at one energy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRegions {
    /// Robust walking states with a walking window landing in robust running.
    pub walk_to_run: RegionGrid,
    /// Robust running states with a running window landing in robust walking.
    pub run_to_walk: RegionGrid,
    /// Robust walking states with a walking window landing in `gateway`.
    pub robust_to_viable: RegionGrid,
    /// Non-robust viable walking states with a walking window into robust running.
    pub gateway: RegionGrid,
}

impl TransitionRegions {
    pub fn robust_to_robust(&self, from: GaitKind) -> &RegionGrid {
        match from {
            GaitKind::Running => &self.run_to_walk,
            _ => &self.walk_to_run,
        }
    }
}

pub fn viability_region(
    energy: f64,
    gait: GaitKind,
    delta_alpha: f64,
    spec: GridSpec,
    p: &ModelParams,
    opts: &RegionOptions,
) -> Result<RegionGrid> {
    EnergyLevel::build(energy, spec, &[gait], p, opts)?.viability(gait, delta_alpha)
}

pub fn robust_region(
    energy: f64,
    gait: GaitKind,
    delta_alpha: f64,
    spec: GridSpec,
    p: &ModelParams,
    opts: &RegionOptions,
) -> Result<RegionGrid> {
    EnergyLevel::build(energy, spec, &[gait], p, opts)?.robust(gait, delta_alpha)
}

pub fn transition_regions(
    energy: f64,
    delta_alpha: f64,
    spec: GridSpec,
    p: &ModelParams,
    opts: &RegionOptions,
) -> Result<TransitionRegions> {
    EnergyLevel::both(energy, spec, p, opts)?.transitions(delta_alpha)
}

/// A section state with `vy = 0` that a step with `alpha` maps to itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricState {
    pub state: SectionState,
    pub alpha: f64,
    pub gait: GaitKind,
    /// Index on the r axis the state was found at.
    pub r_index: usize,
}

/// Symmetric gaits on the `vy = 0` line, one search per r-grid value.
pub fn symmetric_locus(
    energy: f64,
    gait: GaitKind,
    axes: &GridAxes,
    p: &ModelParams,
    opts: &RegionOptions,
) -> Vec<SymmetricState> {
    let angles = angle_samples(opts.angle_resolution);
    let found: Vec<Vec<SymmetricState>> = (0..axes.n_r)
        .into_par_iter()
        .map(|i| {
            let s = SectionState::new(axes.r(i), 0.0, energy);
            let mut out = Vec::new();
            let Ok(sweep) = AngleSweep::new(&s, gait, p, &opts.step) else { return out };
            let vy_at = |a: f64| sweep.outcome(a, false).landing(gait);
            let mut prev: Option<(f64, SectionState)> = None;
            for &a in &angles {
                let cur = vy_at(a);
                if let (Some((pa, pn)), Some(cn)) = (prev, cur) {
                    if pn.vy == 0.0 || pn.vy * cn.vy < 0.0 {
                        if let Some((alpha, n)) = refine_symmetric(&vy_at, pa, pn.vy, a) {
                            if (n.r - s.r).abs() <= 1e-6 && n.vy.abs() <= 1e-6 {
                                out.push(SymmetricState { state: s, alpha, gait, r_index: i });
                            }
                        }
                    }
                }
                prev = cur.map(|n| (a, n));
            }
            out
        })
        .collect();
    found.into_iter().flatten().collect()
}

fn refine_symmetric(
    f: &dyn Fn(f64) -> Option<SectionState>,
    mut lo: f64,
    mut f_lo: f64,
    mut hi: f64,
) -> Option<(f64, SectionState)> {
    let mut best = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let n = f(mid)?;
        best = Some((mid, n));
        if n.vy == 0.0 || hi - lo < 1e-14 {
            break;
        }
        if n.vy * f_lo > 0.0 {
            lo = mid;
            f_lo = n.vy;
        } else {
            hi = mid;
        }
    }
    best
}

/// Contiguous runs of r-indices that carry at least one symmetric state.
pub fn locus_segments(locus: &[SymmetricState]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = locus.iter().map(|s| s.r_index).collect();
    idx.sort_unstable();
    idx.dedup();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == i => *end = i,
            _ => out.push((i, i)),
        }
    }
    out
}

/// Minimum and maximum Froude number over a set of section states.
pub fn froude_range<I: IntoIterator<Item = SectionState>>(states: I, p: &ModelParams) -> Result<(f64, f64)> {
    let mut range: Option<(f64, f64)> = None;
    for s in states {
        let f = froude_number(&s, p)?;
        range = Some(match range {
            Some((lo, hi)) => (lo.min(f), hi.max(f)),
            None => (f, f),
        });
    }
    range.ok_or_else(|| SlipError::Domain("froude range of an empty set".into()))
}

/// One row of the region CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub r: f64,
    pub vy: f64,
    pub member: u8,
    pub interval_len_rad: f64,
}

/// Writes the region as CSV (`r, vy, member, interval_len_rad`), r-major.
pub fn write_region_csv<W: Write>(g: &RegionGrid, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for n in 0..g.axes.len() {
        let (i, j) = g.axes.coords(n);
        out.serialize(RegionRow { r: g.axes.r(i), vy: g.axes.vy(j), member: u8::from(g.member[n]), interval_len_rad: g.interval[n] })
            .map_err(|e| SlipError::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads region CSV rows, validating each value.
pub fn read_region_csv<R: Read>(r: R) -> Result<Vec<RegionRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (k, rec) in rd.deserialize::<RegionRow>().enumerate() {
        let row = rec.map_err(|e| SlipError::Parse(format!("region row {k}: {e}")))?;
        if !(row.r.is_finite() && row.vy.is_finite() && row.interval_len_rad.is_finite()) || row.member > 1 {
            return Err(SlipError::Parse(format!("region row {k}: invalid values")));
        }
        rows.push(row);
    }
    Ok(rows)
}

const REGION_FORMAT: &str = "slip-region/1";

#[derive(Serialize, Deserialize)]
struct RegionFile {
    format: String,
    kind: RegionKind,
    energy: f64,
    gait: GaitKind,
    delta_alpha_rad: f64,
    delta_alpha_deg: f64,
    grid: GridAxes,
    params: ModelParams,
    params_hash: String,
    /// One character per node, r-major: `1` member, `0` not.
    member: String,
    interval_len_rad: Vec<f64>,
}

/// Writes the region with its metadata as a JSON envelope.
pub fn write_region_json<W: Write>(g: &RegionGrid, p: &ModelParams, w: W) -> Result<()> {
    let file = RegionFile {
        format: REGION_FORMAT.into(),
        kind: g.kind,
        energy: g.energy,
        gait: g.gait,
        delta_alpha_rad: g.delta_alpha,
        delta_alpha_deg: g.delta_alpha.to_degrees(),
        grid: g.axes,
        params: *p,
        params_hash: p.fingerprint(),
        member: g.member.iter().map(|m| if *m { '1' } else { '0' }).collect(),
        interval_len_rad: g.interval.clone(),
    };
    serde_json::to_writer(w, &file).map_err(|e| SlipError::Io(e.to_string()))
}

/// Reads a JSON envelope written by [`write_region_json`]; returns the grid
/// and the parameters it was computed with.
pub fn read_region_json<R: Read>(r: R) -> Result<(RegionGrid, ModelParams)> {
    let f: RegionFile = serde_json::from_reader(r).map_err(|e| SlipError::Parse(e.to_string()))?;
    if f.format != REGION_FORMAT {
        return Err(SlipError::Parse(format!("unsupported region format `{}`", f.format)));
    }
    f.params.validate()?;
    if f.params_hash != f.params.fingerprint() {
        return Err(SlipError::Parse("params hash does not match params".into()));
    }
    let ax = f.grid;
    let ok_axis = |lo: f64, hi: f64, n: usize| lo.is_finite() && hi.is_finite() && lo < hi && (2..=100_000).contains(&n);
    if !ok_axis(ax.r_min, ax.r_max, ax.n_r) || !ok_axis(ax.vy_min, ax.vy_max, ax.n_vy) || ax.n_r.checked_mul(ax.n_vy).is_none() {
        return Err(SlipError::Parse("invalid grid axes".into()));
    }
    let n = ax.len();
    if f.member.len() != n || f.interval_len_rad.len() != n {
        return Err(SlipError::Parse(format!("expected {n} nodes")));
    }
    let member = f
        .member
        .bytes()
        .map(|b| match b {
            b'0' => Ok(false),
            b'1' => Ok(true),
            _ => Err(SlipError::Parse("member string must be 0/1".into())),
        })
        .collect::<Result<Vec<bool>>>()?;
    if !f.energy.is_finite() || !f.delta_alpha_rad.is_finite() || f.interval_len_rad.iter().any(|v| !v.is_finite()) {
        return Err(SlipError::Parse("non-finite values".into()));
    }
    let interior = ax.interior(f.energy, &f.params);
    let g = RegionGrid {
        kind: f.kind,
        energy: f.energy,
        gait: f.gait,
        delta_alpha: f.delta_alpha_rad,
        axes: ax,
        member,
        interval: f.interval_len_rad,
        interior,
    };
    Ok((g, f.params))
}
