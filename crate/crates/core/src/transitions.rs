//! Multi-step gait transitions and the hopping gait.
//!
//! Plans are built from actual simulated states. A plan starts at a
//! symmetric robust state of one gait, moves through that gait's robust
//! region to a transition state, crosses into the robust region of the other
//! gait, and settles onto one of its symmetric robust states. Every angle of
//! attack is either the centre of an admissible window (all samples of a
//! `delta_alpha`-wide window land in the intended set) or, for the settling
//! steps, an angle inside such a window.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{EventKind, ModelParams, Phase};
use crate::error::{Result, SlipError};
use crate::observables::{froude_number, summarize_step, ObservableSummary, Trajectory};
use crate::regions::{lands_in, symmetric_locus, EnergyLevel, Landing, RegionGrid, TransitionRegions};
use crate::section::{angle_samples, AngleInterval, AngleSweep, GaitKind, SectionState, StepOptions, StepOutcome};

/// Criterion for choosing among feasible transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Strategy {
    /// Keep the Froude number as close as possible.
    ConstantFroude,
    /// Keep the hip excursion as close as possible.
    ConstantHipExcursion,
    /// Running excursion exceeds walking excursion by this relative change.
    FitHipExcursion(f64),
}

impl Strategy {
    /// Relative change in hip excursion from walking to running in the
    /// treadmill data the strategy is meant to match (5.2 cm to 8.3 cm).
    pub const EXPERIMENTAL_CHANGE: f64 = 8.3 / 5.2 - 1.0;

    pub fn validate(&self) -> Result<()> {
        match self {
            Strategy::FitHipExcursion(c) if !(c.is_finite() && *c > 0.0) => {
                Err(SlipError::Domain(format!("relative excursion change must be finite and > 0, got {c}")))
            }
            _ => Ok(()),
        }
    }

    fn score(&self, from: &Anchor, to: &Anchor) -> f64 {
        match *self {
            Strategy::ConstantFroude => (from.froude - to.froude).abs(),
            Strategy::ConstantHipExcursion => (from.hip - to.hip).abs(),
            Strategy::FitHipExcursion(c) => {
                let (walk, run) = if from.gait == GaitKind::Running { (to, from) } else { (from, to) };
                (run.hip / walk.hip - (1.0 + c)).abs()
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::ConstantFroude => f.write_str("constant-froude"),
            Strategy::ConstantHipExcursion => f.write_str("constant-hip"),
            Strategy::FitHipExcursion(c) => write!(f, "fit-hip:{c}"),
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = SlipError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let st = match s.as_str() {
            "constant-froude" | "froude" => Strategy::ConstantFroude,
            "constant-hip" | "constant-hip-excursion" | "hip" => Strategy::ConstantHipExcursion,
            "fit-hip" | "fit-hip-excursion" | "fit" => Strategy::FitHipExcursion(Strategy::EXPERIMENTAL_CHANGE),
            _ => match s.split_once(':') {
                Some(("fit-hip" | "fit", v)) => Strategy::FitHipExcursion(
                    v.parse().map_err(|_| SlipError::Parse(format!("bad relative change `{v}`")))?,
                ),
                _ => return Err(SlipError::Parse(format!("unknown strategy `{s}`"))),
            },
        };
        st.validate()?;
        Ok(st)
    }
}

/// What a planned state is claimed to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Start,
    Robust,
    Transition,
    Viable,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Robust region of one gait straight into the robust region of the other.
    Direct,
    /// Through the non-robust viable walking region.
    ViaViable,
    /// Alternating walking and running steps.
    Hopping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedStep {
    pub gait: GaitKind,
    /// Angle of attack (rad).
    pub alpha: f64,
    pub role: Role,
    /// Section state the step is taken from.
    pub state: SectionState,
    /// Admissible window containing `alpha` (rad).
    pub window: AngleInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub energy: f64,
    pub delta_alpha: f64,
    pub strategy: Option<Strategy>,
    pub mechanism: Mechanism,
    pub params: ModelParams,
    pub steps: Vec<PlannedStep>,
    /// Index of the step that changes gait.
    pub transition_index: usize,
    /// Strategy objective of the chosen start/target pair.
    pub objective: f64,
    /// Symmetric gait the plan starts from.
    pub start: Option<SymmetricGait>,
    /// Symmetric gait the plan settles onto.
    pub target: Option<SymmetricGait>,
    /// How ties between equally scored plans were broken.
    pub tie_break: String,
}

impl StepPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn min_window(&self) -> f64 {
        self.steps.iter().map(|s| s.window.width()).fold(f64::INFINITY, f64::min)
    }

    /// Pads the plan with `before` periodic steps of the start gait and
    /// `after` further periodic steps of the target gait.
    pub fn with_steady(&self, before: usize, after: usize) -> StepPlan {
        let mut out = self.clone();
        if let (Some(s), Some(first)) = (self.start, self.steps.first()) {
            let lead = PlannedStep { gait: s.gait, alpha: s.alpha, role: Role::Start, state: s.state, window: first.window };
            out.steps.splice(0..0, std::iter::repeat_n(lead, before));
            out.transition_index += before;
        }
        if let (Some(t), Some(last)) = (self.target, self.steps.last()) {
            let tail = PlannedStep { state: t.state, ..*last };
            out.steps.extend(std::iter::repeat_n(tail, after));
        }
        out
    }
}

/// A periodic gait at the section: `state` returns to itself under `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricGait {
    pub gait: GaitKind,
    pub alpha: f64,
    pub state: SectionState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub max_steps: usize,
    /// Robust steps allowed before the transition state.
    pub pre_steps: usize,
    /// Steps allowed to settle onto the symmetric target.
    pub settle_steps: usize,
    /// Settling tolerance in grid units.
    pub settle_tol: f64,
    pub allow_viable: bool,
    /// Start/target pairs tried before giving up.
    pub max_pairs: usize,
    /// Branching of the pre-transition search.
    pub branching: usize,
    /// Post-transition landings tried per transition state.
    pub landings: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            max_steps: 8,
            pre_steps: 2,
            settle_steps: 2,
            settle_tol: 1e-3,
            allow_viable: true,
            max_pairs: 60,
            branching: 4,
            landings: 4,
        }
    }
}

/// A symmetric robust state with its periodic angle and observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub state: SectionState,
    pub alpha: f64,
    pub gait: GaitKind,
    pub froude: f64,
    /// Peak-to-peak height of the mass over one symmetric step.
    pub hip: f64,
    pub window: AngleInterval,
}

impl Anchor {
    pub fn symmetric(&self) -> SymmetricGait {
        SymmetricGait { gait: self.gait, alpha: self.alpha, state: self.state }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    alpha: f64,
    next: SectionState,
    window: AngleInterval,
}

/// Reusable planning context at one energy.
pub struct Planner<'a> {
    pub level: &'a EnergyLevel,
    pub delta_alpha: f64,
    pub opts: PlanOptions,
    pub rho_w: RegionGrid,
    pub rho_r: RegionGrid,
    pub v_w: RegionGrid,
    pub regions: TransitionRegions,
    angles: Vec<f64>,
    w: usize,
}

impl<'a> Planner<'a> {
    pub fn new(level: &'a EnergyLevel, delta_alpha: f64, opts: PlanOptions) -> Result<Self> {
        let rho_w = level.robust(GaitKind::Walking, delta_alpha)?;
        let rho_r = level.robust(GaitKind::Running, delta_alpha)?;
        let v_w = level.viability(GaitKind::Walking, delta_alpha)?;
        let regions = level.transitions_from(delta_alpha, &v_w, &rho_w, &rho_r)?;
        Ok(Self {
            level,
            delta_alpha,
            opts,
            rho_w,
            rho_r,
            v_w,
            regions,
            angles: angle_samples(level.opts.angle_resolution),
            w: level.opts.window_steps(delta_alpha),
        })
    }

    fn params(&self) -> &ModelParams {
        &self.level.params
    }

    pub fn robust(&self, gait: GaitKind) -> Result<&RegionGrid> {
        match gait {
            GaitKind::Walking => Ok(&self.rho_w),
            GaitKind::Running => Ok(&self.rho_r),
            GaitKind::GroundedRunning => Err(SlipError::Domain("transitions are planned between walking and running".into())),
        }
    }

    /// Whether `s` lies in the member set `set` under the level's snapping rule.
    pub fn contains(&self, set: &[bool], s: &SectionState) -> bool {
        let ax = &self.level.axes;
        let l = Landing {
            gait: GaitKind::Running,
            nearest: ax.nearest(s.r, s.vy).map(|n| n as u32),
            corner: ax.corner(s.r, s.vy).map(|n| n as u32),
        };
        lands_in(&l, set, ax, self.level.opts.snap)
    }

    fn sweep(&self, s: &SectionState, gait: GaitKind) -> Option<AngleSweep> {
        AngleSweep::new(s, gait, self.params(), &self.level.opts.step).ok()
    }

    /// Admissible runs of sample indices `(first, last)` into `target`,
    /// together with the sampled landings.
    fn runs(&self, sweep: &AngleSweep, gait: GaitKind, target: &[bool]) -> (Vec<(usize, usize)>, Vec<Option<SectionState>>) {
        let land: Vec<Option<SectionState>> = self
            .angles
            .iter()
            .map(|&a| sweep.outcome(a, false).landing(gait).filter(|n| self.contains(target, n)))
            .collect();
        let mut runs = Vec::new();
        let mut k = 0;
        while k < land.len() {
            if land[k].is_none() {
                k += 1;
                continue;
            }
            let a = k;
            while k + 1 < land.len() && land[k + 1].is_some() {
                k += 1;
            }
            if k - a >= self.w {
                runs.push((a, k));
            }
            k += 1;
        }
        (runs, land)
    }

    fn interval(&self, run: (usize, usize)) -> AngleInterval {
        AngleInterval { lo: self.angles[run.0], hi: self.angles[run.1] }
    }

    /// Window centres into `target`, widest runs first. With `all` set,
    /// several centres per run are returned.
    fn candidates(&self, s: &SectionState, gait: GaitKind, target: &[bool], all: bool) -> Vec<Candidate> {
        let Some(sweep) = self.sweep(s, gait) else { return Vec::new() };
        let (mut runs, land) = self.runs(&sweep, gait, target);
        runs.sort_by_key(|(a, b)| std::cmp::Reverse(b - a));
        let res = self.level.opts.angle_resolution;
        let mut out = Vec::new();
        for run in runs {
            let window = self.interval(run);
            let half = self.w as f64 / 2.0;
            let mid = (run.0 + run.1) as f64 / 2.0;
            let mut centres = vec![mid];
            if all {
                let stride = (self.w / 2).max(1) as f64;
                let mut c = run.0 as f64 + half;
                while c <= run.1 as f64 - half + 1e-9 {
                    if (c - mid).abs() > 1e-9 {
                        centres.push(c);
                    }
                    c += stride;
                }
            }
            for c in centres {
                let next = if c.fract() == 0.0 {
                    land[c as usize]
                } else {
                    let a = (c + 1.0) * res;
                    sweep.outcome(a, false).landing(gait).filter(|n| self.contains(target, n))
                };
                if let Some(next) = next {
                    out.push(Candidate { alpha: (c + 1.0) * res, next, window });
                }
            }
        }
        out
    }

    /// Admissible window of `alpha` at `s`, if any.
    fn window_of(&self, s: &SectionState, gait: GaitKind, target: &[bool], alpha: f64) -> Option<AngleInterval> {
        let sweep = self.sweep(s, gait)?;
        let (runs, _) = self.runs(&sweep, gait, target);
        runs.into_iter().map(|r| self.interval(r)).find(|iv| iv.contains(alpha))
    }

    fn grid_distance(&self, a: &SectionState, b: &SectionState) -> f64 {
        let ax = &self.level.axes;
        ((a.r - b.r) / ax.dr()).hypot((a.vy - b.vy) / ax.dvy())
    }

    /// Symmetric robust states of `gait` whose periodic angle is admissible.
    pub fn anchors(&self, gait: GaitKind) -> Result<Vec<Anchor>> {
        let rho = self.robust(gait)?;
        let p = self.params();
        let locus = symmetric_locus(self.level.energy, gait, &self.level.axes, p, &self.level.opts);
        let mut out = Vec::new();
        for sym in locus {
            if !self.contains(&rho.member, &sym.state) {
                continue;
            }
            let Some(window) = self.window_of(&sym.state, gait, &rho.member, sym.alpha) else { continue };
            let hip = symmetric_hip(&sym.state, gait, sym.alpha, p)?;
            out.push(Anchor { state: sym.state, alpha: sym.alpha, gait, froude: froude_number(&sym.state, p)?, hip, window });
        }
        Ok(out)
    }

    /// Node distance (in steps within `rho`) to `goal`, up to `depth`.
    fn distances(&self, gait: GaitKind, rho: &[bool], goal: &[bool], depth: usize) -> Vec<Option<usize>> {
        let ax = &self.level.axes;
        let mut dist: Vec<Option<usize>> = goal.iter().map(|g| g.then_some(0)).collect();
        let Ok(table) = self.level.table(gait) else { return dist };
        for round in 1..=depth {
            let prev = dist.clone();
            for n in 0..ax.len() {
                if !rho[n] || dist[n].is_some() {
                    continue;
                }
                let runs = table.runs(n, |l| l.gait == gait && lands_in(l, rho, ax, self.level.opts.snap));
                let hit = runs.iter().filter(|r| r.1 > self.w).any(|&(k0, len)| {
                    table
                        .row(n)
                        .filter(|(k, _)| *k >= k0 && *k < k0 + len)
                        .any(|(_, l)| l.and_then(|l| l.nearest).is_some_and(|m| prev[m as usize] == Some(round - 1)))
                });
                if hit {
                    dist[n] = Some(round);
                }
            }
        }
        dist
    }

    /// Plans a transition from `from` to `to` under `strategy`.
    pub fn plan(&self, from: GaitKind, to: GaitKind, strategy: Strategy) -> Result<StepPlan> {
        strategy.validate()?;
        if from == to {
            return Err(SlipError::Domain("transition needs two different gaits".into()));
        }
        let rho_from = self.robust(from)?;
        self.robust(to)?;
        let infeasible = |stage: &str, reason: String| SlipError::Infeasible { stage: stage.into(), reason };

        let direct = self.regions.robust_to_robust(from);
        let viable = from == GaitKind::Walking && self.opts.allow_viable;
        if direct.count() == 0 && !(viable && self.regions.robust_to_viable.count() > 0) {
            return Err(infeasible("transition-region", format!("no {from} to {to} transition states at {} J", self.level.energy)));
        }
        let starts = self.anchors(from)?;
        if starts.is_empty() {
            return Err(infeasible("start", format!("no symmetric robust {from} state")));
        }
        let targets = self.anchors(to)?;
        if targets.is_empty() {
            return Err(infeasible("target", format!("no symmetric robust {to} state")));
        }

        let mut goal: Vec<bool> = direct.member.clone();
        if viable {
            for (g, v) in goal.iter_mut().zip(&self.regions.robust_to_viable.member) {
                *g |= *v;
            }
        }
        let dist = self.distances(from, &rho_from.member, &goal, self.opts.pre_steps);

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, s) in starts.iter().enumerate() {
            if dist_at(&dist, self, &s.state).is_none() {
                continue;
            }
            for (j, t) in targets.iter().enumerate() {
                pairs.push((strategy.score(s, t), i, j));
            }
        }
        if pairs.is_empty() {
            return Err(infeasible("approach", format!("no symmetric robust {from} state reaches a transition state")));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut crossings: HashMap<usize, Vec<Crossing>> = HashMap::new();
        let mut best: Option<StepPlan> = None;
        let tol = 1e-9;
        for &(score, i, j) in pairs.iter().take(self.opts.max_pairs) {
            if best.as_ref().is_some_and(|b| score > b.objective + tol) {
                break;
            }
            let cross = crossings.entry(i).or_insert_with(|| self.crossings(&starts[i], to, &dist, viable));
            if let Some(mut plan) = self.complete(&starts[i], &targets[j], cross, strategy) {
                plan.objective = score;
                let better = match &best {
                    None => true,
                    Some(b) => (plan.len(), -plan.min_window()) < (b.len(), -b.min_window()),
                };
                if better {
                    best = Some(plan);
                }
            }
        }
        best.ok_or_else(|| {
            infeasible(
                "settle",
                format!("none of {} start/target pairs could be connected within {} steps", pairs.len().min(self.opts.max_pairs), self.opts.max_steps),
            )
        })
    }

    /// Paths from `start` to states that cross into the robust region of `to`.
    fn crossings(&self, start: &Anchor, to: GaitKind, dist: &[Option<usize>], viable: bool) -> Vec<Crossing> {
        let from = start.gait;
        let rho_from = &self.robust(from).expect("walking or running").member;
        let rho_to = &self.robust(to).expect("walking or running").member;
        let mut out = Vec::new();
        let mut frontier: Vec<Vec<(SectionState, Candidate)>> = vec![Vec::new()];
        let state_of = |path: &Vec<(SectionState, Candidate)>| path.last().map_or(start.state, |(_, c)| c.next);
        for depth in 0..=self.opts.pre_steps {
            let mut next_frontier = Vec::new();
            for path in &frontier {
                let x = state_of(path);
                if self.contains(&self.regions.robust_to_robust(from).member, &x) {
                    for c in self.candidates(&x, from, rho_to, true) {
                        out.push(Crossing { path: path.clone(), at: x, via: None, step: c });
                    }
                }
                if viable && self.contains(&self.regions.robust_to_viable.member, &x) {
                    for v in self.candidates(&x, from, &self.regions.gateway.member, false) {
                        for c in self.candidates(&v.next, GaitKind::Walking, rho_to, true) {
                            out.push(Crossing { path: path.clone(), at: x, via: Some(v), step: c });
                        }
                    }
                }
                if depth == self.opts.pre_steps {
                    continue;
                }
                let remaining = self.opts.pre_steps - depth - 1;
                let mut cands: Vec<(usize, Candidate)> = self
                    .candidates(&x, from, rho_from, true)
                    .into_iter()
                    .filter_map(|c| dist_at(dist, self, &c.next).filter(|d| *d <= remaining).map(|d| (d, c)))
                    .collect();
                cands.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.window.width().total_cmp(&a.1.window.width())));
                for (_, c) in cands.into_iter().take(self.opts.branching) {
                    let mut p = path.clone();
                    p.push((x, c));
                    next_frontier.push(p);
                }
            }
            frontier = next_frontier;
        }
        out
    }

    fn complete(&self, start: &Anchor, target: &Anchor, crossings: &[Crossing], strategy: Strategy) -> Option<StepPlan> {
        let from = start.gait;
        let to = target.gait;
        let rho_to = &self.robust(to).ok()?.member;
        let mut ranked: Vec<&Crossing> = crossings.iter().collect();
        ranked.sort_by(|a, b| {
            let len = |c: &Crossing| c.path.len() + usize::from(c.via.is_some());
            len(a)
                .cmp(&len(b))
                .then(self.grid_distance(&a.step.next, &target.state).total_cmp(&self.grid_distance(&b.step.next, &target.state)))
        });
        let mut tried: HashMap<usize, usize> = HashMap::new();
        for c in ranked {
            let key = c.path.len() + usize::from(c.via.is_some());
            let n = tried.entry(key).or_default();
            if *n >= self.opts.landings {
                continue;
            }
            *n += 1;
            let fixed = 1 + c.path.len() + usize::from(c.via.is_some()) + 1;
            if fixed + 1 > self.opts.max_steps {
                continue;
            }
            let Some(settle) = self.settle(&c.step.next, target, rho_to) else { continue };
            let mut steps = Vec::new();
            let role_of = |k: usize| if k == 0 { Role::Start } else { Role::Robust };
            for (k, (x, cand)) in c.path.iter().enumerate() {
                steps.push(PlannedStep { gait: from, alpha: cand.alpha, role: role_of(k), state: *x, window: cand.window });
            }
            let transition_index;
            let first = steps.is_empty();
            match c.via {
                Some(v) => {
                    steps.push(PlannedStep {
                        gait: from,
                        alpha: v.alpha,
                        role: if first { Role::Start } else { Role::Transition },
                        state: c.at,
                        window: v.window,
                    });
                    transition_index = steps.len();
                    steps.push(PlannedStep { gait: from, alpha: c.step.alpha, role: Role::Viable, state: v.next, window: c.step.window });
                }
                None => {
                    transition_index = steps.len();
                    steps.push(PlannedStep {
                        gait: from,
                        alpha: c.step.alpha,
                        role: if first { Role::Start } else { Role::Transition },
                        state: c.at,
                        window: c.step.window,
                    });
                }
            }
            let mut y = c.step.next;
            for ((a, w), z) in settle.steps.iter().zip(&settle.states) {
                steps.push(PlannedStep { gait: to, alpha: *a, role: Role::Robust, state: y, window: *w });
                y = *z;
            }
            steps.push(PlannedStep { gait: to, alpha: target.alpha, role: Role::Target, state: y, window: target.window });
            if steps.len() < 3 || steps.len() > self.opts.max_steps {
                continue;
            }
            return Some(StepPlan {
                energy: self.level.energy,
                delta_alpha: self.delta_alpha,
                strategy: Some(strategy),
                mechanism: if c.via.is_some() { Mechanism::ViaViable } else { Mechanism::Direct },
                params: *self.params(),
                steps,
                transition_index,
                objective: 0.0,
                start: Some(start.symmetric()),
                target: Some(target.symmetric()),
                tie_break: "objective, then fewer steps, then wider minimum window".into(),
            });
        }
        None
    }

    /// Steers `y` onto `target` within the settling budget.
    fn settle(&self, y: &SectionState, target: &Anchor, rho: &[bool]) -> Option<Settle> {
        let tol = self.opts.settle_tol;
        let gait = target.gait;
        if self.grid_distance(y, &target.state) <= tol {
            return Some(Settle { steps: Vec::new(), states: Vec::new() });
        }
        if self.opts.settle_steps == 0 {
            return None;
        }
        let sweep = self.sweep(y, gait)?;
        let (runs, land) = self.runs(&sweep, gait, rho);
        if runs.is_empty() {
            return None;
        }
        let p = self.params();
        let f1 = |a: f64| sweep.outcome(a, false).landing(gait);
        // one step: closest approach along each run
        for &run in &runs {
            let iv = self.interval(run);
            if let Some((a, z)) = minimize_1d(&|a| f1(a).map(|z| self.grid_distance(&z, &target.state)), iv) {
                if z <= tol {
                    let z_state = f1(a)?;
                    return Some(Settle { steps: vec![(a, iv)], states: vec![z_state] });
                }
            }
        }
        if self.opts.settle_steps < 2 {
            return None;
        }
        // two steps: coarse search, then Newton on both angles
        let mut seeds: Vec<(f64, f64, f64)> = Vec::new();
        for &run in &runs {
            let stride = ((run.1 - run.0) / 24).max(1);
            for k in (run.0..=run.1).step_by(stride) {
                let Some(z) = land[k] else { continue };
                let Some(sw2) = self.sweep(&z, gait) else { continue };
                let (runs2, land2) = self.runs(&sw2, gait, rho);
                for &r2 in &runs2 {
                    for k2 in r2.0..=r2.1 {
                        if let Some(n) = land2[k2] {
                            seeds.push((self.grid_distance(&n, &target.state), self.angles[k], self.angles[k2]));
                        }
                    }
                }
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ax = self.level.axes;
        let resid = |a1: f64, a2: f64| -> Option<[f64; 2]> {
            let z = f1(a1)?;
            let sw2 = AngleSweep::new(&z, gait, p, &self.level.opts.step).ok()?;
            let n = sw2.outcome(a2, false).landing(gait)?;
            Some([(n.r - target.state.r) / ax.dr(), (n.vy - target.state.vy) / ax.dvy()])
        };
        for &(_, a1, a2) in seeds.iter().take(5) {
            let Some((b1, b2)) = newton2(&resid, a1, a2) else { continue };
            let Some(r) = resid(b1, b2) else { continue };
            if r[0].hypot(r[1]) > tol {
                continue;
            }
            // both angles must sit inside admissible windows
            let Some(w1) = runs.iter().map(|r| self.interval(*r)).find(|iv| iv.contains(b1)) else { continue };
            let Some(z) = f1(b1) else { continue };
            if !self.contains(rho, &z) {
                continue;
            }
            let Some(w2) = self.window_of(&z, gait, rho, b2) else { continue };
            let end = AngleSweep::new(&z, gait, p, &self.level.opts.step).ok()?.outcome(b2, false).landing(gait)?;
            return Some(Settle { steps: vec![(b1, w1), (b2, w2)], states: vec![z, end] });
        }
        None
    }

    /// Hopping: alternate walking steps into running transition states and
    /// running steps back into walking transition states.
    pub fn hopping(&self, n_cycles: usize) -> Result<StepPlan> {
        if n_cycles == 0 {
            return Err(SlipError::Domain("hopping needs at least one cycle".into()));
        }
        let infeasible = |stage: &str, reason: String| SlipError::Infeasible { stage: stage.into(), reason };
        let mut a = self.regions.walk_to_run.member.clone();
        let mut b = self.regions.run_to_walk.member.clone();
        if !a.iter().any(|m| *m) || !b.iter().any(|m| *m) {
            return Err(infeasible("transition-region", format!("robust transitions missing at {} J", self.level.energy)));
        }
        // greatest pair of sets closed under alternating windows
        for _ in 0..self.level.opts.max_sweeps {
            let a2 = self.level.window_into(GaitKind::Walking, self.delta_alpha, &a, &b)?.member;
            let b2 = self.level.window_into(GaitKind::Running, self.delta_alpha, &b, &a2)?.member;
            if a2 == a && b2 == b {
                break;
            }
            a = a2;
            b = b2;
        }
        let hop_w = self.level.window_into(GaitKind::Walking, self.delta_alpha, &a, &b)?;
        let mut starts: Vec<usize> = (0..a.len()).filter(|n| a[*n]).collect();
        if starts.is_empty() {
            return Err(infeasible("hopping-cycle", "no walking state alternates robustly with running".into()));
        }
        starts.sort_by(|x, y| hop_w.interval[*y].total_cmp(&hop_w.interval[*x]).then(x.cmp(y)));
        'start: for &node in &starts {
            let mut x = self.level.axes.state(node, self.level.energy);
            let mut steps = Vec::new();
            for _ in 0..n_cycles {
                for (gait, target) in [(GaitKind::Walking, &b), (GaitKind::Running, &a)] {
                    let Some(c) = self.candidates(&x, gait, target, false).into_iter().next() else { continue 'start };
                    steps.push(PlannedStep { gait, alpha: c.alpha, role: Role::Transition, state: x, window: c.window });
                    x = c.next;
                }
            }
            return Ok(StepPlan {
                energy: self.level.energy,
                delta_alpha: self.delta_alpha,
                strategy: None,
                mechanism: Mechanism::Hopping,
                params: *self.params(),
                steps,
                transition_index: 0,
                objective: 0.0,
                start: None,
                target: None,
                tie_break: "widest walking window first, angles at run centres".into(),
            });
        }
        Err(infeasible("hopping-cycle", format!("no start among {} states sustains {n_cycles} cycles", starts.len())))
    }

    /// Checks each planned state against the region its role claims.
    pub fn verify_roles(&self, plan: &StepPlan, states: &[SectionState]) -> Result<()> {
        for (i, (step, s)) in plan.steps.iter().zip(states).enumerate() {
            let set: &[bool] = match (plan.mechanism, step.role) {
                (Mechanism::Hopping, _) => &self.regions.robust_to_robust(step.gait).member,
                (_, Role::Start | Role::Robust | Role::Target) => &self.robust(step.gait)?.member,
                (Mechanism::ViaViable, Role::Transition) => &self.regions.robust_to_viable.member,
                (_, Role::Transition) => &self.regions.robust_to_robust(step.gait).member,
                (_, Role::Viable) => &self.regions.gateway.member,
            };
            if !self.contains(set, s) {
                return Err(SlipError::Infeasible {
                    stage: "verify".into(),
                    reason: format!("step {i} ({:?}) at r={:.6} vy={:.6} is outside its region", step.role, s.r, s.vy),
                });
            }
        }
        Ok(())
    }
}

fn dist_at(dist: &[Option<usize>], pl: &Planner, s: &SectionState) -> Option<usize> {
    pl.level.axes.nearest(s.r, s.vy).and_then(|n| dist[n])
}

#[derive(Debug, Clone)]
struct Crossing {
    /// Robust steps before the transition state.
    path: Vec<(SectionState, Candidate)>,
    /// Transition state.
    at: SectionState,
    /// Step into the viable gateway, for the indirect mechanism.
    via: Option<Candidate>,
    /// Step into the robust region of the new gait.
    step: Candidate,
}

struct Settle {
    steps: Vec<(f64, AngleInterval)>,
    states: Vec<SectionState>,
}

/// Peak-to-peak height over one step of a symmetric gait.
pub fn symmetric_hip(s: &SectionState, gait: GaitKind, alpha: f64, p: &ModelParams) -> Result<f64> {
    let mut opts = StepOptions::default();
    opts.integrator = opts.integrator.with_samples(1e-3);
    let out = AngleSweep::new(s, gait, p, &opts)?.outcome(alpha, true);
    let ok = out.success().ok_or_else(|| SlipError::Domain("symmetric step failed".into()))?;
    let ys = ok.segments.iter().flat_map(|seg| seg.samples.iter().map(|(_, h)| h.position().1));
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    Ok(hi - lo)
}

/// Golden-section minimum of `f` over `iv`, starting from a coarse scan.
fn minimize_1d(f: &dyn Fn(f64) -> Option<f64>, iv: AngleInterval) -> Option<(f64, f64)> {
    let n = 16;
    let h = iv.width() / n as f64;
    let (mut best_a, mut best) = (iv.lo, f(iv.lo)?);
    for k in 1..=n {
        let a = iv.lo + k as f64 * h;
        if let Some(v) = f(a) {
            if v < best {
                best = v;
                best_a = a;
            }
        }
    }
    let (mut lo, mut hi) = ((best_a - h).max(iv.lo), (best_a + h).min(iv.hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (fc, fd) = (f(c)?, f(d)?);
        if fc < fd {
            hi = d;
        } else {
            lo = c;
        }
    }
    let a = 0.5 * (lo + hi);
    let v = f(a)?;
    Some(if v < best { (a, v) } else { (best_a, best) })
}

/// Damped Newton iteration on two angles with a finite-difference Jacobian.
fn newton2(f: &dyn Fn(f64, f64) -> Option<[f64; 2]>, mut a: f64, mut b: f64) -> Option<(f64, f64)> {
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut r = f(a, b)?;
    for _ in 0..40 {
        if norm(r) < 1e-9 {
            break;
        }
        let h = 1e-7;
        let ra = f(a + h, b)?;
        let rb = f(a, b + h)?;
        let j = [[(ra[0] - r[0]) / h, (rb[0] - r[0]) / h], [(ra[1] - r[1]) / h, (rb[1] - r[1]) / h]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        let da = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let db = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut t = 1.0;
        loop {
            if let Some(rn) = f(a + t * da, b + t * db) {
                if norm(rn) < norm(r) {
                    a += t * da;
                    b += t * db;
                    r = rn;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-6 {
                return Some((a, b));
            }
        }
    }
    Some((a, b))
}

/// Plans a transition at `energy`, computing all regions on the way.
#[allow(clippy::too_many_arguments)]
pub fn plan_transition(
    from: GaitKind,
    to: GaitKind,
    energy: f64,
    delta_alpha: f64,
    strategy: Strategy,
    p: &ModelParams,
    grid: crate::regions::GridSpec,
    region_opts: &crate::regions::RegionOptions,
    opts: PlanOptions,
) -> Result<StepPlan> {
    let level = EnergyLevel::both(energy, grid, p, region_opts)?;
    Planner::new(&level, delta_alpha, opts)?.plan(from, to, strategy)
}

/// Searches a hopping gait at `energy` and emits `n_cycles` of it.
pub fn synthesize_hopping(
    energy: f64,
    delta_alpha: f64,
    n_cycles: usize,
    p: &ModelParams,
    grid: crate::regions::GridSpec,
    region_opts: &crate::regions::RegionOptions,
) -> Result<StepPlan> {
    let level = EnergyLevel::both(energy, grid, p, region_opts)?;
    Planner::new(&level, delta_alpha, PlanOptions::default())?.hopping(n_cycles)
}

/// Result of running a plan.
#[derive(Debug, Clone)]
pub struct ExecutedPlan {
    pub trajectory: Trajectory,
    /// Section state at the start of each step, plus the final one.
    pub states: Vec<SectionState>,
    pub realized: Vec<GaitKind>,
    /// Phases visited by each step, in order.
    pub phases: Vec<Vec<Phase>>,
    pub summaries: Vec<ObservableSummary>,
    /// Largest relative energy deviation over all samples.
    pub energy_drift: f64,
}

/// Runs `plan` step by step, recording a 1 ms trajectory.
pub fn execute_plan(plan: &StepPlan, p: &ModelParams) -> Result<ExecutedPlan> {
    p.validate()?;
    let first = plan.steps.first().ok_or_else(|| SlipError::Domain("empty plan".into()))?;
    let mut opts = StepOptions::default();
    opts.integrator = opts.integrator.with_samples(1e-3);
    let mut traj = Trajectory::new();
    let mut states = vec![first.state];
    let mut realized = Vec::new();
    let mut phases = Vec::new();
    let e0 = first.state.energy;
    let mut drift: f64 = 0.0;
    for (i, st) in plan.steps.iter().enumerate() {
        let s = *states.last().expect("nonempty");
        let out = AngleSweep::new(&s, st.gait, p, &opts)
            .map_err(|e| SlipError::StepFailed { index: i, kind: e.to_string() })?
            .outcome(st.alpha, true);
        let ok = match out {
            StepOutcome::Success(ok) => ok,
            StepOutcome::Failure { kind, .. } => return Err(SlipError::StepFailed { index: i, kind: kind.to_string() }),
        };
        if ok.realized != st.gait {
            return Err(SlipError::StepFailed { index: i, kind: format!("realized {} instead of {}", ok.realized, st.gait) });
        }
        for seg in &ok.segments {
            for (_, h) in &seg.samples {
                drift = drift.max(((h.energy(p) - e0) / e0).abs());
            }
        }
        let mut ph: Vec<Phase> = vec![Phase::SingleStance];
        for ev in &ok.events {
            let next = match ev.kind {
                EventKind::Takeoff => Phase::Flight,
                EventKind::StanceToDouble => Phase::DoubleStance,
                EventKind::Touchdown | EventKind::DoubleToStance => Phase::SingleStance,
                _ => continue,
            };
            ph.push(next);
        }
        phases.push(ph);
        traj.push_step(&ok, opts.t0, i % 2, p);
        opts.t0 += ok.duration;
        opts.foot_x = ok.end_state.foot_x;
        realized.push(ok.realized);
        states.push(ok.next);
    }
    let mut summaries = Vec::new();
    for i in 0..plan.steps.len() {
        summaries.push(summarize_step(&traj, i, &states[i], p)?);
    }
    Ok(ExecutedPlan { trajectory: traj, states, realized, phases, summaries, energy_drift: drift })
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    energy: f64,
    delta_alpha_deg: f64,
    delta_alpha_rad: f64,
    strategy: Option<Strategy>,
    mechanism: Mechanism,
    params: ModelParams,
    transition_index: usize,
    objective: f64,
    start: Option<SymmetricGait>,
    target: Option<SymmetricGait>,
    tie_break: String,
    steps: Vec<StepFile>,
}

#[derive(Serialize, Deserialize)]
struct StepFile {
    gait: GaitKind,
    angle_deg: f64,
    /// Authoritative angle; degrees are for reading.
    angle_rad: f64,
    role: Role,
    r: f64,
    vy: f64,
    energy: f64,
    window_deg: [f64; 2],
    window_rad: [f64; 2],
}

/// Writes a plan as JSON (angles in degrees, with exact radians alongside).
pub fn write_plan_json<W: Write>(plan: &StepPlan, w: W) -> Result<()> {
    let file = PlanFile {
        energy: plan.energy,
        delta_alpha_deg: plan.delta_alpha.to_degrees(),
        delta_alpha_rad: plan.delta_alpha,
        strategy: plan.strategy,
        mechanism: plan.mechanism,
        params: plan.params,
        transition_index: plan.transition_index,
        objective: plan.objective,
        start: plan.start,
        target: plan.target,
        tie_break: plan.tie_break.clone(),
        steps: plan
            .steps
            .iter()
            .map(|s| StepFile {
                gait: s.gait,
                angle_deg: s.alpha.to_degrees(),
                angle_rad: s.alpha,
                role: s.role,
                r: s.state.r,
                vy: s.state.vy,
                energy: s.state.energy,
                window_deg: [s.window.lo.to_degrees(), s.window.hi.to_degrees()],
                window_rad: [s.window.lo, s.window.hi],
            })
            .collect(),
    };
    serde_json::to_writer_pretty(w, &file).map_err(|e| SlipError::Io(e.to_string()))
}

/// Reads a plan written by [`write_plan_json`].
pub fn read_plan_json<R: Read>(r: R) -> Result<StepPlan> {
    let f: PlanFile = serde_json::from_reader(r).map_err(|e| SlipError::Parse(e.to_string()))?;
    f.params.validate()?;
    if let Some(s) = &f.strategy {
        s.validate()?;
    }
    let finite = |v: f64, what: &str| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SlipError::Parse(format!("{what} must be finite")))
        }
    };
    finite(f.energy, "energy")?;
    if !(f.delta_alpha_rad > 0.0) {
        return Err(SlipError::Parse("delta_alpha_rad must be positive".into()));
    }
    let mut steps = Vec::with_capacity(f.steps.len());
    for (i, s) in f.steps.iter().enumerate() {
        let alpha = finite(s.angle_rad, "angle")?;
        if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
            return Err(SlipError::Parse(format!("step {i}: angle outside (0, 90) degrees")));
        }
        if !(s.window_rad[0] <= s.window_rad[1]) {
            return Err(SlipError::Parse(format!("step {i}: window bounds out of order")));
        }
        steps.push(PlannedStep {
            gait: s.gait,
            alpha,
            role: s.role,
            state: SectionState::new(finite(s.r, "r")?, finite(s.vy, "vy")?, finite(s.energy, "energy")?),
            window: AngleInterval { lo: s.window_rad[0], hi: s.window_rad[1] },
        });
    }
    if steps.is_empty() {
        return Err(SlipError::Parse("plan has no steps".into()));
    }
    if f.transition_index >= steps.len() {
        return Err(SlipError::Parse("transition index out of range".into()));
    }
    Ok(StepPlan {
        energy: f.energy,
        delta_alpha: f.delta_alpha_rad,
        strategy: f.strategy,
        mechanism: f.mechanism,
        params: f.params,
        steps,
        transition_index: f.transition_index,
        objective: f.objective,
        start: f.start,
        target: f.target,
        tie_break: f.tie_break,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!("constant-froude".parse::<Strategy>().unwrap(), Strategy::ConstantFroude);
        assert_eq!("hip".parse::<Strategy>().unwrap(), Strategy::ConstantHipExcursion);
        assert_eq!("fit-hip:0.5".parse::<Strategy>().unwrap(), Strategy::FitHipExcursion(0.5));
        assert!("fit-hip:-1".parse::<Strategy>().is_err());
        assert!("fit-hip:nan".parse::<Strategy>().is_err());
        assert!("fastest".parse::<Strategy>().is_err());
        let c = Strategy::EXPERIMENTAL_CHANGE;
        assert!((c - 0.596).abs() < 1e-3);
    }

    #[test]
    fn newton_on_linear_map() {
        let f = |a: f64, b: f64| Some([2.0 * a + b - 1.0, a - b - 0.5]);
        let (a, b) = newton2(&f, 0.0, 0.0).unwrap();
        let r = f(a, b).unwrap();
        assert!(r[0].abs() < 1e-8 && r[1].abs() < 1e-8);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let iv = AngleInterval { lo: 0.1, hi: 0.9 };
        let (a, v) = minimize_1d(&|a| Some((a - 0.37).powi(2)), iv).unwrap();
        assert!((a - 0.37).abs() < 1e-6 && v < 1e-12);
    }
}
