//! Sectioned `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! [model]
//! mass = 80
//! stiffness = 20000
//!
//! [sweep]
//! energy_start = 780
//! energy_stop = 900
//! energy_step = 10
//! delta_alpha_deg = 0.5, 1, 2
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use slip_core::dynamics::ModelParams;
use slip_core::regions::{GridSpec, RegionOptions, Snap, ViabilityTarget};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{section}.{key}`")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl EnergySweep {
    pub fn single(e: f64) -> Self {
        Self { start: e, stop: e, step: 1.0 }
    }

    /// Energies from `start` to `stop` inclusive, without accumulating rounding.
    pub fn energies(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub sweep: EnergySweep,
    pub delta_alpha_deg: Vec<f64>,
    pub grid: GridSpec,
    pub angle_resolution_deg: f64,
    pub snap: Snap,
    pub viability_target: ViabilityTarget,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            sweep: EnergySweep { start: 780.0, stop: 900.0, step: 10.0 },
            delta_alpha_deg: vec![1.0],
            grid: GridSpec::default(),
            angle_resolution_deg: RegionOptions::default().angle_resolution.to_degrees(),
            snap: Snap::Nearest,
            viability_target: ViabilityTarget::SameGait,
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: 0,
        }
    }
}

/// Raw `section -> key -> value` map, keys in file order irrelevant.
pub type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

/// Splits the text into sections. Keys before the first header go in `""`.
pub fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut out = Sections::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, msg: "unterminated section header".into() })?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(ConfigError::Syntax { line: line_no, msg: format!("bad section name `{name}`") });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: line_no, msg: "expected `key = value`".into() })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: line_no, msg: "empty key".into() });
        }
        let prev = out.entry(section.clone()).or_default().insert(k.to_string(), (line_no, v.trim().to_string()));
        if prev.is_some() {
            return Err(ConfigError::Syntax { line: line_no, msg: format!("duplicate key `{k}`") });
        }
    }
    Ok(out)
}

fn num(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|e| ConfigError::Value { key: key.into(), msg: format!("{e}") })?;
    if !x.is_finite() {
        return Err(ConfigError::Value { key: key.into(), msg: "must be finite".into() });
    }
    Ok(x)
}

fn count(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|e| ConfigError::Value { key: key.into(), msg: format!("{e}") })
}

/// Parses a comma-separated list of angles in degrees.
pub fn parse_deg_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

/// Parses `N` or `NxM` into a grid spec.
pub fn parse_grid(v: &str) -> Result<GridSpec, ConfigError> {
    let (a, b) = v.split_once(['x', 'X']).unwrap_or((v, v));
    Ok(GridSpec { n_r: count("grid", a.trim())?, n_vy: count("grid", b.trim())? })
}

pub fn parse_snap(v: &str) -> Result<Snap, ConfigError> {
    match v {
        "nearest" => Ok(Snap::Nearest),
        "conservative" => Ok(Snap::Conservative),
        _ => Err(ConfigError::Value { key: "snap".into(), msg: format!("expected nearest or conservative, got `{v}`") }),
    }
}

pub fn parse_target(v: &str) -> Result<ViabilityTarget, ConfigError> {
    match v {
        "same-gait" => Ok(ViabilityTarget::SameGait),
        "any-valid" => Ok(ViabilityTarget::AnyValid),
        _ => Err(ConfigError::Value { key: "viability_target".into(), msg: format!("expected same-gait or any-valid, got `{v}`") }),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        for (section, keys) in parse_sections(text)? {
            for (key, (_, v)) in keys {
                let v = v.as_str();
                match (section.as_str(), key.as_str()) {
                    ("model", "mass") => c.params.mass = num(&key, v)?,
                    ("model", "stiffness") => c.params.stiffness = num(&key, v)?,
                    ("model", "rest_length") => c.params.rest_length = num(&key, v)?,
                    ("model", "gravity") => c.params.gravity = num(&key, v)?,
                    ("sweep", "energy_start") => c.sweep.start = num(&key, v)?,
                    ("sweep", "energy_stop") => c.sweep.stop = num(&key, v)?,
                    ("sweep", "energy_step") => c.sweep.step = num(&key, v)?,
                    ("sweep", "delta_alpha_deg") => c.delta_alpha_deg = parse_deg_list(&key, v)?,
                    ("grid", "size") => c.grid = parse_grid(v)?,
                    ("grid", "n_r") => c.grid.n_r = count(&key, v)?,
                    ("grid", "n_vy") => c.grid.n_vy = count(&key, v)?,
                    ("grid", "angle_resolution_deg") => c.angle_resolution_deg = num(&key, v)?,
                    ("grid", "snap") => c.snap = parse_snap(v)?,
                    ("grid", "viability_target") => c.viability_target = parse_target(v)?,
                    ("output", "dir") => c.out_dir = PathBuf::from(v),
                    ("run", "seed") => c.seed = v.parse().map_err(|e| ConfigError::Value { key: key.clone(), msg: format!("{e}") })?,
                    ("run", "threads") => c.threads = count(&key, v)?,
                    _ => return Err(ConfigError::UnknownKey { section, key }),
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| Err(ConfigError::Value { key: key.into(), msg: msg.into() });
        if let Err(e) = self.params.validate() {
            return bad("model", &e.to_string());
        }
        if !(self.sweep.step > 0.0) {
            return bad("energy_step", "must be > 0");
        }
        if self.sweep.stop < self.sweep.start {
            return bad("energy_stop", "must be >= energy_start");
        }
        if (self.sweep.stop - self.sweep.start) / self.sweep.step > 1e5 {
            return bad("energy_step", "sweep has too many energies");
        }
        if self.delta_alpha_deg.is_empty() || self.delta_alpha_deg.iter().any(|d| !(*d > 0.0 && *d < 180.0)) {
            return bad("delta_alpha_deg", "values must lie in (0, 180)");
        }
        if !(self.angle_resolution_deg > 0.0 && self.angle_resolution_deg < 90.0) {
            return bad("angle_resolution_deg", "must lie in (0, 90)");
        }
        if !(2..=4001).contains(&self.grid.n_r) || !(2..=4001).contains(&self.grid.n_vy) {
            return bad("grid", "sizes must lie in [2, 4001]");
        }
        Ok(())
    }

    pub fn region_options(&self) -> RegionOptions {
        let mut o = RegionOptions::default().with_resolution_deg(self.angle_resolution_deg);
        o.snap = self.snap;
        o.viability_target = self.viability_target;
        o
    }

    /// Renders the configuration in the format read by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let da: Vec<String> = self.delta_alpha_deg.iter().map(f64::to_string).collect();
        let snap = match self.snap {
            Snap::Nearest => "nearest",
            Snap::Conservative => "conservative",
        };
        let target = match self.viability_target {
            ViabilityTarget::SameGait => "same-gait",
            ViabilityTarget::AnyValid => "any-valid",
        };
        format!(
            "[model]\nmass = {}\nstiffness = {}\nrest_length = {}\ngravity = {}\n\n\
             [sweep]\nenergy_start = {}\nenergy_stop = {}\nenergy_step = {}\ndelta_alpha_deg = {}\n\n\
             [grid]\nn_r = {}\nn_vy = {}\nangle_resolution_deg = {}\nsnap = {snap}\nviability_target = {target}\n\n\
             [output]\ndir = {}\n\n[run]\nseed = {}\nthreads = {}\n",
            p.mass,
            p.stiffness,
            p.rest_length,
            p.gravity,
            self.sweep.start,
            self.sweep.stop,
            self.sweep.step,
            da.join(", "),
            self.grid.n_r,
            self.grid.n_vy,
            self.angle_resolution_deg,
            self.out_dir.display(),
            self.seed,
            self.threads,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_the_standard_sweep() {
        let c = RunConfig::parse("").unwrap();
        let e = c.sweep.energies();
        assert_eq!(e.len(), 13);
        assert_eq!(e[0], 780.0);
        assert_eq!(e[12], 900.0);
        assert_eq!(c.grid, GridSpec { n_r: 201, n_vy: 201 });
    }

    #[test]
    fn sections_and_lists() {
        let c = RunConfig::parse(
            "# test\n[model]\nstiffness = 18000 # softer\n[sweep]\ndelta_alpha_deg = 0.5, 1,2\n[grid]\nsize = 51x41\nsnap = conservative\n",
        )
        .unwrap();
        assert_eq!(c.params.stiffness, 18000.0);
        assert_eq!(c.delta_alpha_deg, vec![0.5, 1.0, 2.0]);
        assert_eq!(c.grid, GridSpec { n_r: 51, n_vy: 41 });
        assert_eq!(c.snap, Snap::Conservative);
    }

    #[test]
    fn errors_carry_location() {
        assert!(matches!(RunConfig::parse("[model\nmass=1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("[model]\nmass 80"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(RunConfig::parse("[model]\ncolour = red"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(RunConfig::parse("[sweep]\nenergy_step = 0"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("[sweep]\ndelta_alpha_deg = -1"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("[model]\nmass = 1\nmass = 2"), Err(ConfigError::Syntax { line: 3, .. })));
    }

    #[test]
    fn text_round_trip() {
        let c = RunConfig { delta_alpha_deg: vec![0.5, 2.0], seed: 7, ..Default::default() };
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }
}
