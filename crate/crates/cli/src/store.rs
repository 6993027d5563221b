//! Content-addressed cache of computed region grids.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};
use slip_core::dynamics::ModelParams;
use slip_core::regions::{read_region_json, write_region_json, GridSpec, RegionGrid, RegionKind, RegionOptions};
use slip_core::section::GaitKind;
use slip_core::{Result, SlipError};

/// Everything that determines a region grid's content.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionKey {
    pub params: ModelParams,
    pub energy: f64,
    pub gait: GaitKind,
    pub kind: RegionKind,
    pub delta_alpha: f64,
    pub grid: GridSpec,
    pub opts: RegionOptions,
}

impl RegionKey {
    pub fn digest(&self) -> String {
        let o = &self.opts;
        let text = format!(
            "slip-region-key/1|{}|{:016x}|{}|{}|{:016x}|{}x{}|{:016x}|{:?}|{:?}|{}",
            self.params.fingerprint(),
            self.energy.to_bits(),
            self.gait.name(),
            self.kind.name(),
            self.delta_alpha.to_bits(),
            self.grid.n_r,
            self.grid.n_vy,
            o.angle_resolution.to_bits(),
            o.snap,
            o.viability_target,
            o.max_sweeps,
        );
        let d = Sha256::digest(text.as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Region grids stored as JSON envelopes under `<root>/<digest>.json`.
#[derive(Debug)]
pub struct ResultStore {
    root: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ResultStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root, hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, key: &RegionKey) -> PathBuf {
        self.root.join(format!("{}.json", key.digest()))
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    /// Loads a cached grid. Entries that fail to parse or describe a
    /// different computation are treated as misses.
    pub fn get(&self, key: &RegionKey) -> Option<RegionGrid> {
        let found = fs::File::open(self.path(key))
            .ok()
            .and_then(|f| read_region_json(std::io::BufReader::new(f)).ok())
            .filter(|(g, p)| {
                *p == key.params
                    && g.kind == key.kind
                    && g.gait == key.gait
                    && g.energy.to_bits() == key.energy.to_bits()
                    && g.delta_alpha.to_bits() == key.delta_alpha.to_bits()
                    && g.axes.n_r == key.grid.n_r
                    && g.axes.n_vy == key.grid.n_vy
            })
            .map(|(g, _)| g);
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    /// Writes through a temporary file so readers never see partial entries.
    pub fn put(&self, key: &RegionKey, g: &RegionGrid) -> Result<()> {
        if g.kind != key.kind || g.gait != key.gait {
            return Err(SlipError::Domain(format!("grid {} {} stored under key for {} {}", g.kind.name(), g.gait, key.kind.name(), key.gait)));
        }
        let path = self.path(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let f = fs::File::create(&tmp)?;
            write_region_json(g, &key.params, BufWriter::new(f))?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use slip_core::regions::GridAxes;

    fn key() -> RegionKey {
        RegionKey {
            params: ModelParams::default(),
            energy: 840.0,
            gait: GaitKind::Walking,
            kind: RegionKind::Robust,
            delta_alpha: 1f64.to_radians(),
            grid: GridSpec::square(9),
            opts: RegionOptions::default(),
        }
    }

    #[test]
    fn digest_depends_on_every_field() {
        let k = key();
        let mut other = k;
        other.energy = 840.0000000001;
        assert_ne!(k.digest(), other.digest());
        let mut other = k;
        other.params.stiffness += 1.0;
        assert_ne!(k.digest(), other.digest());
        let mut other = k;
        other.kind = RegionKind::Viability;
        assert_ne!(k.digest(), other.digest());
        assert_eq!(k.digest(), key().digest());
    }

    #[test]
    fn put_then_get_is_identical() {
        let dir = std::env::temp_dir().join(format!("slip-store-test-{}", std::process::id()));
        let store = ResultStore::open(&dir).unwrap();
        let k = key();
        assert!(store.get(&k).is_none());
        let p = k.params;
        let axes = GridAxes::for_energy(k.energy, k.grid, &p).unwrap();
        let mut g = RegionGrid::empty(k.energy, k.gait, k.delta_alpha, axes, axes.interior(k.energy, &p));
        g.kind = k.kind;
        g.member[40] = true;
        g.interval[40] = 0.1 + 0.2;
        store.put(&k, &g).unwrap();
        assert_eq!(store.get(&k).unwrap(), g);
        assert_eq!((store.hits(), store.misses()), (1, 1));
        fs::remove_dir_all(dir).unwrap();
    }
}
