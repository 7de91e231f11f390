//! Shared per-invocation plumbing: output locations and manifest lifecycle.

use std::path::{Path, PathBuf};
use std::time::Instant;

use stabwit_core::error::Result;
use stabwit_core::report::RunManifest;

pub struct RunCtx {
    out_dir: PathBuf,
    label: Option<String>,
    /// Seed from the command line; commands fall back to a config-file
    /// `seed` key and then to 0.
    pub seed_flag: Option<u64>,
    started: Instant,
}

impl RunCtx {
    pub fn new(out_dir: PathBuf, label: Option<String>, seed_flag: Option<u64>) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self { out_dir, label, seed_flag, started: Instant::now() })
    }

    /// Output path for `name`, with the run label prefixed when given.
    pub fn path(&self, name: &str) -> PathBuf {
        match &self.label {
            Some(label) => self.out_dir.join(format!("{label}-{name}")),
            None => self.out_dir.join(name),
        }
    }

    pub fn resolve_seed(&self, config_seed: Option<u64>) -> u64 {
        self.seed_flag.or(config_seed).unwrap_or(0)
    }

    /// Stamp the wall time and write `<label->manifest.json`.
    pub fn finish(&self, mut manifest: RunManifest) -> Result<()> {
        let path = self.path("manifest.json");
        manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        manifest.save(&path)?;
        println!("manifest {} -> {}", manifest.hash(), path.display());
        Ok(())
    }
}

/// `lo:hi` range flag.
pub fn parse_range(raw: &str) -> Result<(f64, f64)> {
    let err = || {
        stabwit_core::Error::Config(format!("expected lo:hi range, got {raw:?}"))
    };
    let (lo, hi) = raw.split_once(':').ok_or_else(err)?;
    let lo: f64 = lo.trim().parse().map_err(|_| err())?;
    let hi: f64 = hi.trim().parse().map_err(|_| err())?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(err());
    }
    Ok((lo, hi))
}

/// `j-k` qubit pair list flag: `0-1,4-5`.
pub fn parse_pairs(raw: &str) -> Result<Vec<(usize, usize)>> {
    raw.split(',')
        .map(|tok| {
            let bad = || {
                stabwit_core::Error::Config(format!("expected j-k pair, got {tok:?}"))
            };
            let (j, k) = tok.trim().split_once('-').ok_or_else(bad)?;
            let j: usize = j.trim().parse().map_err(|_| bad())?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            if j == k {
                return Err(bad());
            }
            Ok((j.min(k), j.max(k)))
        })
        .collect()
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
