//! Run manifests and stamped output files.
//!
//! Every command writes a manifest recording what ran: subcommand, resolved
//! configuration, seed, input/output paths, and tool versions. The manifest
//! hash covers only the deterministic fields — wall time is recorded for
//! humans but excluded — so two runs of the same configuration and seed
//! produce data files stamped with the same hash, and the data files
//! themselves are byte-identical.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    /// Canonical text of the fully resolved configuration (file + overrides).
    pub config_text: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub versions: Vec<(String, String)>,
    /// Wall-clock duration of the run. Informational only: excluded from
    /// the manifest hash so reruns of the same seed hash identically.
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_path: None,
            config_text: String::new(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions: vec![(
                env!("CARGO_PKG_NAME").to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            )],
            wall_seconds: 0.0,
        }
    }

    pub fn with_config(mut self, path: Option<&Path>, text: &str) -> Self {
        self.config_path = path.map(|p| p.display().to_string());
        self.config_text = text.to_string();
        self
    }

    pub fn record_input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Hex digest of the deterministic fields. Field values are length-
    /// prefixed so no two distinct manifests can collide by concatenation.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |tag: &str, value: &str| {
            h.update(tag.as_bytes());
            h.update((value.len() as u64).to_le_bytes());
            h.update(value.as_bytes());
        };
        feed("subcommand", &self.subcommand);
        feed("config_path", self.config_path.as_deref().unwrap_or(""));
        feed("config_text", &self.config_text);
        feed("seed", &self.seed.to_string());
        for p in &self.inputs {
            feed("input", p);
        }
        for p in &self.outputs {
            feed("output", p);
        }
        for (name, version) in &self.versions {
            feed("version", &format!("{name} {version}"));
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write as _;
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let serde_json::Value::Object(map) = &mut value {
            map.insert("manifest".into(), serde_json::Value::String(self.hash()));
        }
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::File(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)
            .map_err(|e| Error::File(format!("cannot write {}: {e}", tmp.display())))?;
        f.write_all(bytes)
            .map_err(|e| Error::File(format!("cannot write {}: {e}", tmp.display())))?;
    }
    std::fs::rename(&tmp, path)
        .map_err(|e| Error::File(format!("cannot rename to {}: {e}", path.display())))?;
    Ok(())
}

/// Write a CSV whose first line is a `# manifest <hash>` stamp tying the
/// data back to the run that produced it.
pub fn write_stamped_csv(
    path: &Path,
    manifest_hash: &str,
    header: &str,
    rows: &[String],
) -> Result<()> {
    let mut text = String::new();
    text.push_str("# manifest ");
    text.push_str(manifest_hash);
    text.push('\n');
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Serialize `value` as a JSON object with a `manifest` field injected.
pub fn write_stamped_json<T: Serialize>(path: &Path, manifest_hash: &str, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        serde_json::Value::Object(map) => {
            map.insert(
                "manifest".into(),
                serde_json::Value::String(manifest_hash.to_string()),
            );
        }
        _ => {
            return Err(Error::File("stamped JSON output must be an object".into()));
        }
    }
    write_atomic(path, (serde_json::to_string_pretty(&v)? + "\n").as_bytes())
}

/// Format a float so that reruns print identically: shortest round-trip form.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // `{}` on f64 is already the shortest representation that round-trips.
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_wall_time_but_not_seed() {
        let mut a = RunManifest::new("witness", 7).with_config(None, "graph = chain:5\n");
        let mut b = a.clone();
        a.wall_seconds = 1.0;
        b.wall_seconds = 99.0;
        assert_eq!(a.hash(), b.hash());
        let c = RunManifest::new("witness", 8).with_config(None, "graph = chain:5\n");
        assert_ne!(a.hash(), c.hash());
        let d = RunManifest::new("teleport", 7).with_config(None, "graph = chain:5\n");
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn stamped_files_round_trip() {
        let dir = std::env::temp_dir().join(format!("stabwit-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let m = RunManifest::new("plan", 1);
        let hash = m.hash();

        let csv = dir.join("table.csv");
        write_stamped_csv(&csv, &hash, "a,b", &["1,2".into(), "3,4".into()]).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("# manifest {hash}"));
        assert_eq!(lines.next().unwrap(), "a,b");
        assert_eq!(lines.count(), 2);

        let json = dir.join("summary.json");
        #[derive(Serialize)]
        struct S {
            value: f64,
        }
        write_stamped_json(&json, &hash, &S { value: 1.5 }).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(v["manifest"].as_str().unwrap(), hash);
        assert_eq!(v["value"].as_f64().unwrap(), 1.5);

        let mpath = dir.join("manifest.json");
        m.save(&mpath).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
        assert_eq!(v["manifest"].as_str().unwrap(), hash);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.0, 1.0, 0.1, 1.0 / 3.0, 130046.0, 6.8976e-3, -2.5] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0");
    }
}
