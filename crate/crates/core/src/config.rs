//! Key-value run configuration.
//!
//! Campaign and scan configs are plain text, one `key = value` per line,
//! `#` comments. Values stay strings until a typed getter parses them, so
//! callers can layer command-line overrides on top of a file before
//! interpreting anything.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Config {
    pairs: BTreeMap<String, String>,
}

impl Config {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
        }
        Ok(Self { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Insert or override a key (command-line flags win over file values).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.pairs.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.keys().map(|k| k.as_str())
    }

    /// Canonical `key = value` text of the resolved configuration; used for
    /// manifest hashing, so iteration order must be stable (it is: BTreeMap).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key {key:?}: expected {what}, got {raw:?}"))),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse_angle(raw)
                .map(Some)
                .map_err(|_| Error::Config(format!("key {key:?}: expected a number, got {raw:?}"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse(key, "an unsigned integer")
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse(key, "an unsigned integer")
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true") | Some("1") | Some("yes") => Ok(Some(true)),
            Some("false") | Some("0") | Some("no") => Ok(Some(false)),
            Some(raw) => Err(Error::Config(format!("key {key:?}: expected a boolean, got {raw:?}"))),
        }
    }
}

/// Parse a number that may be expressed in units of pi: `0.25`, `pi`,
/// `2pi`, `pi/4`, `-0.5pi`, `tau`.
pub fn parse_angle(raw: &str) -> Result<f64> {
    let s = raw.trim();
    let bad = || Error::Config(format!("bad number {raw:?}"));
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    if let Some((num, den)) = s.split_once('/') {
        let d: f64 = den.trim().parse().map_err(|_| bad())?;
        if d == 0.0 {
            return Err(bad());
        }
        return Ok(parse_angle(num)? / d);
    }
    let (coeff, unit) = if let Some(pre) = s.strip_suffix("pi") {
        (pre, std::f64::consts::PI)
    } else if let Some(pre) = s.strip_suffix("tau") {
        (pre, std::f64::consts::TAU)
    } else {
        return Err(bad());
    };
    let c = match coeff.trim() {
        "" => 1.0,
        "-" => -1.0,
        t => t.parse().map_err(|_| bad())?,
    };
    Ok(c * unit)
}

/// Parse an alpha grid: either `start:stop:count` (inclusive linspace, with
/// pi-aware endpoints) or an explicit comma list.
pub fn parse_alpha_grid(raw: &str) -> Result<Vec<f64>> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(Error::Config("empty alpha grid".into()));
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("expected start:stop:count, got {raw:?}")));
        }
        let start = parse_angle(parts[0])?;
        let stop = parse_angle(parts[1])?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad grid count {:?}", parts[2])))?;
        if count == 0 {
            return Err(Error::Config("alpha grid needs at least one point".into()));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        let step = (stop - start) / (count as f64 - 1.0);
        return Ok((0..count).map(|i| start + step * i as f64).collect());
    }
    s.split(',').map(parse_angle).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_and_overrides() {
        let mut cfg = Config::from_text(
            "# campaign\ngraph = chain:95\nepsilon = 0.01\nshots = 3000\nexact = yes\n",
        )
        .unwrap();
        assert_eq!(cfg.get("graph"), Some("chain:95"));
        assert_eq!(cfg.get_f64("epsilon").unwrap(), Some(0.01));
        assert_eq!(cfg.get_usize("shots").unwrap(), Some(3000));
        assert_eq!(cfg.get_bool("exact").unwrap(), Some(true));
        cfg.set("shots", "50");
        assert_eq!(cfg.get_usize("shots").unwrap(), Some(50));
        assert!(cfg.get("missing").is_none());
        assert!(cfg.require("missing").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::from_text("just a line\n").is_err());
        assert!(Config::from_text("a = 1\na = 2\n").is_err());
        assert!(Config::from_text("= 3\n").is_err());
        let cfg = Config::from_text("x = notanumber\n").unwrap();
        assert!(cfg.get_f64("x").is_err());
        assert!(cfg.get_usize("x").is_err());
        assert!(cfg.get_bool("x").is_err());
    }

    #[test]
    fn angle_forms() {
        assert_relative_eq!(parse_angle("pi").unwrap(), std::f64::consts::PI);
        assert_relative_eq!(parse_angle("2pi").unwrap(), std::f64::consts::TAU);
        assert_relative_eq!(parse_angle("tau").unwrap(), std::f64::consts::TAU);
        assert_relative_eq!(parse_angle("pi/4").unwrap(), std::f64::consts::FRAC_PI_4);
        assert_relative_eq!(parse_angle("-0.5pi").unwrap(), -std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(parse_angle("0.125").unwrap(), 0.125);
        assert!(parse_angle("pie").is_err());
    }

    #[test]
    fn alpha_grids() {
        let g = parse_alpha_grid("0:pi:25").unwrap();
        assert_eq!(g.len(), 25);
        assert_relative_eq!(g[0], 0.0);
        assert_relative_eq!(g[24], std::f64::consts::PI);
        let g = parse_alpha_grid("0, pi/2, pi").unwrap();
        assert_eq!(g.len(), 3);
        assert_relative_eq!(g[1], std::f64::consts::FRAC_PI_2);
        assert!(parse_alpha_grid("0:pi").is_err());
        assert!(parse_alpha_grid("0:pi:0").is_err());
    }

    #[test]
    fn canonical_text_is_sorted_and_reparsable() {
        let mut cfg = Config::empty();
        cfg.set("zeta", "1");
        cfg.set("alpha", "2");
        let text = cfg.to_text();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        let back = Config::from_text(&text).unwrap();
        assert_eq!(back.get("zeta"), Some("1"));
    }
}
