//! Persisted critical-value tables.
//!
//! A table stores Monte Carlo quantiles of one limit functional together with
//! full provenance: replication count, path grid size, seed, discard count
//! and the software version that produced it. A table without complete
//! provenance is invalid. Files are a self-describing UTF-8 key-value
//! document, written to a temporary name and atomically renamed, and are never
//! modified afterwards.
//!
//! Given the persisted quantile grid, the table answers two questions:
//! quantile at a level (linear interpolation between stored levels) and the
//! approximate CDF at a statistic value (inverse interpolation, clamped at
//! the stored range).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SnError};

/// Identifier strings for the tabulated limit functionals.
pub const FUNCTIONAL_SN: &str = "sn_limit";
pub const FUNCTIONAL_GSN: &str = "gsn_limit";
pub const FUNCTIONAL_CP: &str = "cp_limit";
pub const FUNCTIONAL_FIXEDB: &str = "fixedb_limit";

const FORMAT_VERSION: u64 = 1;

/// Functional-specific parameters carried by a table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableParams {
    /// Window fraction for fixed-b limits.
    pub b: Option<f64>,
    /// Row-major p x p matrix square root of the long-run variance, for
    /// non-pivotal multivariate fixed-b limits.
    pub sigma_half: Option<Vec<f64>>,
    /// Fingerprint of the triangle measure for generalized limits.
    pub h_digest: Option<u64>,
    /// Human-readable description of the measure (e.g. `grid:40`).
    pub h_desc: Option<String>,
    /// Atom count of the measure.
    pub h_atoms: Option<usize>,
}

/// Monte Carlo quantiles of a limit functional plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueTable {
    pub functional_id: String,
    pub p: usize,
    pub params: TableParams,
    /// Quantile levels, strictly increasing, in (0, 1).
    pub levels: Vec<f64>,
    /// Quantile values aligned with `levels`, nondecreasing.
    pub values: Vec<f64>,
    pub reps: usize,
    pub grid_m: usize,
    pub seed: u64,
    pub discarded: usize,
    pub version: String,
}

impl CriticalValueTable {
    /// Validate structural invariants.
    pub fn validate(&self) -> Result<()> {
        let known = [
            FUNCTIONAL_SN,
            FUNCTIONAL_GSN,
            FUNCTIONAL_CP,
            FUNCTIONAL_FIXEDB,
        ];
        if !known.contains(&self.functional_id.as_str()) {
            return Err(SnError::Table(format!(
                "unknown functional id '{}'",
                self.functional_id
            )));
        }
        if self.p == 0 {
            return Err(SnError::Table("p must be >= 1".into()));
        }
        if self.reps == 0 || self.grid_m < 2 {
            return Err(SnError::Table(
                "table provenance incomplete: reps and grid are required".into(),
            ));
        }
        if self.levels.is_empty() || self.levels.len() != self.values.len() {
            return Err(SnError::Table("levels and values must align".into()));
        }
        for w in self.levels.windows(2) {
            if !(w[0] < w[1]) {
                return Err(SnError::Table("levels must be strictly increasing".into()));
            }
        }
        if self.levels[0] <= 0.0 || *self.levels.last().unwrap() >= 1.0 {
            return Err(SnError::Table("levels must lie in (0,1)".into()));
        }
        for w in self.values.windows(2) {
            if w[0] > w[1] {
                return Err(SnError::Table(
                    "quantile values must be nondecreasing in level".into(),
                ));
            }
        }
        if self.functional_id == FUNCTIONAL_FIXEDB && self.params.b.is_none() {
            return Err(SnError::Table("fixed-b table requires param_b".into()));
        }
        if self.functional_id == FUNCTIONAL_GSN && self.params.h_digest.is_none() {
            return Err(SnError::Table(
                "generalized table requires the measure digest".into(),
            ));
        }
        Ok(())
    }

    /// Reject tables built for a different functional or dimension.
    pub fn check_compatible(&self, functional_id: &str, p: usize) -> Result<()> {
        if self.functional_id != functional_id {
            return Err(SnError::config(format!(
                "table holds '{}' quantiles, this analysis needs '{}'",
                self.functional_id, functional_id
            )));
        }
        if self.p != p {
            return Err(SnError::config(format!(
                "table was built for p={}, this analysis has p={p}",
                self.p
            )));
        }
        Ok(())
    }

    /// Quantile at a level, linearly interpolated between stored levels.
    pub fn quantile_at(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(SnError::config(format!(
                "quantile level must lie in (0,1), got {level}"
            )));
        }
        let lo = self.levels[0];
        let hi = *self.levels.last().unwrap();
        if level < lo || level > hi {
            return Err(SnError::config(format!(
                "level {level} outside the tabulated range [{lo}, {hi}]; rebuild the table with wider levels"
            )));
        }
        // Exact hit or linear interpolation on the bracketing pair.
        let pos = self.levels.partition_point(|&l| l < level);
        if pos < self.levels.len() && self.levels[pos] == level {
            return Ok(self.values[pos]);
        }
        let (l0, l1) = (self.levels[pos - 1], self.levels[pos]);
        let (v0, v1) = (self.values[pos - 1], self.values[pos]);
        let t = (level - l0) / (l1 - l0);
        Ok(v0 + t * (v1 - v0))
    }

    /// Approximate CDF of the limit at `x`, inversely interpolated from the
    /// quantile grid. The boolean is true when `x` fell outside the stored
    /// range and the value was clamped to the extreme level.
    pub fn cdf_at(&self, x: f64) -> (f64, bool) {
        if x < self.values[0] {
            return (self.levels[0], true);
        }
        if x >= *self.values.last().unwrap() {
            return (*self.levels.last().unwrap(), true);
        }
        let pos = self.values.partition_point(|&v| v <= x);
        // values[pos-1] <= x < values[pos]
        let (v0, v1) = (self.values[pos - 1], self.values[pos]);
        let (l0, l1) = (self.levels[pos - 1], self.levels[pos]);
        if v1 == v0 {
            return (l1, false);
        }
        let t = (x - v0) / (v1 - v0);
        (l0 + t * (l1 - l0), false)
    }

    /// Serialize to the key-value document format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "snstat_table_format = {FORMAT_VERSION}");
        let _ = writeln!(out, "functional = {}", self.functional_id);
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "reps = {}", self.reps);
        let _ = writeln!(out, "grid = {}", self.grid_m);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "discarded = {}", self.discarded);
        let _ = writeln!(out, "version = {}", self.version);
        if let Some(b) = self.params.b {
            let _ = writeln!(out, "param_b = {b}");
        }
        if let Some(sh) = &self.params.sigma_half {
            let joined: Vec<String> = sh.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "param_sigma_half = {}", joined.join(","));
        }
        if let Some(d) = self.params.h_digest {
            let _ = writeln!(out, "param_h_digest = {d:016x}");
        }
        if let Some(desc) = &self.params.h_desc {
            let _ = writeln!(out, "param_h_desc = {desc}");
        }
        if let Some(c) = self.params.h_atoms {
            let _ = writeln!(out, "param_h_atoms = {c}");
        }
        let _ = writeln!(out, "levels = {}", self.levels.len());
        for (l, v) in self.levels.iter().zip(self.values.iter()) {
            let _ = writeln!(out, "level {l} = {v}");
        }
        out
    }

    /// Parse the key-value document format.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut format_seen = false;
        let mut functional_id = None;
        let mut p = None;
        let mut reps = None;
        let mut grid_m = None;
        let mut seed = None;
        let mut discarded = None;
        let mut version = None;
        let mut params = TableParams::default();
        let mut declared_levels: Option<usize> = None;
        let mut levels = Vec::new();
        let mut values = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(SnError::Table(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                SnError::Table(format!("line {}: cannot parse {what} '{value}'", lineno + 1))
            };
            match key {
                "snstat_table_format" => {
                    let v: u64 = value.parse().map_err(|_| bad("format version"))?;
                    if v != FORMAT_VERSION {
                        return Err(SnError::Table(format!(
                            "unsupported table format version {v}"
                        )));
                    }
                    format_seen = true;
                }
                "functional" => functional_id = Some(value.to_string()),
                "p" => p = Some(value.parse().map_err(|_| bad("p"))?),
                "reps" => reps = Some(value.parse().map_err(|_| bad("reps"))?),
                "grid" => grid_m = Some(value.parse().map_err(|_| bad("grid"))?),
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "discarded" => discarded = Some(value.parse().map_err(|_| bad("discarded"))?),
                "version" => version = Some(value.to_string()),
                "param_b" => params.b = Some(value.parse().map_err(|_| bad("param_b"))?),
                "param_sigma_half" => {
                    let mut out = Vec::new();
                    for piece in value.split(',') {
                        out.push(
                            piece
                                .trim()
                                .parse()
                                .map_err(|_| bad("param_sigma_half entry"))?,
                        );
                    }
                    params.sigma_half = Some(out);
                }
                "param_h_digest" => {
                    params.h_digest =
                        Some(u64::from_str_radix(value, 16).map_err(|_| bad("param_h_digest"))?)
                }
                "param_h_desc" => params.h_desc = Some(value.to_string()),
                "param_h_atoms" => {
                    params.h_atoms = Some(value.parse().map_err(|_| bad("param_h_atoms"))?)
                }
                "levels" => declared_levels = Some(value.parse().map_err(|_| bad("levels"))?),
                _ if key.starts_with("level ") => {
                    let level: f64 = key["level ".len()..]
                        .trim()
                        .parse()
                        .map_err(|_| bad("level key"))?;
                    let v: f64 = value.parse().map_err(|_| bad("level value"))?;
                    levels.push(level);
                    values.push(v);
                }
                _ => {
                    return Err(SnError::Table(format!(
                        "line {}: unknown key '{key}'",
                        lineno + 1
                    )));
                }
            }
        }

        if !format_seen {
            return Err(SnError::Table("missing snstat_table_format header".into()));
        }
        let table = CriticalValueTable {
            functional_id: functional_id.ok_or_else(|| SnError::Table("missing functional".into()))?,
            p: p.ok_or_else(|| SnError::Table("missing p".into()))?,
            params,
            levels,
            values,
            reps: reps.ok_or_else(|| SnError::Table("missing reps".into()))?,
            grid_m: grid_m.ok_or_else(|| SnError::Table("missing grid".into()))?,
            seed: seed.ok_or_else(|| SnError::Table("missing seed".into()))?,
            discarded: discarded.ok_or_else(|| SnError::Table("missing discarded".into()))?,
            version: version.ok_or_else(|| SnError::Table("missing version".into()))?,
        };
        if let Some(n) = declared_levels {
            if n != table.levels.len() {
                return Err(SnError::Table(format!(
                    "declared {n} levels but found {}",
                    table.levels.len()
                )));
            }
        }
        table.validate()?;
        Ok(table)
    }

    /// Write atomically: temporary file in the same directory, then rename.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_text())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SnError::Table(format!(
                "cannot read table '{}': {e}; run build-table first",
                path.display()
            ))
        })?;
        Self::from_text(&text)
    }
}
