//! Deterministic key-value report documents.
//!
//! Keys are emitted in insertion order; floats use the shortest round-trip
//! formatting, so identical computations serialize identically.

use std::fmt::Write as _;

use snstat::table::CriticalValueTable;

use crate::ingest::IngestResult;

#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
    warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Report::default();
        r.push("command", command);
        r
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_vec(&mut self, key: &str, values: &[f64]) {
        let joined: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
        self.push(key, joined.join(","));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    /// Echo the input shape and checksum.
    pub fn input(&mut self, ingest: &IngestResult) {
        self.push("input_rows", ingest.rows);
        self.push("input_cols", ingest.cols);
        self.push("input_checksum", format!("{:016x}", ingest.checksum));
    }

    /// Echo where a table came from.
    pub fn table_provenance(&mut self, table: &CriticalValueTable) {
        self.push("table_functional", &table.functional_id);
        self.push("table_p", table.p);
        self.push("table_reps", table.reps);
        self.push("table_grid", table.grid_m);
        self.push("table_seed", table.seed);
        self.push("table_discarded", table.discarded);
        self.push("table_version", &table.version);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (i, w) in self.warnings.iter().enumerate() {
            let _ = writeln!(out, "warning_{} = {w}", i + 1);
        }
        out
    }
}
