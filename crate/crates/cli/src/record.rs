//! Experiment records and their on-disk layout.
//!
//! A persisted record is a directory holding `record.json`, `config.toml`,
//! one CSV per table and `snapshots/*.tsl`. CSV headers carry units in
//! brackets: lengths in torus periods `L`, times in diffusive units `T`,
//! diffusivities in multiples of the molecular value `kappa`, `1` when
//! dimensionless.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use stirlab_core::{Snapshot, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Versions {
    pub stirlab_core: String,
    pub stirlab_cli: String,
}

impl Versions {
    pub fn current() -> Self {
        Self { stirlab_core: stirlab_core::VERSION.into(), stirlab_cli: env!("CARGO_PKG_VERSION").into() }
    }
}

/// A numeric table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    /// `"name [unit]"` headers.
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    /// Values of the column whose header starts with `name`.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c.split(' ').next() == Some(name))?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnapshotEntry {
    pub name: String,
    pub time: f64,
    pub label: String,
    #[serde(skip)]
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_s: f64,
    pub verdicts: BTreeMap<String, String>,
    pub summary: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub snapshots: Vec<SnapshotEntry>,
}

impl ExperimentRecord {
    pub fn new(experiment: &str, config_hash: String, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash,
            seed,
            versions: Versions::current(),
            wall_clock_s: 0.0,
            verdicts: BTreeMap::new(),
            summary: BTreeMap::new(),
            tables: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn verdict(&mut self, key: &str, value: impl Into<String>) {
        self.verdicts.insert(key.into(), value.into());
    }

    pub fn value(&mut self, key: &str, value: f64) {
        self.summary.insert(key.into(), value);
    }

    pub fn flag(&mut self, key: &str, value: bool) {
        self.value(key, if value { 1.0 } else { 0.0 });
    }

    pub fn snapshot(&mut self, name: &str, field: &SpectralField, time: f64) {
        let snapshot = Snapshot::of_field(field, time);
        self.snapshots.push(SnapshotEntry { name: name.into(), time, label: snapshot.label.clone(), snapshot });
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes the record, its tables and snapshots under `dir`.
    pub fn persist(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for t in &self.tables {
            let p = dir.join(format!("{}.csv", t.name));
            t.write_csv(&p)?;
            written.push(p);
        }
        if !self.snapshots.is_empty() {
            let snap_dir = dir.join("snapshots");
            fs::create_dir_all(&snap_dir)?;
            for s in &self.snapshots {
                let p = snap_dir.join(format!("{}.tsl", s.name));
                let mut w = BufWriter::new(fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?);
                s.snapshot.write_to(&mut w)?;
                written.push(p);
            }
        }
        let p = dir.join("record.json");
        fs::write(&p, serde_json::to_string_pretty(self)?)?;
        written.push(p);
        Ok(written)
    }
}

/// Kebab-case tag of a serializable status enum.
pub fn tag<T: Serialize>(status: &T) -> String {
    match serde_json::to_value(status) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(e) => format!("unserializable: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table::new("empty", &["a [1]", "b [T]"]);
        let p = dir.path().join("e.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "a [1],b [T]\n");
    }

    #[test]
    fn columns_are_found_by_name() {
        let mut t = Table::new("x", &["nu [1]", "tau_star [T]"]);
        t.push(vec![1.0, 0.5]);
        t.push(vec![2.0, 0.25]);
        assert_eq!(t.column("tau_star"), Some(vec![0.5, 0.25]));
        assert_eq!(t.column("tau"), None);
    }
}
