//! Parameter sweeps: the Cartesian product of `[sweep.ranges]`, run as
//! independent jobs on a bounded worker pool.
//!
//! Job `i` gets the base config with each swept key overwritten, a seed taken
//! from the hash of that config, and the output directory `out/job-iiii`.
//! A failing job is recorded and the sweep carries on. The merged summary is
//! sorted by parameter values, so it does not depend on scheduling.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SchemaError};
use crate::experiments::{execute, run_experiment};
use crate::record::ExperimentRecord;

#[derive(Clone, Debug)]
pub struct SweepJob {
    pub index: usize,
    pub params: Vec<(String, toml::Value)>,
    /// The job config, or why it failed to validate.
    pub config: Result<ExperimentConfig, SchemaError>,
}

#[derive(Debug)]
pub struct JobOutcome {
    pub index: usize,
    pub params: Vec<(String, toml::Value)>,
    pub seed: Option<u64>,
    pub result: Result<ExperimentRecord, String>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    /// In parameter order.
    pub jobs: Vec<JobOutcome>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.jobs.iter().filter(|j| j.result.is_err()).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sets `key.sub.leaf = value`, creating intermediate tables.
fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), SchemaError> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(p) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(p.to_string(), value);
            return Ok(());
        }
        let next = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match next {
            toml::Value::Table(t) => t,
            _ => return Err(SchemaError(format!("sweep key {key:?}: {p} is not a table"))),
        };
    }
    Err(SchemaError(format!("empty sweep key {key:?}")))
}

/// Seed from the leading bytes of the SHA-256 of a config hash, kept below
/// 2^63 so it survives a TOML round trip.
fn derived_seed(hash: &str) -> u64 {
    let d = Sha256::digest(hash.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) >> 1
}

/// Expands the Cartesian product of the sweep ranges; keys vary slowest first.
pub fn expand(base: &ExperimentConfig) -> Result<Vec<SweepJob>, SchemaError> {
    let ranges = base.sweep.clone().unwrap_or_default().ranges;
    let mut stripped = base.clone();
    stripped.sweep = None;
    let table = toml::Table::try_from(&stripped).map_err(|e| SchemaError(e.to_string()))?;
    let keys: Vec<&String> = ranges.keys().collect();
    let total: usize = ranges.values().map(Vec::len).product();
    let mut jobs = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut params = vec![(String::new(), toml::Value::Boolean(false)); keys.len()];
        for (slot, key) in keys.iter().enumerate().rev() {
            let values = &ranges[*key];
            params[slot] = ((*key).clone(), values[rem % values.len()].clone());
            rem /= values.len();
        }
        let config = (|| {
            let mut t = table.clone();
            for (k, v) in &params {
                set_dotted(&mut t, k, v.clone())?;
            }
            let mut cfg = ExperimentConfig::from_table(t)?;
            cfg.seed = derived_seed(&cfg.hash());
            cfg.out = base.out.join(format!("job-{index:04}"));
            Ok(cfg)
        })();
        jobs.push(SweepJob { index, params, config });
    }
    Ok(jobs)
}

fn cmp_values(a: &toml::Value, b: &toml::Value) -> Ordering {
    match (a.as_float().or(a.as_integer().map(|i| i as f64)), b.as_float().or(b.as_integer().map(|i| i as f64))) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        _ => a.to_string().cmp(&b.to_string()),
    }
}

fn show(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs every job, persisting each under its own directory when `persist`
/// is set, on a pool of `threads` workers (all cores when `None`).
pub fn sweep(base: &ExperimentConfig, threads: Option<usize>, persist: bool) -> Result<SweepOutcome> {
    base.validate()?;
    let jobs = expand(base)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build()?;
    let mut outcomes: Vec<JobOutcome> = pool.install(|| {
        jobs.into_par_iter()
            .map(|job| {
                let (seed, result) = match &job.config {
                    Ok(cfg) => {
                        let r = if persist { run_experiment(cfg) } else { execute(cfg) };
                        (Some(cfg.seed), r.map_err(|e| format!("{e:#}")))
                    }
                    Err(e) => (None, Err(e.to_string())),
                };
                JobOutcome { index: job.index, params: job.params, seed, result }
            })
            .collect()
    });
    outcomes.sort_by(|a, b| {
        a.params
            .iter()
            .zip(&b.params)
            .map(|((_, x), (_, y))| cmp_values(x, y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });

    let keys: Vec<String> = base.sweep.as_ref().map(|s| s.ranges.keys().cloned().collect()).unwrap_or_default();
    let mut summary_keys = BTreeSet::new();
    let mut verdict_keys = BTreeSet::new();
    for o in &outcomes {
        if let Ok(r) = &o.result {
            summary_keys.extend(r.summary.keys().cloned());
            verdict_keys.extend(r.verdicts.keys().cloned());
        }
    }
    let mut header: Vec<String> = keys.iter().map(|k| format!("{k} [config]")).collect();
    header.extend(["job [1]".to_string(), "seed [1]".to_string(), "status [label]".to_string()]);
    header.extend(verdict_keys.iter().map(|k| format!("verdict_{k} [label]")));
    header.extend(summary_keys.iter().cloned());
    header.push("error [text]".into());
    let rows = outcomes
        .iter()
        .map(|o| {
            let mut row: Vec<String> = o.params.iter().map(|(_, v)| show(v)).collect();
            row.push(o.index.to_string());
            row.push(o.seed.map_or_else(String::new, |s| s.to_string()));
            match &o.result {
                Ok(r) => {
                    row.push("ok".into());
                    row.extend(verdict_keys.iter().map(|k| r.verdicts.get(k).cloned().unwrap_or_default()));
                    row.extend(summary_keys.iter().map(|k| r.summary.get(k).map_or_else(String::new, |v| v.to_string())));
                    row.push(String::new());
                }
                Err(e) => {
                    row.push("failed".into());
                    row.extend(std::iter::repeat(String::new()).take(verdict_keys.len() + summary_keys.len()));
                    row.push(e.clone());
                }
            }
            row
        })
        .collect();
    let outcome = SweepOutcome { jobs: outcomes, header, rows };
    if persist {
        std::fs::create_dir_all(&base.out)?;
        outcome.write_csv(&base.out.join("sweep_summary.csv"))?;
    }
    Ok(outcome)
}
