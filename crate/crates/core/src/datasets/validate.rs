use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{payload_hash, DatasetHeader, TransitionRecord, DATASET_FORMAT, DATASET_SCHEMA_VERSION};
use crate::env::obs_schema_hash;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn add(&mut self, name: &'static str, failures: Vec<String>) {
        let passed = failures.is_empty();
        let detail = match failures.len() {
            0 => "ok".to_string(),
            1 => failures[0].clone(),
            n => format!("{} (and {} more)", failures[0], n - 1),
        };
        self.checks.push(CheckResult { name, passed, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<14} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Check a dataset file without trusting it. Only an unreadable file is an
/// error; everything else lands in the report.
pub fn validate(path: &Path) -> Result<ValidationReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = ValidationReport::default();
    let mut lines = BufReader::new(file).lines();

    let header: Option<DatasetHeader> = match lines.next() {
        None => {
            report.add("header", vec!["empty file".into()]);
            None
        }
        Some(line) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            match serde_json::from_str::<DatasetHeader>(&line) {
                Ok(h) if h.format == DATASET_FORMAT && h.schema_version == DATASET_SCHEMA_VERSION => {
                    report.add("header", vec![]);
                    Some(h)
                }
                Ok(h) => {
                    report.add("header", vec![format!("unsupported {} v{}", h.format, h.schema_version)]);
                    Some(h)
                }
                Err(e) => {
                    report.add("header", vec![format!("unparseable header: {e}")]);
                    None
                }
            }
        }
    };

    let mut records: Vec<TransitionRecord> = Vec::new();
    let mut parse_failures = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => parse_failures.push(format!("line {}: {e}", i + 2)),
        }
    }
    report.add("records_parse", parse_failures);

    let Some(header) = header else {
        return Ok(report);
    };
    let n = header.num_slices;

    let expected_hash = obs_schema_hash(n);
    report.add(
        "schema_hash",
        if header.obs_schema_hash == expected_hash {
            vec![]
        } else {
            vec![format!("header has {}, build expects {expected_hash}", header.obs_schema_hash)]
        },
    );
    report.add(
        "record_count",
        if records.len() as u64 == header.record_count {
            vec![]
        } else {
            vec![format!("header announces {}, found {}", header.record_count, records.len())]
        },
    );
    report.add(
        "payload_hash",
        if payload_hash(&records) == header.payload_sha256 { vec![] } else { vec!["payload hash mismatch".into()] },
    );

    let mut widths = Vec::new();
    let mut ranges = Vec::new();
    for r in &records {
        let at = format!("episode {} step {}", r.episode_id, r.step_index);
        if r.raw.len() != n || r.next_raw.len() != n || r.action.len() + 1 != n || r.env_meta.ue_counts.len() != n {
            widths.push(format!("{at}: widths do not fit {n} slices"));
        }
        for (which, set) in [("raw", &r.raw), ("next_raw", &r.next_raw)] {
            for (s, m) in set.iter().enumerate() {
                if !m.is_finite() || !unit(m.d_vio) || !unit(m.util) || m.t_rx < 0.0 || m.t_tx < 0.0 || m.d_avg < 0.0
                {
                    ranges.push(format!("{at}: {which} slice {s} out of range {m:?}"));
                }
            }
        }
        if r.action.iter().any(|a| !unit(*a)) {
            ranges.push(format!("{at}: action {:?} outside [0,1]", r.action));
        }
    }
    report.add("widths", widths);
    report.add("ranges", ranges);

    let mut order = Vec::new();
    let mut next_step: BTreeMap<u64, (u32, bool)> = BTreeMap::new();
    for r in &records {
        let (expected, finished) = next_step.get(&r.episode_id).copied().unwrap_or((0, false));
        if finished {
            order.push(format!("episode {} continues after done", r.episode_id));
        }
        if r.step_index != expected {
            order.push(format!("episode {} step {} follows step {}", r.episode_id, r.step_index, expected as i64 - 1));
        }
        next_step.insert(r.episode_id, (r.step_index + 1, r.done));
    }
    report.add("step_order", order);
    Ok(report)
}
