use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::ResultRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn row(&self, policy: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.slice_d_vio_pct.len());
        let mut out = String::from("policy,envs,d_vio_pct_mean,d_vio_pct_std");
        for s in 1..=k {
            let _ = write!(out, ",slice{s}_d_vio_pct_mean,slice{s}_d_vio_pct_std");
        }
        out.push_str(",throughput_mbps_mean,throughput_mbps_std,usage_pct_mean,usage_pct_std,return_mean,return_std\n");
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.policy, r.envs, r.d_vio_pct.mean, r.d_vio_pct.std);
            for s in &r.slice_d_vio_pct {
                let _ = write!(out, ",{},{}", s.mean, s.std);
            }
            let _ = writeln!(
                out,
                ",{},{},{},{},{},{}",
                r.throughput_mbps.mean,
                r.throughput_mbps.std,
                r.usage_pct.mean,
                r.usage_pct.std,
                r.episode_return.mean,
                r.episode_return.std
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "### {}\n", self.title);
        }
        out.push_str("| policy | envs | delay violation (%) | total throughput (Mb/s) | resource usage (%) | return |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} |",
                r.policy,
                r.envs,
                r.d_vio_pct.mean,
                r.d_vio_pct.std,
                r.throughput_mbps.mean,
                r.throughput_mbps.std,
                r.usage_pct.mean,
                r.usage_pct.std,
                r.episode_return.mean,
                r.episode_return.std
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("table serializes"))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
    }
}
