//! Experiment reports: a JSON document plus an optional CSV of raw draws.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use otlimit_core::Summary;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// One line of the per-scenario summary table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_bl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, f64>,
}

impl ReportRow {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn sizes(mut self, n: usize, m: usize) -> Self {
        self.n = Some(n);
        self.m = Some(m);
        self
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }
}

/// A labelled vector of raw draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    /// Fraction of row pairs on which KS and d_BL order the two rows the same way.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_dbl_agreement: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub raw: Vec<RawSeries>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            rows: Vec::new(),
            ks_dbl_agreement: None,
            warnings: Vec::new(),
            raw: Vec::new(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn push_raw(&mut self, label: impl Into<String>, values: &[f64]) {
        if self.config.raw_draws {
            self.raw.push(RawSeries {
                label: label.into(),
                values: values.to_vec(),
            });
        }
    }

    /// Fills in the KS / d_BL ordering agreement across rows carrying both.
    pub fn finish(&mut self) {
        let pairs: Vec<(f64, f64)> = self.rows.iter().filter_map(|r| Some((r.d_bl?, r.ks?))).collect();
        let mut agree = 0usize;
        let mut total = 0usize;
        for a in 0..pairs.len() {
            for b in a + 1..pairs.len() {
                total += 1;
                let (x, y) = (pairs[a].0 - pairs[b].0, pairs[a].1 - pairs[b].1);
                if x * y >= 0.0 {
                    agree += 1;
                }
            }
        }
        self.ks_dbl_agreement = (total > 0).then(|| agree as f64 / total as f64);
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `path` (JSON) and, when raw draws are present, `path` with a `.csv` extension.
    pub fn write(&self, path: &Path) -> CliResult<Option<PathBuf>> {
        std::fs::write(path, self.to_json()?)?;
        if self.raw.is_empty() {
            return Ok(None);
        }
        let csv_path = path.with_extension("csv");
        let mut w = BufWriter::new(File::create(&csv_path)?);
        writeln!(w, "series,index,value")?;
        for s in &self.raw {
            for (i, v) in s.values.iter().enumerate() {
                writeln!(w, "{},{i},{v:e}", s.label)?;
            }
        }
        w.flush()?;
        Ok(Some(csv_path))
    }
}
