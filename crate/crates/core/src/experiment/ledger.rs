//! Append-only JSON-lines run ledger.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub tag: String,
    pub message: String,
}

impl From<&Error> for RowError {
    fn from(e: &Error) -> Self {
        RowError {
            tag: e.tag().to_string(),
            message: e.to_string(),
        }
    }
}

/// One ledger row. `member` identifies the run inside its experiment (the
/// resolution, Dirac centre, ...); `ladder` names the member key that acts
/// as the refinement variable and the metrics to fit against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub run_id: String,
    pub config_hash: String,
    pub kind: String,
    pub member: BTreeMap<String, Value>,
    pub status: RowStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RowError>,
    pub gate: Value,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub metrics: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    /// Group rows that share this key and differ only in the ladder variable.
    pub group: String,
    /// Name of the metric used as the abscissa (usually `h`).
    pub x: String,
    pub quantities: Vec<String>,
}

impl LedgerRow {
    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(Value::as_f64)
    }

    /// Member and metric keys flattened into one object, `member.` and
    /// nested objects joined with dots.
    pub fn flatten(&self) -> Map<String, Value> {
        let mut out = Map::new();
        out.insert("run_id".into(), self.run_id.clone().into());
        out.insert("config_hash".into(), self.config_hash.clone().into());
        out.insert("kind".into(), self.kind.clone().into());
        out.insert(
            "status".into(),
            serde_json::to_value(self.status).unwrap_or(Value::Null),
        );
        if let Some(e) = &self.error {
            out.insert("error.tag".into(), e.tag.clone().into());
            out.insert("error.message".into(), e.message.clone().into());
        }
        for (k, v) in &self.member {
            flatten_into(&mut out, &format!("member.{k}"), v);
        }
        flatten_into(&mut out, "gate", &self.gate);
        for (k, v) in &self.metrics {
            flatten_into(&mut out, k, v);
        }
        if let Some(t) = self.timestamp {
            out.insert("timestamp".into(), t.into());
        }
        out
    }
}

fn flatten_into(out: &mut Map<String, Value>, prefix: &str, v: &Value) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten_into(out, &format!("{prefix}.{k}"), x);
            }
        }
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let s: Vec<String> = a.iter().map(scalar_text).collect();
            out.insert(prefix.into(), Value::String(s.join(";")));
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten_into(out, &format!("{prefix}.{i}"), x);
            }
        }
        _ => {
            out.insert(prefix.into(), v.clone());
        }
    }
}

pub(crate) fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Rows in file order. Writes go through [`RunLedger::append`] only.
#[derive(Debug, Default)]
pub struct RunLedger {
    path: Option<PathBuf>,
    rows: Vec<LedgerRow>,
}

impl RunLedger {
    /// In-memory ledger.
    pub fn new() -> Self {
        RunLedger::default()
    }

    /// Opens (or starts) the ledger at `path`; existing rows are loaded.
    pub fn open(path: &Path) -> Result<Self> {
        let rows = if path.exists() {
            read_rows(path)?
        } else {
            Vec::new()
        };
        Ok(RunLedger {
            path: Some(path.to_path_buf()),
            rows,
        })
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// True when an ok row with this id is already recorded.
    pub fn completed(&self, run_id: &str) -> bool {
        self.rows.iter().any(|r| r.run_id == run_id && r.is_ok())
    }

    pub fn append(&mut self, rows: Vec<LedgerRow>) -> Result<()> {
        if let Some(p) = &self.path {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            for r in &rows {
                serde_json::to_writer(&mut f, r)?;
                f.write_all(b"\n")?;
            }
            f.flush()?;
        }
        self.rows.extend(rows);
        Ok(())
    }
}

/// Reads a JSON-lines ledger; blank lines are skipped.
pub fn read_rows(path: &Path) -> Result<Vec<LedgerRow>> {
    let f = File::open(path)?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: LedgerRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
