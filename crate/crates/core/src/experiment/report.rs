//! Tables and fits derived from a ledger.

use super::ledger::{scalar_text, LedgerRow};
use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use serde::Serialize;
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub group: String,
    pub config_hash: String,
    pub x: String,
    pub quantity: String,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Plot-ready `log x, log quantity` table.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub rows: usize,
    pub ok: usize,
    pub failed: usize,
    pub failures_by_tag: BTreeMap<String, usize>,
    pub fits: Vec<SlopeFit>,
    /// Largest observed value of every `empirical_c` / `c_h` style metric,
    /// keyed by metric name.
    pub empirical_constants: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

const CONSTANT_KEYS: &[&str] = &["empirical_c", "c_h", "lambda"];

/// Writes `runs.csv`, `summary.json` and one `ladder_<group>_<quantity>.csv`
/// per refinement ladder into `out_dir`.
pub fn emit_report(rows: &[LedgerRow], out_dir: &Path) -> Result<ReportSummary> {
    if rows.is_empty() {
        return Err(Error::EmptyLedger);
    }
    std::fs::create_dir_all(out_dir)?;
    write_table(rows, &out_dir.join("runs.csv"))?;

    let mut failures_by_tag = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_ok()) {
        let tag = r.error.as_ref().map_or("Unknown", |e| e.tag.as_str());
        *failures_by_tag.entry(tag.to_string()).or_insert(0) += 1;
    }
    let ok: Vec<&LedgerRow> = rows.iter().filter(|r| r.is_ok()).collect();

    let mut fits = Vec::new();
    for ((hash, group), members) in ladders(&ok) {
        let spec = members[0].ladder.as_ref().expect("grouped by ladder");
        for q in &spec.quantities {
            let pts: Vec<(f64, f64)> = members
                .iter()
                .filter_map(|r| Some((abscissa(r, &spec.x)?, r.metric(q)?)))
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .collect();
            if pts.len() < 2 {
                continue;
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            let Ok(fit) = loglog_slope(&xs, &ys) else {
                continue;
            };
            let file = format!(
                "ladder_{}_{}_{}.csv",
                group,
                &hash[..hash.len().min(8)],
                sanitize(q)
            );
            let mut w = csv::Writer::from_path(out_dir.join(&file)).map_err(csv_err)?;
            w.write_record([format!("log_{}", spec.x), format!("log_{q}")])
                .map_err(csv_err)?;
            for (x, y) in &pts {
                w.write_record([x.ln().to_string(), y.ln().to_string()])
                    .map_err(csv_err)?;
            }
            w.flush()?;
            fits.push(SlopeFit {
                group: group.clone(),
                config_hash: hash.clone(),
                x: spec.x.clone(),
                quantity: q.clone(),
                points: pts.len(),
                slope: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
                file,
            });
        }
    }

    let mut empirical_constants = BTreeMap::new();
    for r in &ok {
        for (k, v) in &r.metrics {
            let Some(v) = v.as_f64() else { continue };
            if CONSTANT_KEYS.contains(&k.as_str()) {
                let e = empirical_constants
                    .entry(k.clone())
                    .or_insert(f64::NEG_INFINITY);
                *e = f64::max(*e, v);
            }
        }
    }
    let warnings: BTreeSet<String> = rows
        .iter()
        .flat_map(|r| r.warnings.iter().cloned())
        .collect();

    let summary = ReportSummary {
        rows: rows.len(),
        ok: ok.len(),
        failed: rows.len() - ok.len(),
        failures_by_tag,
        fits,
        empirical_constants,
        warnings: warnings.into_iter().collect(),
    };
    let f = std::fs::File::create(out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(f, &summary)?;
    Ok(summary)
}

/// Ok rows grouped by config hash and ladder group, in first-seen order
/// within each group.
fn ladders<'a>(ok: &[&'a LedgerRow]) -> BTreeMap<(String, String), Vec<&'a LedgerRow>> {
    let mut out: BTreeMap<(String, String), Vec<&LedgerRow>> = BTreeMap::new();
    for r in ok {
        if let Some(l) = &r.ladder {
            out.entry((r.config_hash.clone(), l.group.clone()))
                .or_default()
                .push(r);
        }
    }
    out
}

fn abscissa(r: &LedgerRow, x: &str) -> Option<f64> {
    r.metric(x)
        .or_else(|| r.member.get(x).and_then(Value::as_f64))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

/// One line per row; the header is the sorted union of flattened keys with
/// the identifying columns first.
fn write_table(rows: &[LedgerRow], path: &PathBuf) -> Result<()> {
    const LEAD: [&str; 4] = ["run_id", "config_hash", "kind", "status"];
    let flat: Vec<_> = rows.iter().map(LedgerRow::flatten).collect();
    let keys: BTreeSet<&str> = flat
        .iter()
        .flat_map(|m| m.keys().map(String::as_str))
        .filter(|k| !LEAD.contains(k))
        .collect();
    let header: Vec<&str> = LEAD.iter().copied().chain(keys).collect();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&header).map_err(csv_err)?;
    for m in &flat {
        let rec: Vec<String> = header
            .iter()
            .map(|k| m.get(*k).map(scalar_text).unwrap_or_default())
            .collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
