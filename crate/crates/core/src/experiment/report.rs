use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, Seeds};
use crate::network::ParamCounts;
use crate::norm::NormStrategy;
use crate::train::MetricsRecord;

/// Written next to the metrics of every run; enough to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub param_counts: ParamCounts,
    pub config: ExperimentConfig,
    /// The configuration file as given.
    pub config_text: String,
}

/// Metric records of a metrics file, in order. Event lines (such as a
/// divergence notice) are skipped.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Format {
            offset,
            message: format!("{}: {e}", path.display()),
        })?;
        if v.get("event").is_none() {
            out.push(serde_json::from_value(v).map_err(|e| Error::Format {
                offset,
                message: format!("{}: {e}", path.display()),
            })?);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

fn manifest_for(metrics: &Path) -> Option<Manifest> {
    let path = metrics.with_file_name("manifest.json");
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

struct Row {
    label: String,
    norm: Option<NormStrategy>,
    sharing: String,
    errors: Vec<f64>,
    mean: f64,
    order: (usize, usize),
}

/// A table of the final validation errors of each run. Runs whose manifest
/// names a normalization strategy are ordered like the normalization
/// ablation (BN/BN+/IN × universal/domain); the others keep input order.
pub fn report(paths: &[PathBuf]) -> Result<String> {
    let mut rows = Vec::new();
    let rank = NormStrategy::ablation_rows();
    for (i, p) in paths.iter().enumerate() {
        let records = read_metrics(p)?;
        let last = records
            .iter()
            .rev()
            .find(|r| r.is_final)
            .or(records.last())
            .ok_or_else(|| Error::Format {
                offset: 0,
                message: format!("{}: no metric records", p.display()),
            })?;
        let manifest = manifest_for(p);
        let norm = manifest.as_ref().map(|m| m.config.norm);
        let label = manifest
            .as_ref()
            .map(|m| m.name.clone())
            .unwrap_or_else(|| p.display().to_string());
        let sharing = manifest
            .as_ref()
            .map(|m| {
                let mut s = m.config.model.sharing.label();
                if m.config.model.multiplier > 1 {
                    write!(s, " (×{} filters)", m.config.model.multiplier).expect("string write");
                }
                s
            })
            .unwrap_or_else(|| "-".into());
        let pos = norm.and_then(|n| rank.iter().position(|r| *r == n)).unwrap_or(rank.len());
        rows.push(Row {
            label,
            norm,
            sharing,
            errors: last.val_error.clone(),
            mean: last.mean_error,
            order: (pos, i),
        });
    }
    rows.sort_by_key(|r| r.order);

    let cols = rows.iter().map(|r| r.errors.len()).max().unwrap_or(0);
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(3).max(3);
    let swidth = rows.iter().map(|r| r.sharing.len()).max().unwrap_or(7).max(7);
    let mut out = String::new();
    write!(out, "{:<width$}  {:<5} {:<10} {:<10} {:<swidth$}", "run", "norm", "scale", "moments", "sharing")
        .expect("string write");
    for d in 1..=cols {
        write!(out, " {:>7}", format!("d{d}")).expect("string write");
    }
    writeln!(out, " {:>7}", "mean").expect("string write");
    for r in &rows {
        let (k, s, m) = match r.norm {
            Some(n) => (n.kind.label(), n.scale_scope.label(), n.moment_scope.label()),
            None => ("-", "-", "-"),
        };
        write!(out, "{:<width$}  {:<5} {:<10} {:<10} {:<swidth$}", r.label, k, s, m, r.sharing).expect("string write");
        for d in 0..cols {
            match r.errors.get(d) {
                Some(e) => write!(out, " {e:>7.2}"),
                None => write!(out, " {:>7}", ""),
            }
            .expect("string write");
        }
        writeln!(out, " {:>7.2}", r.mean).expect("string write");
    }
    Ok(out)
}
