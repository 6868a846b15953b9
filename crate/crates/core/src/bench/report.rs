//! Report files: one table per scheme, a summary, and log-log plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::ReportFormat;
use super::study::{ConvergenceReport, SchemeReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, ReportError> {
    fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<String, ReportError> {
    serde_json::to_string_pretty(value).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Columns `tau,error_inf,pairwise_order`; empty cells for missing values.
pub fn scheme_csv(s: &SchemeReport) -> String {
    let mut out = String::from("tau,error_inf,pairwise_order\n");
    for e in &s.entries {
        let err = e.error_inf.map(|x| format!("{x:e}")).unwrap_or_default();
        let order = e.pairwise_order.map(|x| format!("{x}")).unwrap_or_default();
        writeln!(out, "{:e},{err},{order}", e.tau).unwrap();
    }
    out
}

/// Whitespace-separated `tau` followed by one error column per scheme.
pub fn plot_data(report: &ConvergenceReport) -> String {
    let mut out = format!("# {}: discrete max-norm error at t_end vs tau\n# tau", report.name);
    for s in &report.schemes {
        write!(out, " {}", s.scheme).unwrap();
    }
    out.push('\n');
    for tau in &report.metadata.spec.taus {
        write!(out, "{tau:e}").unwrap();
        for s in &report.schemes {
            match s.error_at(*tau) {
                Some(e) => write!(out, " {e:e}").unwrap(),
                None => out.push_str(" nan"),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `{name}_{scheme}.{csv|json}` per scheme, `{name}_summary.json`, and
/// `{name}_plot.dat` when there is at least one scheme.
pub fn emit_report(report: &ConvergenceReport, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for s in &report.schemes {
        let path = out_dir.join(format!("{}_{}.{}", report.name, s.scheme, format.extension()));
        let body = match format {
            ReportFormat::Csv => scheme_csv(s),
            ReportFormat::Json => to_json(&path, s)?,
        };
        paths.push(write(path, &body)?);
    }
    let summary = out_dir.join(format!("{}_summary.json", report.name));
    let body = to_json(&summary, report)?;
    paths.push(write(summary, &body)?);
    if !report.schemes.is_empty() {
        let plot = out_dir.join(format!("{}_plot.dat", report.name));
        paths.push(write(plot, &plot_data(report))?);
    }
    Ok(paths)
}

pub fn load_summary(path: &Path) -> Result<ConvergenceReport, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Human-readable table for the terminal.
pub fn render_table(report: &ConvergenceReport) -> String {
    let mut out = format!(
        "{} ({} unknowns, reference {}{})\n",
        report.name,
        report.metadata.n_unknowns,
        &report.metadata.reference.digest[..12.min(report.metadata.reference.digest.len())],
        if report.metadata.reference.cache_hit { ", cached" } else { "" }
    );
    for s in &report.schemes {
        writeln!(out, "  {}", s.scheme).unwrap();
        for e in &s.entries {
            let err = match (e.error_inf, &e.failure) {
                (Some(x), _) => format!("{x:.4e}"),
                (None, Some(f)) => format!("failed: {f}"),
                (None, None) => "-".into(),
            };
            let order = e.pairwise_order.map(|p| format!("{p:.3}")).unwrap_or_default();
            writeln!(out, "    tau = {:<12.6e} error = {err:<14} order = {order}", e.tau).unwrap();
        }
        match s.tail_slope {
            Some(t) => writeln!(out, "    tail slope ({} pts) = {t:.3}", s.tail_points).unwrap(),
            None => writeln!(out, "    tail slope unavailable").unwrap(),
        }
    }
    out
}
