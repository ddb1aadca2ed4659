//! Result tables as CSV, JSON or markdown.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use super::benchmark::ResultRow;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::InvalidArgument(format!(
                "unknown table format '{s}'"
            ))),
        }
    }
}

const HEADER: [&str; 6] = ["dataset", "method", "mean", "std", "time", "repeats"];

/// Render rows with columns dataset, method, mean, std, time, repeats. The
/// markdown form bolds the lowest mean of each dataset.
pub fn render_table(rows: &[ResultRow], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&HEADER.join(","));
            out.push('\n');
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{:.2},{:.2},{:.3},{}",
                    csv_field(&r.dataset),
                    csv_field(&r.method),
                    r.mean_error_pct,
                    r.std_error_pct,
                    r.mean_fit_seconds,
                    r.repeats
                );
            }
        }
        TableFormat::Json => {
            let v: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "dataset": r.dataset,
                        "method": r.method,
                        "mean": r.mean_error_pct,
                        "std": r.std_error_pct,
                        "time": r.mean_fit_seconds,
                        "repeats": r.repeats,
                    })
                })
                .collect();
            out = serde_json::to_string_pretty(&v).expect("rows serialize");
            out.push('\n');
        }
        TableFormat::Markdown => {
            let mut best: BTreeMap<&str, f64> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.mean_error_pct.is_finite()) {
                let e = best.entry(&r.dataset).or_insert(f64::INFINITY);
                *e = e.min(r.mean_error_pct);
            }
            let _ = writeln!(out, "| {} |", HEADER.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
            for r in rows {
                let mean = format!("{:.2}", r.mean_error_pct);
                let mean = if best.get(r.dataset.as_str()) == Some(&r.mean_error_pct) {
                    format!("**{mean}**")
                } else {
                    mean
                };
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {:.2} | {:.3} | {} |",
                    r.dataset, r.method, mean, r.std_error_pct, r.mean_fit_seconds, r.repeats
                );
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
