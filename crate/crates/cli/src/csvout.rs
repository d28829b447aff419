//! CSV rendering and parsing of sweep results. The format is pinned:
//! `#`-prefixed comment lines (config echo, warnings, diagnostics), one
//! header row, then one row per (variant, N) with floats at 17 significant
//! digits so parsing back reproduces every value exactly.

use crate::config::{echo_lines, ExperimentConfig};
use crate::experiment::SweepOutcome;
use bgconv::estimator::VariantKind;
use std::fmt::Write as _;

pub const HEADER: &str = "variant,N,E,rel_E,bound_ratio,gamma,runtime_ms";

fn push_float(out: &mut String, value: f64) {
    let _ = write!(out, "{value:.16e}");
}

/// Renders the complete CSV document for a sweep.
pub fn render(
    config: &ExperimentConfig,
    outcome: &SweepOutcome,
    include_reference: bool,
) -> String {
    let mut out = echo_lines(config);
    for warning in &outcome.warnings {
        let _ = writeln!(out, "# warning: {warning}");
    }
    for diagnostic in &outcome.diagnostics {
        let _ = writeln!(out, "# diagnostics: {diagnostic}");
    }
    if include_reference {
        let _ = write!(out, "# reference: K/n = ");
        push_float(&mut out, outcome.ceiling);
        out.push('\n');
    }
    out.push_str(HEADER);
    out.push('\n');
    for row in &outcome.rows {
        let _ = write!(out, "{},{},", row.variant, row.groups);
        push_float(&mut out, row.error);
        out.push(',');
        push_float(&mut out, row.rel_error);
        out.push(',');
        if let Some(ratio) = row.bound_ratio {
            push_float(&mut out, ratio);
        }
        out.push(',');
        if let Some(gamma) = row.gamma {
            push_float(&mut out, gamma);
        }
        out.push(',');
        if let Some(ms) = row.runtime_ms {
            let _ = write!(out, "{ms}");
        }
        out.push('\n');
    }
    out
}

/// A parsed CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub variant: VariantKind,
    pub groups: usize,
    pub error: f64,
    pub rel_error: f64,
    pub bound_ratio: Option<f64>,
    pub gamma: Option<f64>,
    pub runtime_ms: Option<u128>,
}

/// Parses a CSV document produced by [`render`]: comments are skipped, the
/// header is checked, and each data row is converted back to numbers.
pub fn parse(text: &str) -> Result<Vec<ParsedRow>, String> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let at = |msg: String| format!("line {}: {msg}", idx + 1);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != HEADER {
                return Err(at(format!("expected header `{HEADER}`, got `{line}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(at(format!("expected 7 fields, got {}", fields.len())));
        }
        let opt_f64 = |s: &str, what: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| at(format!("invalid {what} `{s}`")))
            }
        };
        rows.push(ParsedRow {
            variant: fields[0].parse().map_err(at)?,
            groups: fields[1]
                .parse()
                .map_err(|_| at(format!("invalid group count `{}`", fields[1])))?,
            error: opt_f64(fields[2], "E")?.ok_or_else(|| at("missing E".into()))?,
            rel_error: opt_f64(fields[3], "rel_E")?
                .ok_or_else(|| at("missing rel_E".into()))?,
            bound_ratio: opt_f64(fields[4], "bound_ratio")?,
            gamma: opt_f64(fields[5], "gamma")?,
            runtime_ms: if fields[6].is_empty() {
                None
            } else {
                Some(
                    fields[6]
                        .parse::<u128>()
                        .map_err(|_| at(format!("invalid runtime `{}`", fields[6])))?,
                )
            },
        });
    }
    if !saw_header {
        return Err("no header row found".into());
    }
    Ok(rows)
}
