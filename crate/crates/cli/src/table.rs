//! Name/value/status rows shared by the experiment drivers.
//!
//! Every experiment that checks quantities against closed forms or
//! tolerances reports them as a flat row table: printed to stdout for
//! humans and written as CSV plus JSON for machines. Schema:
//!
//! ```text
//! name,value,expected,tolerance,status
//! ```
//!
//! `expected` and `tolerance` are empty (CSV) or `null` (JSON) for
//! informational rows. Floats are printed with 17 significant digits so
//! the text representation round-trips to the same bits.

use obflow_core::io::format_f64_17;
use obflow_core::Result;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The value met its tolerance.
    Pass,
    /// The value missed its tolerance (or was not finite).
    Fail,
    /// Informational value with no gate.
    Info,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub value: f64,
    /// Target value when the row checks against a closed form.
    pub expected: Option<f64>,
    /// Gate on `|value - expected|`, or on `|value|` when no target is set.
    pub tolerance: Option<f64>,
    pub status: Status,
}

impl Row {
    /// A quantity that should vanish: passes when `|value| <= tolerance`.
    pub fn residual(name: impl Into<String>, value: f64, tolerance: f64) -> Row {
        let ok = value.is_finite() && value.abs() <= tolerance;
        Row {
            name: name.into(),
            value,
            expected: None,
            tolerance: Some(tolerance),
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    /// A quantity with a known target: passes when
    /// `|value - expected| <= tolerance`.
    pub fn target(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Row {
        let ok = value.is_finite() && (value - expected).abs() <= tolerance;
        Row {
            name: name.into(),
            value,
            expected: Some(expected),
            tolerance: Some(tolerance),
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    /// An ungated value reported for the record.
    pub fn info(name: impl Into<String>, value: f64) -> Row {
        Row {
            name: name.into(),
            value,
            expected: None,
            tolerance: None,
            status: Status::Info,
        }
    }
}

/// Number of rows whose gate failed.
pub fn failed(rows: &[Row]) -> usize {
    rows.iter().filter(|r| r.status == Status::Fail).count()
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(format_f64_17).unwrap_or_default()
}

pub fn render_rows_csv(rows: &[Row]) -> String {
    let mut out = String::from("name,value,expected,tolerance,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name,
            format_f64_17(r.value),
            csv_opt(r.expected),
            csv_opt(r.tolerance),
            r.status.label()
        ));
    }
    out
}

fn json_num(v: f64) -> String {
    if v.is_finite() {
        format_f64_17(v)
    } else {
        "null".to_string()
    }
}

fn json_opt(v: Option<f64>) -> String {
    v.map(json_num).unwrap_or_else(|| "null".to_string())
}

pub fn render_rows_json(rows: &[Row]) -> String {
    if rows.is_empty() {
        return "[]\n".to_string();
    }
    let mut out = String::from("[");
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "\n  {{\"name\": \"{}\", \"value\": {}, \"expected\": {}, \"tolerance\": {}, \"status\": \"{}\"}}",
            r.name,
            json_num(r.value),
            json_opt(r.expected),
            json_opt(r.tolerance),
            r.status.label()
        ));
    }
    out.push_str("\n]\n");
    out
}

/// Write `<stem>.csv` and `<stem>.json` under `dir`.
pub fn write_rows(dir: &Path, stem: &str, rows: &[Row]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, render_rows_csv(rows))?;
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, render_rows_json(rows))?;
    Ok((csv_path, json_path))
}

pub fn print_rows(rows: &[Row]) {
    for r in rows {
        let mut line = format!("  {:<40} {:>24}", r.name, format_f64_17(r.value));
        if let Some(e) = r.expected {
            line.push_str(&format!("  expected {}", format_f64_17(e)));
        }
        if let Some(t) = r.tolerance {
            line.push_str(&format!("  tol {t:.1e}"));
        }
        println!("{line}  {}", r.status.label());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_carry_all_cells() {
        let rows = vec![
            Row::residual("a", 1e-12, 1e-10),
            Row::target("b", 12.0, 12.0 + 1e-7, 1e-6),
            Row::info("c", f64::NAN),
            Row::residual("d", 0.5, 1e-3),
        ];
        let csv = render_rows_csv(&rows);
        assert!(csv.starts_with("name,value,expected,tolerance,status\n"));
        let expected_a = format!(
            "a,{},,{},PASS",
            format_f64_17(1e-12),
            format_f64_17(1e-10)
        );
        assert!(csv.contains(&expected_a), "csv: {csv}");
        assert!(csv.contains(",FAIL\n"));
        let json = render_rows_json(&rows);
        assert!(json.contains("\"value\": null")); // NaN is not a JSON number
        assert!(json.contains("\"status\": \"INFO\""));
        assert_eq!(failed(&rows), 1);
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(render_rows_csv(&[]), "name,value,expected,tolerance,status\n");
        assert_eq!(render_rows_json(&[]), "[]\n");
    }

    #[test]
    fn non_finite_values_never_pass() {
        let r = Row::residual("x", f64::NAN, f64::INFINITY);
        assert_eq!(r.status, Status::Fail);
        let r = Row::target("y", f64::INFINITY, 1.0, f64::INFINITY);
        assert_eq!(r.status, Status::Fail);
    }
}
