//! Reports and their JSON / text renderings.
//!
//! JSON field order follows the struct declarations and witness points are
//! sorted maps, so a report serialises to the same bytes every time.
//! Timings appear only in the text rendering.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::Duration;

use rhoconn::transport::DiscreteCurve;
use rhoconn::verify::Residual;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Error => "error",
        }
    }
}

/// Finite values as JSON numbers, the rest as the strings `inf`, `-inf`, `nan`.
mod float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub label: String,
    #[serde(with = "float")]
    pub value: f64,
    /// `at_most` residuals pass when `value ≤ tolerance`, `at_least` ones when `value ≥ tolerance`.
    pub bound: String,
    #[serde(with = "float")]
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<BTreeMap<String, f64>>,
}

impl From<&Residual> for ResidualEntry {
    fn from(r: &Residual) -> Self {
        ResidualEntry {
            label: r.label.clone(),
            value: r.value,
            bound: if r.lower_bound { "at_least" } else { "at_most" }.into(),
            tolerance: r.tolerance,
            passed: r.passed,
            witness: r.witness.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub kind: String,
    pub status: Status,
    /// `fail` for checks marked as expected failures.
    pub expected: Status,
    /// Whether the status matches the expectation.
    pub ok: bool,
    /// The identity or construction this check exercises.
    pub exercises: String,
    pub residuals: Vec<ResidualEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub elapsed: Option<Duration>,
    #[serde(skip)]
    pub curve: Option<DiscreteCurve>,
}

impl CheckReport {
    pub fn max_residual(&self) -> Option<f64> {
        self.residuals.iter().filter(|r| r.bound == "at_most").map(|r| r.value).reduce(f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub expected_failures: usize,
    pub unexpected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(with = "float")]
    pub h_step: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_override: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub status: Status,
    pub settings: Settings,
    pub summary: Summary,
    pub checks: Vec<CheckReport>,
}

impl Report {
    pub fn new(scenario: String, settings: Settings, checks: Vec<CheckReport>) -> Self {
        let mut summary = Summary { total: checks.len(), ..Summary::default() };
        for c in &checks {
            match c.status {
                Status::Pass => summary.passed += 1,
                Status::Fail => summary.failed += 1,
                Status::Error => summary.errors += 1,
            }
            if c.expected == Status::Fail && c.ok {
                summary.expected_failures += 1;
            }
            if !c.ok {
                summary.unexpected += 1;
            }
        }
        let status = if summary.unexpected == 0 { Status::Pass } else { Status::Fail };
        Report { scenario, status, settings, summary, checks }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

pub fn emit_report(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("reports always serialise");
            out.push(b'\n');
            out
        }
        Format::Text => render_text(report).into_bytes(),
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<Report, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn sci(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_finite() {
        format!("{v:.3e}")
    } else {
        format!("{v}")
    }
}

/// Left-aligned columns separated by two spaces.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(cell);
            if i + 1 < cells.len() {
                s.push_str(&" ".repeat(w - cell.chars().count()));
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(headers.to_vec(), &mut out);
    line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn format_point(p: &BTreeMap<String, f64>) -> String {
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let s = &report.settings;
    writeln!(out, "scenario {}: {}", report.scenario, report.status.label().to_uppercase()).unwrap();
    write!(out, "h_step {}  samples {}  seed {}", s.h_step, s.samples, s.seed).unwrap();
    if let Some(t) = s.tol_override {
        write!(out, "  tol {t}").unwrap();
    }
    out.push_str("\n\n");

    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            let status = match (c.status, c.expected, c.ok) {
                (st, Status::Fail, true) => format!("{} (expected)", st.label()),
                (st, Status::Fail, false) => format!("{} (expected fail)", st.label()),
                (st, _, _) => st.label().to_string(),
            };
            vec![
                c.name.clone(),
                c.kind.clone(),
                status,
                c.max_residual().map_or("-".into(), sci),
                c.elapsed.map_or("-".into(), |d| format!("{:.1} ms", d.as_secs_f64() * 1e3)),
            ]
        })
        .collect();
    out.push_str(&table(&["check", "kind", "status", "max residual", "time"], &rows));

    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .flat_map(|c| {
            c.residuals.iter().map(move |r| {
                let op = if r.bound == "at_least" { ">=" } else { "<=" };
                vec![
                    c.name.clone(),
                    r.label.clone(),
                    sci(r.value),
                    format!("{op} {}", sci(r.tolerance)),
                    if r.passed { "ok" } else { "FAIL" }.into(),
                ]
            })
        })
        .collect();
    if !rows.is_empty() {
        out.push('\n');
        out.push_str(&table(&["check", "residual", "value", "bound", "result"], &rows));
    }

    let notes: Vec<String> = report
        .checks
        .iter()
        .flat_map(|c| c.notes.iter().map(move |n| format!("  {}: {n}", c.name)))
        .collect();
    if !notes.is_empty() {
        out.push_str("\nnotes\n");
        for n in notes {
            writeln!(out, "{n}").unwrap();
        }
    }

    let failing: Vec<&CheckReport> = report.checks.iter().filter(|c| c.status != Status::Pass).collect();
    if !failing.is_empty() {
        out.push_str("\nfailures\n");
        for c in failing {
            let tag = if c.ok { " (expected)" } else { "" };
            writeln!(out, "  {} [{}]{tag}", c.name, c.status.label()).unwrap();
            if let Some(e) = &c.error {
                writeln!(out, "    error: {e}").unwrap();
            }
            for r in c.residuals.iter().filter(|r| !r.passed) {
                write!(out, "    {} = {}", r.label, sci(r.value)).unwrap();
                if let Some(w) = &r.witness {
                    write!(out, " at {}", format_point(w)).unwrap();
                }
                out.push('\n');
            }
        }
    }

    let m = &report.summary;
    writeln!(
        out,
        "\n{} checks: {} passed, {} failed, {} errors ({} expected failures)",
        m.total, m.passed, m.failed, m.errors, m.expected_failures
    )
    .unwrap();
    out
}
