//! Report serialization: text table, json document, csv summary and flow traces.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::run::{Payload, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Serialize)]
struct Document<'a> {
    passed: usize,
    failed: usize,
    reports: &'a [Report],
}

fn metric_text(m: Option<f64>) -> String {
    m.map_or_else(|| "-".into(), |v| format!("{v:.3e}"))
}

pub fn render_text(reports: &[Report]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<26} {:<6} {:>11}  {:<28} {:>9}",
        "task", "kind", "status", "metric", "verdict", "time"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<28} {:<26} {:<6} {:>11}  {:<28} {:>7}ms",
            r.task,
            r.kind,
            if r.pass { "PASS" } else { "FAIL" },
            metric_text(r.metric),
            r.verdict,
            r.wall_time.as_millis()
        );
        if let Some(e) = &r.error {
            let _ = writeln!(out, "    error: {e}");
        }
        if let Payload::Identity(id) = &r.result {
            for s in &id.sub_reports {
                let _ = writeln!(
                    out,
                    "    {:<24} sup {:.3e}  {}",
                    s.name,
                    s.sup,
                    if s.pass { "ok" } else { "FAIL" }
                );
            }
        }
        if let Payload::Hypersurface(h) = &r.result {
            for c in &h.checks {
                let _ = writeln!(
                    out,
                    "    {:<24} sup {:.3e}  {}",
                    c.name,
                    c.sup,
                    if c.pass { "ok" } else { "FAIL" }
                );
            }
        }
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    let _ = writeln!(out, "{} passed, {failed} failed", reports.len() - failed);
    out
}

pub fn render_json(reports: &[Report]) -> String {
    let failed = reports.iter().filter(|r| !r.pass).count();
    let doc = Document {
        passed: reports.len() - failed,
        failed,
        reports,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(reports: &[Report]) -> String {
    let mut out = String::from("task,kind,pass,metric,verdict\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.task),
            csv_field(&r.kind),
            r.pass,
            r.metric.map_or(String::new(), |m| format!("{m:?}")),
            csv_field(&r.verdict)
        );
    }
    out
}

/// Writes `reports` in `format` to stdout, or into the directory `out`.
/// With csv output every flow task also gets `<task>.csv` holding its trace.
pub fn emit_reports(reports: &[Report], format: Format, out: Option<&Path>) -> io::Result<()> {
    let body = match format {
        Format::Text => render_text(reports),
        Format::Json => render_json(reports),
        Format::Csv => render_csv(reports),
    };
    let Some(dir) = out else {
        print!("{body}");
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let file = match format {
        Format::Text => "report.txt",
        Format::Json => "report.json",
        Format::Csv => "summary.csv",
    };
    std::fs::write(dir.join(file), body)?;
    if format == Format::Csv {
        for r in reports {
            if let Payload::Flow(trace) = &r.result {
                std::fs::write(dir.join(format!("{}.csv", r.task)), trace.to_csv())?;
            }
        }
    }
    Ok(())
}
