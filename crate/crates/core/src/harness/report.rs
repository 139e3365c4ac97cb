//! Report serialisation.
//!
//! CSV has one row per condition and mode with the columns in
//! [`CSV_COLUMNS`]; per-channel mean counts are joined with `;` and absent
//! values are empty. The markdown table has one row per object and pipeline
//! variant and one column per lighting condition and window.

use std::collections::BTreeSet;
use std::path::Path;

use super::{ConditionResult, EvalReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" | "markdown-table" => Ok(ReportFormat::Markdown),
            _ => Err(Error::arg(format!("unknown report format {s:?}"))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 17] = [
    "object",
    "lighting",
    "window_ms",
    "mode",
    "quantized",
    "kep",
    "scenes",
    "successes",
    "success_rate",
    "mean_counts",
    "mean_speed",
    "mean_raw_events",
    "mean_input_events",
    "mean_main_events",
    "mean_key_events",
    "key_purity",
    "mean_wall_us",
];

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => Ok(render_markdown(report)),
    }
}

pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    std::fs::write(path, render_report(report, format)?)?;
    Ok(())
}

/// Reads a report previously written as JSON.
pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(0, e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for c in &report.conditions {
        let counts: Vec<String> = c.mean_counts.iter().map(f64::to_string).collect();
        w.write_record([
            c.object.name().to_string(),
            c.lighting.name().to_string(),
            c.window_ms.to_string(),
            c.mode.name().to_string(),
            c.quantized.to_string(),
            c.kep.to_string(),
            c.scenes.to_string(),
            c.successes.to_string(),
            c.success_rate.to_string(),
            counts.join(";"),
            c.mean_speed.to_string(),
            c.mean_raw_events.to_string(),
            c.mean_input_events.to_string(),
            opt(c.mean_main_events),
            opt(c.mean_key_events),
            opt(c.key_purity),
            opt(c.mean_wall_us),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn variant(c: &ConditionResult) -> String {
    let mut s = c.mode.name().to_string();
    if c.kep {
        s.push_str("+kep");
    }
    if c.quantized {
        s.push_str(" int8");
    }
    s
}

fn render_markdown(report: &EvalReport) -> String {
    let columns: BTreeSet<_> = report.conditions.iter().map(|c| (c.lighting, c.window_ms)).collect();
    let mut rows: Vec<(String, String)> = Vec::new();
    for c in &report.conditions {
        let key = (c.object.name().to_string(), variant(c));
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    let mut out = String::from("| Object | Method |");
    for (lighting, window) in &columns {
        out.push_str(&format!(" {} {} ms |", lighting.name(), window));
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    for (object, method) in &rows {
        out.push_str(&format!("| {object} | {method} |"));
        for &(lighting, window) in &columns {
            let cell = report
                .conditions
                .iter()
                .find(|c| {
                    c.object.name() == object
                        && &variant(c) == method
                        && c.lighting == lighting
                        && c.window_ms == window
                })
                .map(|c| format!("{:.1}%", 100.0 * c.success_rate))
                .unwrap_or_else(|| "n/a".to_string());
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::ObjectKind;
    use crate::harness::{Lighting, Mode};

    fn row(object: ObjectKind, lighting: Lighting, mode: Mode, rate: f64) -> ConditionResult {
        ConditionResult {
            object,
            lighting,
            window_ms: 50,
            mode,
            quantized: false,
            kep: false,
            scenes: 10,
            successes: (rate * 10.0) as usize,
            success_rate: rate,
            mean_counts: vec![12.5, 3.0],
            mean_speed: 0.8,
            mean_raw_events: 1700.0,
            mean_input_events: 1700.0,
            mean_main_events: None,
            mean_key_events: None,
            key_purity: None,
            mean_wall_us: None,
        }
    }

    fn report() -> EvalReport {
        let mut conditions = Vec::new();
        for object in [ObjectKind::Disk, ObjectKind::TallBlob] {
            for mode in [Mode::Async, Mode::EfSnn] {
                for lighting in [Lighting::Normal, Lighting::LowLight] {
                    conditions.push(row(object, lighting, mode, 0.9));
                }
            }
        }
        EvalReport { config: None, conditions }
    }

    #[test]
    fn json_roundtrip_is_identical() {
        let r = report();
        let text = render_report(&r, ReportFormat::Json).unwrap();
        let back: EvalReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(render_report(&back, ReportFormat::Json).unwrap(), text);
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let text = render_report(&report(), ReportFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS.to_vec());
        assert_eq!(rd.records().count(), 8);
        assert!(text.contains("12.5;3"));
    }

    #[test]
    fn markdown_has_one_row_per_object_and_mode() {
        let text = render_report(&report(), ReportFormat::Markdown).unwrap();
        let body: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(body.len(), 4);
        assert!(body[0].starts_with("| disk | async |"));
        assert!(text.lines().next().unwrap().contains("low-light 50 ms"));
        assert!(body.iter().all(|l| l.matches("90.0%").count() == 2));
    }

    #[test]
    fn unwritable_path_errors() {
        let r = report();
        assert!(emit_report(&r, "/nonexistent-dir/x/report.json", ReportFormat::Json).is_err());
    }
}
