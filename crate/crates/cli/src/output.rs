//! Result files: `records.csv`, `summary.json` and `trace.svg`.

use std::fmt::Write as _;
use std::path::Path;

use lookahes_core::runner::{MetricsSummary, RunResult};
use serde::Serialize;

use crate::CliError;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

pub fn records_csv(run: &RunResult) -> Result<Vec<u8>, CliError> {
    let dim = run.start_point.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend(["y", "step_cost", "cum_cost", "acq_value"].map(String::from));
    header.extend((0..dim).map(|i| format!("a{i}")));
    header.extend(["regret", "wall_ms"].map(String::from));
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &run.records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.query.iter().copied().map(fmt_f64));
        row.extend([r.observation, r.step_cost, r.cumulative_cost, r.acq_value].map(fmt_f64));
        row.extend(r.action.iter().copied().map(fmt_f64));
        row.extend([r.regret, r.wall_ms].map(fmt_f64));
        w.write_record(&row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'static str,
    seed: u64,
    final_action: &'a [f64],
    final_value: f64,
    final_value_scaled: f64,
    final_regret: f64,
    best_observed: f64,
    best_observed_value: f64,
    start_point: &'a [f64],
    metrics: &'a MetricsSummary,
    config: &'a lookahes_core::runner::ExperimentConfig,
}

pub fn summary_json(run: &RunResult, metrics: &MetricsSummary) -> Result<Vec<u8>, CliError> {
    let s = Summary {
        version: env!("CARGO_PKG_VERSION"),
        seed: run.seed,
        final_action: &run.final_action,
        final_value: run.final_value,
        final_value_scaled: run.final_value / 3.0,
        final_regret: run.final_regret,
        best_observed: run.best_observed,
        best_observed_value: run.best_observed_value,
        start_point: &run.start_point,
        metrics,
        config: &run.config,
    };
    let mut out = serde_json::to_vec_pretty(&s).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Line plot of the observations and the regret against the step.
pub fn trace_svg(run: &RunResult) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (56.0, 16.0, 28.0, 40.0);
    let steps: Vec<f64> = run.records.iter().map(|r| r.step as f64).collect();
    let ys: Vec<f64> = run.records.iter().map(|r| r.observation).collect();
    let regrets: Vec<f64> = run.records.iter().map(|r| r.regret).collect();
    let finite = ys.iter().chain(&regrets).copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-3.0, 3.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let n = steps.last().copied().unwrap_or(1.0).max(1.0);
    let sx = |s: f64| left + (s - 1.0).max(0.0) / (n - 1.0).max(1.0) * (w - left - right);
    let sy = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="16" font-size="13">{} / {} / seed {}</text>"#,
        escape(&run.config.env.name),
        run.config.acquisition.kind.name(),
        run.seed
    );
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let _ = writeln!(svg, r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(svg, r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, y + 4.0);
    }
    for k in 0..=4 {
        let s = 1.0 + (n - 1.0) * k as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, sx(s), y1 + 14.0, s.round());
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">step</text>"#, (x0 + x1) / 2.0, h - 6.0);
    for (values, color, label, offset) in [(&ys, "#1f77b4", "observation", 0.0), (&regrets, "#d62728", "regret", 100.0)] {
        let pts: Vec<String> = steps
            .iter()
            .zip(values.iter())
            .filter(|(_, v)| v.is_finite())
            .map(|(s, v)| format!("{:.2},{:.2}", sx(*s), sy(*v)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        }
        let lx = x1 - 200.0 + offset;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="12" x2="{}" y2="12" stroke="{color}" stroke-width="2"/>"#, lx + 16.0);
        let _ = writeln!(svg, r#"<text x="{}" y="16">{label}</text>"#, lx + 20.0);
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write all three files for one run into `dir`.
pub fn write_run(dir: &Path, run: &RunResult, metrics: &MetricsSummary) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files: [(&str, Vec<u8>); 3] = [
        ("records.csv", records_csv(run)?),
        ("summary.json", summary_json(run, metrics)?),
        ("trace.svg", trace_svg(run).into_bytes()),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 3.0, 123456.789] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }
}
