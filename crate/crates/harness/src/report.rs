//! Plot data from a directory of run summaries: one mean curve per
//! (algorithm, compressor) and one SVG chart per compressor.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::HarnessError;
use crate::experiment::sanitize;
use crate::output::{ensure_dir, fmt_f64, read_summary, read_trace_csv, write_rows};

const SUMMARY_SUFFIX: &str = ".summary.json";

type Series = Vec<(f64, f64)>;

/// Mean over seeds, truncated to the shortest trace in the group.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub algorithm: String,
    pub compressor: String,
    pub seeds: usize,
    pub f_value: Vec<f64>,
    pub grad_norm_sq: Vec<f64>,
}

/// Axis ranges of an emitted chart; `y` is in log10 units.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartInfo {
    pub path: PathBuf,
    pub compressor: String,
    pub series: Vec<String>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub data_x: (f64, f64),
    pub data_y: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOutput {
    pub curve_files: Vec<PathBuf>,
    pub charts: Vec<ChartInfo>,
}

fn find_summaries(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_dir() && depth > 0 {
            find_summaries(&path, depth - 1, out)?;
        } else if path.to_string_lossy().ends_with(SUMMARY_SUFFIX) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn load_curves(dir: &Path) -> Result<Vec<Curve>, HarnessError> {
    let mut paths = Vec::new();
    if dir.is_dir() {
        find_summaries(dir, 2, &mut paths)?;
    }
    paths.sort();
    // (algorithm, compressor) -> per-seed (f, ‖∇f‖²) series
    let mut groups: BTreeMap<(String, String), Vec<Series>> = BTreeMap::new();
    for path in &paths {
        let s = read_summary(path)?;
        let trace_path = path.parent().unwrap_or(Path::new(".")).join(&s.trace_file);
        let rows = read_trace_csv(&trace_path)?;
        groups
            .entry((s.algorithm, s.compressor_label))
            .or_default()
            .push(rows.iter().map(|r| (r.f_value, r.grad_norm_sq)).collect());
    }
    if groups.is_empty() {
        return Err(HarnessError::MissingTraces(dir.to_path_buf()));
    }
    Ok(groups
        .into_iter()
        .map(|((algorithm, compressor), traces)| {
            let len = traces.iter().map(Vec::len).min().unwrap_or(0);
            let n = traces.len() as f64;
            let mean = |pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
                (0..len)
                    .map(|k| traces.iter().map(|t| pick(&t[k])).sum::<f64>() / n)
                    .collect()
            };
            Curve {
                algorithm,
                compressor,
                seeds: traces.len(),
                f_value: mean(|p| p.0),
                grad_norm_sq: mean(|p| p.1),
            }
        })
        .collect())
}

pub fn write_report(input: &Path, out: &Path) -> Result<ReportOutput, HarnessError> {
    let curves = load_curves(input)?;
    ensure_dir(out)?;
    let mut curve_files = Vec::new();
    for c in &curves {
        let path = out.join(format!(
            "curve__{}__{}.csv",
            sanitize(&c.algorithm),
            sanitize(&c.compressor)
        ));
        let rows: Vec<Vec<String>> = (0..c.f_value.len())
            .map(|k| {
                vec![
                    k.to_string(),
                    fmt_f64(c.f_value[k]),
                    fmt_f64(c.grad_norm_sq[k]),
                    c.seeds.to_string(),
                ]
            })
            .collect();
        write_rows(&path, &["k", "f_value_mean", "grad_norm_sq_mean", "seeds"], &rows)?;
        curve_files.push(path);
    }
    let mut by_compressor: BTreeMap<&str, Vec<&Curve>> = BTreeMap::new();
    for c in &curves {
        by_compressor.entry(c.compressor.as_str()).or_default().push(c);
    }
    let mut charts = Vec::new();
    for (compressor, group) in by_compressor {
        let path = out.join(format!("chart__{}.svg", sanitize(compressor)));
        let (svg, info) = render_chart(compressor, &group, path.clone());
        fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
        charts.push(info);
    }
    Ok(ReportOutput { curve_files, charts })
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Log-scale chart of the mean `‖∇f‖²` against rounds. Non-positive values
/// cannot be drawn on a log axis and are skipped.
fn render_chart(title: &str, curves: &[&Curve], path: PathBuf) -> (String, ChartInfo) {
    let points: Vec<Vec<(f64, f64)>> = curves
        .iter()
        .map(|c| {
            c.grad_norm_sq
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.0 && v.is_finite())
                .map(|(k, v)| (k as f64, v.log10()))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let data_x = (x0, x1);
    let data_y = (y0, y1);
    let (ax0, ax1) = (0.0f64.min(x0), if x1 > x0 { x1 } else { x0 + 1.0 });
    let (ay0, mut ay1) = (y0.floor(), y1.ceil());
    if ay1 <= ay0 {
        ay1 = ay0 + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - ax0) / (ax1 - ax0) * pw;
    let sy = |y: f64| TOP + (ay1 - y) / (ay1 - ay0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut decade = ay0;
    while decade <= ay1 + 1e-9 {
        let y = sy(decade);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            decade as i64
        );
        decade += ((ay1 - ay0) / 8.0).ceil().max(1.0);
    }
    for i in 0..=5 {
        let xv = ax0 + (ax1 - ax0) * i as f64 / 5.0;
        let x = sx(xv);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            xv.round() as i64
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">round k</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">mean squared gradient norm</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let mut series = Vec::new();
    for (i, (c, pts)) in curves.iter().zip(&points).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{} (n={})</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&c.algorithm),
            c.seeds
        );
        series.push(c.algorithm.clone());
    }
    s.push_str("</svg>\n");
    let info = ChartInfo {
        path,
        compressor: title.to_string(),
        series,
        x_range: (ax0, ax1),
        y_range: (ay0, ay1),
        data_x,
        data_y,
    };
    (s, info)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
