use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cafe_lab::output::read_summary;
use cafe_lab::report::write_report;
use cafe_lab::{ExperimentConfig, HarnessError};

fn cafe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cafe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    out.sort();
    out
}

const MINIMAL: &str = r#"
schema_version = 1
seeds = [1]
rounds = 10

[suite]
kind = "quadratic"
n_clients = 3
dim = 8

[[runs]]
name = "gd"
algorithm = "gd"
"#;

#[test]
fn minimal_run_writes_one_trace_of_ten_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = cafe(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let traces = files_with_suffix(&out.join("runs"), ".csv");
    assert_eq!(traces.len(), 1);
    let text = fs::read_to_string(&traces[0]).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "k,grad_norm_sq,f_value,compression_error_norm_sq,uplink_bytes,downlink_bytes"
    );
    assert_eq!(lines.len(), 11);
}

#[test]
fn summary_config_echo_reparses_to_the_same_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = cafe(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let summary = read_summary(&files_with_suffix(&out.join("runs"), ".summary.json")[0]).unwrap();
    let echoed = ExperimentConfig::from_toml(&summary.config).unwrap();
    assert_eq!(echoed, ExperimentConfig::from_toml(MINIMAL).unwrap());
}

#[test]
fn oversized_step_diverges_with_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
schema_version = 1
seeds = [1]
rounds = 200

[suite]
kind = "quadratic"
n_clients = 4
dim = 20
kappa = 1000.0

[[runs]]
name = "gd-huge-step"
algorithm = "gd"
step = { rule = "inverse_l", scale = 100.0 }
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    let o = cafe(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    let summary = read_summary(&files_with_suffix(&out.join("runs"), ".summary.json")[0]).unwrap();
    assert!(summary.diverged);
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &MINIMAL.replace("rounds = 10", "rounds = 10\nround_count = 3"),
    );
    let o = cafe(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("round_count"));

    let cfg = write_config(tmp.path(), &MINIMAL.replace("dim = 8", "dim = 0"));
    let o = cafe(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("suite.dim"));

    let o = cafe(&["run", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(cafe(&["run", "--jobs", "2"]).status.code(), Some(1));
    assert_eq!(cafe(&["frobnicate"]).status.code(), Some(1));
}

const SWEEP: &str = r#"
schema_version = 1
seeds = [1, 2, 3]
rounds = 40

[suite]
kind = "quadratic"
n_clients = 4
dim = 400
kappa = 20.0
heterogeneity = 0.5

[sweep]
algorithms = ["dcgd", "cafe"]
top_k_fractions = [0.1, 0.01, 0.001]
step = { rule = "cafe_max" }
"#;

#[test]
fn sweep_is_complete_and_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "4")] {
        let o = cafe(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let wide = fs::read_to_string(a.join("sweep_cells.csv")).unwrap();
    assert_eq!(wide.lines().count(), 1 + 18);
    let mut cells: Vec<String> = wide
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(5).collect::<Vec<_>>().join(","))
        .collect();
    cells.sort();
    cells.dedup();
    assert_eq!(cells.len(), 18, "every grid cell appears exactly once");
    assert_eq!(
        fs::read_to_string(a.join("sweep_aggregate.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 6
    );

    for name in ["sweep_cells.csv", "sweep_aggregate.csv", "sweep_summary.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let traces = files_with_suffix(&a.join("traces"), ".csv");
    assert_eq!(traces.len(), 18);
    for t in traces {
        let other = b.join("traces").join(t.file_name().unwrap());
        assert_eq!(fs::read(&t).unwrap(), fs::read(other).unwrap());
    }
}

#[test]
fn single_cell_aggregate_equals_the_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SWEEP
        .replace("seeds = [1, 2, 3]", "seeds = [2]")
        .replace("algorithms = [\"dcgd\", \"cafe\"]", "algorithms = [\"cafe\"]")
        .replace("[0.1, 0.01, 0.001]", "[0.1]");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    assert_eq!(
        cafe(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let mut wide = csv::Reader::from_path(out.join("sweep_cells.csv")).unwrap();
    let cell: csv::StringRecord = wide.records().next().unwrap().unwrap();
    let wh = wide.headers().unwrap().clone();
    let mut agg = csv::Reader::from_path(out.join("sweep_aggregate.csv")).unwrap();
    let row: csv::StringRecord = agg.records().next().unwrap().unwrap();
    let ah = agg.headers().unwrap().clone();
    let get = |h: &csv::StringRecord, r: &csv::StringRecord, name: &str| {
        r[h.iter().position(|c| c == name).unwrap()].to_string()
    };
    assert_eq!(get(&wh, &cell, "final_f"), get(&ah, &row, "final_f_mean"));
    assert_eq!(
        get(&wh, &cell, "final_grad_norm_sq"),
        get(&ah, &row, "final_grad_norm_sq_mean")
    );
    assert_eq!(get(&ah, &row, "final_f_std"), "0e0");
}

#[test]
fn report_writes_curves_and_charts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SWEEP.replace("[0.1, 0.01, 0.001]", "[0.01]");
    let cfg = write_config(tmp.path(), &text);
    let sweep_dir = tmp.path().join("sweep");
    assert_eq!(
        cafe(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            sweep_dir.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );
    let plots = tmp.path().join("plots");
    let o = cafe(&["report", sweep_dir.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_with_suffix(&plots, ".csv").len(), 2);
    assert_eq!(files_with_suffix(&plots, ".svg").len(), 1);

    let r = write_report(&sweep_dir, &tmp.path().join("again")).unwrap();
    let chart = &r.charts[0];
    assert_eq!(chart.series, vec!["cafe".to_string(), "dcgd".to_string()]);
    assert!(chart.x_range.0 <= chart.data_x.0 && chart.data_x.1 <= chart.x_range.1);
    assert!(chart.y_range.0 <= chart.data_y.0 && chart.data_y.1 <= chart.y_range.1);
    assert_eq!(chart.data_x, (0.0, 39.0));
    let svg = fs::read_to_string(&chart.path).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn report_on_empty_directory_is_missing_traces() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        write_report(tmp.path(), tmp.path()),
        Err(HarnessError::MissingTraces(_))
    ));
    let o = cafe(&["report", tmp.path().to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no run traces"));
}

#[test]
fn verify_reports_inapplicable_bounds_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    // top-1 of 20 has ω = 0.95, so any heterogeneity pushes ωB² past 1.
    let text = r#"
schema_version = 1
seeds = [1, 2]
rounds = 200

[suite]
kind = "quadratic"
n_clients = 6
dim = 20
kappa = 10.0
heterogeneity = 1.0

[[runs]]
name = "cafe-top1"
algorithm = "cafe"
compressor = { kind = "top_k", k = 1 }
step = { rule = "cafe_max" }
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    let o = cafe(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let bound_line = stdout.lines().find(|l| l.starts_with("bound")).unwrap();
    assert!(bound_line.contains("N/A 2"), "{bound_line}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: cafe-top1__seed1 bound not applicable"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
}

#[test]
fn estimate_omega_prints_both_values() {
    let o = cafe(&[
        "estimate-omega",
        "--compressor",
        "topk:10",
        "--dim",
        "100",
        "--samples",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("analytic=0.900000"), "{text}");
    let o = cafe(&[
        "estimate-omega",
        "--compressor",
        "topk:10+quant:4",
        "--dim",
        "100",
        "--samples",
        "50",
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("analytic=none"));
    assert_eq!(
        cafe(&["estimate-omega", "--compressor", "topk:500", "--dim", "100"])
            .status
            .code(),
        Some(1)
    );
}
