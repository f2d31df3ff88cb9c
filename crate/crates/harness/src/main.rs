use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cafe_lab::experiment::execute_all;
use cafe_lab::omega::{estimate, parse_compressor};
use cafe_lab::output::{ensure_dir, write_json, write_run};
use cafe_lab::report::write_report;
use cafe_lab::sweep::{run_sweep, AGGREGATE_FILE, WIDE_FILE};
use cafe_lab::verify::{canonical_config, verify, CheckStatus, VerifyOptions};
use cafe_lab::{ExperimentConfig, HarnessError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cafe",
    version,
    about = "Compressed distributed gradient descent experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every `[[runs]]` variant at every seed and write traces.
    Run(Common),
    /// Run the `[sweep]` grid and write per-cell and aggregate CSVs.
    Sweep(Common),
    /// Run variants with full history and check bounds and per-round inequalities.
    /// Without `--config` the built-in verification suite is used.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inflate_grad_norms: Option<f64>,
    },
    /// Turn a directory of run traces into mean curves and SVG charts.
    Report {
        /// Directory containing `*.summary.json` files (searched two levels deep).
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the analytic and sampled contraction factor of a compressor.
    EstimateOmega {
        /// identity, topk:K, svd:R, quant:B, or topk:K+quant:B / svd:R+quant:B.
        #[arg(long)]
        compressor: String,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Check(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Check(e.to_string())
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    apply_seed(&mut cfg, common.seed);
    Ok(cfg)
}

fn apply_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Failure::Usage(format!("cannot start thread pool: {e}"))),
    }
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    if cfg.runs.is_empty() {
        return Err(Failure::Usage(
            "invalid config field `runs`: no [[runs]] entries".into(),
        ));
    }
    let dir = out_dir(common, &cfg).join("runs");
    let groups = with_jobs(common.jobs, || execute_all(&cfg, false))??;
    let config_toml = cfg.to_toml();
    let mut diverged = Vec::new();
    for (_, outcomes) in &groups {
        for o in outcomes {
            let (trace, _) = write_run(&dir, o, &config_toml)?;
            let t = &o.trace;
            println!(
                "{:<40} gamma={:.4e} rounds={} f={:.6e} |grad|^2={:.6e} uplink={}B -> {}",
                o.id,
                t.config.gamma,
                t.records.len(),
                t.final_f_value,
                t.final_grad_norm_sq,
                t.records.last().map_or(0, |r| r.uplink_bytes_total),
                trace.display()
            );
            if t.diverged() {
                diverged.push(format!("{} ({:?})", o.id, t.status));
            }
        }
    }
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("diverged: {}", diverged.join(", "))))
    }
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let dir = out_dir(common, &cfg);
    let summary = with_jobs(common.jobs, || run_sweep(&cfg, &dir))??;
    let flagged = summary.cells.iter().filter(|c| c.error.is_some()).count();
    let diverged = summary
        .cells
        .iter()
        .filter(|c| c.summary.as_ref().is_some_and(|s| s.diverged))
        .count();
    println!(
        "{} cells ({} diverged, {} failed) -> {}, {}",
        summary.cells.len(),
        diverged,
        flagged,
        dir.join(WIDE_FILE).display(),
        dir.join(AGGREGATE_FILE).display()
    );
    Ok(())
}

fn cmd_verify(common: &Common, inflate: Option<f64>) -> Result<(), Failure> {
    let cfg = match &common.config {
        Some(_) => load(common)?,
        None => {
            let mut cfg = canonical_config();
            apply_seed(&mut cfg, common.seed);
            cfg
        }
    };
    let opts = VerifyOptions {
        inflate_grad_norms: inflate,
    };
    let report = with_jobs(common.jobs, || verify(&cfg, opts))??;
    for (check, counts) in &report.counts {
        let parts: Vec<String> = counts.iter().map(|(s, n)| format!("{} {n}", s.tag())).collect();
        println!("{check:<18} {}", parts.join(", "));
    }
    for c in report
        .checks
        .iter()
        .filter(|c| matches!(c.status, CheckStatus::Fail | CheckStatus::Warn))
    {
        println!("{} {} {}: {}", c.status.tag(), c.run_id, c.check, c.detail);
    }
    for c in report
        .checks
        .iter()
        .filter(|c| c.check == "bound" && c.status == CheckStatus::NotApplicable)
    {
        eprintln!("warning: {} bound not applicable: {}", c.run_id, c.detail);
    }
    if let Some(dir) = common.out.as_ref().or(cfg.out_dir.as_ref()) {
        ensure_dir(dir)?;
        write_json(&dir.join("verify_report.json"), &report)?;
    }
    if report.passed {
        println!("verification passed");
        Ok(())
    } else {
        Err(Failure::Check("verification failed".into()))
    }
}

fn cmd_report(input: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let out = out.unwrap_or(input);
    let r = write_report(input, out)?;
    for path in r.curve_files.iter().chain(r.charts.iter().map(|c| &c.path)) {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Verify {
            common,
            inflate_grad_norms,
        } => cmd_verify(common, *inflate_grad_norms),
        Command::Report { input, out } => cmd_report(input, out.as_deref()),
        Command::EstimateOmega {
            compressor,
            dim,
            samples,
            seed,
        } => parse_compressor(compressor)
            .and_then(|spec| estimate(&spec, *dim, *samples, *seed))
            .map_err(|e| Failure::Usage(e.to_string()))
            .map(|r| {
                let analytic = r.analytic.map_or("none".to_string(), |w| format!("{w:.6}"));
                println!(
                    "{} d={} analytic={} sampled={:.6} ({} samples, seed {})",
                    r.compressor, r.dim, analytic, r.estimate, r.samples, r.seed
                );
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
