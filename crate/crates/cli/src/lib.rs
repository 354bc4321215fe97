//! Experiment runner for the `parlang` samplers.
//!
//! `parlang --config run.toml [--seed S] [--out DIR] [--threads T]` writes
//! `manifest.json`, `metrics.csv` and optionally `residuals.csv` into the
//! output directory. Exit status: 0 if every metric passes, 1 if any
//! fails, 2 for an invalid config or a run the library refuses.

pub mod config;
pub mod report;
pub mod runner;
pub mod suite;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "parlang", version, about = "Parallel Langevin sampling experiments")]
pub struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config. Defaults to `parlang-out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_PASS };
        }
    };
    match run(&args) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

/// Runs one experiment; `Ok(false)` if some metric failed.
pub fn run(args: &Args) -> anyhow::Result<bool> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("parlang-out"));
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;

    let started = chrono::Utc::now();
    let clock = Instant::now();
    let output = pool.install(|| runner::execute(&cfg, &base))?;
    let elapsed = clock.elapsed().as_secs_f64();
    let finished = chrono::Utc::now();

    std::fs::create_dir_all(&out_dir)?;
    report::write_metrics(&out_dir.join("metrics.csv"), &output.rows)?;
    if cfg.residuals {
        report::write_residuals(&out_dir.join("residuals.csv"), &output.residuals)?;
    }
    let manifest = json!({
        "tool": "parlang",
        "version": env!("CARGO_PKG_VERSION"),
        "config_path": args.config.display().to_string(),
        "config": cfg,
        "seed": cfg.seed,
        "threads": pool.current_num_threads(),
        "desk_override": cfg.desk_override(),
        "run": output.details,
        "passed": output.passed(),
        "started_at": started.to_rfc3339(),
        "finished_at": finished.to_rfc3339(),
        "elapsed_seconds": elapsed,
    });
    report::write_manifest(&out_dir.join("manifest.json"), &manifest)?;

    for row in output.rows.iter().filter(|r| !r.pass) {
        eprintln!(
            "FAIL {} {} {} = {} (want {})",
            row.module, row.claim_anchor, row.metric, row.value, row.threshold
        );
    }
    println!(
        "{} metrics, {} failed; results in {}",
        output.rows.len(),
        output.rows.iter().filter(|r| !r.pass).count(),
        out_dir.display()
    );
    Ok(output.passed())
}
