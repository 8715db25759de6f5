//! `tirs`: impact-map generation, rollouts, ablation batches and plots.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure,
//! 3 ablation ordering check failed (`ablation --check`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use tirs_core::controller::Variant;
use tirs_core::harness::{
    impact_dataset, run_ablation, run_rollout, summary_from_csv, write_log_plots, write_summary_plots, AblationMatrix, HarnessError,
    RolloutLog, SUMMARY_HEADER,
};
use tirs_core::impact_map::write_dataset;
use tirs_core::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(name = "tirs", version, about = "Time-invariant reference spreading toolkit")]
struct Cli {
    /// Default output root for commands run without --out.
    #[arg(long, env = "TIRS_OUT_DIR", default_value = "tirs-out", global = true)]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the impact map of a scenario and write the dataset file.
    GenImpactMap {
        scenario: PathBuf,
        /// Grid size; defaults to the scenario's setting.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario and write its per-step log.
    Rollout {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation matrix and write per-rollout and summary tables.
    Ablation {
        matrix: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 3 unless the proposed variant is lowest in every group.
        #[arg(long)]
        check: bool,
    },
    /// Render a rollout log, a summary table or an ablation directory.
    Plot {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Check(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        // the message already embeds its sources
        let msg = anyhow!("{e}");
        if e.is_config_error() {
            Failure::Config(msg)
        } else {
            Failure::Runtime(msg)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::from_json(&read(path)?)
        .with_context(|| format!("scenario {}", path.display()))
        .map_err(Failure::Config)
}

fn gen_impact_map(scenario: &Path, samples: Option<usize>, out: PathBuf) -> Result<(), Failure> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(n) = samples {
        cfg.impact_map.samples = Some(n);
    }
    // always sample, even if the scenario points at a dataset file
    cfg.impact_map.dataset = None;
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    let d = impact_dataset(&cfg)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.into()))?;
    }
    std::fs::write(&out, write_dataset(&d)).map_err(|e| Failure::Runtime(anyhow!("{}: {e}", out.display())))?;
    println!("wrote {} samples to {}", d.len(), out.display());
    Ok(())
}

fn rollout(scenario: &Path, out: PathBuf) -> Result<(), Failure> {
    let cfg = load_scenario(scenario)?;
    let dataset = if cfg.variant.uses_impact_map() { Some(Arc::new(impact_dataset(&cfg)?)) } else { None };
    let log = run_rollout(&cfg, dataset)?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::Runtime(e.into()))?;
    let write = |name: &str, body: String| {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| Failure::Runtime(anyhow!("{}: {e}", p.display())))
    };
    write("log.csv", log.to_csv())?;
    write("scenario.json", cfg.to_json())?;
    println!(
        "{} {} steps, max target accel {:.4}, switch step {:?}, detections {:?}",
        cfg.variant.name(),
        log.records.len(),
        log.max_target_norm(),
        log.switch_step,
        log.detection_steps
    );
    match log.failure {
        Some((k, msg)) => Err(Failure::Runtime(anyhow!("rollout failed at step {k}: {msg}"))),
        None => Ok(()),
    }
}

fn ablation(matrix: &Path, jobs: usize, out: PathBuf, check: bool) -> Result<(), Failure> {
    let m = AblationMatrix::from_json(&read(matrix)?)?;
    let t0 = std::time::Instant::now();
    let report = run_ablation(&m, jobs)?;
    report.write(&out)?;
    let failed = report.failed().count();
    println!("{} rollouts in {:.1?}, {failed} failed; tables in {}", report.cells.len(), t0.elapsed(), out.display());
    for c in report.failed() {
        eprintln!("cell {}: {}", c.index, c.failure.as_deref().unwrap_or(""));
    }
    if failed == report.cells.len() {
        return Err(Failure::Runtime(anyhow!("every rollout failed")));
    }
    if check {
        let v = report.ordering_violations(Variant::Proposed);
        if !v.is_empty() {
            return Err(Failure::Check(v.join("\n")));
        }
    }
    Ok(())
}

fn plot_file(input: &Path, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    let text = read(input)?;
    if text.lines().next() == Some(SUMMARY_HEADER) {
        let rows = summary_from_csv(&text)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("summary");
        Ok(write_summary_plots(&rows, out, stem)?)
    } else {
        let log = RolloutLog::from_csv(&text).map_err(HarnessError::from)?;
        Ok(write_log_plots(&log, out)?)
    }
}

fn plot(input: &Path, out: PathBuf) -> Result<(), Failure> {
    let files = if input.is_dir() {
        let mut inputs: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| Failure::Config(anyhow!("{}: {e}", input.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name == "log.csv" || (name.starts_with("summary_") && name.ends_with(".csv"))
            })
            .collect();
        inputs.sort();
        if inputs.is_empty() {
            return Err(Failure::Config(anyhow!("{} holds no log.csv or summary_*.csv", input.display())));
        }
        let mut files = Vec::new();
        for p in inputs {
            files.extend(plot_file(&p, &out)?);
        }
        files
    } else {
        plot_file(input, &out)?
    };
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let root = cli.out_root;
    let result = match cli.command {
        Command::GenImpactMap { scenario, samples, out } => {
            gen_impact_map(&scenario, samples, out.unwrap_or_else(|| root.join("impact_map.txt")))
        }
        Command::Rollout { scenario, out } => rollout(&scenario, out.unwrap_or_else(|| root.join("rollout"))),
        Command::Ablation { matrix, jobs, out, check } => ablation(&matrix, jobs, out.unwrap_or_else(|| root.join("ablation")), check),
        Command::Plot { input, out } => plot(&input, out.unwrap_or_else(|| root.join("plots"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("ordering check failed:\n{msg}");
            ExitCode::from(3)
        }
    }
}
