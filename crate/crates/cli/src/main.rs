use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use icurisk_core::acceptance;
use icurisk_core::dataset::save_cohort;
use icurisk_core::report::{self, RunConfig, RunManifest, COHORT_FILE};
use icurisk_core::{Error, Result};

/// 30-day ICU mortality risk modelling: synthetic cohorts, model benchmark,
/// explanations and reports.
#[derive(Parser)]
#[command(name = "icurisk", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for folds, bootstraps and attributions.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Write the configured cohort (generated or loaded) and its schema.
    Synth,
    /// Run the full pipeline and emit every artifact.
    Run,
    /// Recompute explanations for a finished run in --out.
    Explain,
    /// Re-emit CSV/SVG artifacts from report.json in --out.
    Report,
    /// Run the acceptance checks.
    Selftest,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.seed) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(seed)) => RunConfig::synthetic(seed),
        (None, None) => return Err(Error::Config("a seed is required: pass --seed or --config".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    match (&cli.out, &cli.config) {
        (Some(out), _) => Ok(out.clone()),
        (None, Some(path)) => Ok(RunConfig::load(path)?.out),
        (None, None) => Ok(PathBuf::from("out")),
    }
}

fn summarize(manifest: &RunManifest) {
    for s in &manifest.stages {
        log::info!("{:<28} {:>8.2}s", s.stage, s.seconds);
    }
    println!("{} artifacts, config {}", manifest.artifacts.len(), &manifest.config_hash[..12]);
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match cli.verb {
        Verb::Synth => {
            let cfg = resolve_config(cli)?;
            cfg.validate()?;
            std::fs::create_dir_all(&cfg.out)?;
            let schema = match &cfg.schema {
                Some(p) => icurisk_core::dataset::Schema::load(p)?,
                None => icurisk_core::dataset::Schema::table1(),
            };
            let cohort = report::load_or_synth(&cfg, &schema)?;
            save_cohort(cfg.out.join(COHORT_FILE), &cohort)?;
            std::fs::write(cfg.out.join("schema.json"), serde_json::to_string_pretty(&schema)?)?;
            println!(
                "{} rows, event rate {:.3}, written to {}",
                cohort.n_rows(),
                cohort.event_rate(),
                cfg.out.display()
            );
        }
        Verb::Run => summarize(&report::run_pipeline(&resolve_config(cli)?)?),
        Verb::Explain => {
            let explain = match &cli.config {
                Some(path) => Some(RunConfig::load(path)?.explain),
                None => None,
            };
            summarize(&report::run_explain(&out_dir(cli)?, explain)?);
        }
        Verb::Report => summarize(&report::rebuild_report(&out_dir(cli)?)?),
        Verb::Selftest => {
            let results = acceptance::run_all();
            for r in &results {
                println!("{r}");
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
