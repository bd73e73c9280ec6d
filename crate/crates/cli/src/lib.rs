//! `framr`: the pipeline as subcommands over one output directory.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod score;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use framr_core::evaluation::sample_size_auc;
use log::warn;

pub use config::{PipelineConfig, StageSeeds};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "framr", version, about = "Prognostic risk models from primary-care EMR extracts")]
pub struct Cli {
    /// Pipeline config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic extract to <out>/extract.
    Generate,
    /// Ingest, apply plausibility rules and report on data quality.
    Quality,
    /// Build the cohort and the exclusion tally.
    Cohort,
    /// Split the cohort and multiply impute it.
    Impute,
    /// Select a model on development data and refit on train plus development.
    Fit,
    /// Pooled discrimination and calibration on the validation copies.
    Evaluate,
    /// Cases and controls needed to detect an AUC against 0.5.
    Samplesize {
        #[arg(long, default_value_t = 0.55)]
        auc: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
        /// Controls per case.
        #[arg(long, default_value_t = 10.0)]
        kappa: f64,
    },
    /// Imputation error against deletion rate on complete analysis rows.
    SimulateMissingness,
    /// Every stage in order.
    RunAll,
    /// Risk for one patient, with the published model unless --model is given.
    Score {
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON object of covariate values.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Covariates as name=value, e.g. age=60 sex=female bmi=28.
        values: Vec<String>,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FRAMR_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Config with flag overrides and derived stage seeds.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.apply_seeds();
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializes"));
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(j).build_global().is_err() {
            warn!("worker pool already initialised; --jobs ignored");
        }
    }
    match &cli.command {
        Command::Samplesize {
            auc,
            alpha,
            power,
            kappa,
        } => {
            let n = sample_size_auc(*auc, *alpha, *power, *kappa).map_err(|e| CliError::Usage(e.to_string()))?;
            print_json(&n);
            return Ok(());
        }
        Command::Score { model, record, values } => {
            let m = score::load_model(model.as_deref())?;
            let mut rec = match record {
                Some(p) => score::read_record(p)?,
                None => Default::default(),
            };
            rec.extend(score::parse_assignments(values)?);
            let missing: Vec<String> = m.covariates().into_iter().filter(|c| !rec.contains_key(c)).collect();
            if !missing.is_empty() {
                return Err(CliError::Data(format!("missing covariate(s): {}", missing.join(", "))));
            }
            let r = m.score(&rec)?;
            for w in &r.warnings {
                warn!("{w}");
            }
            print_json(&r);
            return Ok(());
        }
        _ => {}
    }
    let cfg = resolve_config(&cli)?;
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    match cli.command {
        Command::Generate => pipeline::stage_generate(&cfg, &out)?,
        Command::Quality => print!("{}", pipeline::stage_quality(&cfg, &out)?),
        Command::Cohort => print!("{}", pipeline::stage_cohort(&cfg, &out)?),
        Command::Impute => {
            pipeline::stage_impute(&cfg, &out)?;
        }
        Command::Fit => {
            let sel = pipeline::stage_fit(&cfg, &out)?;
            println!("selected: {}", sel.table[sel.chosen].name);
        }
        Command::Evaluate => print_eval(&pipeline::stage_evaluate(&cfg, &out)?),
        Command::SimulateMissingness => {
            for r in pipeline::stage_simulate(&cfg, &out)? {
                println!("rate {:.2}  rmse {:.4}  coverage {:.3}", r.rate, r.rmse, r.coverage);
            }
        }
        Command::RunAll => print_eval(&pipeline::run_all(&cfg, &out)?),
        Command::Samplesize { .. } | Command::Score { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn print_eval(r: &framr_core::evaluation::PooledEvalReport) {
    println!(
        "validation n={} events={} AUC {:.3} ({:.3}-{:.3}) ECE {:.4}",
        r.n, r.n_events, r.auc.estimate, r.auc_ci.0, r.auc_ci.1, r.ece.estimate
    );
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
