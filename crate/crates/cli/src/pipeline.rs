//! Pipeline stages. Each reads the previous stage's files from the output
//! directory, writes its own and records both in the manifest.

use std::path::{Path, PathBuf};

use framr_core::cohort::{build_cohort, read_cohort_csv, write_cohort_csv, ExclusionTally};
use framr_core::definitions::DefinitionSet;
use framr_core::evaluation::{
    evaluate_pooled, partition, read_partition, sample_size_auc, split_rows, write_calibration_csv, write_partition,
    write_roc_csv, PooledEvalReport, Split,
};
use framr_core::frame::AnalysisFrame;
use framr_core::imputation::{impute, missingness_simulation, write_reliability_csv, ImputedSet, ReliabilityRow};
use framr_core::modeling::{refit_final, select_model, ModelFile, Selection};
use framr_core::quality::{
    apply_plausibility, concordance_report, currency_check, default_concordance_checks, default_rules,
    PlausibilityRule, QualityReport,
};
use framr_core::store::{ingest, SchemaConfig};
use framr_core::synth::{generate, write_generated};
use log::{info, warn};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::record_stage;

pub const EXTRACT_DIR: &str = "extract";
pub const CLEAN_DIR: &str = "clean";
pub const QUALITY_JSON: &str = "quality_report.json";
pub const QUALITY_TXT: &str = "quality_report.txt";
pub const COHORT_CSV: &str = "cohort.csv";
pub const TALLY_JSON: &str = "exclusion_tally.json";
pub const TALLY_TXT: &str = "exclusion_tally.txt";
pub const IMPUTED_DIR: &str = "imputed";
pub const PARTITION_CSV: &str = "partition.csv";
pub const MODEL_JSON: &str = "model.json";
pub const SELECTION_JSON: &str = "model_selection.json";
pub const EVAL_JSON: &str = "eval_report.json";
pub const CALIBRATION_CSV: &str = "calibration.csv";
pub const ROC_CSV: &str = "roc_points.csv";
pub const RELIABILITY_CSV: &str = "reliability.csv";

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializes") + "\n")?;
    Ok(())
}

fn need(path: PathBuf, stage: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Data(format!("{} not found; run `{stage}` first", path.display())))
    }
}

/// The extract the quality stage reads.
fn source_dir(cfg: &PipelineConfig, out: &Path) -> Result<PathBuf, CliError> {
    match &cfg.data_dir {
        Some(d) => Ok(d.clone()),
        None => need(out.join(EXTRACT_DIR), "generate"),
    }
}

fn definitions(cfg: &PipelineConfig) -> Result<DefinitionSet, CliError> {
    match &cfg.definitions {
        Some(p) => Ok(DefinitionSet::parse(&std::fs::read_to_string(p)?)?),
        None => Ok(DefinitionSet::bundled()),
    }
}

pub fn stage_generate(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let data = generate(&cfg.generator)?;
    let dir = out.join(EXTRACT_DIR);
    write_generated(&data, &cfg.generator, &dir)?;
    info!("generated {} patients into {}", cfg.generator.n_patients, dir.display());
    record_stage(out, cfg, "generate", &[], &[dir])
}

pub fn stage_quality(cfg: &PipelineConfig, out: &Path) -> Result<QualityReport, CliError> {
    let src = source_dir(cfg, out)?;
    let schema = SchemaConfig::default();
    let store = ingest(&src, &schema)?;
    let as_of = cfg
        .as_of
        .or_else(|| store.latest_record_date())
        .ok_or_else(|| CliError::Data("extract holds no dated records".into()))?;
    let rules: Vec<PlausibilityRule> = match &cfg.plausibility_rules {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => default_rules(as_of),
    };
    let (clean, mut report) = apply_plausibility(&store, &rules)?;
    report.concordance = concordance_report(&clean, &default_concordance_checks());
    report.currency = Some(currency_check(&clean, as_of, cfg.max_staleness_days)?);
    let dir = out.join(CLEAN_DIR);
    clean.write_dir(&dir, &schema)?;
    write_json(&out.join(QUALITY_JSON), &report)?;
    std::fs::write(out.join(QUALITY_TXT), report.to_string())?;
    record_stage(
        out,
        cfg,
        "quality",
        &[src],
        &[dir, out.join(QUALITY_JSON), out.join(QUALITY_TXT)],
    )?;
    Ok(report)
}

pub fn stage_cohort(cfg: &PipelineConfig, out: &Path) -> Result<ExclusionTally, CliError> {
    let clean = need(out.join(CLEAN_DIR), "quality")?;
    let store = ingest(&clean, &SchemaConfig::default())?;
    let cohort = build_cohort(&store, &definitions(cfg)?, &cfg.cohort)?;
    write_cohort_csv(&cohort, &out.join(COHORT_CSV))?;
    write_json(&out.join(TALLY_JSON), &cohort.tally)?;
    std::fs::write(out.join(TALLY_TXT), cohort.tally.to_string())?;
    let mut inputs = vec![clean];
    inputs.extend(cfg.definitions.clone());
    record_stage(
        out,
        cfg,
        "cohort",
        &inputs,
        &[out.join(COHORT_CSV), out.join(TALLY_JSON), out.join(TALLY_TXT)],
    )?;
    Ok(cohort.tally)
}

fn analysis_frame(out: &Path) -> Result<AnalysisFrame, CliError> {
    let cohort = read_cohort_csv(&need(out.join(COHORT_CSV), "cohort")?)?;
    Ok(AnalysisFrame::from_cohort(cohort.analysis_rows(), &cohort.indicator_names))
}

/// Splits the analysis rows, then imputes all of them together.
pub fn stage_impute(cfg: &PipelineConfig, out: &Path) -> Result<ImputedSet, CliError> {
    let frame = analysis_frame(out)?;
    if frame.n_rows() == 0 {
        return Err(CliError::Data("the analysis cohort is empty".into()));
    }
    let labels = partition(frame.n_rows(), &cfg.partition).map_err(|e| CliError::Config(e.to_string()))?;
    write_partition(&frame.ids, &labels, &out.join(PARTITION_CSV))?;
    let set = impute(&frame, &cfg.imputation)?;
    let dir = out.join(IMPUTED_DIR);
    set.write(&dir)?;
    info!("imputed {} copies of {} rows", set.m(), frame.n_rows());
    record_stage(
        out,
        cfg,
        "impute",
        &[out.join(COHORT_CSV)],
        &[out.join(PARTITION_CSV), dir],
    )?;
    Ok(set)
}

/// Imputed copies cut into train, development and validation parts.
struct SplitCopies {
    train: Vec<AnalysisFrame>,
    dev: Vec<AnalysisFrame>,
    validation: Vec<AnalysisFrame>,
}

fn split_copies(out: &Path) -> Result<SplitCopies, CliError> {
    let (_, copies) = ImputedSet::read(&need(out.join(IMPUTED_DIR), "impute")?)?;
    let (ids, labels) = read_partition(&need(out.join(PARTITION_CSV), "impute")?)?;
    if copies.iter().any(|c| c.ids != ids) {
        return Err(CliError::Data("partition.csv and the imputed copies list different patients".into()));
    }
    let part = |s: Split| -> Vec<AnalysisFrame> {
        let rows = split_rows(&labels, s);
        copies.iter().map(|c| c.subset(&rows)).collect()
    };
    Ok(SplitCopies {
        train: part(Split::Train),
        dev: part(Split::Dev),
        validation: part(Split::Validation),
    })
}

/// Warnings for parts with fewer events or non-events than the sample-size
/// guidance asks for.
pub fn size_warnings(cfg: &PipelineConfig, part: &str, frame: &AnalysisFrame) -> Result<Vec<String>, CliError> {
    let g = &cfg.guidance;
    let need = sample_size_auc(g.alt_auc, g.alpha, g.power, g.kappa)
        .map_err(|e| CliError::Config(format!("guidance: {e}")))?;
    let y = frame.outcome()?;
    let cases = y.iter().filter(|v| **v == 1.0).count() as u64;
    let controls = y.len() as u64 - cases;
    let mut w = Vec::new();
    if cases < need.n_cases || controls < need.n_controls {
        w.push(format!(
            "{part} set has {cases} cases and {controls} controls; detecting AUC {} needs {} and {}",
            g.alt_auc, need.n_cases, need.n_controls
        ));
    }
    Ok(w)
}

/// Selection on development data, then the final refit on train plus
/// development.
pub fn stage_fit(cfg: &PipelineConfig, out: &Path) -> Result<Selection, CliError> {
    let s = split_copies(out)?;
    for (name, part) in [("development", &s.dev), ("validation", &s.validation)] {
        for msg in size_warnings(cfg, name, &part[0])? {
            warn!("{msg}");
        }
    }
    let sel = select_model(&cfg.candidates, &s.train, &s.dev, &cfg.select)?;
    let pooled = refit_final(&sel.meta, sel.lambda, &s.train, &s.dev, &cfg.select.fit)?;
    let model = ModelFile::new(sel.meta.clone(), sel.lambda, pooled)?;
    model.save(&out.join(MODEL_JSON))?;
    write_json(&out.join(SELECTION_JSON), &sel)?;
    info!("selected '{}'", sel.table[sel.chosen].name);
    record_stage(
        out,
        cfg,
        "fit",
        &[out.join(IMPUTED_DIR), out.join(PARTITION_CSV)],
        &[out.join(MODEL_JSON), out.join(SELECTION_JSON)],
    )?;
    Ok(sel)
}

pub fn stage_evaluate(cfg: &PipelineConfig, out: &Path) -> Result<PooledEvalReport, CliError> {
    let model = ModelFile::load(&need(out.join(MODEL_JSON), "fit")?)?;
    let s = split_copies(out)?;
    let report = evaluate_pooled(&model.model, &model.design, &s.validation, cfg.select.level)?;
    write_json(&out.join(EVAL_JSON), &report)?;
    write_calibration_csv(&report.calibration, &out.join(CALIBRATION_CSV))?;
    write_roc_csv(&report.roc, &out.join(ROC_CSV))?;
    record_stage(
        out,
        cfg,
        "evaluate",
        &[out.join(MODEL_JSON), out.join(IMPUTED_DIR), out.join(PARTITION_CSV)],
        &[out.join(EVAL_JSON), out.join(CALIBRATION_CSV), out.join(ROC_CSV)],
    )?;
    Ok(report)
}

/// Deletion-and-reimputation on the complete analysis rows.
pub fn stage_simulate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<ReliabilityRow>, CliError> {
    let frame = analysis_frame(out)?;
    let complete: Vec<usize> = (0..frame.n_rows())
        .filter(|&i| frame.columns.iter().all(|c| c.values[i].is_some()))
        .collect();
    let rows = missingness_simulation(&frame.subset(&complete), &cfg.simulation)?;
    write_reliability_csv(&rows, &out.join(RELIABILITY_CSV))?;
    record_stage(
        out,
        cfg,
        "simulate-missingness",
        &[out.join(COHORT_CSV)],
        &[out.join(RELIABILITY_CSV)],
    )?;
    Ok(rows)
}

pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<PooledEvalReport, CliError> {
    if cfg.data_dir.is_none() {
        stage_generate(cfg, out)?;
    }
    stage_quality(cfg, out)?;
    stage_cohort(cfg, out)?;
    stage_impute(cfg, out)?;
    stage_fit(cfg, out)?;
    let report = stage_evaluate(cfg, out)?;
    if cfg.run_simulation {
        stage_simulate(cfg, out)?;
    }
    Ok(report)
}
