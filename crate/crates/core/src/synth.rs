//! Synthetic EMR extracts with a planted logistic risk model.
//!
//! Every patient gets an independent ChaCha stream keyed by their position,
//! so the output depends only on the config and is identical whether
//! patients are drawn sequentially or in parallel.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::add_years;
use crate::frame::{AnalysisFrame, ColumnKind, OUTCOME};
use crate::stats::{inv_logit, match_truncated_normal, truncated_normal_quantile};
use crate::store::{
    format_date, format_f64, write_tables, CodedRecord, EmrTables, Encounter, Measurement, MeasurementKind,
    MedicationRecord, PatientDemographics, RiskFactorEntry, SchemaConfig, Sex, SourceTable, StoreError,
};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Demographics {
    pub age_mean: f64,
    pub age_sd: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub female_fraction: f64,
    pub bmi_mean: f64,
    pub bmi_sd: f64,
    pub bmi_min: f64,
    pub bmi_max: f64,
}

impl Default for Demographics {
    fn default() -> Self {
        Demographics {
            age_mean: 42.7,
            age_sd: 21.8,
            age_min: 18.0,
            age_max: 120.0,
            female_fraction: 0.552,
            bmi_mean: 28.1,
            bmi_sd: 7.9,
            bmi_min: 10.0,
            bmi_max: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorPrevalence {
    pub leg_injury: f64,
    pub osteoporosis: f64,
}

impl Default for IndicatorPrevalence {
    fn default() -> Self {
        IndicatorPrevalence {
            leg_injury: 0.042,
            osteoporosis: 0.021,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissingRates {
    pub birth_year: f64,
    pub bmi: f64,
    pub systolic_bp: f64,
}

impl Default for MissingRates {
    fn default() -> Self {
        MissingRates {
            birth_year: 0.15,
            bmi: 0.28,
            systolic_bp: 0.0,
        }
    }
}

/// How BMI values are blanked. Birth year and blood pressure are always
/// blanked completely at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Missingness {
    #[default]
    Mcar,
    /// Probability of a missing BMI is logistic in standardized age, with
    /// the intercept solved so the overall rate matches `missing_rates.bmi`.
    Mar { age_slope: f64 },
}

/// Planted logit: `intercept + age*Age + sex*Female + bmi*BMI + ...`, with
/// optional quadratic terms around fixed centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueModel {
    pub intercept: f64,
    pub age: f64,
    pub sex: f64,
    pub bmi: f64,
    pub leg_injury: f64,
    pub osteoporosis: f64,
    pub age_sq: f64,
    pub bmi_sq: f64,
    pub age_center: f64,
    pub bmi_center: f64,
}

impl Default for TrueModel {
    fn default() -> Self {
        TrueModel {
            intercept: -5.29,
            age: 0.04,
            sex: 0.14,
            bmi: 0.02,
            leg_injury: 0.36,
            osteoporosis: 0.60,
            age_sq: 0.0,
            bmi_sq: 0.0,
            age_center: 42.7,
            bmi_center: 28.1,
        }
    }
}

impl TrueModel {
    pub fn linear_predictor(&self, c: &Covariates) -> f64 {
        let da = c.age as f64 - self.age_center;
        let db = c.bmi - self.bmi_center;
        self.intercept
            + self.age * c.age as f64
            + self.sex * f64::from(u8::from(c.female))
            + self.bmi * c.bmi
            + self.leg_injury * f64::from(u8::from(c.leg_injury))
            + self.osteoporosis * f64::from(u8::from(c.osteoporosis))
            + self.age_sq * da * da
            + self.bmi_sq * db * db
    }

    /// The six linear coefficients in design order
    /// (intercept, age, sex, bmi, leg_injury, osteoporosis).
    pub fn coefficients(&self) -> [f64; 6] {
        [
            self.intercept,
            self.age,
            self.sex,
            self.bmi,
            self.leg_injury,
            self.osteoporosis,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub demographics: Demographics,
    pub indicator_prevalence: IndicatorPrevalence,
    pub missing_rates: MissingRates,
    pub missingness: Missingness,
    pub true_model: TrueModel,
    /// Mean encounters per patient per year.
    pub visit_rate: f64,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub followup_years: u32,
    /// ICD-9 code written for outcome events.
    pub outcome_code: String,
    /// Fraction of patients given an outcome record on or before their
    /// index visit.
    pub prior_outcome_rate: f64,
    /// Per-patient rate of implausible birth years (0) and BMI values
    /// outside [10, 100]; zero disables injection.
    pub implausible_injection: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_patients: 28_447,
            seed: 1,
            demographics: Demographics::default(),
            indicator_prevalence: IndicatorPrevalence::default(),
            missing_rates: MissingRates::default(),
            missingness: Missingness::Mcar,
            true_model: TrueModel::default(),
            visit_rate: 2.0,
            window_start: NaiveDate::from_ymd_opt(2008, 1, 1).unwrap(),
            window_end: NaiveDate::from_ymd_opt(2009, 12, 31).unwrap(),
            followup_years: 5,
            outcome_code: "715".into(),
            prior_outcome_rate: 0.0,
            implausible_injection: 0.0,
        }
    }
}

fn years_before(date: NaiveDate, years: i32) -> NaiveDate {
    let y = date.year() - years;
    date.with_year(y)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(y, date.month(), 28).unwrap())
}

fn check_prop(name: &str, p: f64) -> Result<(), GeneratorError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GeneratorError::Config(format!("{name} must be in [0, 1], got {p}")))
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let d = &self.demographics;
        if self.n_patients == 0 {
            return Err(GeneratorError::Config("n_patients must be positive".into()));
        }
        for (name, p) in [
            ("female_fraction", d.female_fraction),
            ("indicator_prevalence.leg_injury", self.indicator_prevalence.leg_injury),
            ("indicator_prevalence.osteoporosis", self.indicator_prevalence.osteoporosis),
            ("missing_rates.birth_year", self.missing_rates.birth_year),
            ("missing_rates.bmi", self.missing_rates.bmi),
            ("missing_rates.systolic_bp", self.missing_rates.systolic_bp),
            ("prior_outcome_rate", self.prior_outcome_rate),
            ("implausible_injection", self.implausible_injection),
        ] {
            check_prop(name, p)?;
        }
        if !(d.age_sd > 0.0 && d.bmi_sd > 0.0) {
            return Err(GeneratorError::Config("standard deviations must be positive".into()));
        }
        if !(d.age_min >= 0.0 && d.age_min < d.age_max) || !(d.bmi_min < d.bmi_max) {
            return Err(GeneratorError::Config("truncation bounds are inverted".into()));
        }
        if d.bmi_min < 10.0 || d.bmi_max > 100.0 {
            return Err(GeneratorError::Config(
                "BMI truncation bounds must lie inside the plausible range [10, 100]".into(),
            ));
        }
        if self.followup_years < 1 {
            return Err(GeneratorError::Config("followup_years must be at least 1".into()));
        }
        if !(self.visit_rate > 0.0 && self.visit_rate.is_finite()) {
            return Err(GeneratorError::Config("visit_rate must be positive".into()));
        }
        if self.window_start > self.window_end {
            return Err(GeneratorError::Config("window_start is after window_end".into()));
        }
        if crate::definitions::code_root(&self.outcome_code).is_none() {
            return Err(GeneratorError::Config(format!(
                "outcome_code '{}' has no three-digit numeric root",
                self.outcome_code
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        let cfg: GeneratorConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// First and last day encounters may fall on.
    pub fn encounter_span(&self) -> (NaiveDate, NaiveDate) {
        (
            years_before(self.window_start, 5),
            add_years(self.window_end, self.followup_years + 1),
        )
    }
}

/// Baseline covariates as the cohort will see them (integer age at the
/// index year, BMI to one decimal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Covariates {
    pub age: i32,
    pub female: bool,
    pub bmi: f64,
    pub leg_injury: bool,
    pub osteoporosis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub patient_id: String,
    pub linear_predictor: f64,
    pub probability: f64,
    pub event: bool,
    pub event_date: Option<NaiveDate>,
    pub index_date: Option<NaiveDate>,
    /// Has an index visit and a confirmation visit, and no prior outcome.
    pub eligible: bool,
    pub covariates: Covariates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub true_model: TrueModel,
    pub rows: Vec<TruthRow>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub tables: EmrTables,
    pub truth: GroundTruth,
}

/// Solved truncated-normal parameters.
#[derive(Debug, Clone, Copy)]
struct Shapes {
    age: (f64, f64),
    bmi: (f64, f64),
}

fn shapes(d: &Demographics) -> Result<Shapes, GeneratorError> {
    let age = match_truncated_normal(d.age_mean, d.age_sd, d.age_min, d.age_max).ok_or_else(|| {
        GeneratorError::Config(format!(
            "no normal truncated to [{}, {}] has mean {} and sd {}",
            d.age_min, d.age_max, d.age_mean, d.age_sd
        ))
    })?;
    let bmi = match_truncated_normal(d.bmi_mean, d.bmi_sd, d.bmi_min, d.bmi_max).ok_or_else(|| {
        GeneratorError::Config(format!(
            "no normal truncated to [{}, {}] has mean {} and sd {}",
            d.bmi_min, d.bmi_max, d.bmi_mean, d.bmi_sd
        ))
    })?;
    Ok(Shapes { age, bmi })
}

fn patient_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_covariates(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, sh: &Shapes) -> Covariates {
    let d = &cfg.demographics;
    let age = truncated_normal_quantile(rng.gen(), sh.age.0, sh.age.1, d.age_min, d.age_max).round();
    let bmi = truncated_normal_quantile(rng.gen(), sh.bmi.0, sh.bmi.1, d.bmi_min, d.bmi_max);
    let bmi = ((bmi * 10.0).round() / 10.0).clamp(d.bmi_min, d.bmi_max);
    Covariates {
        age: age as i32,
        female: rng.gen_bool(d.female_fraction),
        bmi,
        leg_injury: rng.gen_bool(cfg.indicator_prevalence.leg_injury),
        osteoporosis: rng.gen_bool(cfg.indicator_prevalence.osteoporosis),
    }
}

fn uniform_date(rng: &mut ChaCha8Rng, start: NaiveDate, end: NaiveDate) -> NaiveDate {
    let span = (end - start).num_days().max(0);
    start + Duration::days(rng.gen_range(0..=span))
}

fn coded_source(rng: &mut ChaCha8Rng) -> SourceTable {
    [
        SourceTable::Billing,
        SourceTable::HealthCondition,
        SourceTable::EncounterDiagnosis,
    ][rng.gen_range(0..3)]
}

const LEG_CODES: &[&str] = &[
    "820", "821.1", "822.0", "823.2", "824.4", "825", "826.0", "827", "828.0", "829", "843.9", "844.2", "928.2",
];
const OSTEOPOROSIS_DRUGS: &[&str] = &["Alendronic acid", "Risedronic acid", "Ibandronic acid"];
const CHRONIC: &[(&str, &str, f64)] = &[
    ("401.9", "Essential hypertension", -3.2),
    ("250.00", "Diabetes mellitus", -4.0),
    ("496", "Chronic airway obstruction", -4.6),
    ("414.0", "Coronary atherosclerosis", -5.0),
    ("428.0", "Congestive heart failure", -5.8),
];
const BACKGROUND: &[(&str, &str)] = &[
    ("460", "Acute nasopharyngitis"),
    ("465.9", "Upper respiratory infection"),
    ("V70.0", "General medical examination"),
    ("786.2", "Cough"),
    ("272.4", "Hyperlipidemia"),
];

/// Records and truth for one patient.
struct Drawn {
    demo: PatientDemographics,
    encounters: Vec<Encounter>,
    coded: Vec<CodedRecord>,
    risk_factors: Vec<RiskFactorEntry>,
    medications: Vec<MedicationRecord>,
    bmi: Option<Measurement>,
    sbp: Option<Measurement>,
    truth: TruthRow,
    age_z: f64,
    u_bmi_missing: f64,
}

fn draw_patient(cfg: &GeneratorConfig, sh: &Shapes, index: usize, patient_id: String) -> Drawn {
    let mut rng = patient_rng(cfg.seed, index);
    let cov = draw_covariates(&mut rng, cfg, sh);
    let (span_start, span_end) = cfg.encounter_span();

    let years = (span_end - span_start).num_days() as f64 / 365.25;
    let n_enc = Poisson::new(cfg.visit_rate * years)
        .map(|p| p.sample(&mut rng) as usize)
        .unwrap_or(0);
    let mut dates: Vec<NaiveDate> = (0..n_enc).map(|_| uniform_date(&mut rng, span_start, span_end)).collect();
    dates.sort();
    let encounters: Vec<Encounter> = dates
        .iter()
        .enumerate()
        .map(|(k, &date)| Encounter {
            patient_id: patient_id.clone(),
            encounter_date: date,
            encounter_id: format!("{patient_id}-e{}", k + 1),
        })
        .collect();

    let index_date = dates
        .iter()
        .copied()
        .find(|d| *d >= cfg.window_start && *d <= cfg.window_end);
    let reference = index_date.unwrap_or(cfg.window_start);
    let followup_end = add_years(reference, cfg.followup_years);
    let confirmed = dates.iter().any(|d| *d > followup_end);

    let mut coded = Vec::new();
    let mut risk_factors = Vec::new();
    let mut medications = Vec::new();
    let past = |rng: &mut ChaCha8Rng| uniform_date(rng, years_before(reference, 10), reference);
    let push_coded = |coded: &mut Vec<CodedRecord>, date, code: &str, description: &str, source| {
        coded.push(CodedRecord {
            patient_id: patient_id.clone(),
            record_date: date,
            code: code.to_string(),
            description: description.to_string(),
            source_table: source,
        })
    };

    if cov.leg_injury {
        let code = LEG_CODES[rng.gen_range(0..LEG_CODES.len())];
        let date = past(&mut rng);
        let source = coded_source(&mut rng);
        push_coded(&mut coded, date, code, "Injury of lower limb", source);
    }
    if cov.osteoporosis {
        let date = past(&mut rng);
        match rng.gen_range(0..4) {
            0 => {
                let source = coded_source(&mut rng);
                push_coded(&mut coded, date, "733.0", "Osteoporosis", source);
            }
            1 => risk_factors.push(RiskFactorEntry {
                patient_id: patient_id.clone(),
                record_date: date,
                term: "Osteoporosis".into(),
            }),
            2 => push_coded(&mut coded, date, "733", "Osteoporosis", SourceTable::HealthCondition),
            _ => medications.push(MedicationRecord {
                patient_id: patient_id.clone(),
                record_date: date,
                drug_name: OSTEOPOROSIS_DRUGS[rng.gen_range(0..OSTEOPOROSIS_DRUGS.len())].into(),
            }),
        }
    }

    // chronic conditions rise with age and BMI
    let age_f = cov.age as f64;
    let mut chronic = 0u32;
    for (code, description, base) in CHRONIC {
        let p = inv_logit(base + 0.05 * (age_f - 40.0) + 0.04 * (cov.bmi - 28.0));
        if rng.gen_bool(p) {
            chronic += 1;
            let date = past(&mut rng);
            let source = coded_source(&mut rng);
            push_coded(&mut coded, date, code, description, source);
        }
    }
    let n_background = Poisson::new(1.0).map(|p| p.sample(&mut rng) as usize).unwrap_or(0);
    for _ in 0..n_background {
        let (code, description) = BACKGROUND[rng.gen_range(0..BACKGROUND.len())];
        let date = uniform_date(&mut rng, span_start, span_end);
        let source = coded_source(&mut rng);
        push_coded(&mut coded, date, code, description, source);
    }

    let lp = cfg.true_model.linear_predictor(&cov);
    let probability = inv_logit(lp);
    let event = rng.gen_bool(probability);
    let event_date = event.then(|| {
        let days = (followup_end - reference).num_days();
        reference + Duration::days(rng.gen_range(1..=days))
    });
    if let Some(date) = event_date {
        let source = coded_source(&mut rng);
        push_coded(&mut coded, date, &cfg.outcome_code, "Osteoarthrosis", source);
    }
    let prior_outcome = rng.gen_bool(cfg.prior_outcome_rate);
    if prior_outcome {
        let date = past(&mut rng);
        let source = coded_source(&mut rng);
        push_coded(&mut coded, date, &cfg.outcome_code, "Osteoarthrosis", source);
    }

    let sbp_noise = Normal::new(0.0, 12.0).unwrap().sample(&mut rng);
    let sbp = (110.0 + 0.5 * (age_f - 40.0) + 0.8 * (cov.bmi - 28.0) + 4.0 * chronic as f64 + sbp_noise)
        .round()
        .clamp(60.0, 250.0);

    let mut birth_year = Some(reference.year() - cov.age);
    if rng.gen_bool(cfg.missing_rates.birth_year) {
        birth_year = None;
    }
    let u_bmi_missing: f64 = rng.gen();
    let sbp_missing = rng.gen_bool(cfg.missing_rates.systolic_bp);
    let mut bmi_value = cov.bmi;
    if rng.gen_bool(cfg.implausible_injection) {
        birth_year = birth_year.map(|_| 0);
    }
    if rng.gen_bool(cfg.implausible_injection) {
        bmi_value = if rng.gen_bool(0.5) {
            (rng.gen_range(3.0..9.9_f64) * 10.0).round() / 10.0
        } else {
            (rng.gen_range(100.1..250.0_f64) * 10.0).round() / 10.0
        };
    }

    let measure = |kind: MeasurementKind, value: f64| Measurement {
        patient_id: patient_id.clone(),
        record_date: reference,
        kind,
        value: Some(value),
    };
    let d = &cfg.demographics;
    Drawn {
        demo: PatientDemographics {
            patient_id: patient_id.clone(),
            birth_year,
            sex: Some(if cov.female { Sex::Female } else { Sex::Male }),
        },
        encounters,
        coded,
        risk_factors,
        medications,
        bmi: Some(measure(MeasurementKind::Bmi, bmi_value)),
        sbp: (!sbp_missing).then(|| measure(MeasurementKind::SystolicBp, sbp)),
        truth: TruthRow {
            patient_id,
            linear_predictor: lp,
            probability,
            event,
            event_date,
            index_date,
            eligible: index_date.is_some() && confirmed && !prior_outcome,
            covariates: cov,
        },
        age_z: (age_f - d.age_mean) / d.age_sd,
        u_bmi_missing,
    }
}

/// Intercept `c` with mean of `inv_logit(c + slope * z)` equal to `rate`.
fn solve_mar_intercept(z: &[f64], slope: f64, rate: f64) -> f64 {
    let mean_p = |c: f64| z.iter().map(|z| inv_logit(c + slope * z)).sum::<f64>() / z.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn patient_id(index: usize, n: usize) -> String {
    let width = n.to_string().len().max(6);
    format!("P{:0width$}", index + 1)
}

/// Draws a full synthetic extract and its ground truth.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticData, GeneratorError> {
    cfg.validate()?;
    let sh = shapes(&cfg.demographics)?;
    let drawn: Vec<Drawn> = (0..cfg.n_patients)
        .into_par_iter()
        .map(|i| draw_patient(cfg, &sh, i, patient_id(i, cfg.n_patients)))
        .collect();

    let rate = cfg.missing_rates.bmi;
    let bmi_missing: Vec<bool> = match cfg.missingness {
        Missingness::Mcar => drawn.iter().map(|d| d.u_bmi_missing < rate).collect(),
        Missingness::Mar { age_slope } => {
            if rate <= 0.0 || rate >= 1.0 {
                drawn.iter().map(|_| rate >= 1.0).collect()
            } else {
                let z: Vec<f64> = drawn.iter().map(|d| d.age_z).collect();
                let c = solve_mar_intercept(&z, age_slope, rate);
                drawn
                    .iter()
                    .map(|d| d.u_bmi_missing < inv_logit(c + age_slope * d.age_z))
                    .collect()
            }
        }
    };

    let mut tables = EmrTables::default();
    let mut truth = Vec::with_capacity(drawn.len());
    for (d, missing) in drawn.into_iter().zip(bmi_missing) {
        tables.patients.push(d.demo);
        tables.encounters.extend(d.encounters);
        tables.coded.extend(d.coded);
        tables.risk_factors.extend(d.risk_factors);
        tables.medications.extend(d.medications);
        if !missing {
            tables.measurements.extend(d.bmi);
        }
        tables.measurements.extend(d.sbp);
        truth.push(d.truth);
    }
    Ok(SyntheticData {
        tables,
        truth: GroundTruth {
            true_model: cfg.true_model.clone(),
            rows: truth,
        },
    })
}

/// One member of a fresh population drawn from the generator's covariate
/// distribution, with the planted risk and a realized event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationDraw {
    pub covariates: Covariates,
    pub probability: f64,
    pub event: bool,
}

/// Covariates, true risks and events for `n` people, independent of any
/// extract drawn with the same config.
pub fn sample_population(cfg: &GeneratorConfig, n: usize, seed: u64) -> Result<Vec<PopulationDraw>, GeneratorError> {
    cfg.validate()?;
    let sh = shapes(&cfg.demographics)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = patient_rng(seed, i);
            let covariates = draw_covariates(&mut rng, cfg, &sh);
            let probability = inv_logit(cfg.true_model.linear_predictor(&covariates));
            PopulationDraw {
                covariates,
                probability,
                event: rng.gen_bool(probability),
            }
        })
        .collect())
}

/// Analysis frame of population draws: the model covariates and the
/// outcome, no auxiliaries.
pub fn population_frame(draws: &[PopulationDraw]) -> AnalysisFrame {
    let mut f = AnalysisFrame::new((0..draws.len()).map(|i| format!("P{:06}", i + 1)).collect());
    let cols: [(&str, ColumnKind, fn(&PopulationDraw) -> f64); 6] = [
        ("age", ColumnKind::Continuous, |d| f64::from(d.covariates.age)),
        ("bmi", ColumnKind::Continuous, |d| d.covariates.bmi),
        ("sex", ColumnKind::Binary, |d| f64::from(u8::from(d.covariates.female))),
        ("leg_injury", ColumnKind::Binary, |d| f64::from(u8::from(d.covariates.leg_injury))),
        ("osteoporosis", ColumnKind::Binary, |d| f64::from(u8::from(d.covariates.osteoporosis))),
        (OUTCOME, ColumnKind::Binary, |d| f64::from(u8::from(d.event))),
    ];
    for (name, kind, get) in cols {
        f.push_column(name, kind, draws.iter().map(|d| Some(get(d))).collect())
            .expect("fresh column");
    }
    f
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const CONFIG_ECHO_FILE: &str = "generator_config.json";

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<(), GeneratorError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "patient_id",
        "linear_predictor",
        "probability",
        "event",
        "event_date",
        "index_date",
        "eligible",
    ])?;
    for r in &truth.rows {
        w.write_record([
            r.patient_id.clone(),
            format_f64(r.linear_predictor),
            format_f64(r.probability),
            u8::from(r.event).to_string(),
            r.event_date.map(format_date).unwrap_or_default(),
            r.index_date.map(format_date).unwrap_or_default(),
            u8::from(r.eligible).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the EMR tables, `ground_truth.csv` and the config echo.
pub fn write_generated(data: &SyntheticData, cfg: &GeneratorConfig, dir: &Path) -> Result<(), GeneratorError> {
    std::fs::create_dir_all(dir)?;
    write_tables(&data.tables, dir, &SchemaConfig::default())?;
    write_ground_truth(&data.truth, &dir.join(GROUND_TRUTH_FILE))?;
    let mut f = File::create(dir.join(CONFIG_ECHO_FILE))?;
    f.write_all(serde_json::to_string_pretty(cfg)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> GeneratorConfig {
        GeneratorConfig {
            n_patients: n,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn ids_are_padded() {
        assert_eq!(patient_id(0, 10), "P000001");
        assert_eq!(patient_id(41, 1_234_567), "P0000042");
    }

    #[test]
    fn mar_intercept_hits_rate() {
        let z: Vec<f64> = (0..1000).map(|i| (i as f64 - 500.0) / 300.0).collect();
        let c = solve_mar_intercept(&z, 1.5, 0.28);
        let m = z.iter().map(|z| inv_logit(c + 1.5 * z)).sum::<f64>() / z.len() as f64;
        assert!((m - 0.28).abs() < 1e-9);
    }

    #[test]
    fn records_respect_timing() {
        let data = generate(&small(400)).unwrap();
        let store = crate::store::EmrStore::from_tables(data.tables.clone()).unwrap();
        for t in &data.truth.rows {
            let recs = store.records(&t.patient_id).unwrap();
            if let (Some(idx), Some(ev)) = (t.index_date, t.event_date) {
                assert!(ev > idx && ev <= add_years(idx, 5));
                assert!(recs.coded.iter().any(|c| c.record_date == ev && c.code == "715"));
            }
            if let Some(idx) = t.index_date {
                for c in recs.coded.iter().filter(|c| c.description == "Injury of lower limb") {
                    assert!(c.record_date <= idx);
                }
            }
            assert!((t.probability - inv_logit(t.linear_predictor)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_infeasible_shapes() {
        let mut cfg = small(10);
        cfg.demographics.age_max = 100.0;
        assert!(matches!(generate(&cfg), Err(GeneratorError::Config(_))));
        cfg.demographics.age_max = 120.0;
        cfg.missing_rates.bmi = 1.5;
        assert!(cfg.validate().is_err());
    }
}
