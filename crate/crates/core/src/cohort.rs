//! Retrospective cohort construction.
//!
//! Each patient is anchored at their earliest encounter inside the index
//! window. Patients with the outcome on or before that date are excluded;
//! the outcome is then looked for over the follow-up interval
//! `(index, index + followup]`, and a later encounter is required to show
//! the patient was still being seen. Baseline indicators use records dated
//! on or before the index date only.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::definitions::{evaluate_expr, DateInterval, DefinitionError, DefinitionSet, RuleExpr};
use crate::store::{format_date, format_f64, EmrStore, MeasurementKind, PatientRecords, Sex, StoreError, DATE_FORMAT};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error(transparent)]
    Definition(#[from] DefinitionError),
    #[error("patient {patient_id}: {source}")]
    Patient {
        patient_id: String,
        #[source]
        source: StoreError,
    },
    #[error("invalid cohort config: {0}")]
    Config(String),
    #[error("cohort file {path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexVisitPolicy {
    #[default]
    EarliestInWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub followup_years: u32,
    pub outcome_def: String,
    /// Binary baseline indicators, one cohort column each.
    pub indicator_defs: Vec<String>,
    /// Definitions counted for the chronic-disease auxiliary.
    pub chronic_defs: Vec<String>,
    /// When false, only non-cases need an encounter after follow-up.
    pub require_confirmation_for_cases: bool,
    pub index_visit_policy: IndexVisitPolicy,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            window_start: NaiveDate::from_ymd_opt(2008, 1, 1).unwrap(),
            window_end: NaiveDate::from_ymd_opt(2009, 12, 31).unwrap(),
            followup_years: 5,
            outcome_def: "osteoarthritis".into(),
            indicator_defs: vec!["leg_injury".into(), "osteoporosis".into()],
            chronic_defs: vec![
                "hypertension".into(),
                "diabetes".into(),
                "copd".into(),
                "ischemic_heart_disease".into(),
                "heart_failure".into(),
            ],
            require_confirmation_for_cases: true,
            index_visit_policy: IndexVisitPolicy::EarliestInWindow,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        if self.window_start > self.window_end {
            return Err(CohortError::Config(format!(
                "window_start {} is after window_end {}",
                self.window_start, self.window_end
            )));
        }
        if self.followup_years < 1 {
            return Err(CohortError::Config("followup_years must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NoIndexVisit,
    PriorOutcome,
    NoConfirmationVisit,
    OutcomeAtConfirmation,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NoIndexVisit => "no_index_visit",
            ExclusionReason::PriorOutcome => "prior_outcome",
            ExclusionReason::NoConfirmationVisit => "no_confirmation_visit",
            ExclusionReason::OutcomeAtConfirmation => "outcome_at_confirmation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ExclusionReason::NoIndexVisit,
            ExclusionReason::PriorOutcome,
            ExclusionReason::NoConfirmationVisit,
            ExclusionReason::OutcomeAtConfirmation,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub patient_id: String,
    pub index_date: Option<NaiveDate>,
    pub age_at_index: Option<i32>,
    pub sex: Option<Sex>,
    pub bmi_at_index: Option<f64>,
    /// Baseline indicator flags keyed by definition name.
    pub indicators: BTreeMap<String, bool>,
    pub systolic_bp: Option<f64>,
    pub chronic_disease_count: u32,
    pub outcome: bool,
    pub outcome_date: Option<NaiveDate>,
    pub exclusion_reason: Option<ExclusionReason>,
    /// Non-case whose first outcome record falls after follow-up but
    /// before the confirmation visit.
    pub late_outcome: bool,
}

impl CohortRow {
    pub fn included(&self) -> bool {
        self.exclusion_reason.is_none()
    }

    fn bare(patient_id: &str) -> Self {
        CohortRow {
            patient_id: patient_id.to_string(),
            index_date: None,
            age_at_index: None,
            sex: None,
            bmi_at_index: None,
            indicators: BTreeMap::new(),
            systolic_bp: None,
            chronic_disease_count: 0,
            outcome: false,
            outcome_date: None,
            exclusion_reason: None,
            late_outcome: false,
        }
    }
}

/// Patient counts at each exclusion step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionTally {
    pub total_patients: usize,
    pub no_index_visit: usize,
    pub prior_outcome: usize,
    pub no_confirmation_visit: usize,
    pub outcome_at_confirmation: usize,
    pub included: usize,
    pub cases: usize,
    pub non_cases: usize,
    pub late_outcome_non_cases: usize,
}

impl ExclusionTally {
    pub fn from_rows(rows: &[CohortRow]) -> Self {
        let mut t = ExclusionTally {
            total_patients: rows.len(),
            ..Default::default()
        };
        for r in rows {
            match r.exclusion_reason {
                Some(ExclusionReason::NoIndexVisit) => t.no_index_visit += 1,
                Some(ExclusionReason::PriorOutcome) => t.prior_outcome += 1,
                Some(ExclusionReason::NoConfirmationVisit) => t.no_confirmation_visit += 1,
                Some(ExclusionReason::OutcomeAtConfirmation) => t.outcome_at_confirmation += 1,
                None => {
                    t.included += 1;
                    if r.outcome {
                        t.cases += 1;
                    } else {
                        t.non_cases += 1;
                        if r.late_outcome {
                            t.late_outcome_non_cases += 1;
                        }
                    }
                }
            }
        }
        t
    }

    pub fn excluded(&self) -> usize {
        self.no_index_visit + self.prior_outcome + self.no_confirmation_visit + self.outcome_at_confirmation
    }
}

impl fmt::Display for ExclusionTally {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut remaining = self.total_patients;
        writeln!(f, "Patients in extract: {}", remaining)?;
        for (label, n) in [
            ("no visit in index window", self.no_index_visit),
            ("outcome on or before index visit", self.prior_outcome),
            ("no visit after follow-up", self.no_confirmation_visit),
            ("outcome recorded at confirmation visit", self.outcome_at_confirmation),
        ] {
            remaining -= n;
            writeln!(f, "  excluded {:<40} {:>8}  -> {}", label, n, remaining)?;
        }
        writeln!(
            f,
            "Analysis cohort: {} ({} cases, {} non-cases)",
            self.included, self.cases, self.non_cases
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    /// Every patient in the store, sorted by id; excluded patients carry a
    /// reason.
    pub rows: Vec<CohortRow>,
    pub tally: ExclusionTally,
    pub indicator_names: Vec<String>,
}

impl Cohort {
    pub fn analysis_rows(&self) -> impl Iterator<Item = &CohortRow> {
        self.rows.iter().filter(|r| r.included())
    }
}

/// Same month and day `years` later; 29 February maps to 28 February.
pub fn add_years(date: NaiveDate, years: u32) -> NaiveDate {
    let y = date.year() + years as i32;
    date.with_year(y)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(y, date.month(), 28).unwrap())
}

/// `index year - birth year`; `None` when either is unknown or the result
/// is negative.
pub fn age_at_index(birth_year: Option<i32>, index_date: NaiveDate) -> Option<i32> {
    let age = index_date.year() - birth_year?;
    (age >= 0).then_some(age)
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Value of a measurement at `date`: the same-day value if recorded,
/// otherwise linear interpolation between the nearest measurements before
/// and after, otherwise the closest one-sided value. Several values on one
/// day are averaged.
pub fn measurement_at(records: &PatientRecords, kind: &MeasurementKind, date: NaiveDate) -> Option<f64> {
    let obs: Vec<(NaiveDate, f64)> = records
        .measurements
        .iter()
        .filter(|m| &m.kind == kind)
        .filter_map(|m| m.value.map(|v| (m.record_date, v)))
        .collect();
    if let Some(v) = mean_of(obs.iter().filter(|(d, _)| *d == date).map(|(_, v)| *v)) {
        return Some(v);
    }
    let before_date = obs.iter().filter(|(d, _)| *d < date).map(|(d, _)| *d).max();
    let after_date = obs.iter().filter(|(d, _)| *d > date).map(|(d, _)| *d).min();
    let at = |day: NaiveDate| mean_of(obs.iter().filter(|(d, _)| *d == day).map(|(_, v)| *v));
    match (before_date, after_date) {
        (Some(b), Some(a)) => {
            let (vb, va) = (at(b)?, at(a)?);
            let span = (a - b).num_days() as f64;
            let t = (date - b).num_days() as f64 / span;
            Some(vb + t * (va - vb))
        }
        (Some(b), None) => at(b),
        (None, Some(a)) => at(a),
        (None, None) => None,
    }
}

pub fn bmi_at_index(store: &EmrStore, patient_id: &str, index_date: NaiveDate) -> Result<Option<f64>, StoreError> {
    Ok(measurement_at(store.records(patient_id)?, &MeasurementKind::Bmi, index_date))
}

/// Number of `chronic_defs` matching on or before `index_date`.
pub fn chronic_disease_count(
    store: &EmrStore,
    patient_id: &str,
    index_date: NaiveDate,
    defs: &DefinitionSet,
    chronic_defs: &[String],
) -> Result<u32, CohortError> {
    let records = store.records(patient_id).map_err(|source| CohortError::Patient {
        patient_id: patient_id.to_string(),
        source,
    })?;
    let as_of = DateInterval::as_of(index_date);
    let mut n = 0;
    for name in chronic_defs {
        if evaluate_expr(&defs.get(name)?.expr, records, &as_of).matched {
            n += 1;
        }
    }
    Ok(n)
}

struct Resolved<'a> {
    outcome: &'a RuleExpr,
    indicators: Vec<(&'a str, &'a RuleExpr)>,
    chronic: Vec<&'a RuleExpr>,
}

fn classify(
    store: &EmrStore,
    patient_id: &str,
    defs: &Resolved<'_>,
    config: &CohortConfig,
) -> Result<CohortRow, CohortError> {
    let mut row = CohortRow::bare(patient_id);
    let wrap = |source| CohortError::Patient {
        patient_id: patient_id.to_string(),
        source,
    };
    let records = store.records(patient_id).map_err(wrap)?;
    let demo = store.patient(patient_id).map_err(wrap)?;
    row.sex = demo.sex;

    let index = records
        .encounters
        .iter()
        .map(|e| e.encounter_date)
        .find(|d| *d >= config.window_start && *d <= config.window_end);
    let Some(index) = index else {
        row.exclusion_reason = Some(ExclusionReason::NoIndexVisit);
        return Ok(row);
    };
    row.index_date = Some(index);

    let baseline = DateInterval::as_of(index);
    row.age_at_index = age_at_index(demo.birth_year, index);
    row.bmi_at_index = measurement_at(records, &MeasurementKind::Bmi, index);
    row.systolic_bp = measurement_at(records, &MeasurementKind::SystolicBp, index);
    for (name, expr) in &defs.indicators {
        row.indicators
            .insert(name.to_string(), evaluate_expr(expr, records, &baseline).matched);
    }
    row.chronic_disease_count = defs
        .chronic
        .iter()
        .filter(|e| evaluate_expr(e, records, &baseline).matched)
        .count() as u32;

    if evaluate_expr(defs.outcome, records, &baseline).matched {
        row.exclusion_reason = Some(ExclusionReason::PriorOutcome);
        return Ok(row);
    }

    let followup_end = add_years(index, config.followup_years);
    let in_followup = evaluate_expr(defs.outcome, records, &DateInterval::after_until(index, followup_end));
    let confirmation = records
        .encounters
        .iter()
        .map(|e| e.encounter_date)
        .find(|d| *d > followup_end);

    row.outcome = in_followup.matched;
    row.outcome_date = in_followup.first_match_date;

    let Some(confirmation) = confirmation else {
        if !row.outcome || config.require_confirmation_for_cases {
            row.exclusion_reason = Some(ExclusionReason::NoConfirmationVisit);
        }
        return Ok(row);
    };

    if !row.outcome {
        let later = evaluate_expr(defs.outcome, records, &DateInterval::after(followup_end));
        match later.first_match_date {
            Some(d) if d == confirmation => {
                row.exclusion_reason = Some(ExclusionReason::OutcomeAtConfirmation);
            }
            Some(d) if d < confirmation => row.late_outcome = true,
            _ => {}
        }
    }
    Ok(row)
}

/// Classifies every patient in the store. Output is sorted by patient id.
pub fn build_cohort(store: &EmrStore, defs: &DefinitionSet, config: &CohortConfig) -> Result<Cohort, CohortError> {
    config.validate()?;
    let resolved = Resolved {
        outcome: &defs.get(&config.outcome_def)?.expr,
        indicators: config
            .indicator_defs
            .iter()
            .map(|n| defs.get(n).map(|d| (n.as_str(), &d.expr)))
            .collect::<Result<_, _>>()?,
        chronic: config
            .chronic_defs
            .iter()
            .map(|n| defs.get(n).map(|d| &d.expr))
            .collect::<Result<_, _>>()?,
    };
    let ids: Vec<&str> = store.patient_ids().collect();
    let rows = ids
        .par_iter()
        .map(|pid| classify(store, pid, &resolved, config))
        .collect::<Result<Vec<_>, _>>()?;
    let tally = ExclusionTally::from_rows(&rows);
    Ok(Cohort {
        rows,
        tally,
        indicator_names: config.indicator_defs.clone(),
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Column order of cohort.csv for the given indicators.
pub fn cohort_columns(indicators: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = ["patient_id", "index_date", "age_at_index", "sex", "bmi_at_index"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(indicators.iter().cloned());
    cols.extend(
        [
            "systolic_bp",
            "chronic_disease_count",
            "outcome",
            "outcome_date",
            "exclusion_reason",
            "late_outcome",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    cols
}

pub fn write_cohort_csv(cohort: &Cohort, path: &Path) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(cohort_columns(&cohort.indicator_names))?;
    for r in &cohort.rows {
        let mut rec = vec![
            r.patient_id.clone(),
            r.index_date.map(format_date).unwrap_or_default(),
            opt(&r.age_at_index),
            r.sex.map(|s| s.as_str().to_string()).unwrap_or_default(),
            r.bmi_at_index.map(format_f64).unwrap_or_default(),
        ];
        for name in &cohort.indicator_names {
            rec.push(flag(r.indicators.get(name).copied().unwrap_or(false)).into());
        }
        rec.push(r.systolic_bp.map(format_f64).unwrap_or_default());
        rec.push(r.chronic_disease_count.to_string());
        rec.push(flag(r.outcome).into());
        rec.push(r.outcome_date.map(format_date).unwrap_or_default());
        rec.push(r.exclusion_reason.map(|e| e.as_str().to_string()).unwrap_or_default());
        rec.push(flag(r.late_outcome).into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohort_csv(path: &Path) -> Result<Cohort, CohortError> {
    let shown = path.display().to_string();
    let bad = |message: String| CohortError::File {
        path: shown.clone(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let fixed_head = 5;
    let fixed_tail = 6;
    if headers.len() < fixed_head + fixed_tail {
        return Err(bad("too few columns".into()));
    }
    let indicator_names = headers[fixed_head..headers.len() - fixed_tail].to_vec();
    if headers != cohort_columns(&indicator_names) {
        return Err(bad(format!("unexpected header {:?}", headers)));
    }
    let date = |s: &str| -> Result<Option<NaiveDate>, CohortError> {
        if s.is_empty() {
            Ok(None)
        } else {
            NaiveDate::parse_from_str(s, DATE_FORMAT)
                .map(Some)
                .map_err(|_| bad(format!("bad date '{}'", s)))
        }
    };
    fn num<T: std::str::FromStr>(s: &str) -> Option<Option<T>> {
        if s.is_empty() {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let n = indicator_names.len();
        let mut indicators = BTreeMap::new();
        for (k, name) in indicator_names.iter().enumerate() {
            indicators.insert(name.clone(), f(fixed_head + k) == "1");
        }
        let t = fixed_head + n;
        rows.push(CohortRow {
            patient_id: f(0).to_string(),
            index_date: date(f(1))?,
            age_at_index: num(f(2)).ok_or_else(|| bad(format!("bad age '{}'", f(2))))?,
            sex: if f(3).is_empty() {
                None
            } else {
                Some(Sex::parse(f(3)).ok_or_else(|| bad(format!("bad sex '{}'", f(3))))?)
            },
            bmi_at_index: num(f(4)).ok_or_else(|| bad(format!("bad bmi '{}'", f(4))))?,
            indicators,
            systolic_bp: num(f(t)).ok_or_else(|| bad(format!("bad systolic_bp '{}'", f(t))))?,
            chronic_disease_count: f(t + 1)
                .parse()
                .map_err(|_| bad(format!("bad chronic count '{}'", f(t + 1))))?,
            outcome: f(t + 2) == "1",
            outcome_date: date(f(t + 3))?,
            exclusion_reason: if f(t + 4).is_empty() {
                None
            } else {
                Some(ExclusionReason::parse(f(t + 4)).ok_or_else(|| bad(format!("bad reason '{}'", f(t + 4))))?)
            },
            late_outcome: f(t + 5) == "1",
        });
    }
    let tally = ExclusionTally::from_rows(&rows);
    Ok(Cohort {
        rows,
        tally,
        indicator_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::tests::{d, patient};
    use crate::store::{EmrTables, Measurement};

    fn meas(date: &str, v: f64) -> Measurement {
        Measurement {
            patient_id: "p".into(),
            record_date: d(date),
            kind: MeasurementKind::Bmi,
            value: Some(v),
        }
    }

    fn records(ms: Vec<Measurement>) -> PatientRecords {
        let store = EmrStore::from_tables(EmrTables {
            patients: vec![patient("p", None, None)],
            measurements: ms,
            ..Default::default()
        })
        .unwrap();
        store.records("p").unwrap().clone()
    }

    /// Independent linear interpolation by day counts.
    fn lerp_oracle(x0: i64, y0: f64, x1: i64, y1: f64, x: i64) -> f64 {
        let w1 = (x - x0) as f64 / (x1 - x0) as f64;
        (1.0 - w1) * y0 + w1 * y1
    }

    #[test]
    fn bmi_interpolation_cases() {
        let idx = d("2008-06-01");
        let day = |n: i64| format_date(idx + chrono::Duration::days(n));
        let r = records(vec![meas(&day(-100), 24.0), meas(&day(100), 26.0)]);
        assert_eq!(measurement_at(&r, &MeasurementKind::Bmi, idx), Some(25.0));

        let r = records(vec![meas(&day(-400), 30.0)]);
        assert_eq!(measurement_at(&r, &MeasurementKind::Bmi, idx), Some(30.0));

        let r = records(vec![meas(&day(-10), 22.0), meas(&day(30), 26.0), meas(&day(-300), 40.0)]);
        let got = measurement_at(&r, &MeasurementKind::Bmi, idx).unwrap();
        assert!((got - 23.0).abs() < 1e-12);
        assert!((got - lerp_oracle(-10, 22.0, 30, 26.0, 0)).abs() < 1e-12);

        let r = records(vec![meas(&day(0), 31.0), meas(&day(-5), 20.0)]);
        assert_eq!(measurement_at(&r, &MeasurementKind::Bmi, idx), Some(31.0));

        let r = records(vec![meas(&day(50), 27.0)]);
        assert_eq!(measurement_at(&r, &MeasurementKind::Bmi, idx), Some(27.0));

        let mut blank = meas(&day(0), 0.0);
        blank.value = None;
        let r = records(vec![blank]);
        assert_eq!(measurement_at(&r, &MeasurementKind::Bmi, idx), None);
    }

    #[test]
    fn age_examples() {
        assert_eq!(age_at_index(Some(1950), d("2008-06-01")), Some(58));
        assert_eq!(age_at_index(None, d("2008-06-01")), None);
        assert_eq!(age_at_index(Some(2008), d("2008-01-05")), Some(0));
        assert_eq!(age_at_index(Some(2010), d("2008-01-05")), None);
    }

    #[test]
    fn leap_day_follow_up() {
        assert_eq!(add_years(d("2008-02-29"), 5), d("2013-02-28"));
        assert_eq!(add_years(d("2008-06-01"), 5), d("2013-06-01"));
        assert_eq!(add_years(d("2008-02-29"), 4), d("2012-02-29"));
    }

    #[test]
    fn chronic_counts() {
        use crate::store::tests::coded;
        use crate::store::SourceTable;
        let store = EmrStore::from_tables(EmrTables {
            patients: vec![patient("p", None, None)],
            coded: vec![
                coded("p", "2007-01-01", "401.9", SourceTable::Billing),
                coded("p", "2007-01-01", "250", SourceTable::HealthCondition),
                coded("p", "2009-01-01", "428", SourceTable::Billing),
            ],
            ..Default::default()
        })
        .unwrap();
        let defs = DefinitionSet::bundled();
        let chronic = CohortConfig::default().chronic_defs;
        let idx = d("2008-01-01");
        assert_eq!(chronic_disease_count(&store, "p", idx, &defs, &[]).unwrap(), 0);
        let n = chronic_disease_count(&store, "p", idx, &defs, &chronic).unwrap();
        let oracle = chronic
            .iter()
            .filter(|c| {
                evaluate_expr(&defs.get(c).unwrap().expr, store.records("p").unwrap(), &DateInterval::as_of(idx))
                    .matched
            })
            .count() as u32;
        assert_eq!(n, 2);
        assert_eq!(n, oracle);
        let all = chronic_disease_count(&store, "p", d("2010-01-01"), &defs, &chronic[..]).unwrap();
        assert_eq!(all, 3);
        let only_matching = vec!["hypertension".to_string(), "diabetes".to_string()];
        assert_eq!(
            chronic_disease_count(&store, "p", idx, &defs, &only_matching).unwrap(),
            only_matching.len() as u32
        );
    }

    #[test]
    fn config_validation() {
        let mut c = CohortConfig::default();
        c.window_end = d("2007-01-01");
        assert!(matches!(c.validate(), Err(CohortError::Config(_))));
        let mut c = CohortConfig::default();
        c.followup_years = 0;
        assert!(c.validate().is_err());
    }
}
