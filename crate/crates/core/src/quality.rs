//! Data-quality passes run before cohort construction: plausibility
//! filtering (out-of-range values become missing), concordance reporting
//! for human review, and a currency check on the extract.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{EmrStore, MeasurementKind};

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("plausibility rule targets unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("plausibility rule for '{target}' has min {min} > max {max}")]
    InvertedBounds { target: String, min: f64, max: f64 },
    #[error("currency check on an empty store")]
    EmptyStore,
}

/// Variables a plausibility rule may target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QualityTarget {
    BirthYear,
    Measurement(MeasurementKind),
}

impl QualityTarget {
    pub fn parse(name: &str) -> Result<QualityTarget, QualityError> {
        match name {
            "birth_year" => Ok(QualityTarget::BirthYear),
            "bmi" => Ok(QualityTarget::Measurement(MeasurementKind::Bmi)),
            "systolic_bp" => Ok(QualityTarget::Measurement(MeasurementKind::SystolicBp)),
            other => Err(QualityError::UnknownVariable(other.to_string())),
        }
    }
}

/// Values strictly outside `[min, max]` are treated as implausible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityRule {
    pub target: String,
    pub min: f64,
    pub max: f64,
}

impl PlausibilityRule {
    pub fn new(target: &str, min: f64, max: f64) -> Self {
        PlausibilityRule {
            target: target.to_string(),
            min,
            max,
        }
    }

    fn validate(&self) -> Result<QualityTarget, QualityError> {
        let target = QualityTarget::parse(&self.target)?;
        if !(self.min <= self.max) {
            return Err(QualityError::InvertedBounds {
                target: self.target.clone(),
                min: self.min,
                max: self.max,
            });
        }
        Ok(target)
    }

    pub fn is_implausible(&self, v: f64) -> bool {
        v < self.min || v > self.max
    }
}

/// BMI (10, 100) kg/m², birth year [1880, as-of year], SBP (50, 300) mmHg.
pub fn default_rules(as_of: NaiveDate) -> Vec<PlausibilityRule> {
    vec![
        PlausibilityRule::new("bmi", 10.0, 100.0),
        PlausibilityRule::new("birth_year", 1880.0, as_of.year() as f64),
        PlausibilityRule::new("systolic_bp", 50.0, 300.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCount {
    pub target: String,
    pub min: f64,
    pub max: f64,
    pub blanked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckKind {
    /// Same-date measurements differing by more than `threshold`.
    Continuous { threshold: f64 },
    /// Presence/absence indicators. Presence in one source with absence in
    /// another is not a disagreement, so these never yield findings.
    Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceCheck {
    pub variable: String,
    /// Measurement kinds for continuous checks, table names for event checks.
    pub sources: Vec<String>,
    #[serde(flatten)]
    pub kind: CheckKind,
}

pub fn default_concordance_checks() -> Vec<ConcordanceCheck> {
    vec![
        ConcordanceCheck {
            variable: "bmi".into(),
            sources: vec!["bmi".into()],
            kind: CheckKind::Continuous { threshold: 5.0 },
        },
        ConcordanceCheck {
            variable: "osteoporosis".into(),
            sources: vec![
                "billing".into(),
                "health_condition".into(),
                "encounter_diagnosis".into(),
                "risk_factor".into(),
                "medication".into(),
            ],
            kind: CheckKind::Event,
        },
        ConcordanceCheck {
            variable: "leg_injury".into(),
            sources: vec![
                "billing".into(),
                "health_condition".into(),
                "encounter_diagnosis".into(),
            ],
            kind: CheckKind::Event,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictingValue {
    pub date: NaiveDate,
    pub source: String,
    pub value: f64,
}

/// One (patient, variable) pair whose sources disagree. Never resolved
/// automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceFinding {
    pub variable: String,
    pub patient_id: String,
    pub values: Vec<ConflictingValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrencySummary {
    pub latest_record_date: NaiveDate,
    pub as_of_date: NaiveDate,
    pub max_staleness_days: i64,
    pub staleness_days: i64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub plausibility: Vec<RuleCount>,
    pub concordance: Vec<ConcordanceFinding>,
    pub currency: Option<CurrencySummary>,
}

impl QualityReport {
    pub fn total_blanked(&self) -> usize {
        self.plausibility.iter().map(|r| r.blanked).sum()
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Plausibility")?;
        for r in &self.plausibility {
            writeln!(
                f,
                "  {:<12} [{}, {}]  set to missing: {}",
                r.target, r.min, r.max, r.blanked
            )?;
        }
        writeln!(f, "Concordance findings: {}", self.concordance.len())?;
        for c in &self.concordance {
            let vals: Vec<String> = c
                .values
                .iter()
                .map(|v| format!("{} {}={}", v.date, v.source, v.value))
                .collect();
            writeln!(f, "  {} {}: {}", c.patient_id, c.variable, vals.join("; "))?;
        }
        match &self.currency {
            Some(c) => writeln!(
                f,
                "Currency: latest record {}, as of {}, {} days stale (limit {}): {}",
                c.latest_record_date,
                c.as_of_date,
                c.staleness_days,
                c.max_staleness_days,
                if c.pass { "PASS" } else { "FAIL" }
            ),
            None => writeln!(f, "Currency: not checked"),
        }
    }
}

/// Replaces every value strictly outside its rule's bounds with missing.
/// Rules are applied in order; a value blanked by an earlier rule is not
/// counted again.
pub fn apply_plausibility(
    store: &EmrStore,
    rules: &[PlausibilityRule],
) -> Result<(EmrStore, QualityReport), QualityError> {
    let targets: Vec<QualityTarget> = rules
        .iter()
        .map(PlausibilityRule::validate)
        .collect::<Result<_, _>>()?;
    let mut out = store.clone();
    let mut counts = vec![0usize; rules.len()];
    for (i, (rule, target)) in rules.iter().zip(&targets).enumerate() {
        match target {
            QualityTarget::BirthYear => {
                for p in out.patients_mut() {
                    if let Some(y) = p.birth_year {
                        if rule.is_implausible(y as f64) {
                            p.birth_year = None;
                            counts[i] += 1;
                        }
                    }
                }
            }
            QualityTarget::Measurement(kind) => {
                for rec in out.records_mut() {
                    for m in rec.measurements.iter_mut().filter(|m| &m.kind == kind) {
                        if let Some(v) = m.value {
                            if rule.is_implausible(v) {
                                m.value = None;
                                counts[i] += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    let report = QualityReport {
        plausibility: rules
            .iter()
            .zip(counts)
            .map(|(r, blanked)| RuleCount {
                target: r.target.clone(),
                min: r.min,
                max: r.max,
                blanked,
            })
            .collect(),
        ..Default::default()
    };
    Ok((out, report))
}

/// Lists (patient, variable) pairs whose sources disagree.
pub fn concordance_report(store: &EmrStore, checks: &[ConcordanceCheck]) -> Vec<ConcordanceFinding> {
    let mut findings = Vec::new();
    for check in checks {
        let threshold = match check.kind {
            CheckKind::Continuous { threshold } => threshold,
            CheckKind::Event => continue,
        };
        let kinds: Vec<MeasurementKind> = check.sources.iter().map(|s| MeasurementKind::parse(s)).collect();
        for pid in store.patient_ids() {
            let recs = store.records(pid).expect("patient listed by store");
            let mut by_date: BTreeMap<NaiveDate, Vec<ConflictingValue>> = BTreeMap::new();
            for m in recs.measurements.iter().filter(|m| kinds.contains(&m.kind)) {
                if let Some(v) = m.value {
                    by_date.entry(m.record_date).or_default().push(ConflictingValue {
                        date: m.record_date,
                        source: m.kind.as_str().to_string(),
                        value: v,
                    });
                }
            }
            let mut conflicting = Vec::new();
            for vals in by_date.into_values() {
                let lo = vals.iter().map(|v| v.value).fold(f64::INFINITY, f64::min);
                let hi = vals.iter().map(|v| v.value).fold(f64::NEG_INFINITY, f64::max);
                if hi - lo > threshold {
                    conflicting.extend(vals);
                }
            }
            if !conflicting.is_empty() {
                findings.push(ConcordanceFinding {
                    variable: check.variable.clone(),
                    patient_id: pid.to_string(),
                    values: conflicting,
                });
            }
        }
    }
    findings
}

/// Passes when the newest record is at most `max_staleness_days` older
/// than `as_of`.
pub fn currency_check(
    store: &EmrStore,
    as_of: NaiveDate,
    max_staleness_days: i64,
) -> Result<CurrencySummary, QualityError> {
    let latest = store.latest_record_date().ok_or(QualityError::EmptyStore)?;
    let staleness = (as_of - latest).num_days();
    Ok(CurrencySummary {
        latest_record_date: latest,
        as_of_date: as_of,
        max_staleness_days,
        staleness_days: staleness,
        pass: staleness <= max_staleness_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::tests::{d, encounter, patient};
    use crate::store::{EmrTables, Measurement};
    use proptest::prelude::*;

    fn meas(pid: &str, date: &str, kind: MeasurementKind, v: f64) -> Measurement {
        Measurement {
            patient_id: pid.into(),
            record_date: d(date),
            kind,
            value: Some(v),
        }
    }

    fn bmi_store(values: &[f64], birth_years: &[Option<i32>]) -> EmrStore {
        let patients = birth_years
            .iter()
            .enumerate()
            .map(|(i, y)| patient(&format!("p{}", i), *y, None))
            .collect();
        let measurements = values
            .iter()
            .enumerate()
            .map(|(i, v)| meas("p0", &format!("2008-01-{:02}", i % 28 + 1), MeasurementKind::Bmi, *v))
            .collect();
        EmrStore::from_tables(EmrTables {
            patients,
            measurements,
            ..Default::default()
        })
        .unwrap()
    }

    fn bmi_values(store: &EmrStore) -> Vec<Option<f64>> {
        store
            .records("p0")
            .unwrap()
            .measurements
            .iter()
            .map(|m| m.value)
            .collect()
    }

    #[test]
    fn bmi_boundaries() {
        let store = bmi_store(&[101.0, 9.9, 100.0, 10.0, 28.0], &[Some(1950)]);
        let rules = default_rules(d("2016-01-21"));
        let (clean, report) = apply_plausibility(&store, &rules).unwrap();
        let mut vals = bmi_values(&clean);
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals, vec![None, None, Some(10.0), Some(28.0), Some(100.0)]);
        assert_eq!(report.plausibility[0].blanked, 2);
        assert_eq!(report.total_blanked(), 2);
    }

    #[test]
    fn birth_year_zero_is_missing() {
        let store = bmi_store(&[], &[Some(0), Some(1950), None, Some(2017)]);
        let (clean, report) = apply_plausibility(&store, &default_rules(d("2016-01-21"))).unwrap();
        let years: Vec<Option<i32>> = clean.patients().map(|p| p.birth_year).collect();
        assert_eq!(years, vec![None, Some(1950), None, None]);
        assert_eq!(report.plausibility[1].blanked, 2);
    }

    #[test]
    fn rule_errors() {
        let store = bmi_store(&[], &[None]);
        assert_eq!(
            apply_plausibility(&store, &[PlausibilityRule::new("height", 0.0, 1.0)]).unwrap_err(),
            QualityError::UnknownVariable("height".into())
        );
        assert!(matches!(
            apply_plausibility(&store, &[PlausibilityRule::new("bmi", 5.0, 1.0)]),
            Err(QualityError::InvertedBounds { .. })
        ));
    }

    #[test]
    fn same_date_bmi_disagreement() {
        let store = EmrStore::from_tables(EmrTables {
            patients: vec![patient("a", None, None), patient("b", None, None)],
            measurements: vec![
                meas("a", "2008-01-01", MeasurementKind::Bmi, 25.0),
                meas("a", "2008-01-01", MeasurementKind::Bmi, 31.0),
                meas("b", "2008-01-01", MeasurementKind::Bmi, 25.0),
                meas("b", "2008-01-01", MeasurementKind::Bmi, 30.0),
                meas("b", "2008-02-01", MeasurementKind::Bmi, 40.0),
            ],
            ..Default::default()
        })
        .unwrap();
        let findings = concordance_report(&store, &default_concordance_checks());
        // brute-force pairwise scan
        let mut expected = Vec::new();
        for pid in ["a", "b"] {
            let ms = &store.records(pid).unwrap().measurements;
            let mut hit = false;
            for i in 0..ms.len() {
                for j in i + 1..ms.len() {
                    if ms[i].record_date == ms[j].record_date
                        && (ms[i].value.unwrap() - ms[j].value.unwrap()).abs() > 5.0
                    {
                        hit = true;
                    }
                }
            }
            if hit {
                expected.push(pid.to_string());
            }
        }
        let got: Vec<String> = findings.iter().map(|f| f.patient_id.clone()).collect();
        assert_eq!(got, expected);
        assert_eq!(got, vec!["a".to_string()]);
        assert_eq!(findings[0].values.len(), 2);
    }

    #[test]
    fn event_indicators_never_conflict() {
        use crate::store::tests::coded;
        use crate::store::SourceTable;
        let store = EmrStore::from_tables(EmrTables {
            patients: vec![patient("a", None, None)],
            coded: vec![coded("a", "2008-01-01", "733", SourceTable::Billing)],
            measurements: vec![meas("a", "2008-01-01", MeasurementKind::Bmi, 25.0)],
            ..Default::default()
        })
        .unwrap();
        assert!(concordance_report(&store, &default_concordance_checks()).is_empty());
    }

    #[test]
    fn currency() {
        let store = EmrStore::from_tables(EmrTables {
            patients: vec![patient("a", None, None)],
            encounters: vec![encounter("a", "2016-01-21", 0)],
            ..Default::default()
        })
        .unwrap();
        assert!(currency_check(&store, d("2016-01-21"), 0).unwrap().pass);
        let c = currency_check(&store, d("2016-01-21") + chrono::Duration::days(400), 365).unwrap();
        assert!(!c.pass);
        assert_eq!(c.staleness_days, 400);
        let empty = EmrStore::default();
        assert_eq!(currency_check(&empty, d("2016-01-21"), 365).unwrap_err(), QualityError::EmptyStore);
    }

    #[test]
    fn report_renders() {
        let store = bmi_store(&[101.0], &[Some(0)]);
        let (_, mut report) = apply_plausibility(&store, &default_rules(d("2016-01-21"))).unwrap();
        report.currency = None;
        let text = report.to_string();
        assert!(text.contains("bmi"));
        assert!(text.contains("set to missing: 1"));
    }

    proptest! {
        #[test]
        fn plausibility_properties(values in prop::collection::vec(0.0f64..150.0, 0..30),
                                   years in prop::collection::vec(prop::option::of(-10i32..2100), 1..10)) {
            let store = bmi_store(&values, &years);
            let rules = default_rules(d("2016-01-21"));
            let (once, report) = apply_plausibility(&store, &rules).unwrap();
            let (twice, report2) = apply_plausibility(&once, &rules).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(report2.total_blanked(), 0);

            // independent full scan of out-of-range cells
            let scan = values.iter().filter(|v| **v < 10.0 || **v > 100.0).count()
                + years.iter().flatten().filter(|y| **y < 1880 || **y > 2016).count();
            prop_assert_eq!(report.total_blanked(), scan);

            // in-range cells untouched
            let before = bmi_values(&store);
            let after = bmi_values(&once);
            for (b, a) in before.iter().zip(&after) {
                let v = b.unwrap();
                if (10.0..=100.0).contains(&v) {
                    prop_assert_eq!(*a, Some(v));
                } else {
                    prop_assert_eq!(*a, None);
                }
            }
        }
    }
}
