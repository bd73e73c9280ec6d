use std::ops::Bound;

use chrono::NaiveDate;
use serde::Serialize;

use super::ast::{DefinitionSpec, RuleExpr, TermTable};
use crate::store::{EmrStore, PatientRecords, RecordRef, SourceTable, StoreError};

/// Date window a definition is evaluated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateInterval {
    pub start: Bound<NaiveDate>,
    pub end: Bound<NaiveDate>,
}

impl DateInterval {
    pub fn all() -> Self {
        DateInterval {
            start: Bound::Unbounded,
            end: Bound::Unbounded,
        }
    }

    /// `(-inf, date]`
    pub fn as_of(date: NaiveDate) -> Self {
        DateInterval {
            start: Bound::Unbounded,
            end: Bound::Included(date),
        }
    }

    /// `(after, until]`
    pub fn after_until(after: NaiveDate, until: NaiveDate) -> Self {
        DateInterval {
            start: Bound::Excluded(after),
            end: Bound::Included(until),
        }
    }

    /// `[start, end)`
    pub fn half_open(start: NaiveDate, end: NaiveDate) -> Self {
        DateInterval {
            start: Bound::Included(start),
            end: Bound::Excluded(end),
        }
    }

    /// `(after, inf)`
    pub fn after(after: NaiveDate) -> Self {
        DateInterval {
            start: Bound::Excluded(after),
            end: Bound::Unbounded,
        }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        let lower = match self.start {
            Bound::Unbounded => true,
            Bound::Included(s) => d >= s,
            Bound::Excluded(s) => d > s,
        };
        let upper = match self.end {
            Bound::Unbounded => true,
            Bound::Included(e) => d <= e,
            Bound::Excluded(e) => d < e,
        };
        lower && upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct MatchRef {
    pub date: NaiveDate,
    pub record: RecordRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct EvalResult {
    pub matched: bool,
    pub first_match_date: Option<NaiveDate>,
    /// Sorted by date, then record.
    pub matching_records: Vec<MatchRef>,
}

impl EvalResult {
    fn from_refs(mut refs: Vec<MatchRef>) -> Self {
        refs.sort();
        refs.dedup();
        EvalResult {
            matched: !refs.is_empty(),
            first_match_date: refs.first().map(|r| r.date),
            matching_records: refs,
        }
    }
}

/// Integer value of the digits before the first `.`, when they are
/// exactly three ASCII digits. `"733.0"` gives 733; `"0844"` and `"V45"`
/// give `None`.
pub fn code_root(code: &str) -> Option<u16> {
    let root = code.trim().split('.').next().unwrap_or("");
    if root.len() == 3 && root.bytes().all(|b| b.is_ascii_digit()) {
        root.parse().ok()
    } else {
        None
    }
}

fn coded_matches(
    records: &PatientRecords,
    interval: &DateInterval,
    sources: &std::collections::BTreeSet<SourceTable>,
    pred: impl Fn(u16) -> bool,
) -> Vec<MatchRef> {
    records
        .coded
        .iter()
        .enumerate()
        .filter(|(_, r)| sources.contains(&r.source_table) && interval.contains(r.record_date))
        .filter(|(_, r)| match code_root(&r.code) {
            Some(root) => pred(root),
            None => {
                log::debug!(
                    "patient {}: code '{}' in {} has no 3-digit numeric root, ignored",
                    r.patient_id,
                    r.code,
                    r.source_table
                );
                false
            }
        })
        .map(|(i, r)| MatchRef {
            date: r.record_date,
            record: RecordRef::Coded(i),
        })
        .collect()
}

/// Evaluates an expression against one patient's records.
pub fn evaluate_expr(expr: &RuleExpr, records: &PatientRecords, interval: &DateInterval) -> EvalResult {
    match expr {
        RuleExpr::CodeRange {
            low_root,
            high_root,
            sources,
        } => EvalResult::from_refs(coded_matches(records, interval, sources, |r| {
            (*low_root..=*high_root).contains(&r)
        })),
        RuleExpr::CodeExact { code_root, sources } => {
            EvalResult::from_refs(coded_matches(records, interval, sources, |r| r == *code_root))
        }
        RuleExpr::TermMatch { text, table } => {
            let needle = text.to_lowercase();
            let refs = match table {
                TermTable::RiskFactor => records
                    .risk_factors
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| interval.contains(r.record_date))
                    .filter(|(_, r)| r.term.to_lowercase().contains(&needle))
                    .map(|(i, r)| MatchRef {
                        date: r.record_date,
                        record: RecordRef::RiskFactor(i),
                    })
                    .collect(),
                TermTable::HealthCondition => records
                    .coded
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.source_table == SourceTable::HealthCondition)
                    .filter(|(_, r)| interval.contains(r.record_date))
                    .filter(|(_, r)| r.description.to_lowercase().contains(&needle))
                    .map(|(i, r)| MatchRef {
                        date: r.record_date,
                        record: RecordRef::Coded(i),
                    })
                    .collect(),
            };
            EvalResult::from_refs(refs)
        }
        RuleExpr::MedicationAny { names } => {
            let wanted: Vec<String> = names.iter().map(|n| n.trim().to_lowercase()).collect();
            EvalResult::from_refs(
                records
                    .medications
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| interval.contains(r.record_date))
                    .filter(|(_, r)| {
                        let name = r.drug_name.trim().to_lowercase();
                        wanted.contains(&name)
                    })
                    .map(|(i, r)| MatchRef {
                        date: r.record_date,
                        record: RecordRef::Medication(i),
                    })
                    .collect(),
            )
        }
        RuleExpr::Or(children) => {
            let mut refs = Vec::new();
            let mut any = false;
            for c in children {
                let r = evaluate_expr(c, records, interval);
                any |= r.matched;
                refs.extend(r.matching_records);
            }
            let mut out = EvalResult::from_refs(refs);
            // a matching Not child contributes no records
            out.matched = any;
            out
        }
        RuleExpr::And(children) => {
            let mut refs = Vec::new();
            for c in children {
                let r = evaluate_expr(c, records, interval);
                if !r.matched {
                    return EvalResult::default();
                }
                refs.extend(r.matching_records);
            }
            let mut out = EvalResult::from_refs(refs);
            // an And of Not-only children matches without any records
            out.matched = true;
            out
        }
        RuleExpr::Not(child) => EvalResult {
            matched: !evaluate_expr(child, records, interval).matched,
            first_match_date: None,
            matching_records: Vec::new(),
        },
    }
}

/// Evaluates a definition for one patient over `interval`. A patient with
/// no matching record is a non-match.
pub fn evaluate(
    def: &DefinitionSpec,
    store: &EmrStore,
    patient_id: &str,
    interval: &DateInterval,
) -> Result<EvalResult, StoreError> {
    let records = store.records(patient_id)?;
    Ok(evaluate_expr(&def.expr, records, interval))
}
