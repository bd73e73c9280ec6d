//! Case and risk-indicator definitions written as decision rules over coded
//! records, free-text terms and medications.

mod ast;
mod eval;
mod parser;

pub use ast::{print_definitions, DefinitionSpec, RuleExpr, TermTable};
pub use eval::{code_root, evaluate, evaluate_expr, DateInterval, EvalResult, MatchRef};
pub use parser::{parse_definitions, DefinitionError};

use std::collections::BTreeMap;

/// Leg injury, osteoporosis, the placeholder outcome and the chronic
/// conditions used for the imputation auxiliary.
pub const DEFAULT_DEFINITIONS: &str = include_str!("../../assets/definitions.def");

/// Definitions keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DefinitionSet {
    defs: BTreeMap<String, DefinitionSpec>,
}

impl DefinitionSet {
    pub fn parse(text: &str) -> Result<Self, DefinitionError> {
        Ok(Self::from_specs(parse_definitions(text)?))
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_DEFINITIONS).expect("bundled definitions parse")
    }

    pub fn from_specs(specs: Vec<DefinitionSpec>) -> Self {
        DefinitionSet {
            defs: specs.into_iter().map(|d| (d.name.clone(), d)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&DefinitionSpec, DefinitionError> {
        self.defs
            .get(name)
            .ok_or_else(|| DefinitionError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.defs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::tests::{coded, d, patient};
    use crate::store::{EmrStore, EmrTables, MedicationRecord, RiskFactorEntry, SourceTable};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn all_sources() -> BTreeSet<SourceTable> {
        SourceTable::ALL.into_iter().collect()
    }

    #[test]
    fn leg_injury_parses_to_range_plus_three_codes() {
        let defs = parse_definitions(
            "def leg_injury = icd9[820-829 | 843 | 844 | 928] in (billing, health_condition, encounter_diagnosis)",
        )
        .unwrap();
        assert_eq!(defs.len(), 1);
        let s = all_sources();
        assert_eq!(
            defs[0].expr,
            RuleExpr::Or(vec![
                RuleExpr::CodeRange { low_root: 820, high_root: 829, sources: s.clone() },
                RuleExpr::CodeExact { code_root: 843, sources: s.clone() },
                RuleExpr::CodeExact { code_root: 844, sources: s.clone() },
                RuleExpr::CodeExact { code_root: 928, sources: s },
            ])
        );
    }

    #[test]
    fn short_range_form() {
        let a = parse_definitions("def a = icd9[820-29]").unwrap();
        let b = parse_definitions("def a = icd9[820-829]").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn osteoporosis_is_three_way_or() {
        let defs = parse_definitions(
            r#"def osteoporosis = icd9[733] in (billing, health_condition, encounter_diagnosis) | term("osteoporosis") in risk_factor | med("alendronic acid","risedronic acid","ibandronic acid")"#,
        )
        .unwrap();
        match &defs[0].expr {
            RuleExpr::Or(children) => {
                assert_eq!(children.len(), 3);
                assert!(matches!(children[0], RuleExpr::CodeExact { code_root: 733, .. }));
                assert!(matches!(
                    children[1],
                    RuleExpr::TermMatch { table: TermTable::RiskFactor, .. }
                ));
                assert!(matches!(&children[2], RuleExpr::MedicationAny { names } if names.len() == 3));
            }
            other => panic!("not an Or: {:?}", other),
        }
    }

    #[test]
    fn inverted_range_rejected() {
        assert!(matches!(
            parse_definitions("def bad = icd9[829-820]"),
            Err(DefinitionError::InvertedRange { low: 829, high: 820, line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_name_rejected() {
        assert!(matches!(
            parse_definitions("def a = icd9[250]\ndef a = icd9[401]"),
            Err(DefinitionError::Duplicate { line: 2, .. })
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_definitions("def a = icd9[250]\ndef b = icd9(250)") {
            Err(DefinitionError::Syntax { line, column, .. }) => {
                assert_eq!((line, column), (2, 13));
            }
            other => panic!("unexpected {:?}", other),
        }
        assert!(matches!(
            parse_definitions("def a = icd9[2500]"),
            Err(DefinitionError::Syntax { .. })
        ));
        assert!(matches!(
            parse_definitions("def a = icd9[250] in (pharmacy)"),
            Err(DefinitionError::Syntax { .. })
        ));
    }

    #[test]
    fn comments_become_descriptions() {
        let defs = parse_definitions("# first\n# second\ndef a = icd9[250]\n\n# other\n\ndef b = med(\"x\")").unwrap();
        assert_eq!(defs[0].description, "first\nsecond");
        assert_eq!(defs[1].description, "");
    }

    #[test]
    fn bundled_definitions_parse() {
        let set = DefinitionSet::bundled();
        for name in ["leg_injury", "osteoporosis", "osteoarthritis", "hypertension"] {
            assert!(set.get(name).is_ok(), "{}", name);
        }
        assert!(set.get("osteoarthritis").unwrap().description.contains("NON-VALIDATED"));
        assert!(matches!(set.get("nope"), Err(DefinitionError::Unknown(_))));
    }

    #[test]
    fn code_root_extraction() {
        assert_eq!(code_root("733.0"), Some(733));
        assert_eq!(code_root("844"), Some(844));
        assert_eq!(code_root("042"), Some(42));
        assert_eq!(code_root("0844"), None);
        assert_eq!(code_root("V45.1"), None);
        assert_eq!(code_root(""), None);
    }

    fn fixture() -> EmrStore {
        let tables = EmrTables {
            patients: vec![patient("a", None, None), patient("b", None, None), patient("c", None, None)],
            coded: vec![
                coded("a", "2007-03-01", "844", SourceTable::Billing),
                coded("b", "2008-01-01", "733.0", SourceTable::EncounterDiagnosis),
                coded("b", "2009-01-01", "0844", SourceTable::Billing),
            ],
            medications: vec![MedicationRecord {
                patient_id: "c".into(),
                record_date: d("2005-05-05"),
                drug_name: "Alendronic Acid".into(),
            }],
            risk_factors: vec![RiskFactorEntry {
                patient_id: "c".into(),
                record_date: d("2006-01-01"),
                term: "Hx of OSTEOPOROSIS".into(),
            }],
            ..Default::default()
        };
        EmrStore::from_tables(tables).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let set = DefinitionSet::bundled();
        let store = fixture();
        let leg = set.get("leg_injury").unwrap();
        let osteo = set.get("osteoporosis").unwrap();

        let r = evaluate(leg, &store, "a", &DateInterval::as_of(d("2008-06-01"))).unwrap();
        assert!(r.matched);
        assert_eq!(r.first_match_date, Some(d("2007-03-01")));
        let r = evaluate(leg, &store, "a", &DateInterval::as_of(d("2007-02-28"))).unwrap();
        assert!(!r.matched);

        assert!(evaluate(osteo, &store, "b", &DateInterval::all()).unwrap().matched);
        // "0844" is not a valid root, so no leg injury for b
        assert!(!evaluate(leg, &store, "b", &DateInterval::all()).unwrap().matched);

        let r = evaluate(osteo, &store, "c", &DateInterval::as_of(d("2005-12-31"))).unwrap();
        assert!(r.matched);
        assert_eq!(r.first_match_date, Some(d("2005-05-05")));
        assert_eq!(r.matching_records.len(), 1);
        let r = evaluate(osteo, &store, "c", &DateInterval::all()).unwrap();
        assert_eq!(r.matching_records.len(), 2);

        assert!(evaluate(leg, &store, "zzz", &DateInterval::all()).is_err());
    }

    #[test]
    fn no_records_means_no_match() {
        let store = EmrStore::from_tables(EmrTables {
            patients: vec![patient("x", None, None)],
            ..Default::default()
        })
        .unwrap();
        for name in ["leg_injury", "osteoporosis", "osteoarthritis"] {
            let def = DefinitionSet::bundled().get(name).unwrap().clone();
            let r = evaluate(&def, &store, "x", &DateInterval::all()).unwrap();
            assert!(!r.matched);
            assert_eq!(r.first_match_date, None);
        }
    }

    #[test]
    fn medication_case_insensitive_against_lowercase_scan() {
        let store = fixture();
        let osteo = DefinitionSet::bundled().get("osteoporosis").unwrap().clone();
        let names = ["alendronic acid", "risedronic acid", "ibandronic acid"];
        for pid in ["a", "b", "c"] {
            let recs = store.records(pid).unwrap();
            let scan = recs
                .medications
                .iter()
                .any(|m| names.contains(&m.drug_name.to_lowercase().as_str()));
            let med_only = RuleExpr::MedicationAny {
                names: vec!["Alendronic acid".into(), "RISEDRONIC ACID".into(), "ibandronic acid".into()],
            };
            assert_eq!(evaluate_expr(&med_only, recs, &DateInterval::all()).matched, scan);
            if scan {
                assert!(evaluate(&osteo, &store, pid, &DateInterval::all()).unwrap().matched);
            }
        }
    }

    #[test]
    fn not_and_combinators() {
        let store = fixture();
        let recs = store.records("a").unwrap();
        let leg = DefinitionSet::bundled().get("leg_injury").unwrap().expr.clone();
        let osteo = DefinitionSet::bundled().get("osteoporosis").unwrap().expr.clone();
        let all = DateInterval::all();
        let and = RuleExpr::And(vec![leg.clone(), RuleExpr::Not(Box::new(osteo.clone()))]);
        assert!(evaluate_expr(&and, recs, &all).matched);
        let and = RuleExpr::And(vec![leg, osteo]);
        assert!(!evaluate_expr(&and, recs, &all).matched);
    }

    // ---- property tests -------------------------------------------------

    fn arb_sources() -> impl Strategy<Value = BTreeSet<SourceTable>> {
        proptest::sample::subsequence(SourceTable::ALL.to_vec(), 1..=3)
            .prop_map(|v| v.into_iter().collect())
    }

    fn arb_leaf() -> impl Strategy<Value = RuleExpr> {
        let text = "[a-zA-Z][a-zA-Z \"\\\\]{0,8}";
        prop_oneof![
            (0u16..1000, 0u16..50, arb_sources()).prop_map(|(lo, w, s)| RuleExpr::CodeRange {
                low_root: lo,
                high_root: (lo + w).min(999),
                sources: s
            }),
            (0u16..1000, arb_sources()).prop_map(|(c, s)| RuleExpr::CodeExact { code_root: c, sources: s }),
            (text, prop::bool::ANY).prop_map(|(t, rf)| RuleExpr::TermMatch {
                text: t,
                table: if rf { TermTable::RiskFactor } else { TermTable::HealthCondition }
            }),
            prop::collection::vec(text, 1..4).prop_map(|names| RuleExpr::MedicationAny { names }),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = RuleExpr> {
        arb_leaf().prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(RuleExpr::Or),
                prop::collection::vec(inner.clone(), 2..4).prop_map(RuleExpr::And),
                inner.prop_map(|e| RuleExpr::Not(Box::new(e))),
            ]
        })
    }

    fn arb_store() -> impl Strategy<Value = EmrStore> {
        let codes = prop::sample::select(vec![
            "820", "825.1", "829", "830", "843", "844.2", "928", "733", "733.0", "715", "0844", "V45",
        ]);
        let source = prop::sample::select(SourceTable::ALL.to_vec());
        let coded_rec = (codes, source, 0i64..3000).prop_map(|(c, s, off)| crate::store::CodedRecord {
            patient_id: "p".into(),
            record_date: d("2004-01-01") + chrono::Duration::days(off),
            code: c.to_string(),
            description: if off % 3 == 0 { "Osteoporosis".into() } else { String::new() },
            source_table: s,
        });
        let term = prop::sample::select(vec!["osteoporosis", "OSTEOPOROSIS risk", "fall"]);
        let rf = (term, 0i64..3000).prop_map(|(t, off)| RiskFactorEntry {
            patient_id: "p".into(),
            record_date: d("2004-01-01") + chrono::Duration::days(off),
            term: t.to_string(),
        });
        let drug = prop::sample::select(vec!["Alendronic acid", "risedronic ACID", "ibuprofen"]);
        let med = (drug, 0i64..3000).prop_map(|(n, off)| MedicationRecord {
            patient_id: "p".into(),
            record_date: d("2004-01-01") + chrono::Duration::days(off),
            drug_name: n.to_string(),
        });
        (
            prop::collection::vec(coded_rec, 0..12),
            prop::collection::vec(rf, 0..4),
            prop::collection::vec(med, 0..4),
        )
            .prop_map(|(coded, risk_factors, medications)| {
                EmrStore::from_tables(EmrTables {
                    patients: vec![patient("p", None, None)],
                    coded,
                    risk_factors,
                    medications,
                    ..Default::default()
                })
                .unwrap()
            })
    }

    /// Independent oracle: dates of every individual record a Not-free leaf
    /// matches, by direct scan.
    fn scan_dates(expr: &RuleExpr, store: &EmrStore, iv: &DateInterval) -> Vec<chrono::NaiveDate> {
        let recs = store.records("p").unwrap();
        match expr {
            RuleExpr::CodeRange { low_root, high_root, sources } => recs
                .coded
                .iter()
                .filter(|r| sources.contains(&r.source_table) && iv.contains(r.record_date))
                .filter(|r| {
                    let root = r.code.split('.').next().unwrap();
                    root.len() == 3
                        && root.chars().all(|c| c.is_ascii_digit())
                        && (*low_root..=*high_root).contains(&root.parse::<u16>().unwrap())
                })
                .map(|r| r.record_date)
                .collect(),
            RuleExpr::CodeExact { code_root, sources } => scan_dates(
                &RuleExpr::CodeRange { low_root: *code_root, high_root: *code_root, sources: sources.clone() },
                store,
                iv,
            ),
            RuleExpr::TermMatch { text, table } => match table {
                TermTable::RiskFactor => recs
                    .risk_factors
                    .iter()
                    .filter(|r| iv.contains(r.record_date) && r.term.to_lowercase().contains(&text.to_lowercase()))
                    .map(|r| r.record_date)
                    .collect(),
                TermTable::HealthCondition => recs
                    .coded
                    .iter()
                    .filter(|r| r.source_table == SourceTable::HealthCondition)
                    .filter(|r| iv.contains(r.record_date) && r.description.to_lowercase().contains(&text.to_lowercase()))
                    .map(|r| r.record_date)
                    .collect(),
            },
            RuleExpr::MedicationAny { names } => recs
                .medications
                .iter()
                .filter(|r| iv.contains(r.record_date))
                .filter(|r| names.iter().any(|n| n.to_lowercase() == r.drug_name.to_lowercase()))
                .map(|r| r.record_date)
                .collect(),
            RuleExpr::Or(c) | RuleExpr::And(c) => c.iter().flat_map(|e| scan_dates(e, store, iv)).collect(),
            RuleExpr::Not(_) => vec![],
        }
    }

    fn arb_not_free() -> impl Strategy<Value = RuleExpr> {
        arb_expr().prop_filter("not-free", |e| !e.contains_not())
    }

    fn realistic_leaf() -> impl Strategy<Value = RuleExpr> {
        let s = all_sources();
        prop_oneof![
            Just(RuleExpr::CodeRange { low_root: 820, high_root: 829, sources: s.clone() }),
            Just(RuleExpr::CodeExact { code_root: 844, sources: s.clone() }),
            Just(RuleExpr::CodeExact { code_root: 733, sources: s.clone() }),
            Just(RuleExpr::CodeExact { code_root: 715, sources: [SourceTable::Billing].into_iter().collect() }),
            Just(RuleExpr::TermMatch { text: "osteoporosis".into(), table: TermTable::RiskFactor }),
            Just(RuleExpr::TermMatch { text: "osteoporosis".into(), table: TermTable::HealthCondition }),
            Just(RuleExpr::MedicationAny { names: vec!["alendronic acid".into(), "risedronic acid".into()] }),
        ]
    }

    fn realistic_expr() -> impl Strategy<Value = RuleExpr> {
        realistic_leaf().prop_recursive(2, 12, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(RuleExpr::Or),
                prop::collection::vec(inner.clone(), 2..4).prop_map(RuleExpr::And),
                inner.prop_map(|e| RuleExpr::Not(Box::new(e))),
            ]
        })
    }

    fn has_and(e: &RuleExpr) -> bool {
        match e {
            RuleExpr::And(_) => true,
            RuleExpr::Or(c) => c.iter().any(has_and),
            RuleExpr::Not(c) => has_and(c),
            _ => false,
        }
    }

    fn arb_interval() -> impl Strategy<Value = DateInterval> {
        (0i64..3000, 0i64..3000).prop_map(|(a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            DateInterval::after_until(
                d("2004-01-01") + chrono::Duration::days(lo),
                d("2004-01-01") + chrono::Duration::days(hi),
            )
        })
    }

    proptest! {
        #[test]
        fn pretty_print_reparses(expr in arb_expr(), desc in "[a-z ]{0,12}") {
            let def = DefinitionSpec { name: "x".into(), expr, description: desc.trim_end().to_string() };
            let text = print_definitions(std::slice::from_ref(&def));
            let back = parse_definitions(&text).unwrap();
            prop_assert_eq!(back, vec![def]);
        }

        #[test]
        fn or_is_disjunction(a in realistic_expr(), b in realistic_expr(), store in arb_store(), iv in arb_interval()) {
            let recs = store.records("p").unwrap();
            let or = evaluate_expr(&RuleExpr::Or(vec![a.clone(), b.clone()]), recs, &iv).matched;
            let sep = evaluate_expr(&a, recs, &iv).matched || evaluate_expr(&b, recs, &iv).matched;
            prop_assert_eq!(or, sep);
        }

        #[test]
        fn first_match_is_scan_minimum(e in realistic_expr().prop_filter("not-free", |e| !e.contains_not()),
                                       store in arb_store(), iv in arb_interval()) {
            let recs = store.records("p").unwrap();
            let r = evaluate_expr(&e, recs, &iv);
            prop_assert_eq!(r.matched, r.first_match_date.is_some());
            prop_assert_eq!(r.first_match_date, r.matching_records.iter().map(|m| m.date).min());
            if !has_and(&e) {
                let scan = scan_dates(&e, &store, &iv);
                prop_assert_eq!(r.matched, !scan.is_empty());
                prop_assert_eq!(r.first_match_date, scan.iter().min().copied());
            }
        }

        #[test]
        fn enlarging_interval_is_monotone(e in arb_not_free(), store in arb_store(),
                                          a in 0i64..3000, b in 0i64..3000, grow in 0i64..500) {
            let recs = store.records("p").unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let base = d("2004-01-01");
            let small = DateInterval::after_until(base + chrono::Duration::days(lo), base + chrono::Duration::days(hi));
            let big = DateInterval::after_until(base + chrono::Duration::days(lo - grow), base + chrono::Duration::days(hi + grow));
            if evaluate_expr(&e, recs, &small).matched {
                prop_assert!(evaluate_expr(&e, recs, &big).matched);
            }
        }
    }
}
