use std::collections::BTreeMap;

use framr_core::cohort::{build_cohort, CohortConfig};
use framr_core::definitions::{evaluate, DateInterval, DefinitionSet};
use framr_core::fixtures::{cohort_fixture, rule_fixture};
use framr_core::store::{EmrStore, EmrTables, SourceTable};

#[test]
fn cohort_fixture_labels() {
    let (tables, expected) = cohort_fixture();
    let store = EmrStore::from_tables(tables).unwrap();
    let cohort = build_cohort(&store, &DefinitionSet::bundled(), &CohortConfig::default()).unwrap();
    assert_eq!(cohort.rows.len(), 12);
    for (row, exp) in cohort.rows.iter().zip(&expected) {
        assert_eq!(row.patient_id, exp.patient_id);
        assert_eq!(row.exclusion_reason, exp.exclusion, "{}", exp.patient_id);
        assert_eq!(row.outcome, exp.outcome, "{}", exp.patient_id);
        assert_eq!(row.late_outcome, exp.late_outcome, "{}", exp.patient_id);
        assert_eq!(
            row.index_date.map(|d| d.to_string()).as_deref(),
            exp.index_date,
            "{}",
            exp.patient_id
        );
        if row.index_date.is_some() {
            assert_eq!(row.indicators["leg_injury"], exp.leg_injury, "{}", exp.patient_id);
            assert_eq!(row.indicators["osteoporosis"], exp.osteoporosis, "{}", exp.patient_id);
        }
    }
    let t = &cohort.tally;
    assert_eq!((t.included, t.cases, t.non_cases, t.late_outcome_non_cases), (5, 2, 3, 1));
    assert_eq!(t.excluded() + t.included, 12);
}

/// Flags by a direct scan of every record, without the rule engine.
fn scan_oracle(t: &EmrTables) -> BTreeMap<String, (bool, bool)> {
    let mut out: BTreeMap<String, (bool, bool)> =
        t.patients.iter().map(|p| (p.patient_id.clone(), (false, false))).collect();
    for r in &t.coded {
        let head = r.code.split('.').next().unwrap();
        let root = (head.len() == 3 && head.chars().all(|c| c.is_ascii_digit())).then(|| head.parse::<u32>().unwrap());
        let e = out.get_mut(&r.patient_id).unwrap();
        if let Some(root) = root {
            e.0 |= (820..=829).contains(&root) || [843, 844, 928].contains(&root);
            e.1 |= root == 733;
        }
        if r.source_table == SourceTable::HealthCondition {
            e.1 |= r.description.to_lowercase().contains("osteoporosis");
        }
    }
    for r in &t.risk_factors {
        out.get_mut(&r.patient_id).unwrap().1 |= r.term.to_lowercase().contains("osteoporosis");
    }
    for r in &t.medications {
        let name = r.drug_name.trim().to_lowercase();
        out.get_mut(&r.patient_id).unwrap().1 |=
            ["alendronic acid", "risedronic acid", "ibandronic acid"].contains(&name.as_str());
    }
    out
}

#[test]
fn rule_fixture_flags() {
    let (tables, expected) = rule_fixture();
    let oracle = scan_oracle(&tables);
    let store = EmrStore::from_tables(tables).unwrap();
    let defs = DefinitionSet::bundled();
    let leg = defs.get("leg_injury").unwrap();
    let ost = defs.get("osteoporosis").unwrap();
    for e in &expected {
        let got = (
            evaluate(leg, &store, e.patient_id, &DateInterval::all()).unwrap().matched,
            evaluate(ost, &store, e.patient_id, &DateInterval::all()).unwrap().matched,
        );
        assert_eq!(got, (e.leg_injury, e.osteoporosis), "{}", e.patient_id);
        assert_eq!(got, oracle[e.patient_id], "{}", e.patient_id);
    }
}
