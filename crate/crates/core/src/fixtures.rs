//! Small hand-built extracts with hand-traced expected results.
//!
//! Both use the default window (2008-01-01 to 2009-12-31), five years of
//! follow-up and the bundled definitions.

use chrono::NaiveDate;

use crate::cohort::ExclusionReason;
use crate::store::{
    CodedRecord, EmrTables, Encounter, Measurement, MeasurementKind, MedicationRecord, PatientDemographics,
    RiskFactorEntry, Sex, SourceTable, DATE_FORMAT,
};

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, DATE_FORMAT).expect("fixture dates are valid")
}

#[derive(Default)]
struct Builder {
    t: EmrTables,
}

impl Builder {
    fn patient(&mut self, id: &str, birth_year: i32, sex: Sex) -> &mut Self {
        self.t.patients.push(PatientDemographics {
            patient_id: id.into(),
            birth_year: Some(birth_year),
            sex: Some(sex),
        });
        self
    }

    fn visits(&mut self, id: &str, dates: &[&str]) -> &mut Self {
        for (k, date) in dates.iter().enumerate() {
            self.t.encounters.push(Encounter {
                patient_id: id.into(),
                encounter_date: d(date),
                encounter_id: format!("{id}-e{}", k + 1),
            });
        }
        self
    }

    fn code(&mut self, id: &str, date: &str, code: &str, source: SourceTable, description: &str) -> &mut Self {
        self.t.coded.push(CodedRecord {
            patient_id: id.into(),
            record_date: d(date),
            code: code.into(),
            description: description.into(),
            source_table: source,
        });
        self
    }

    fn term(&mut self, id: &str, date: &str, term: &str) -> &mut Self {
        self.t.risk_factors.push(RiskFactorEntry {
            patient_id: id.into(),
            record_date: d(date),
            term: term.into(),
        });
        self
    }

    fn drug(&mut self, id: &str, date: &str, name: &str) -> &mut Self {
        self.t.medications.push(MedicationRecord {
            patient_id: id.into(),
            record_date: d(date),
            drug_name: name.into(),
        });
        self
    }

    fn bmi(&mut self, id: &str, date: &str, v: f64) -> &mut Self {
        self.t.measurements.push(Measurement {
            patient_id: id.into(),
            record_date: d(date),
            kind: MeasurementKind::Bmi,
            value: Some(v),
        });
        self
    }
}

/// Expected classification of one fixture patient.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedLabel {
    pub patient_id: &'static str,
    pub exclusion: Option<ExclusionReason>,
    pub outcome: bool,
    pub late_outcome: bool,
    pub index_date: Option<&'static str>,
    pub leg_injury: bool,
    pub osteoporosis: bool,
}

const fn label(
    patient_id: &'static str,
    exclusion: Option<ExclusionReason>,
    outcome: bool,
    index_date: Option<&'static str>,
) -> ExpectedLabel {
    ExpectedLabel {
        patient_id,
        exclusion,
        outcome,
        late_outcome: false,
        index_date,
        leg_injury: false,
        osteoporosis: false,
    }
}

/// Twelve patients, one or more per cohort branch, and their expected
/// labels.
pub fn cohort_fixture() -> (EmrTables, Vec<ExpectedLabel>) {
    use ExclusionReason::*;
    use SourceTable::*;
    let mut b = Builder::default();
    // C01: visits only before the window and long after it
    b.patient("C01", 1950, Sex::Female).visits("C01", &["2007-06-01", "2015-01-01"]);
    // C02: osteoarthritis coded a year before the index visit
    b.patient("C02", 1948, Sex::Male)
        .visits("C02", &["2008-03-01", "2014-01-01"])
        .code("C02", "2007-01-01", "715.9", Billing, "");
    // C03: osteoarthritis on the index date itself
    b.patient("C03", 1960, Sex::Female)
        .visits("C03", &["2008-03-01", "2014-01-01"])
        .code("C03", "2008-03-01", "715", EncounterDiagnosis, "");
    // C04: last visit inside follow-up
    b.patient("C04", 1955, Sex::Male).visits("C04", &["2008-05-01", "2012-01-01"]);
    // C05: last visit exactly at the follow-up end, which is not after it
    b.patient("C05", 1955, Sex::Female).visits("C05", &["2008-05-01", "2013-05-01"]);
    // C06: first diagnosis recorded at the confirmation visit
    b.patient("C06", 1952, Sex::Female)
        .visits("C06", &["2008-06-01", "2014-01-10"])
        .code("C06", "2014-01-10", "715.16", HealthCondition, "osteoarthrosis, knee");
    // C07: case inside follow-up
    b.patient("C07", 1945, Sex::Male)
        .visits("C07", &["2008-06-01", "2010-02-02", "2014-01-01"])
        .code("C07", "2010-02-02", "715.3", Billing, "");
    // C08: index on the last window day, case on the last follow-up day
    b.patient("C08", 1958, Sex::Female)
        .visits("C08", &["2009-12-31", "2015-03-01"])
        .code("C08", "2014-12-31", "715", Billing, "");
    // C09: plain non-case
    b.patient("C09", 1970, Sex::Male).visits("C09", &["2008-02-01", "2013-06-01"]);
    // C10: diagnosis after follow-up, before the confirmation visit
    b.patient("C10", 1966, Sex::Female)
        .visits("C10", &["2008-02-01", "2013-06-01"])
        .code("C10", "2013-03-01", "715", Billing, "");
    // C11: case with no visit after follow-up
    b.patient("C11", 1940, Sex::Male)
        .visits("C11", &["2008-04-01", "2009-01-01"])
        .code("C11", "2009-01-01", "715", Billing, "");
    // C12: earlier visit before the window; injury on the index date counts,
    // the bisphosphonate the next day does not
    b.patient("C12", 1962, Sex::Female)
        .visits("C12", &["2007-12-31", "2008-07-01", "2014-01-01"])
        .code("C12", "2008-07-01", "844.0", EncounterDiagnosis, "")
        .drug("C12", "2008-07-02", "Alendronic acid")
        .bmi("C12", "2008-07-01", 27.5);

    let mut expected = vec![
        label("C01", Some(NoIndexVisit), false, None),
        label("C02", Some(PriorOutcome), false, Some("2008-03-01")),
        label("C03", Some(PriorOutcome), false, Some("2008-03-01")),
        label("C04", Some(NoConfirmationVisit), false, Some("2008-05-01")),
        label("C05", Some(NoConfirmationVisit), false, Some("2008-05-01")),
        label("C06", Some(OutcomeAtConfirmation), false, Some("2008-06-01")),
        label("C07", None, true, Some("2008-06-01")),
        label("C08", None, true, Some("2009-12-31")),
        label("C09", None, false, Some("2008-02-01")),
        label("C10", None, false, Some("2008-02-01")),
        label("C11", Some(NoConfirmationVisit), true, Some("2008-04-01")),
        label("C12", None, false, Some("2008-07-01")),
    ];
    expected[9].late_outcome = true;
    expected[11].leg_injury = true;
    (b.t, expected)
}

/// Expected indicator flags for one rule-fixture patient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedFlags {
    pub patient_id: &'static str,
    pub leg_injury: bool,
    pub osteoporosis: bool,
}

/// One patient per record: every listed code, term and drug name, plus
/// near misses. All records predate 2010-01-01.
pub fn rule_fixture() -> (EmrTables, Vec<ExpectedFlags>) {
    use SourceTable::*;
    let mut b = Builder::default();
    let mut expected = Vec::new();
    let mut add = |b: &mut Builder, id: &'static str, leg: bool, ost: bool| {
        b.patient(id, 1950, Sex::Female).visits(id, &["2008-01-15"]);
        expected.push(ExpectedFlags {
            patient_id: id,
            leg_injury: leg,
            osteoporosis: ost,
        });
    };
    let codes: [(&'static str, &str, SourceTable, bool, bool); 20] = [
        ("R01", "820", Billing, true, false),
        ("R02", "820.21", HealthCondition, true, false),
        ("R03", "825.0", EncounterDiagnosis, true, false),
        ("R04", "829", Billing, true, false),
        ("R05", "829.1", EncounterDiagnosis, true, false),
        ("R06", "843", HealthCondition, true, false),
        ("R07", "843.8", Billing, true, false),
        ("R08", "844", EncounterDiagnosis, true, false),
        ("R09", "844.2", Billing, true, false),
        ("R10", "928", HealthCondition, true, false),
        ("R11", "928.11", Billing, true, false),
        ("R12", "733", Billing, false, true),
        ("R13", "733.0", HealthCondition, false, true),
        ("R14", "733.00", EncounterDiagnosis, false, true),
        ("R15", "819", Billing, false, false),
        ("R16", "830", Billing, false, false),
        ("R17", "842", EncounterDiagnosis, false, false),
        ("R18", "845.0", HealthCondition, false, false),
        ("R19", "927", Billing, false, false),
        ("R20", "929", Billing, false, false),
    ];
    for (id, code, src, leg, ost) in codes {
        add(&mut b, id, leg, ost);
        b.code(id, "2007-05-05", code, src, "");
    }
    for (id, code, src) in [
        ("R21", "732", Billing),
        ("R22", "734", EncounterDiagnosis),
        ("R23", "0844", Billing),
        ("R24", "V82.81", HealthCondition),
    ] {
        add(&mut b, id, false, false);
        b.code(id, "2007-05-05", code, src, "");
    }
    add(&mut b, "R25", false, true);
    b.term("R25", "2006-01-01", "osteoporosis");
    add(&mut b, "R26", false, true);
    b.term("R26", "2006-01-01", "Hx of OSTEOPOROSIS, senile");
    add(&mut b, "R27", false, true);
    b.code("R27", "2006-01-01", "V13.8", HealthCondition, "Osteoporosis (postmenopausal)");
    add(&mut b, "R28", false, false);
    b.term("R28", "2006-01-01", "osteopenia");
    add(&mut b, "R29", false, false);
    // the term is only searched in health_condition descriptions
    b.code("R29", "2006-01-01", "V13.8", Billing, "osteoporosis screen");
    add(&mut b, "R30", false, true);
    b.drug("R30", "2009-01-01", "Alendronic acid");
    add(&mut b, "R31", false, true);
    b.drug("R31", "2009-01-01", "RISEDRONIC ACID");
    add(&mut b, "R32", false, true);
    b.drug("R32", "2009-01-01", " ibandronic acid ");
    add(&mut b, "R33", false, false);
    b.drug("R33", "2009-01-01", "Alendronate sodium");
    add(&mut b, "R34", true, true);
    b.code("R34", "2008-01-01", "821", Billing, "").drug("R34", "2008-01-02", "Risedronic acid");
    add(&mut b, "R35", false, false);
    (b.t, expected)
}
