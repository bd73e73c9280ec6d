//! In-memory, validated view of the EMR extract tables.
//!
//! Eight CSV files make up an extract: the patient register plus seven
//! dated tables. Every dated row must reference a registered patient. After
//! ingestion the store is immutable and each patient's records are kept in
//! date order, so timeline and definition queries are plain slice scans.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("missing extract file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: header mismatch, expected {expected:?} but found {found:?}")]
    Header {
        file: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Malformed {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{file}:{line}:{column}: unparseable date '{value}'")]
    BadDate {
        file: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{file}:{line}: row references unknown patient '{patient_id}'")]
    UnknownPatient {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("{file}:{line}: duplicate patient '{patient_id}'")]
    DuplicatePatient {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("unknown patient '{0}'")]
    NoSuchPatient(String),
    #[error("invalid schema config: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The eight files of an extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    Patients,
    Encounters,
    Billing,
    HealthCondition,
    EncounterDiagnosis,
    RiskFactor,
    Medication,
    Measurement,
}

impl Table {
    pub const ALL: [Table; 8] = [
        Table::Patients,
        Table::Encounters,
        Table::Billing,
        Table::HealthCondition,
        Table::EncounterDiagnosis,
        Table::RiskFactor,
        Table::Medication,
        Table::Measurement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::Patients => "patients",
            Table::Encounters => "encounters",
            Table::Billing => "billing",
            Table::HealthCondition => "health_condition",
            Table::EncounterDiagnosis => "encounter_diagnosis",
            Table::RiskFactor => "risk_factor",
            Table::Medication => "medication",
            Table::Measurement => "measurement",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }

    pub fn from_name(name: &str) -> Option<Table> {
        Table::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tables that carry ICD-9 coded rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTable {
    Billing,
    HealthCondition,
    EncounterDiagnosis,
}

impl SourceTable {
    pub const ALL: [SourceTable; 3] = [
        SourceTable::Billing,
        SourceTable::HealthCondition,
        SourceTable::EncounterDiagnosis,
    ];

    pub fn table(self) -> Table {
        match self {
            SourceTable::Billing => Table::Billing,
            SourceTable::HealthCondition => Table::HealthCondition,
            SourceTable::EncounterDiagnosis => Table::EncounterDiagnosis,
        }
    }

    pub fn name(self) -> &'static str {
        self.table().name()
    }

    pub fn from_name(name: &str) -> Option<SourceTable> {
        SourceTable::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for SourceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }

    pub fn parse(text: &str) -> Option<Sex> {
        match text.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Some(Sex::Female),
            "male" | "m" => Some(Sex::Male),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Bmi,
    SystolicBp,
    Other(String),
}

impl MeasurementKind {
    pub fn parse(text: &str) -> MeasurementKind {
        match text.trim() {
            "bmi" => MeasurementKind::Bmi,
            "systolic_bp" => MeasurementKind::SystolicBp,
            other => MeasurementKind::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            MeasurementKind::Bmi => "bmi",
            MeasurementKind::SystolicBp => "systolic_bp",
            MeasurementKind::Other(s) => s,
        }
    }
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientDemographics {
    pub patient_id: String,
    pub birth_year: Option<i32>,
    pub sex: Option<Sex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub patient_id: String,
    pub encounter_date: NaiveDate,
    pub encounter_id: String,
}

/// A Billing, HealthCondition or EncounterDiagnosis row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedRecord {
    pub patient_id: String,
    pub record_date: NaiveDate,
    pub code: String,
    /// Free-text label entered next to the code; often empty.
    pub description: String,
    pub source_table: SourceTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFactorEntry {
    pub patient_id: String,
    pub record_date: NaiveDate,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationRecord {
    pub patient_id: String,
    pub record_date: NaiveDate,
    pub drug_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub patient_id: String,
    pub record_date: NaiveDate,
    pub kind: MeasurementKind,
    /// `None` when the extract left the cell empty or a plausibility rule
    /// blanked it.
    pub value: Option<f64>,
}

/// Row-level contents of an extract, in no particular order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmrTables {
    pub patients: Vec<PatientDemographics>,
    pub encounters: Vec<Encounter>,
    pub coded: Vec<CodedRecord>,
    pub risk_factors: Vec<RiskFactorEntry>,
    pub medications: Vec<MedicationRecord>,
    pub measurements: Vec<Measurement>,
}

/// Column lists for each file. Headers in the extract must match exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub patients: Vec<String>,
    pub encounters: Vec<String>,
    pub coded: Vec<String>,
    pub risk_factor: Vec<String>,
    pub medication: Vec<String>,
    pub measurement: Vec<String>,
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            patients: cols(&["patient_id", "birth_year", "sex"]),
            encounters: cols(&["encounter_id", "patient_id", "encounter_date"]),
            coded: cols(&["patient_id", "record_date", "code", "description"]),
            risk_factor: cols(&["patient_id", "record_date", "term"]),
            medication: cols(&["patient_id", "record_date", "drug_name"]),
            measurement: cols(&["patient_id", "record_date", "kind", "value"]),
        }
    }
}

impl SchemaConfig {
    pub fn columns(&self, table: Table) -> &[String] {
        match table {
            Table::Patients => &self.patients,
            Table::Encounters => &self.encounters,
            Table::Billing | Table::HealthCondition | Table::EncounterDiagnosis => &self.coded,
            Table::RiskFactor => &self.risk_factor,
            Table::Medication => &self.medication,
            Table::Measurement => &self.measurement,
        }
    }

    fn required(table: Table) -> &'static [&'static str] {
        match table {
            Table::Patients => &["patient_id", "birth_year", "sex"],
            Table::Encounters => &["encounter_id", "patient_id", "encounter_date"],
            Table::Billing | Table::HealthCondition | Table::EncounterDiagnosis => {
                &["patient_id", "record_date", "code"]
            }
            Table::RiskFactor => &["patient_id", "record_date", "term"],
            Table::Medication => &["patient_id", "record_date", "drug_name"],
            Table::Measurement => &["patient_id", "record_date", "kind", "value"],
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        for table in Table::ALL {
            let columns = self.columns(table);
            for req in Self::required(table) {
                if !columns.iter().any(|c| c == req) {
                    return Err(StoreError::Schema(format!(
                        "{} is missing required column '{}'",
                        table, req
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SchemaConfig, StoreError> {
        let schema: SchemaConfig =
            serde_json::from_str(text).map_err(|e| StoreError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }
}

/// One patient's dated records, each list sorted by its tie-break key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatientRecords {
    pub encounters: Vec<Encounter>,
    pub coded: Vec<CodedRecord>,
    pub risk_factors: Vec<RiskFactorEntry>,
    pub medications: Vec<MedicationRecord>,
    pub measurements: Vec<Measurement>,
}

impl PatientRecords {
    fn sort(&mut self) {
        self.encounters
            .sort_by(|a, b| (a.encounter_date, &a.encounter_id).cmp(&(b.encounter_date, &b.encounter_id)));
        self.coded.sort_by(|a, b| {
            (a.record_date, a.source_table.name(), &a.code, &a.description).cmp(&(
                b.record_date,
                b.source_table.name(),
                &b.code,
                &b.description,
            ))
        });
        self.risk_factors
            .sort_by(|a, b| (a.record_date, &a.term).cmp(&(b.record_date, &b.term)));
        self.medications
            .sort_by(|a, b| (a.record_date, &a.drug_name).cmp(&(b.record_date, &b.drug_name)));
        self.measurements.sort_by(|a, b| {
            (a.record_date, a.kind.as_str())
                .cmp(&(b.record_date, b.kind.as_str()))
                .then(a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
        });
    }

    pub fn is_empty(&self) -> bool {
        self.encounters.is_empty()
            && self.coded.is_empty()
            && self.risk_factors.is_empty()
            && self.medications.is_empty()
            && self.measurements.is_empty()
    }

    /// Latest date over every dated record.
    pub fn latest_date(&self) -> Option<NaiveDate> {
        let last = [
            self.encounters.last().map(|r| r.encounter_date),
            self.coded.last().map(|r| r.record_date),
            self.risk_factors.last().map(|r| r.record_date),
            self.medications.last().map(|r| r.record_date),
            self.measurements.last().map(|r| r.record_date),
        ];
        last.into_iter().flatten().max()
    }
}

/// Row counts per file, as ingested.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts(pub BTreeMap<Table, usize>);

impl TableCounts {
    pub fn get(&self, table: Table) -> usize {
        self.0.get(&table).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmrStore {
    patients: BTreeMap<String, PatientDemographics>,
    records: BTreeMap<String, PatientRecords>,
}

/// Which list a timeline entry came from, with its position in that list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordRef {
    Encounter(usize),
    Coded(usize),
    RiskFactor(usize),
    Medication(usize),
    Measurement(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub date: NaiveDate,
    pub table: Table,
    /// Code, term, drug name, measurement kind or encounter id.
    pub label: String,
    pub record: RecordRef,
}

impl EmrStore {
    /// Builds a store from raw rows, checking patient uniqueness and
    /// referential integrity. Line numbers in errors count rows from 2
    /// (row 1 is the header) in each table's order.
    pub fn from_tables(tables: EmrTables) -> Result<EmrStore, StoreError> {
        let mut patients = BTreeMap::new();
        for (i, p) in tables.patients.into_iter().enumerate() {
            if patients.contains_key(&p.patient_id) {
                return Err(StoreError::DuplicatePatient {
                    file: Table::Patients.file_name(),
                    line: i as u64 + 2,
                    patient_id: p.patient_id,
                });
            }
            patients.insert(p.patient_id.clone(), p);
        }
        let mut records: BTreeMap<String, PatientRecords> = patients
            .keys()
            .map(|k| (k.clone(), PatientRecords::default()))
            .collect();

        fn slot<'a>(
            records: &'a mut BTreeMap<String, PatientRecords>,
            table: Table,
            line: usize,
            patient_id: &str,
        ) -> Result<&'a mut PatientRecords, StoreError> {
            records
                .get_mut(patient_id)
                .ok_or_else(|| StoreError::UnknownPatient {
                    file: table.file_name(),
                    line: line as u64 + 2,
                    patient_id: patient_id.to_string(),
                })
        }

        for (i, r) in tables.encounters.into_iter().enumerate() {
            slot(&mut records, Table::Encounters, i, &r.patient_id)?
                .encounters
                .push(r);
        }
        let mut coded_lines: BTreeMap<SourceTable, usize> = BTreeMap::new();
        for r in tables.coded.into_iter() {
            let line = coded_lines.entry(r.source_table).or_insert(0);
            let table = r.source_table.table();
            slot(&mut records, table, *line, &r.patient_id)?.coded.push(r);
            *line += 1;
        }
        for (i, r) in tables.risk_factors.into_iter().enumerate() {
            slot(&mut records, Table::RiskFactor, i, &r.patient_id)?
                .risk_factors
                .push(r);
        }
        for (i, r) in tables.medications.into_iter().enumerate() {
            slot(&mut records, Table::Medication, i, &r.patient_id)?
                .medications
                .push(r);
        }
        for (i, r) in tables.measurements.into_iter().enumerate() {
            slot(&mut records, Table::Measurement, i, &r.patient_id)?
                .measurements
                .push(r);
        }
        for rec in records.values_mut() {
            rec.sort();
        }
        Ok(EmrStore { patients, records })
    }

    pub fn patient_count(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &str> {
        self.patients.keys().map(String::as_str)
    }

    pub fn patients(&self) -> impl Iterator<Item = &PatientDemographics> {
        self.patients.values()
    }

    pub fn patient(&self, patient_id: &str) -> Result<&PatientDemographics, StoreError> {
        self.patients
            .get(patient_id)
            .ok_or_else(|| StoreError::NoSuchPatient(patient_id.to_string()))
    }

    pub fn records(&self, patient_id: &str) -> Result<&PatientRecords, StoreError> {
        self.records
            .get(patient_id)
            .ok_or_else(|| StoreError::NoSuchPatient(patient_id.to_string()))
    }

    pub(crate) fn records_mut(&mut self) -> impl Iterator<Item = &mut PatientRecords> {
        self.records.values_mut()
    }

    pub(crate) fn patients_mut(&mut self) -> impl Iterator<Item = &mut PatientDemographics> {
        self.patients.values_mut()
    }

    pub fn counts(&self) -> TableCounts {
        let mut counts = BTreeMap::new();
        counts.insert(Table::Patients, self.patients.len());
        for t in Table::ALL.into_iter().skip(1) {
            counts.insert(t, 0);
        }
        for rec in self.records.values() {
            *counts.get_mut(&Table::Encounters).unwrap() += rec.encounters.len();
            for c in &rec.coded {
                *counts.get_mut(&c.source_table.table()).unwrap() += 1;
            }
            *counts.get_mut(&Table::RiskFactor).unwrap() += rec.risk_factors.len();
            *counts.get_mut(&Table::Medication).unwrap() += rec.medications.len();
            *counts.get_mut(&Table::Measurement).unwrap() += rec.measurements.len();
        }
        TableCounts(counts)
    }

    /// Latest dated record anywhere in the store.
    pub fn latest_record_date(&self) -> Option<NaiveDate> {
        self.records.values().filter_map(|r| r.latest_date()).max()
    }

    /// Every dated record for one patient, ascending by date. Same-date
    /// entries are ordered by table name, then by label.
    pub fn patient_timeline(&self, patient_id: &str) -> Result<Vec<TimelineEntry>, StoreError> {
        let rec = self.records(patient_id)?;
        let mut out = Vec::new();
        for (i, e) in rec.encounters.iter().enumerate() {
            out.push(TimelineEntry {
                date: e.encounter_date,
                table: Table::Encounters,
                label: e.encounter_id.clone(),
                record: RecordRef::Encounter(i),
            });
        }
        for (i, c) in rec.coded.iter().enumerate() {
            out.push(TimelineEntry {
                date: c.record_date,
                table: c.source_table.table(),
                label: c.code.clone(),
                record: RecordRef::Coded(i),
            });
        }
        for (i, r) in rec.risk_factors.iter().enumerate() {
            out.push(TimelineEntry {
                date: r.record_date,
                table: Table::RiskFactor,
                label: r.term.clone(),
                record: RecordRef::RiskFactor(i),
            });
        }
        for (i, m) in rec.medications.iter().enumerate() {
            out.push(TimelineEntry {
                date: m.record_date,
                table: Table::Medication,
                label: m.drug_name.clone(),
                record: RecordRef::Medication(i),
            });
        }
        for (i, m) in rec.measurements.iter().enumerate() {
            out.push(TimelineEntry {
                date: m.record_date,
                table: Table::Measurement,
                label: m.kind.as_str().to_string(),
                record: RecordRef::Measurement(i),
            });
        }
        out.sort_by(|a, b| {
            (a.date, a.table.name(), &a.label, a.record).cmp(&(
                b.date,
                b.table.name(),
                &b.label,
                b.record,
            ))
        });
        Ok(out)
    }

    /// Flattens the store back into rows: patients by id, records by
    /// patient then date.
    pub fn to_tables(&self) -> EmrTables {
        let mut t = EmrTables {
            patients: self.patients.values().cloned().collect(),
            ..Default::default()
        };
        for rec in self.records.values() {
            t.encounters.extend(rec.encounters.iter().cloned());
            t.coded.extend(rec.coded.iter().cloned());
            t.risk_factors.extend(rec.risk_factors.iter().cloned());
            t.medications.extend(rec.medications.iter().cloned());
            t.measurements.extend(rec.measurements.iter().cloned());
        }
        t
    }

    pub fn write_dir(&self, dir: &Path, schema: &SchemaConfig) -> Result<(), StoreError> {
        write_tables(&self.to_tables(), dir, schema)
    }
}

/// Reads and validates the eight extract files in `dir`.
pub fn ingest(dir: &Path, schema: &SchemaConfig) -> Result<EmrStore, StoreError> {
    schema.validate()?;
    for t in Table::ALL {
        let path = dir.join(t.file_name());
        if !path.is_file() {
            return Err(StoreError::MissingFile(path));
        }
    }
    let mut tables = EmrTables::default();
    read_table(dir, Table::Patients, schema, |row| {
        tables.patients.push(PatientDemographics {
            patient_id: row.nonempty("patient_id")?,
            birth_year: row.opt_parse::<i32>("birth_year")?,
            sex: match row.get("sex") {
                "" => None,
                s => Some(Sex::parse(s).ok_or_else(|| row.malformed("sex", "expected female or male"))?),
            },
        });
        Ok(())
    })?;
    read_table(dir, Table::Encounters, schema, |row| {
        tables.encounters.push(Encounter {
            patient_id: row.nonempty("patient_id")?,
            encounter_date: row.date("encounter_date")?,
            encounter_id: row.nonempty("encounter_id")?,
        });
        Ok(())
    })?;
    for source in SourceTable::ALL {
        read_table(dir, source.table(), schema, |row| {
            tables.coded.push(CodedRecord {
                patient_id: row.nonempty("patient_id")?,
                record_date: row.date("record_date")?,
                code: row.nonempty("code")?,
                description: row.get("description").to_string(),
                source_table: source,
            });
            Ok(())
        })?;
    }
    read_table(dir, Table::RiskFactor, schema, |row| {
        tables.risk_factors.push(RiskFactorEntry {
            patient_id: row.nonempty("patient_id")?,
            record_date: row.date("record_date")?,
            term: row.nonempty("term")?,
        });
        Ok(())
    })?;
    read_table(dir, Table::Medication, schema, |row| {
        tables.medications.push(MedicationRecord {
            patient_id: row.nonempty("patient_id")?,
            record_date: row.date("record_date")?,
            drug_name: row.nonempty("drug_name")?,
        });
        Ok(())
    })?;
    read_table(dir, Table::Measurement, schema, |row| {
        let value = row.opt_parse::<f64>("value")?;
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(row.malformed("value", "value must be finite"));
            }
        }
        tables.measurements.push(Measurement {
            patient_id: row.nonempty("patient_id")?,
            record_date: row.date("record_date")?,
            kind: MeasurementKind::parse(&row.nonempty("kind")?),
            value,
        });
        Ok(())
    })?;
    EmrStore::from_tables(tables)
}

struct Row<'a> {
    file: &'a str,
    line: u64,
    columns: &'a [String],
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn get(&self, column: &str) -> &str {
        self.columns
            .iter()
            .position(|c| c == column)
            .and_then(|i| self.record.get(i))
            .unwrap_or("")
    }

    fn malformed(&self, column: &str, message: &str) -> StoreError {
        StoreError::Malformed {
            file: self.file.to_string(),
            line: self.line,
            column: column.to_string(),
            message: message.to_string(),
        }
    }

    fn nonempty(&self, column: &str) -> Result<String, StoreError> {
        let v = self.get(column).trim();
        if v.is_empty() {
            Err(self.malformed(column, "required value is empty"))
        } else {
            Ok(v.to_string())
        }
    }

    fn date(&self, column: &str) -> Result<NaiveDate, StoreError> {
        let v = self.get(column).trim();
        NaiveDate::parse_from_str(v, DATE_FORMAT).map_err(|_| StoreError::BadDate {
            file: self.file.to_string(),
            line: self.line,
            column: column.to_string(),
            value: v.to_string(),
        })
    }

    fn opt_parse<T: std::str::FromStr>(&self, column: &str) -> Result<Option<T>, StoreError> {
        let v = self.get(column).trim();
        if v.is_empty() {
            return Ok(None);
        }
        v.parse::<T>()
            .map(Some)
            .map_err(|_| self.malformed(column, &format!("cannot parse '{}'", v)))
    }
}

fn read_table(
    dir: &Path,
    table: Table,
    schema: &SchemaConfig,
    mut on_row: impl FnMut(&Row<'_>) -> Result<(), StoreError>,
) -> Result<(), StoreError> {
    let file = table.file_name();
    let bytes = fs::read(dir.join(&file))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes.as_slice());
    let columns = schema.columns(table);
    let found: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found != columns {
        return Err(StoreError::Header {
            file,
            expected: columns.to_vec(),
            found,
        });
    }
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(StoreError::Malformed {
                    file,
                    line,
                    column: String::new(),
                    message: e.to_string(),
                });
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        on_row(&Row {
            file: &file,
            line,
            columns,
            record: &record,
        })?;
    }
    Ok(())
}

/// Shortest round-trip representation, as used in every CSV this crate writes.
pub fn format_f64(v: f64) -> String {
    format!("{}", v)
}

pub fn format_date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

/// Writes rows using the schema's column order. Unknown schema columns are
/// written empty.
pub fn write_tables(tables: &EmrTables, dir: &Path, schema: &SchemaConfig) -> Result<(), StoreError> {
    fs::create_dir_all(dir)?;
    fn emit<T>(
        dir: &Path,
        table: Table,
        schema: &SchemaConfig,
        rows: impl Iterator<Item = T>,
        field: impl Fn(&T, &str) -> String,
    ) -> Result<(), StoreError> {
        let mut w = csv::Writer::from_path(dir.join(table.file_name()))?;
        let columns = schema.columns(table);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(columns.iter().map(|c| field(&row, c)))?;
        }
        w.flush()?;
        Ok(())
    }
    emit(dir, Table::Patients, schema, tables.patients.iter(), |p, c| match c {
        "patient_id" => p.patient_id.clone(),
        "birth_year" => p.birth_year.map(|y| y.to_string()).unwrap_or_default(),
        "sex" => p.sex.map(|s| s.as_str().to_string()).unwrap_or_default(),
        _ => String::new(),
    })?;
    emit(dir, Table::Encounters, schema, tables.encounters.iter(), |e, c| match c {
        "patient_id" => e.patient_id.clone(),
        "encounter_date" => format_date(e.encounter_date),
        "encounter_id" => e.encounter_id.clone(),
        _ => String::new(),
    })?;
    for source in SourceTable::ALL {
        emit(
            dir,
            source.table(),
            schema,
            tables.coded.iter().filter(|r| r.source_table == source),
            |r, c| match c {
                "patient_id" => r.patient_id.clone(),
                "record_date" => format_date(r.record_date),
                "code" => r.code.clone(),
                "description" => r.description.clone(),
                _ => String::new(),
            },
        )?;
    }
    emit(dir, Table::RiskFactor, schema, tables.risk_factors.iter(), |r, c| match c {
        "patient_id" => r.patient_id.clone(),
        "record_date" => format_date(r.record_date),
        "term" => r.term.clone(),
        _ => String::new(),
    })?;
    emit(dir, Table::Medication, schema, tables.medications.iter(), |r, c| match c {
        "patient_id" => r.patient_id.clone(),
        "record_date" => format_date(r.record_date),
        "drug_name" => r.drug_name.clone(),
        _ => String::new(),
    })?;
    emit(dir, Table::Measurement, schema, tables.measurements.iter(), |r, c| match c {
        "patient_id" => r.patient_id.clone(),
        "record_date" => format_date(r.record_date),
        "kind" => r.kind.as_str().to_string(),
        "value" => r.value.map(format_f64).unwrap_or_default(),
        _ => String::new(),
    })?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    pub fn patient(id: &str, birth_year: Option<i32>, sex: Option<Sex>) -> PatientDemographics {
        PatientDemographics {
            patient_id: id.into(),
            birth_year,
            sex,
        }
    }

    pub fn coded(id: &str, date: &str, code: &str, source: SourceTable) -> CodedRecord {
        CodedRecord {
            patient_id: id.into(),
            record_date: d(date),
            code: code.into(),
            description: String::new(),
            source_table: source,
        }
    }

    pub fn encounter(id: &str, date: &str, n: usize) -> Encounter {
        Encounter {
            patient_id: id.into(),
            encounter_date: d(date),
            encounter_id: format!("{}-e{}", id, n),
        }
    }

    fn small_tables() -> EmrTables {
        EmrTables {
            patients: vec![
                patient("p1", Some(1950), Some(Sex::Female)),
                patient("p2", None, Some(Sex::Male)),
                patient("p3", Some(1990), None),
            ],
            encounters: vec![
                encounter("p1", "2008-02-01", 1),
                encounter("p2", "2009-05-05", 1),
                encounter("p3", "2008-07-07", 1),
            ],
            coded: vec![coded("p1", "2007-03-01", "844", SourceTable::Billing)],
            risk_factors: vec![RiskFactorEntry {
                patient_id: "p1".into(),
                record_date: d("2007-03-01"),
                term: "osteoporosis".into(),
            }],
            medications: vec![],
            measurements: vec![Measurement {
                patient_id: "p2".into(),
                record_date: d("2009-05-05"),
                kind: MeasurementKind::Bmi,
                value: Some(27.5),
            }],
        }
    }

    #[test]
    fn ingest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let schema = SchemaConfig::default();
        let store = EmrStore::from_tables(small_tables()).unwrap();
        store.write_dir(dir.path(), &schema).unwrap();
        let back = ingest(dir.path(), &schema).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.patient_count(), 3);
        let counts = back.counts();
        assert_eq!(counts.get(Table::Encounters), 3);
        assert_eq!(counts.get(Table::Billing), 1);
        assert_eq!(counts.get(Table::HealthCondition), 0);
        assert_eq!(counts.get(Table::Measurement), 1);
    }

    #[test]
    fn unknown_patient_is_reported_with_row() {
        let mut t = small_tables();
        t.encounters.push(encounter("ghost", "2008-01-01", 9));
        match EmrStore::from_tables(t) {
            Err(StoreError::UnknownPatient { file, line, patient_id }) => {
                assert_eq!(file, "encounters.csv");
                assert_eq!(line, 5);
                assert_eq!(patient_id, "ghost");
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn missing_file_and_bad_date() {
        let dir = tempfile::tempdir().unwrap();
        let schema = SchemaConfig::default();
        EmrStore::from_tables(small_tables())
            .unwrap()
            .write_dir(dir.path(), &schema)
            .unwrap();
        fs::write(
            dir.path().join("encounters.csv"),
            "encounter_id,patient_id,encounter_date\ne1,p1,2008-13-01\n",
        )
        .unwrap();
        match ingest(dir.path(), &schema) {
            Err(StoreError::BadDate { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "encounter_date");
            }
            other => panic!("unexpected {:?}", other),
        }
        fs::remove_file(dir.path().join("medication.csv")).unwrap();
        assert!(matches!(ingest(dir.path(), &schema), Err(StoreError::MissingFile(_))));
    }

    #[test]
    fn malformed_value_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let schema = SchemaConfig::default();
        EmrStore::from_tables(small_tables())
            .unwrap()
            .write_dir(dir.path(), &schema)
            .unwrap();
        fs::write(
            dir.path().join("measurement.csv"),
            "patient_id,record_date,kind,value\np1,2008-01-01,bmi,abc\n",
        )
        .unwrap();
        match ingest(dir.path(), &schema) {
            Err(StoreError::Malformed { column, line, .. }) => {
                assert_eq!(column, "value");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn header_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let schema = SchemaConfig::default();
        EmrStore::from_tables(small_tables())
            .unwrap()
            .write_dir(dir.path(), &schema)
            .unwrap();
        fs::write(dir.path().join("patients.csv"), "id,birth_year,sex\n").unwrap();
        assert!(matches!(ingest(dir.path(), &schema), Err(StoreError::Header { .. })));
    }

    #[test]
    fn unknown_measurement_kind_is_kept() {
        assert_eq!(
            MeasurementKind::parse("waist_cm"),
            MeasurementKind::Other("waist_cm".into())
        );
    }

    #[test]
    fn timeline_single_and_tie_break() {
        let store = EmrStore::from_tables(small_tables()).unwrap();
        let t = store.patient_timeline("p3").unwrap();
        assert_eq!(t.len(), 1);

        let t = store.patient_timeline("p1").unwrap();
        let tables: Vec<Table> = t.iter().map(|e| e.table).collect();
        assert_eq!(tables, vec![Table::Billing, Table::RiskFactor, Table::Encounters]);
        assert!(matches!(
            store.patient_timeline("nobody"),
            Err(StoreError::NoSuchPatient(_))
        ));
    }

    #[test]
    fn timeline_matches_hand_sorted_fixture() {
        let mut t = small_tables();
        let p = "p1";
        t.coded.push(coded(p, "2008-02-01", "733.0", SourceTable::EncounterDiagnosis));
        t.coded.push(coded(p, "2006-01-01", "928", SourceTable::HealthCondition));
        t.coded.push(coded(p, "2008-02-01", "401", SourceTable::Billing));
        t.medications.push(MedicationRecord {
            patient_id: p.into(),
            record_date: d("2008-02-01"),
            drug_name: "Alendronic acid".into(),
        });
        t.measurements.push(Measurement {
            patient_id: p.into(),
            record_date: d("2007-03-01"),
            kind: MeasurementKind::Bmi,
            value: Some(31.0),
        });
        t.encounters.push(encounter(p, "2006-01-01", 0));
        let store = EmrStore::from_tables(t).unwrap();
        let got: Vec<(String, &str, String)> = store
            .patient_timeline(p)
            .unwrap()
            .into_iter()
            .map(|e| (format_date(e.date), e.table.name(), e.label))
            .collect();
        let s = |a: &str, b: &'static str, c: &str| (a.to_string(), b, c.to_string());
        // sorted by hand: date, then table name, then label
        let want = vec![
            s("2006-01-01", "encounters", "p1-e0"),
            s("2006-01-01", "health_condition", "928"),
            s("2007-03-01", "billing", "844"),
            s("2007-03-01", "measurement", "bmi"),
            s("2007-03-01", "risk_factor", "osteoporosis"),
            s("2008-02-01", "billing", "401"),
            s("2008-02-01", "encounter_diagnosis", "733.0"),
            s("2008-02-01", "encounters", "p1-e1"),
            s("2008-02-01", "medication", "Alendronic acid"),
        ];
        assert_eq!(got, want);
    }
}
