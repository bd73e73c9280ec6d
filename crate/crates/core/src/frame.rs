//! Column-oriented analysis table shared by imputation, modeling and
//! evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::CohortRow;
use crate::store::{format_f64, Sex};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("column '{name}' has {got} values, expected {expected}")]
    Length { name: String, got: usize, expected: usize },
    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    /// Values with missing cells as NaN.
    pub fn dense(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }
}

pub const OUTCOME: &str = "outcome";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisFrame {
    pub ids: Vec<String>,
    pub columns: Vec<Column>,
}

impl AnalysisFrame {
    pub fn new(ids: Vec<String>) -> Self {
        AnalysisFrame {
            ids,
            columns: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn push_column(&mut self, name: &str, kind: ColumnKind, values: Vec<Option<f64>>) -> Result<(), FrameError> {
        if self.position(name).is_some() {
            return Err(FrameError::DuplicateColumn(name.into()));
        }
        if values.len() != self.ids.len() {
            return Err(FrameError::Length {
                name: name.into(),
                got: values.len(),
                expected: self.ids.len(),
            });
        }
        self.columns.push(Column {
            name: name.into(),
            kind,
            values,
        });
        Ok(())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column, FrameError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| FrameError::UnknownColumn(name.into()))
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut Column, FrameError> {
        self.columns
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| FrameError::UnknownColumn(name.into()))
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.columns.iter().all(|c| c.missing_count() == 0)
    }

    /// Outcome column as 0/1 values; missing outcomes are an error.
    pub fn outcome(&self) -> Result<Vec<f64>, FrameError> {
        let col = self.column(OUTCOME)?;
        col.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| FrameError::Parse {
                    path: "<frame>".into(),
                    line: i + 1,
                    message: "missing outcome".into(),
                })
            })
            .collect()
    }

    /// Rows at `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> AnalysisFrame {
        AnalysisFrame {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
        }
    }

    /// Stacks frames with identical column layouts.
    pub fn concat(frames: &[&AnalysisFrame]) -> Result<AnalysisFrame, FrameError> {
        let Some(first) = frames.first() else {
            return Ok(AnalysisFrame::default());
        };
        let mut out = AnalysisFrame {
            ids: Vec::new(),
            columns: first
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    values: Vec::new(),
                })
                .collect(),
        };
        for f in frames {
            if f.names() != first.names() {
                return Err(FrameError::UnknownColumn(format!(
                    "column layouts differ: {:?} vs {:?}",
                    f.names(),
                    first.names()
                )));
            }
            out.ids.extend(f.ids.iter().cloned());
            for (dst, src) in out.columns.iter_mut().zip(&f.columns) {
                dst.values.extend(src.values.iter().copied());
            }
        }
        Ok(out)
    }

    /// Analysis rows of a cohort: age, bmi, sex (female = 1), one column
    /// per indicator, the auxiliaries and the outcome.
    pub fn from_cohort<'a>(rows: impl IntoIterator<Item = &'a CohortRow>, indicator_names: &[String]) -> AnalysisFrame {
        let rows: Vec<&CohortRow> = rows.into_iter().collect();
        let mut f = AnalysisFrame::new(rows.iter().map(|r| r.patient_id.clone()).collect());
        let flag = |b: bool| Some(f64::from(u8::from(b)));
        let cols: Vec<(&str, ColumnKind, Vec<Option<f64>>)> = vec![
            (
                "age",
                ColumnKind::Continuous,
                rows.iter().map(|r| r.age_at_index.map(f64::from)).collect(),
            ),
            ("bmi", ColumnKind::Continuous, rows.iter().map(|r| r.bmi_at_index).collect()),
            (
                "sex",
                ColumnKind::Binary,
                rows.iter().map(|r| r.sex.map(|s| flag(s == Sex::Female).unwrap())).collect(),
            ),
        ];
        for (name, kind, values) in cols {
            f.push_column(name, kind, values).expect("fresh column");
        }
        for name in indicator_names {
            let values = rows
                .iter()
                .map(|r| flag(r.indicators.get(name).copied().unwrap_or(false)))
                .collect();
            f.push_column(name, ColumnKind::Binary, values).expect("fresh column");
        }
        f.push_column(
            "systolic_bp",
            ColumnKind::Continuous,
            rows.iter().map(|r| r.systolic_bp).collect(),
        )
        .expect("fresh column");
        f.push_column(
            "chronic_disease_count",
            ColumnKind::Continuous,
            rows.iter().map(|r| Some(f64::from(r.chronic_disease_count))).collect(),
        )
        .expect("fresh column");
        f.push_column(OUTCOME, ColumnKind::Binary, rows.iter().map(|r| flag(r.outcome)).collect())
            .expect("fresh column");
        f
    }

    /// CSV with a `patient_id` column then one column per variable; a
    /// second header line is not used, so kinds are passed in on read.
    pub fn write_csv(&self, path: &Path) -> Result<(), FrameError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["patient_id".to_string()];
        header.extend(self.names());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.columns.iter().map(|c| c.values[i].map(format_f64).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, kinds: &[(String, ColumnKind)]) -> Result<AnalysisFrame, FrameError> {
        let shown = path.display().to_string();
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("patient_id") {
            return Err(FrameError::Parse {
                path: shown,
                line: 1,
                message: "first column must be patient_id".into(),
            });
        }
        let mut ids = Vec::new();
        let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); header.len() - 1];
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v = if cell.trim().is_empty() {
                    None
                } else {
                    Some(cell.trim().parse::<f64>().map_err(|e| FrameError::Parse {
                        path: shown.clone(),
                        line: k + 2,
                        message: format!("column {}: {e}", header[j + 1]),
                    })?)
                };
                values[j].push(v);
            }
        }
        let mut f = AnalysisFrame::new(ids);
        for (name, vals) in header.into_iter().skip(1).zip(values) {
            let kind = kinds
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, k)| *k)
                .unwrap_or(ColumnKind::Continuous);
            f.push_column(&name, kind, vals)?;
        }
        Ok(f)
    }

    pub fn kinds(&self) -> Vec<(String, ColumnKind)> {
        self.columns.iter().map(|c| (c.name.clone(), c.kind)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut f = AnalysisFrame::new(vec!["a".into(), "b".into()]);
        f.push_column("age", ColumnKind::Continuous, vec![Some(40.0), None]).unwrap();
        f.push_column("outcome", ColumnKind::Binary, vec![Some(1.0), Some(0.0)])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        f.write_csv(&p).unwrap();
        let g = AnalysisFrame::read_csv(&p, &f.kinds()).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.outcome().unwrap(), vec![1.0, 0.0]);
        assert!(matches!(
            f.push_column("age", ColumnKind::Binary, vec![None, None]),
            Err(FrameError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn subset_and_concat() {
        let mut f = AnalysisFrame::new(vec!["a".into(), "b".into(), "c".into()]);
        f.push_column("x", ColumnKind::Continuous, vec![Some(1.0), Some(2.0), None])
            .unwrap();
        let s = f.subset(&[2, 0]);
        assert_eq!(s.ids, vec!["c", "a"]);
        let c = AnalysisFrame::concat(&[&s, &f]).unwrap();
        assert_eq!(c.n_rows(), 5);
        assert_eq!(c.column("x").unwrap().missing_count(), 2);
    }
}
