//! Pipe-separated hourly patient files.
//!
//! Header row of column names, one row per hour, `NaN` for missing values,
//! `SepsisLabel` as the last column. The patient id is the file stem.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::constraints::VitalRegistry;
use crate::preprocess::{Gender, PatientRecord};

pub const LABEL_COLUMN: &str = "SepsisLabel";

#[derive(Debug, Error)]
pub enum PsvError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{context}: {source}")]
    Csv { context: String, source: csv::Error },
    #[error("{context}: row {row}, column {column:?}: cannot parse {value:?}")]
    Value { context: String, row: usize, column: String, value: String },
    #[error("{context}: missing column {column:?}")]
    MissingColumn { context: String, column: String },
    #[error("{context}: bad {what}: {value}")]
    Invalid { context: String, what: &'static str, value: String },
}

/// Parsed table, columns in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct PsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c.eq_ignore_ascii_case(name))?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

pub fn read_table<R: Read>(reader: R, context: &str) -> Result<PsvTable, PsvError> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(b'|').from_reader(reader);
    let csv_err = |source| PsvError::Csv { context: context.to_string(), source };
    let columns: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|c| c.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .zip(&columns)
            .map(|(field, column)| {
                parse_value(field).ok_or_else(|| PsvError::Value {
                    context: context.to_string(),
                    row: i + 1,
                    column: column.clone(),
                    value: field.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(PsvTable { columns, rows })
}

/// Builds a record from a table; registry vitals absent from the table are
/// treated as never measured, extra columns are ignored.
pub fn record_from_table(table: &PsvTable, patient_id: &str, registry: &VitalRegistry) -> Result<PatientRecord, PsvError> {
    let labels = table.column(LABEL_COLUMN).ok_or_else(|| PsvError::MissingColumn {
        context: patient_id.to_string(),
        column: LABEL_COLUMN.to_string(),
    })?;
    let hours = labels.len();
    if hours == 0 {
        return Err(PsvError::Invalid { context: patient_id.into(), what: "record length", value: "0 rows".into() });
    }
    let sepsis_label = labels
        .iter()
        .map(|&l| match l {
            x if x == 0.0 => Ok(0u8),
            x if x == 1.0 => Ok(1u8),
            x => Err(PsvError::Invalid { context: patient_id.into(), what: "label", value: x.to_string() }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values = registry
        .specs()
        .iter()
        .map(|spec| {
            let col = std::iter::once(spec.name.as_str())
                .chain(spec.aliases.iter().map(String::as_str))
                .find_map(|n| table.column(n));
            let col = col.unwrap_or_else(|| vec![f64::NAN; hours]);
            if let Some(bad) = col.iter().find(|x| x.is_infinite()) {
                return Err(PsvError::Invalid { context: patient_id.into(), what: "value", value: bad.to_string() });
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let first_finite = |name: &str| table.column(name).and_then(|c| c.into_iter().find(|x| x.is_finite()));
    let age = first_finite("Age").unwrap_or(f64::NAN);
    let gender = first_finite("Gender").and_then(Gender::from_code).unwrap_or(Gender::Female);
    Ok(PatientRecord { patient_id: patient_id.to_string(), age, gender, values, sepsis_label })
}

pub fn read_record(path: &Path, registry: &VitalRegistry) -> Result<PatientRecord, PsvError> {
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let file = fs::File::open(path).map_err(|source| PsvError::Io { path: path.display().to_string(), source })?;
    let table = read_table(file, &path.display().to_string())?;
    record_from_table(&table, &id, registry)
}

/// Every `*.psv` file in `dir`, sorted by file name.
pub fn list_psv(dir: &Path) -> Result<Vec<PathBuf>, PsvError> {
    let io = |source| PsvError::Io { path: dir.display().to_string(), source };
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("psv")))
        .collect();
    out.sort();
    Ok(out)
}

pub fn read_dir(dir: &Path, registry: &VitalRegistry) -> Result<Vec<PatientRecord>, PsvError> {
    list_psv(dir)?.iter().map(|p| read_record(p, registry)).collect()
}

pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x}")
    }
}

/// Writes a table with `|` separators.
pub fn write_table<W: Write>(writer: W, columns: &[String], rows: &[Vec<f64>]) -> Result<(), PsvError> {
    let mut wtr = csv::WriterBuilder::new().delimiter(b'|').from_writer(writer);
    let csv_err = |source| PsvError::Csv { context: "writing".into(), source };
    wtr.write_record(columns).map_err(csv_err)?;
    for row in rows {
        wtr.write_record(row.iter().map(|&x| format_value(x))).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| PsvError::Io { path: "writer".into(), source })?;
    Ok(())
}

/// Column names and hourly rows for `record`: registry vitals, `Age`,
/// `Gender`, `SepsisLabel`.
pub fn record_rows(record: &PatientRecord, registry: &VitalRegistry) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut columns: Vec<String> = registry.names().map(String::from).collect();
    columns.extend(["Age".to_string(), "Gender".to_string(), LABEL_COLUMN.to_string()]);
    let rows = (0..record.hours())
        .map(|t| {
            let mut row: Vec<f64> = record.values.iter().map(|series| series[t]).collect();
            row.extend([record.age, record.gender.code(), f64::from(record.sepsis_label[t])]);
            row
        })
        .collect();
    (columns, rows)
}

pub fn write_record(path: &Path, record: &PatientRecord, registry: &VitalRegistry) -> Result<(), PsvError> {
    let file = fs::File::create(path).map_err(|source| PsvError::Io { path: path.display().to_string(), source })?;
    let (columns, rows) = record_rows(record, registry);
    write_table(std::io::BufWriter::new(file), &columns, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::standard_registry;

    const SAMPLE: &str = "HR|O2Sat|Temp|Age|Gender|Unit1|SepsisLabel\n\
                          NaN|NaN|NaN|68.54|0|NaN|0\n\
                          97|95|NaN|68.54|0|NaN|0\n\
                          89|99|36.11|68.54|0|NaN|1\n";

    #[test]
    fn reads_physionet_layout() {
        let reg = standard_registry();
        let table = read_table(SAMPLE.as_bytes(), "sample").unwrap();
        let rec = record_from_table(&table, "p000001", &reg).unwrap();
        assert_eq!(rec.hours(), 3);
        assert_eq!(rec.sepsis_label, vec![0, 0, 1]);
        assert_eq!(rec.age, 68.54);
        assert_eq!(rec.gender, Gender::Female);
        let hr = reg.index_of("HR").unwrap();
        assert!(rec.values[hr][0].is_nan());
        assert_eq!(rec.values[hr][1..], [97.0, 89.0]);
        let lac = reg.index_of("Lactate").unwrap();
        assert!(rec.values[lac].iter().all(|x| x.is_nan()));
    }

    #[test]
    fn write_then_read_is_lossless() {
        let reg = standard_registry();
        let table = read_table(SAMPLE.as_bytes(), "sample").unwrap();
        let mut rec = record_from_table(&table, "p7", &reg).unwrap();
        rec.values[0][2] = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p7.psv");
        write_record(&path, &rec, &reg).unwrap();
        let back = read_record(&path, &reg).unwrap();
        assert_eq!(back.patient_id, "p7");
        for (a, b) in rec.values.iter().flatten().zip(back.values.iter().flatten()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert_eq!(list_psv(dir.path()).unwrap(), vec![path]);
    }

    #[test]
    fn bad_cells_are_located() {
        let reg = standard_registry();
        let text = "HR|SepsisLabel\n80|0\nabc|0\n";
        let err = read_table(text.as_bytes(), "f").unwrap_err();
        assert!(matches!(err, PsvError::Value { row: 2, .. }), "{err}");
        let table = read_table("HR\n80\n".as_bytes(), "f").unwrap();
        assert!(matches!(record_from_table(&table, "f", &reg), Err(PsvError::MissingColumn { .. })));
        let table = read_table("HR|SepsisLabel\n80|2\n".as_bytes(), "f").unwrap();
        assert!(record_from_table(&table, "f", &reg).is_err());
    }
}
