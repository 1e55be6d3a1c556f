//! Vital registry: physical and normal ranges, hourly rate limits and the
//! log-transform flag for every modeled variable.
//!
//! The registry order is the feature layout used everywhere downstream:
//! variable `v` at hour `t` of a window lives at index `v * window + t`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const STANDARD_VITALS: &str = include_str!("../../data/vitals.csv");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("registry is empty")]
    Empty,
    #[error("duplicate vital name {0:?}")]
    Duplicate(String),
    #[error("reading registry: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing registry: {0}")]
    Csv(#[from] csv::Error),
}

/// One modeled variable. Ranges are in raw clinical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalSpec {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub phys_lo: f64,
    pub phys_hi: f64,
    pub norm_lo: f64,
    pub norm_hi: f64,
    /// Largest admissible change between consecutive hours, raw units.
    pub max_hourly_change: Option<f64>,
    pub log_transformed: bool,
}

impl VitalSpec {
    pub fn normal_midpoint(&self) -> f64 {
        0.5 * (self.norm_lo + self.norm_hi)
    }

    fn matches(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name) || self.aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
    }

    fn validate(&self, row: usize) -> Result<(), RegistryError> {
        let err = |message: String| Err(RegistryError::Row { row, message });
        let all = [self.phys_lo, self.phys_hi, self.norm_lo, self.norm_hi];
        if all.iter().any(|x| !x.is_finite()) {
            return err(format!("{}: non-finite range bound", self.name));
        }
        if self.phys_lo >= self.phys_hi {
            return err(format!("{}: phys_lo {} >= phys_hi {}", self.name, self.phys_lo, self.phys_hi));
        }
        if self.norm_lo >= self.norm_hi {
            return err(format!("{}: norm_lo {} >= norm_hi {}", self.name, self.norm_lo, self.norm_hi));
        }
        if let Some(rate) = self.max_hourly_change {
            if !(rate > 0.0 && rate.is_finite()) {
                return err(format!("{}: rate must be positive, got {rate}", self.name));
            }
        }
        if self.log_transformed && (self.phys_lo <= -1.0 || self.norm_lo <= -1.0) {
            return err(format!("{}: log-transformed range must lie above -1", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct VitalRow {
    name: String,
    aliases: String,
    phys_lo: f64,
    phys_hi: f64,
    norm_lo: f64,
    norm_hi: f64,
    rate: Option<f64>,
    log: bool,
}

/// Ordered, name-unique collection of [`VitalSpec`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalRegistry {
    specs: Vec<VitalSpec>,
}

/// The 30-variable registry bundled with the crate.
pub fn standard_registry() -> VitalRegistry {
    VitalRegistry::from_csv_reader(STANDARD_VITALS.as_bytes()).expect("bundled vital table is valid")
}

impl VitalRegistry {
    pub fn new(specs: Vec<VitalSpec>) -> Result<Self, RegistryError> {
        if specs.is_empty() {
            return Err(RegistryError::Empty);
        }
        for (i, spec) in specs.iter().enumerate() {
            spec.validate(i + 1)?;
            if specs[..i].iter().any(|s| s.matches(&spec.name)) {
                return Err(RegistryError::Duplicate(spec.name.clone()));
            }
        }
        Ok(Self { specs })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    /// Parses the `name,aliases,phys_lo,phys_hi,norm_lo,norm_hi,rate,log`
    /// table. `aliases` is `;`-separated and `rate` may be empty.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, RegistryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut specs = Vec::new();
        for (i, row) in rdr.deserialize::<VitalRow>().enumerate() {
            let row = row.map_err(|e| RegistryError::Row { row: i + 1, message: e.to_string() })?;
            specs.push(VitalSpec {
                name: row.name,
                aliases: row
                    .aliases
                    .split(';')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(String::from)
                    .collect(),
                phys_lo: row.phys_lo,
                phys_hi: row.phys_hi,
                norm_lo: row.norm_lo,
                norm_hi: row.norm_hi,
                max_hourly_change: row.rate,
                log_transformed: row.log,
            });
        }
        Self::new(specs)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[VitalSpec] {
        &self.specs
    }

    pub fn get(&self, index: usize) -> &VitalSpec {
        &self.specs[index]
    }

    /// Position of a vital by name or alias (case-insensitive).
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.matches(name))
    }

    pub fn lookup(&self, name: &str) -> Option<&VitalSpec> {
        self.index_of(name).map(|i| &self.specs[i])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    /// Registry restricted to the named vitals, in the order given.
    pub fn subset(&self, names: &[&str]) -> Option<Self> {
        let specs = names.iter().map(|n| self.lookup(n).cloned()).collect::<Option<Vec<_>>>()?;
        Self::new(specs).ok()
    }

    /// Stable content hash, recorded in model artifacts.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.specs {
            let line = format!(
                "{}|{:?}|{:?}|{:?}|{:?}|{:?}|{}\n",
                s.name, s.phys_lo, s.phys_hi, s.norm_lo, s.norm_hi, s.max_hourly_change, s.log_transformed
            );
            hasher.update(line.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_registry_matches_table() {
        let reg = standard_registry();
        assert_eq!(reg.len(), 30);

        let hr = reg.lookup("HeartRate").unwrap();
        assert_eq!((hr.phys_lo, hr.phys_hi, hr.norm_lo, hr.norm_hi), (30.0, 200.0, 60.0, 90.0));
        assert_eq!(hr.max_hourly_change, None);
        assert!(!hr.log_transformed);

        let temp = reg.lookup("Temp").unwrap();
        assert_eq!((temp.phys_lo, temp.phys_hi, temp.norm_lo, temp.norm_hi), (25.0, 45.0, 36.0, 38.0));
        assert_eq!(temp.max_hourly_change, Some(2.0));

        let lac = reg.lookup("Lactate").unwrap();
        assert_eq!((lac.phys_lo, lac.phys_hi, lac.norm_lo, lac.norm_hi), (0.0, 30.0, 0.5, 1.0));
        assert!(lac.log_transformed);
    }

    #[test]
    fn starred_vitals_are_logged() {
        let reg = standard_registry();
        let logged: Vec<&str> = reg.specs().iter().filter(|s| s.log_transformed).map(|s| s.name.as_str()).collect();
        assert_eq!(
            logged,
            ["Creatinine", "Bilirubin_direct", "Bilirubin_total", "Glucose", "Lactate", "TroponinI", "WBC"]
        );
    }

    #[test]
    fn rates_present_only_where_tabulated() {
        let reg = standard_registry();
        let rated: Vec<(&str, f64)> = reg
            .specs()
            .iter()
            .filter_map(|s| s.max_hourly_change.map(|r| (s.name.as_str(), r)))
            .collect();
        assert_eq!(
            rated,
            [("Temp", 2.0), ("Resp", 40.0), ("EtCO2", 30.0), ("BaseExcess", 10.0), ("Glucose", 300.0)]
        );
    }

    #[test]
    fn malformed_row_reports_its_position() {
        let csv = "name,aliases,phys_lo,phys_hi,norm_lo,norm_hi,rate,log\n\
                   A,,0,1,0,1,,false\n\
                   B,,5,1,0,1,,false\n";
        match VitalRegistry::from_csv_reader(csv.as_bytes()) {
            Err(RegistryError::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "name,aliases,phys_lo,phys_hi,norm_lo,norm_hi,rate,log\nA,,0,one,0,1,,false\n";
        assert!(matches!(VitalRegistry::from_csv_reader(csv.as_bytes()), Err(RegistryError::Row { row: 1, .. })));
    }

    #[test]
    fn duplicates_and_bad_rates_rejected() {
        let csv = "name,aliases,phys_lo,phys_hi,norm_lo,norm_hi,rate,log\nA,,0,1,0,1,,false\na,,0,1,0,1,,false\n";
        assert!(matches!(VitalRegistry::from_csv_reader(csv.as_bytes()), Err(RegistryError::Duplicate(_))));
        let csv = "name,aliases,phys_lo,phys_hi,norm_lo,norm_hi,rate,log\nA,,0,1,0,1,-2,false\n";
        assert!(VitalRegistry::from_csv_reader(csv.as_bytes()).is_err());
    }

    #[test]
    fn fingerprint_is_stable_and_content_sensitive() {
        let a = standard_registry();
        assert_eq!(a.fingerprint(), standard_registry().fingerprint());
        let b = a.subset(&["HR", "Temp"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
