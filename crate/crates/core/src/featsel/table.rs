//! Per-subject feature table and its CSV form.
//!
//! ```text
//! # gliomics feature table v1
//! subject,age,survival_days,resection_status,WT_shape_center_X,...
//! S001,61.5,412,GTR,...
//! ```
//!
//! Missing age / survival values are written as `NA`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TABLE_SCHEMA_LINE: &str = "# gliomics feature table v1";
const META_COLUMNS: [&str; 4] = ["subject", "age", "survival_days", "resection_status"];

/// Name under which age is exposed as a predictor column.
pub const AGE: &str = "age";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum Resection {
    GTR,
    STR,
    NA,
}

impl Resection {
    pub fn as_str(self) -> &'static str {
        match self {
            Resection::GTR => "GTR",
            Resection::STR => "STR",
            Resection::NA => "NA",
        }
    }
}

impl std::str::FromStr for Resection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GTR" => Ok(Resection::GTR),
            "STR" => Ok(Resection::STR),
            "NA" | "" => Ok(Resection::NA),
            other => Err(Error::Validation(format!("unknown resection status `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub subjects: Vec<String>,
    pub feature_names: Vec<String>,
    /// One row per subject, one column per feature.
    pub values: Vec<Vec<f64>>,
    /// Overall survival in days; NaN when unknown.
    pub survival_days: Vec<f64>,
    /// Years; NaN when unknown.
    pub age: Vec<f64>,
    pub resection: Vec<Resection>,
}

impl FeatureTable {
    pub fn new(
        subjects: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<Vec<f64>>,
        survival_days: Vec<f64>,
        age: Vec<f64>,
        resection: Vec<Resection>,
    ) -> Result<Self> {
        let t = Self {
            subjects,
            feature_names,
            values,
            survival_days,
            age,
            resection,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn empty(feature_names: Vec<String>) -> Self {
        Self {
            subjects: Vec::new(),
            feature_names,
            values: Vec::new(),
            survival_days: Vec::new(),
            age: Vec::new(),
            resection: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.subjects.len();
        if self.values.len() != n
            || self.survival_days.len() != n
            || self.age.len() != n
            || self.resection.len() != n
        {
            return Err(Error::Shape(format!(
                "feature table columns disagree on row count ({} subjects, {} rows, {} targets, {} ages, {} statuses)",
                n,
                self.values.len(),
                self.survival_days.len(),
                self.age.len(),
                self.resection.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if !seen.insert(name.as_str()) || META_COLUMNS.contains(&name.as_str()) {
                return Err(Error::Validation(format!("duplicate feature name `{name}`")));
            }
        }
        for (r, row) in self.values.iter().enumerate() {
            if row.len() != self.feature_names.len() {
                return Err(Error::Shape(format!(
                    "row {} ({}) has {} values, expected {}",
                    r,
                    self.subjects[r],
                    row.len(),
                    self.feature_names.len()
                )));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "subject {}: feature `{}` is not finite",
                    self.subjects[r], self.feature_names[c]
                )));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// A feature column, or the age column for [`AGE`].
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        if name == AGE {
            return Ok(self.age.clone());
        }
        let c = self
            .column_index(name)
            .ok_or_else(|| Error::Config(format!("feature `{name}` not in table")))?;
        Ok(self.values.iter().map(|r| r[c]).collect())
    }

    /// Row-major predictor matrix for the named columns (age allowed).
    pub fn design(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<Vec<f64>> = names.iter().map(|n| self.column(n)).collect::<Result<_>>()?;
        let x: Vec<Vec<f64>> = (0..self.n_rows())
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect();
        for (r, row) in x.iter().enumerate() {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "subject {}: predictor `{}` is missing",
                    self.subjects[r], names[c]
                )));
            }
        }
        Ok(x)
    }

    /// Survival targets, failing if any is unknown.
    pub fn targets(&self) -> Result<Vec<f64>> {
        if let Some(r) = self.survival_days.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "subject {}: survival_days is missing",
                self.subjects[r]
            )));
        }
        Ok(self.survival_days.clone())
    }

    pub fn subset_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            subjects: rows.iter().map(|&r| self.subjects[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            values: rows.iter().map(|&r| self.values[r].clone()).collect(),
            survival_days: rows.iter().map(|&r| self.survival_days[r]).collect(),
            age: rows.iter().map(|&r| self.age[r]).collect(),
            resection: rows.iter().map(|&r| self.resection[r]).collect(),
        }
    }

    /// Keeps the named feature columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<FeatureTable> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::Config(format!("feature `{n}` not in table")))
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            subjects: self.subjects.clone(),
            feature_names: names.to_vec(),
            values: self
                .values
                .iter()
                .map(|row| idx.iter().map(|&c| row[c]).collect())
                .collect(),
            survival_days: self.survival_days.clone(),
            age: self.age.clone(),
            resection: self.resection.clone(),
        })
    }

    pub fn push_row(
        &mut self,
        subject: String,
        values: Vec<f64>,
        survival_days: f64,
        age: f64,
        resection: Resection,
    ) -> Result<()> {
        if values.len() != self.feature_names.len() {
            return Err(Error::Shape(format!(
                "subject {subject}: {} values for {} features",
                values.len(),
                self.feature_names.len()
            )));
        }
        self.subjects.push(subject);
        self.values.push(values);
        self.survival_days.push(survival_days);
        self.age.push(age);
        self.resection.push(resection);
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(TABLE_SCHEMA_LINE);
        out.push('\n');
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header: Vec<&str> = META_COLUMNS
            .iter()
            .copied()
            .chain(self.feature_names.iter().map(String::as_str))
            .collect();
        w.write_record(&header).expect("in-memory csv write");
        for r in 0..self.n_rows() {
            let mut rec = vec![
                self.subjects[r].clone(),
                fmt_opt(self.age[r]),
                fmt_opt(self.survival_days[r]),
                self.resection[r].as_str().to_string(),
            ];
            rec.extend(self.values[r].iter().map(|v| format!("{v}")));
            w.write_record(&rec).expect("in-memory csv write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let body = match text.split_once('\n') {
            Some((first, rest)) if first.trim_end() == TABLE_SCHEMA_LINE => rest,
            Some((first, _)) if first.starts_with("# gliomics feature table") => {
                return Err(Error::UnsupportedFormat(format!(
                    "feature table schema `{}` (expected `{TABLE_SCHEMA_LINE}`)",
                    first.trim_end()
                )))
            }
            _ => {
                return Err(Error::Validation(format!(
                    "feature table must start with `{TABLE_SCHEMA_LINE}`"
                )))
            }
        };
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| Error::Validation(format!("feature table header: {e}")))?
            .clone();
        if header.len() < 4 || header.iter().take(4).ne(META_COLUMNS.iter().copied()) {
            return Err(Error::Validation(format!(
                "feature table header must begin with {}",
                META_COLUMNS.join(",")
            )));
        }
        let names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut t = FeatureTable::empty(names);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Validation(format!("feature table row {}: {e}", line + 1)))?;
            let subject = rec[0].to_string();
            let age = parse_opt(&rec[1], &subject, "age")?;
            let surv = parse_opt(&rec[2], &subject, "survival_days")?;
            let res: Resection = rec[3].parse()?;
            let vals = rec
                .iter()
                .skip(4)
                .zip(&t.feature_names)
                .map(|(s, n)| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Validation(format!("subject {subject}: `{n}` = `{s}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            t.push_row(subject, vals, surv, age, res)?;
        }
        t.validate()?;
        Ok(t)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

fn parse_opt(s: &str, subject: &str, what: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("NA") {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::Validation(format!("subject {subject}: {what} `{s}` is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTable {
        FeatureTable::new(
            vec!["a".into(), "b".into()],
            vec!["f1".into(), "f2".into()],
            vec![vec![1.5, -2.0], vec![0.1, 3e-7]],
            vec![400.0, f64::NAN],
            vec![55.0, 61.25],
            vec![Resection::GTR, Resection::NA],
        )
        .unwrap()
    }

    #[test]
    fn csv_roundtrip() {
        let t = sample();
        let s = t.to_csv_string();
        assert!(s.starts_with(TABLE_SCHEMA_LINE));
        let back = FeatureTable::from_csv_str(&s).unwrap();
        assert_eq!(back.subjects, t.subjects);
        assert_eq!(back.values, t.values);
        assert_eq!(back.age, t.age);
        assert!(back.survival_days[1].is_nan());
        assert_eq!(back.to_csv_string(), s);
    }

    #[test]
    fn rejects_duplicate_names() {
        let err = FeatureTable::new(
            vec!["a".into()],
            vec!["x".into(), "x".into()],
            vec![vec![1.0, 2.0]],
            vec![1.0],
            vec![1.0],
            vec![Resection::GTR],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_nan_features() {
        let mut t = sample();
        t.values[0][1] = f64::NAN;
        assert!(t.validate().is_err());
    }

    #[test]
    fn missing_schema_line() {
        assert!(FeatureTable::from_csv_str("subject,age\n").is_err());
        assert!(matches!(
            FeatureTable::from_csv_str("# gliomics feature table v9\nsubject\n"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn design_includes_age() {
        let t = sample();
        let x = t.design(&["age".into(), "f1".into()]).unwrap();
        assert_eq!(x, vec![vec![55.0, 1.5], vec![61.25, 0.1]]);
        assert!(t.targets().is_err());
    }
}
