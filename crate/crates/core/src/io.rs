//! CSV and JSON readers and writers.
//!
//! Study CSV: header `id,kind,estimate,variance`. Unit CSV: header
//! `x1,...,xd,a,o` with an optional trailing `w` column. Floats are written in
//! shortest round-trip form, so reading back what was written is exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::ebfit::FitReport;
use crate::study::{GaussianPosterior, StudyCollection, StudyError, StudyKind, StudySummary};
use crate::units::{UnitDataset, UnitError, UnitRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Units(#[from] UnitError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::ParseError {
        line,
        message: message.into(),
    }
}

fn parse_finite(field: &str, line: u64, name: &str) -> Result<f64, IoError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{name} `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{name} `{field}` is not finite")));
    }
    Ok(v)
}

/// Parses study rows in file order.
pub fn read_studies<R: Read>(reader: R) -> Result<Vec<StudySummary>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["id", "kind", "estimate", "variance"] {
        return Err(parse_err(1, "expected header `id,kind,estimate,variance`"));
    }
    let mut studies = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", record.len())));
        }
        let kind: StudyKind = record[1].parse().map_err(|e: StudyError| parse_err(line, e.to_string()))?;
        let estimate = parse_finite(&record[2], line, "estimate")?;
        let variance = parse_finite(&record[3], line, "variance")?;
        studies.push(StudySummary::new(&record[0], kind, estimate, variance)?);
    }
    Ok(studies)
}

/// Reads a study CSV into a validated collection.
pub fn read_studies_csv(path: impl AsRef<Path>) -> Result<StudyCollection, IoError> {
    let studies = read_studies(open(path.as_ref())?)?;
    Ok(StudyCollection::from_studies(studies)?)
}

/// Reads a study CSV that may hold calibration rows only.
pub fn read_calibration_csv(path: impl AsRef<Path>) -> Result<Vec<StudySummary>, IoError> {
    let studies = read_studies(open(path.as_ref())?)?;
    if let Some(s) = studies.iter().find(|s| s.kind != StudyKind::Calibration) {
        return Err(StudyError::KindMismatch(s.id.clone()).into());
    }
    Ok(studies)
}

pub fn write_studies<W: Write>(c: &StudyCollection, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "kind", "estimate", "variance"])?;
    for s in c.iter() {
        w.write_record([
            s.id.clone(),
            s.kind.to_string(),
            s.estimate.to_string(),
            s.variance.to_string(),
        ])?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: String::from("<writer>"),
        source,
    })?;
    Ok(())
}

pub fn write_studies_csv(c: &StudyCollection, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_studies(c, create(path.as_ref())?)
}

pub fn posterior_json(p: &GaussianPosterior) -> String {
    serde_json::json!({ "mean": p.mean, "variance": p.variance }).to_string()
}

pub fn write_posterior_json(p: &GaussianPosterior, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut f = create(path)?;
    writeln!(f, "{}", posterior_json(p)).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Serialize)]
struct FitReportJson<'a> {
    mu: f64,
    gamma2: f64,
    method: &'a str,
    objective: f64,
    bound_hit: bool,
}

/// `{"mu", "gamma2", "method", "objective", "bound_hit"}`.
pub fn fit_report_json(r: &FitReport) -> String {
    serde_json::to_string(&FitReportJson {
        mu: r.prior.mu,
        gamma2: r.prior.gamma2,
        method: r.method.as_str(),
        objective: r.objective_value,
        bound_hit: r.bound_hit,
    })
    .expect("plain struct serialises")
}

/// Parses a unit CSV. The covariate dimension is the number of leading `x*`
/// columns; a trailing `w` column supplies weights.
pub fn read_units<R: Read>(reader: R) -> Result<UnitDataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let dim = header.iter().take_while(|h| h.starts_with('x')).count();
    let expected_x = (1..=dim).map(|i| format!("x{i}"));
    let rest: Vec<&str> = header[dim..].iter().map(String::as_str).collect();
    let weighted = match rest.as_slice() {
        ["a", "o"] => false,
        ["a", "o", "w"] => true,
        _ => return Err(parse_err(1, "expected header `x1,...,xd,a,o[,w]`")),
    };
    if !header[..dim].iter().cloned().eq(expected_x) {
        return Err(parse_err(1, "covariate columns must be named x1, x2, ..."));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let covariate = (0..dim)
            .map(|i| parse_finite(&record[i], line, &header[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let treatment = match record[dim].trim() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("treatment `{other}` must be 0 or 1"))),
        };
        let outcome = parse_finite(&record[dim + 1], line, "o")?;
        let weight = if weighted {
            parse_finite(&record[dim + 2], line, "w")?
        } else {
            1.0
        };
        rows.push(UnitRecord {
            covariate,
            treatment,
            outcome,
            weight,
        });
    }
    Ok(UnitDataset::new(dim, rows)?)
}

pub fn read_units_csv(path: impl AsRef<Path>) -> Result<UnitDataset, IoError> {
    read_units(open(path.as_ref())?)
}

pub fn write_units<W: Write>(d: &UnitDataset, with_weights: bool, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=d.covariate_dim).map(|i| format!("x{i}")).collect();
    header.extend(["a".to_string(), "o".to_string()]);
    if with_weights {
        header.push("w".to_string());
    }
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for r in &d.rows {
        fields.clear();
        fields.extend(r.covariate.iter().map(f64::to_string));
        fields.push(if r.treatment { "1" } else { "0" }.to_string());
        fields.push(r.outcome.to_string());
        if with_weights {
            fields.push(r.weight.to_string());
        }
        w.write_record(&fields)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: String::from("<writer>"),
        source,
    })?;
    Ok(())
}

pub fn write_units_csv(d: &UnitDataset, with_weights: bool, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_units(d, with_weights, create(path.as_ref())?)
}
