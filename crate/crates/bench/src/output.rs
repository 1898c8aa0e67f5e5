//! CSV rows emitted by the experiments.

use std::io::{Read, Write};
use std::path::Path;

use fmmd_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// One power estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub experiment: String,
    pub kernel: String,
    pub delta: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub mesh: usize,
    pub power: f64,
    pub stderr: f64,
    pub seed: u64,
}

/// One closed-form check from `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRow {
    pub case: String,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    /// `NaN` when the operators do not commute.
    pub xi2_theory: f64,
    pub xi2_empirical: f64,
    pub flag: bool,
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::Data {
            line,
            message: e.to_string(),
        },
    }
}

pub fn write_rows<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    match path {
        Some(p) => write_rows(std::fs::File::create(p)?, rows),
        None => write_rows(std::io::stdout().lock(), rows),
    }
}
