//! CSV readers and writers.
//!
//! Function sets are stored column-wise: a header `t,<id1>,<id2>,…`, then
//! one row per mesh point. Irregular observations are stored long-form as
//! `sample_id,t,value` rows.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::mesh::{FunctionSet, Mesh};
use crate::reconstruction::Observation;

fn data(line: u64, message: impl Into<String>) -> Error {
    Error::Data {
        line,
        message: message.into(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => data(line, e.to_string()),
    }
}

fn parse_num(s: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| data(line, format!("{what} {s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(data(line, format!("{what} {s:?} is not finite")));
    }
    Ok(v)
}

/// A function set with its column ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSet {
    pub ids: Vec<String>,
    pub set: FunctionSet,
}

pub fn read_function_set<R: Read>(reader: R) -> Result<LabelledSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 2 || header[0].trim() != "t" {
        return Err(data(1, "header must be `t,<id1>,<id2>,...`"));
    }
    let ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut points = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(data(
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let t = parse_num(&rec[0], line, "mesh point")?;
        if let Some(&prev) = points.last() {
            if t <= prev {
                return Err(data(line, "mesh points must be strictly increasing"));
            }
        }
        points.push(t);
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(parse_num(&rec[j + 1], line, "value")?);
        }
    }
    if points.len() < 2 {
        return Err(data(1 + points.len() as u64, "need at least two mesh points"));
    }
    let mesh = Mesh::from_points(points)?;
    Ok(LabelledSet {
        ids,
        set: FunctionSet::from_rows(mesh, cols)?,
    })
}

/// Writes `set`; ids default to `0, 1, …`.
pub fn write_function_set<W: Write>(writer: W, set: &FunctionSet, ids: Option<&[String]>) -> Result<()> {
    let default: Vec<String>;
    let ids = match ids {
        Some(ids) if ids.len() == set.len() => ids,
        Some(ids) => {
            return Err(invalid(format!(
                "{} ids for {} samples",
                ids.len(),
                set.len()
            )))
        }
        None => {
            default = (0..set.len()).map(|i| i.to_string()).collect();
            &default
        }
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (i, t) in set.mesh().points().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(set.iter().map(|x| x.values()[i].to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_function_set(path: impl AsRef<Path>) -> Result<LabelledSet> {
    read_function_set(File::open(path)?)
}

pub fn save_function_set(path: impl AsRef<Path>, set: &FunctionSet, ids: Option<&[String]>) -> Result<()> {
    write_function_set(File::create(path)?, set, ids)
}

/// Reads `sample_id,t,value` rows, grouped by id in order of first
/// appearance. Locations within a sample may come in any order but must
/// be distinct.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<(String, Observation)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != ["sample_id", "t", "value"] {
        return Err(data(1, "header must be `sample_id,t,value`"));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, f64, u64)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(data(line, "empty sample id"));
        }
        let t = parse_num(&rec[1], line, "location")?;
        let v = parse_num(&rec[2], line, "value")?;
        rows.entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push((t, v, line));
    }
    if order.is_empty() {
        return Err(data(1, "no observations"));
    }
    order
        .into_iter()
        .map(|id| {
            let mut r = rows.remove(&id).expect("id recorded on insert");
            r.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = r.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(data(
                    w[1].2,
                    format!("sample {id:?} repeats location {}", w[1].0),
                ));
            }
            let (t, v): (Vec<f64>, Vec<f64>) = r.iter().map(|(t, v, _)| (*t, *v)).unzip();
            Ok((id, Observation::new(t, v, 0.0)?))
        })
        .collect()
}

pub fn write_observations<W: Write>(writer: W, obs: &[(String, Observation)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_id", "t", "value"]).map_err(csv_error)?;
    for (id, o) in obs {
        for (t, v) in o.locations().iter().zip(o.values()) {
            w.write_record([id.as_str(), &t.to_string(), &v.to_string()])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<(String, Observation)>> {
    read_observations(File::open(path)?)
}
