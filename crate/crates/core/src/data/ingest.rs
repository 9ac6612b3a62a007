//! CSV ingestion: a header row, `F` numeric feature columns, then one label
//! column holding a class name.

use std::io::{Read, Write};
use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub features: usize,
    /// Class names in label-index order.
    pub classes: Vec<String>,
}

pub const DEFAULT_CLASSES: [&str; 5] = ["normal", "dos", "bp", "fot", "mitm"];

impl Default for Schema {
    fn default() -> Self {
        Schema {
            features: 21,
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    read_csv(f, schema)
}

pub fn read_csv<R: Read>(input: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header_cols = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .len();
    if header_cols != schema.features + 1 {
        return Err(Error::Schema(format!(
            "header has {} feature columns, schema expects {}",
            header_cols.saturating_sub(1),
            schema.features
        )));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != schema.features + 1 {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "expected {} columns, found {}",
                    schema.features + 1,
                    rec.len()
                ),
            });
        }
        let row = rec
            .iter()
            .take(schema.features)
            .enumerate()
            .map(|(j, v)| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column {}: '{v}' is not a number", j + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let name = &rec[schema.features];
        let label = schema
            .classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("line {line}: unknown label '{name}'")))?;
        features.push(row);
        labels.push(label);
    }
    Dataset::new(features, labels, schema.classes.clone())
}

/// Writes `d` in the format [`read_csv`] accepts. Values are printed in
/// shortest round-trip form, so reading the output back is lossless.
pub fn write_csv<W: Write>(out: W, d: &Dataset) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.into());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=d.num_features()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(io)?;
    for (row, &label) in d.features.iter().zip(&d.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(d.classes[label].clone());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
