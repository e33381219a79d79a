//! CSV ingestion and export.
//!
//! Header row required. Every column other than the target, `sample_id` and
//! `__noise_flag` is a numeric feature. Exports write the same layout, so a
//! written file loads back to an equal dataset.

use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Labels, SampleFlag, Task};
use crate::{Error, Matrix, Result};

pub const NOISE_FLAG_COLUMN: &str = "__noise_flag";
pub const SAMPLE_ID_COLUMN: &str = "sample_id";

/// How to interpret the target column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Non-negative integer labels. The class count defaults to `max + 1`.
    Classification {
        num_classes: Option<usize>,
    },
    Regression,
}

pub fn load_csv(path: impl AsRef<Path>, target_column: &str, kind: TargetKind) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, target_column, kind)
}

pub fn read_csv<R: Read>(reader: R, target_column: &str, kind: TargetKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target_pos = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Schema(format!("target column `{target_column}` not found")))?;
    let id_pos = header.iter().position(|h| h == SAMPLE_ID_COLUMN);
    let flag_pos = header.iter().position(|h| h == NOISE_FLAG_COLUMN);
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != target_pos && Some(c) != id_pos && Some(c) != flag_pos)
        .collect();

    let mut features = Vec::new();
    let mut class_labels = Vec::new();
    let mut real_labels = Vec::new();
    let mut ids = Vec::new();
    let mut flags = Vec::new();

    for (row_idx, record) in rdr.records().enumerate() {
        // header is line 1
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::Parse {
            row: line,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row: line,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let num = |c: usize| -> Result<f64> {
            let cell = record[c].trim();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: header[c].clone(),
                    message: format!("`{cell}` is not a finite number"),
                })
        };
        for &c in &feature_cols {
            features.push(num(c)?);
        }
        match kind {
            TargetKind::Classification { .. } => {
                let v = num(target_pos)?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Parse {
                        row: line,
                        column: header[target_pos].clone(),
                        message: format!("class label {v} is not a non-negative integer"),
                    });
                }
                class_labels.push(v as usize);
            }
            TargetKind::Regression => real_labels.push(num(target_pos)?),
        }
        ids.push(match id_pos {
            Some(c) => record[c].trim().parse::<u64>().map_err(|e| Error::Parse {
                row: line,
                column: SAMPLE_ID_COLUMN.into(),
                message: e.to_string(),
            })?,
            None => row_idx as u64,
        });
        flags.push(match flag_pos {
            Some(c) => SampleFlag::parse(record[c].trim()).ok_or_else(|| Error::Parse {
                row: line,
                column: NOISE_FLAG_COLUMN.into(),
                message: format!("unknown flag `{}`", &record[c]),
            })?,
            None => SampleFlag::Clean,
        });
    }

    let n = ids.len();
    let features = Matrix::from_vec(n, feature_cols.len(), features)?;
    let (labels, task) = match kind {
        TargetKind::Classification { num_classes } => {
            let inferred = class_labels.iter().max().map_or(2, |m| (m + 1).max(2));
            let k = num_classes.unwrap_or(inferred);
            (Labels::Class(class_labels), Task::Classification(k))
        }
        TargetKind::Regression => (Labels::Real(real_labels), Task::Regression),
    };
    Dataset::with_flags(features, labels, ids, task, flags)
}

/// Writes `sample_id, x0..x{d-1}, target, __noise_flag`. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![SAMPLE_ID_COLUMN.to_owned()];
    header.extend((0..dataset.dim()).map(|j| format!("x{j}")));
    header.push("target".into());
    header.push(NOISE_FLAG_COLUMN.into());
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(dataset.ids()[i].to_string());
        rec.extend(dataset.features().row(i).iter().map(|v| v.to_string()));
        rec.push(match dataset.labels() {
            Labels::Class(y) => y[i].to_string(),
            Labels::Real(y) => y[i].to_string(),
        });
        rec.push(dataset.flags()[i].as_str().into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
