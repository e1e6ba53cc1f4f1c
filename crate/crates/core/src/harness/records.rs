//! Line-delimited JSON prediction records.
//!
//! The first line is a header `{"d":..,"n_classes":..,"n_objects":..,"n_verbs":..}`;
//! every following line is one record. Floats are written in shortest
//! round-trip form, so save followed by load is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AdcError, Result};
use crate::numeric::{ClassSpace, FeatureVector, LogitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub d: usize,
    pub n_classes: usize,
    pub n_objects: usize,
    pub n_verbs: usize,
}

impl RecordHeader {
    pub fn space(&self) -> Result<ClassSpace> {
        ClassSpace::new(self.n_objects, self.n_verbs)
    }
}

/// Base-model output for one human-object pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub feature: FeatureVector,
    pub logit_base: LogitVector,
    pub object_pred: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    /// Absent only for an empty file.
    pub header: Option<RecordHeader>,
    pub records: Vec<PredictionRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    feature: Vec<f64>,
    logit_base: Vec<f64>,
    object_pred: usize,
    #[serde(default)]
    gt_class: Option<usize>,
}

/// Checks one record against the header.
pub fn check_record(
    header: &RecordHeader,
    r: &PredictionRecord,
) -> std::result::Result<(), String> {
    if r.feature.dim() != header.d {
        return Err(format!(
            "feature has {} values, header says d = {}",
            r.feature.dim(),
            header.d
        ));
    }
    if r.logit_base.len() != header.n_classes {
        return Err(format!(
            "logit_base has {} values, header says n_classes = {}",
            r.logit_base.len(),
            header.n_classes
        ));
    }
    if r.object_pred >= header.n_objects {
        return Err(format!(
            "object_pred {} outside [0, {})",
            r.object_pred, header.n_objects
        ));
    }
    if let Some(gt) = r.gt_class {
        if gt >= header.n_classes {
            return Err(format!("gt_class {gt} outside [0, {})", header.n_classes));
        }
    }
    Ok(())
}

pub fn check_header(h: &RecordHeader) -> std::result::Result<(), String> {
    if h.d == 0 || h.n_objects == 0 || h.n_verbs == 0 {
        return Err("d, n_objects and n_verbs must be positive".into());
    }
    if h.n_classes != h.n_objects * h.n_verbs {
        return Err(format!(
            "n_classes = {} but n_objects * n_verbs = {}",
            h.n_classes,
            h.n_objects * h.n_verbs
        ));
    }
    Ok(())
}

pub fn read_records<R: BufRead>(reader: R, path: &Path) -> Result<RecordSet> {
    let err = |line: usize, message: String| AdcError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header: Option<RecordHeader> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| AdcError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: RecordHeader = serde_json::from_str(&line)
                    .map_err(|e| err(lineno, format!("bad header: {e}")))?;
                check_header(&h).map_err(|m| err(lineno, m))?;
                header = Some(h);
            }
            Some(h) => {
                let raw: RawRecord =
                    serde_json::from_str(&line).map_err(|e| err(lineno, e.to_string()))?;
                let rec = PredictionRecord {
                    id: raw.id,
                    feature: FeatureVector::new(raw.feature)
                        .map_err(|e| err(lineno, e.to_string()))?,
                    logit_base: LogitVector::new(raw.logit_base)
                        .map_err(|e| err(lineno, e.to_string()))?,
                    object_pred: raw.object_pred,
                    gt_class: raw.gt_class,
                };
                check_record(h, &rec).map_err(|m| err(lineno, m))?;
                records.push(rec);
            }
        }
    }
    Ok(RecordSet { header, records })
}

pub fn load_records(path: &Path) -> Result<RecordSet> {
    let file = File::open(path).map_err(|e| AdcError::io(path, e))?;
    read_records(BufReader::new(file), path)
}

pub fn write_records<W: Write>(
    mut out: W,
    header: &RecordHeader,
    records: &[PredictionRecord],
) -> Result<()> {
    check_header(header).map_err(AdcError::RejectedInput)?;
    let io = |e: std::io::Error| AdcError::io("<records>", e);
    serde_json::to_writer(&mut out, header).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for r in records {
        check_record(header, r).map_err(|m| AdcError::RejectedInput(format!("{}: {m}", r.id)))?;
        serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn save_records(
    path: &Path,
    header: &RecordHeader,
    records: &[PredictionRecord],
) -> Result<()> {
    let file = File::create(path).map_err(|e| AdcError::io(path, e))?;
    write_records(BufWriter::new(file), header, records).map_err(|e| match e {
        AdcError::Io { source, .. } => AdcError::io(path, source),
        other => other,
    })
}
