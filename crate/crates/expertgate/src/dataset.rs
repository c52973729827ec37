//! Datasets on disk: the `EGD1` binary layout and headed CSV.
//!
//! `EGD1` is the magic, then little-endian `u32` sample count `n`, feature
//! count `d` and class count `C`, then `n * d` `f32` features row by row and
//! finally `n` `i32` labels. CSV files carry a `f0,...,f{d-1},label` header;
//! sample files for inference may leave out the label column.

use std::fs;
use std::path::Path;

use expertgate_core::{LabeledDataset, Matrix};

use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"EGD1";
const HEADER_LEN: usize = 16;

/// Encodes a dataset as `EGD1` bytes.
pub fn encode_egd1(data: &LabeledDataset) -> Result<Vec<u8>> {
    let (n, d) = data.features().shape();
    let c = data.class_count();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d + 4 * n);
    out.extend_from_slice(DATASET_MAGIC);
    for v in [n, d, c] {
        out.extend_from_slice(&to_u32(v, "dataset size")?.to_le_bytes());
    }
    for v in data.features().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in data.labels() {
        let l = i32::try_from(l).map_err(|_| Error::Parameter(format!("label {l} overflows i32")))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Parameter(format!("{what} {v} does not fit in 32 bits")))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Decodes `EGD1` bytes.
pub fn decode_egd1(bytes: &[u8], task_name: &str) -> Result<LabeledDataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format("bad magic, expected EGD1".into()));
    }
    let n = read_u32(bytes, 4) as u64;
    let d = read_u32(bytes, 8) as u64;
    let c = read_u32(bytes, 12) as u64;
    let expected = HEADER_LEN as u64 + 4 * n * d + 4 * n;
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "length {} does not match header (n={n}, d={d}) which needs {expected}",
            bytes.len()
        )));
    }
    if d == 0 {
        return Err(Error::Format("zero feature dimension".into()));
    }
    let (n, d, c) = (n as usize, d as usize, c as usize);
    let body = &bytes[HEADER_LEN..];
    let features: Vec<f32> = body[..4 * n * d]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite feature at sample {}", bad / d)));
    }
    let labels = body[4 * n * d..]
        .chunks_exact(4)
        .enumerate()
        .map(|(i, b)| {
            let l = i32::from_le_bytes(b.try_into().expect("4 bytes"));
            if l < 0 || l as usize >= c {
                Err(Error::Format(format!("label {l} of sample {i} outside 0..{c}")))
            } else {
                Ok(l as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let x = Matrix::new(n, d, features)?;
    Ok(LabeledDataset::new(x, labels, c, task_name)?)
}

/// Rows of a CSV file: features plus labels when the file has a label column.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRows {
    pub features: Matrix<f32>,
    pub labels: Option<Vec<usize>>,
}

/// Parses headed CSV text.
pub fn decode_csv(text: &[u8]) -> Result<CsvRows> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("csv header: {e}")))?
        .clone();
    let has_label = header.iter().next_back() == Some("label");
    let d = header.len() - usize::from(has_label);
    if d == 0 {
        return Err(Error::Format("csv has no feature columns".into()));
    }
    for (j, name) in header.iter().take(d).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::Format(format!("csv column {j} is `{name}`, expected `f{j}`")));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {}: {e}", i + 1)))?;
        for (j, field) in record.iter().take(d).enumerate() {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("csv row {}: `{field}` is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("csv row {}, column {j}: non-finite value", i + 1)));
            }
            features.push(v);
        }
        if has_label {
            let field = record.get(d).unwrap_or_default().trim();
            let l: usize = field
                .parse()
                .map_err(|_| Error::Format(format!("csv row {}: bad label `{field}`", i + 1)))?;
            labels.push(l);
        }
    }
    let n = features.len() / d;
    Ok(CsvRows {
        features: Matrix::new(n, d, features)?,
        labels: has_label.then_some(labels),
    })
}

/// Headed CSV text of a dataset, LF line endings.
pub fn encode_csv(data: &LabeledDataset) -> Result<Vec<u8>> {
    let d = data.dim();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for (row, label) in data.features().row_iter().zip(data.labels()) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(label.to_string());
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "task".into())
}

/// Loads a labeled dataset. Files starting with the `EGD1` magic are binary,
/// everything else must be CSV with a label column. The task is named after
/// the file stem.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = stem(path);
    if bytes.starts_with(DATASET_MAGIC) || !is_csv(path) {
        return decode_egd1(&bytes, &name);
    }
    let rows = decode_csv(&bytes)?;
    let labels = rows
        .labels
        .ok_or_else(|| Error::Format(format!("{} has no label column", path.display())))?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(LabeledDataset::new(rows.features, labels, classes, name)?)
}

/// Loads samples to classify: any dataset file, or a CSV without labels.
pub fn load_samples(path: &Path) -> Result<CsvRows> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(DATASET_MAGIC) || !is_csv(path) {
        let data = decode_egd1(&bytes, &stem(path))?;
        let labels = data.labels().to_vec();
        return Ok(CsvRows {
            features: data.features().clone(),
            labels: Some(labels),
        });
    }
    decode_csv(&bytes)
}

/// Writes `EGD1`, or CSV when the path ends in `.csv`.
pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let bytes = if is_csv(path) { encode_csv(data)? } else { encode_egd1(data)? };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
