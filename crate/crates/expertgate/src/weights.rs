//! The `EGW1` weight container.
//!
//! Layout, all little-endian: the magic, a `u32` layer count, then one
//! `(rows, cols, activation code)` triple of `u32` per layer, then for each
//! layer in order its `rows * cols` weights (row-major, `f32`) followed by
//! its `rows` biases. Activation codes: 0 identity, 1 ReLU, 2 sigmoid.
//!
//! Reference statistics reuse the container as a single identity record of
//! shape `2 x d`: the first row holds the means, the second the standard
//! deviations, and both biases are zero.

use expertgate_core::{Activation, DenseLayer, Matrix, ReferenceStats};

use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"EGW1";

pub fn encode_layers(layers: &[&DenseLayer<f32>]) -> Result<Vec<u8>> {
    let floats: usize = layers.iter().map(|l| l.parameter_count()).sum();
    let mut out = Vec::with_capacity(8 + 12 * layers.len() + 4 * floats);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&u32_of(layers.len())?.to_le_bytes());
    for l in layers {
        let (rows, cols) = l.weights.shape();
        for v in [u32_of(rows)?, u32_of(cols)?, l.activation.code()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for l in layers {
        for v in l.weights.as_slice().iter().chain(&l.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Parameter(format!("{v} does not fit in 32 bits")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated weight file at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("layer too large".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_layers(bytes: &[u8]) -> Result<Vec<DenseLayer<f32>>> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::Format("bad magic, expected EGW1".into()));
    }
    let count = c.u32()?;
    let mut shapes = Vec::new();
    for _ in 0..count {
        let (rows, cols, code) = (c.u32()?, c.u32()?, c.u32()?);
        let act = Activation::from_code(code as u32)
            .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        shapes.push((rows, cols, act));
    }
    let mut layers = Vec::with_capacity(shapes.len());
    for (rows, cols, act) in shapes {
        let weights = c.floats(rows.checked_mul(cols).ok_or_else(|| Error::Format("layer too large".into()))?)?;
        let bias = c.floats(rows)?;
        let layer = DenseLayer::new(Matrix::new(rows, cols, weights)?, bias, act)?;
        if !layer.is_finite() {
            return Err(Error::Format("non-finite weight".into()));
        }
        layers.push(layer);
    }
    if c.at != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - c.at)));
    }
    Ok(layers)
}

pub fn encode_stats(stats: &ReferenceStats) -> Result<Vec<u8>> {
    let d = stats.dim();
    let data: Vec<f32> = stats.mean().iter().chain(stats.std()).copied().collect();
    let record = DenseLayer::new(Matrix::new(2, d, data)?, vec![0.0; 2], Activation::Identity)?;
    encode_layers(&[&record])
}

pub fn decode_stats(bytes: &[u8], source_id: &str) -> Result<ReferenceStats> {
    let layers = decode_layers(bytes)?;
    let [record] = layers.as_slice() else {
        return Err(Error::Format(format!("statistics need 1 record, found {}", layers.len())));
    };
    if record.weights.rows() != 2 || record.activation != Activation::Identity {
        return Err(Error::Format("statistics record must be a 2 x d identity record".into()));
    }
    let mean = record.weights.row(0).to_vec();
    let std = record.weights.row(1).to_vec();
    if std.iter().any(|&s| s <= 0.0) {
        return Err(Error::Format("non-positive standard deviation".into()));
    }
    Ok(ReferenceStats::new(mean, std, source_id)?)
}
