//! Noun embeddings: layer/position averaging and the on-disk store.
//!
//! Binary store layout (little-endian):
//!
//! ```text
//! magic   8 bytes  "MPEMBED1"
//! D       u32
//! count   u64
//! count × { label_len u32, label utf-8, D × f64, wordform_len u32, wordform utf-8 }
//! ```

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::scorer::HiddenStatesResponse;

pub const STORE_MAGIC: &[u8; 8] = b"MPEMBED1";

pub const LABEL_SINGULAR: &str = "singular";
pub const LABEL_SINGLE_TOKEN: &str = "plural-single-token";
pub const LABEL_MORPHEMIC: &str = "plural-morphemic";
pub const LABEL_NON_MORPHEMIC: &str = "plural-non-morphemic";
pub const LABEL_ARTIFICIAL: &str = "plural-artificial";
pub const CLASS_LABELS: [&str; 5] = [
    LABEL_SINGULAR,
    LABEL_SINGLE_TOKEN,
    LABEL_MORPHEMIC,
    LABEL_NON_MORPHEMIC,
    LABEL_ARTIFICIAL,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub wordform: String,
    pub class_label: String,
    pub vector: Vec<f64>,
}

/// Common dimension of `records`; errors on an empty set, mixed
/// dimensions, or non-finite values.
pub fn check_records(records: &[EmbeddingRecord]) -> Result<usize, AnalysisError> {
    let dim = records
        .first()
        .map(|r| r.vector.len())
        .ok_or_else(|| AnalysisError::BadInput("no records".into()))?;
    if dim == 0 {
        return Err(AnalysisError::BadInput("zero-dimensional vectors".into()));
    }
    for r in records {
        if r.vector.len() != dim {
            return Err(AnalysisError::BadInput(format!(
                "record {:?} has dimension {}, expected {dim}",
                r.wordform,
                r.vector.len()
            )));
        }
        if r.vector.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::BadInput(format!(
                "record {:?} has a non-finite component",
                r.wordform
            )));
        }
    }
    Ok(dim)
}

/// Mean over every (layer, position) pair of the selected positions.
pub fn mean_embedding(
    states: &HiddenStatesResponse,
    noun_positions: &[usize],
) -> Result<Vec<f64>, AnalysisError> {
    if noun_positions.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    if states.states.is_empty() {
        return Err(AnalysisError::BadInput("no layers in hidden states".into()));
    }
    let mut sum = vec![0.0; states.dimension];
    for layer in &states.states {
        for &pos in noun_positions {
            let v = layer.get(pos).ok_or_else(|| {
                AnalysisError::BadInput(format!("position {pos} outside the frame"))
            })?;
            if v.len() != states.dimension {
                return Err(AnalysisError::BadInput("state has wrong dimension".into()));
            }
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
    }
    let count = (states.states.len() * noun_positions.len()) as f64;
    sum.iter_mut().for_each(|s| *s /= count);
    Ok(sum)
}

fn write_str<W: Write>(out: &mut W, s: &str) -> io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

pub fn write_store<W: Write>(records: &[EmbeddingRecord], mut out: W) -> Result<(), AnalysisError> {
    let dim = if records.is_empty() {
        0
    } else {
        check_records(records)?
    };
    out.write_all(STORE_MAGIC)?;
    out.write_all(&(dim as u32).to_le_bytes())?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        write_str(&mut out, &r.class_label)?;
        for v in &r.vector {
            out.write_all(&v.to_le_bytes())?;
        }
        write_str(&mut out, &r.wordform)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(input: &mut R) -> Result<String, AnalysisError> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| AnalysisError::BadStore("string is not UTF-8".into()))
}

pub fn read_store<R: Read>(mut input: R) -> Result<Vec<EmbeddingRecord>, AnalysisError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(AnalysisError::BadStore("bad magic".into()));
    }
    let dim = read_u32(&mut input)? as usize;
    let mut count = [0u8; 8];
    input.read_exact(&mut count)?;
    let count = u64::from_le_bytes(count) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let class_label = read_string(&mut input)?;
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            vector.push(f64::from_le_bytes(b));
        }
        let wordform = read_string(&mut input)?;
        records.push(EmbeddingRecord {
            wordform,
            class_label,
            vector,
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(AnalysisError::BadStore("trailing bytes".into()));
    }
    Ok(records)
}

/// CSV interchange form: `wordform,class_label,v0,…,v{D-1}`.
pub fn write_store_csv<W: Write>(records: &[EmbeddingRecord], out: W) -> Result<(), AnalysisError> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["wordform".to_string(), "class_label".to_string()];
    header.extend((0..dim).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.wordform.clone(), r.class_label.clone()];
        row.extend(r.vector.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store_csv<R: Read>(input: R) -> Result<Vec<EmbeddingRecord>, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() < 2 {
            return Err(AnalysisError::BadStore("short CSV row".into()));
        }
        let vector = row
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AnalysisError::BadStore(format!("bad number: {e}")))?;
        records.push(EmbeddingRecord {
            wordform: row[0].to_string(),
            class_label: row[1].to_string(),
            vector,
        });
    }
    Ok(records)
}
