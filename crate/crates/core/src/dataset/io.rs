//! Readers and writers for the `fvecs`, `bvecs` and `ivecs` record formats.
//!
//! Every record is a little-endian `i32` dimension followed by that many elements
//! (`f32`, `u8` or `i32` respectively).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, ElementKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorFormat {
    Fvecs,
    Bvecs,
}

impl VectorFormat {
    fn elem_size(self) -> usize {
        match self {
            VectorFormat::Fvecs => 4,
            VectorFormat::Bvecs => 1,
        }
    }

    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "fvecs" => Some(VectorFormat::Fvecs),
            "bvecs" => Some(VectorFormat::Bvecs),
            _ => None,
        }
    }
}

impl std::str::FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "bvecs" => Ok(VectorFormat::Bvecs),
            other => Err(Error::invalid(format!("unknown vector format {other:?}"))),
        }
    }
}

/// Walks the record headers of `bytes`, returning the common dimension and record count.
fn scan_records(path: &Path, bytes: &[u8], elem_size: usize) -> Result<(usize, usize)> {
    if bytes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut offset = 0;
    let mut dim = None;
    let mut count = 0;
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(Error::format(path, format!("truncated header at byte {offset}")));
        }
        let d = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if d <= 0 {
            return Err(Error::format(
                path,
                format!("record {count} declares dimension {d}"),
            ));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(
                    path,
                    format!("record {count} has dimension {d}, expected {expected}"),
                ))
            }
            _ => {}
        }
        let record = 4 + d * elem_size;
        if bytes.len() - offset < record {
            return Err(Error::format(path, format!("record {count} is truncated")));
        }
        offset += record;
        count += 1;
    }
    Ok((dim.unwrap(), count))
}

/// Loads a dataset from an `fvecs` or `bvecs` file. `bvecs` elements are widened to `f32`.
pub fn load_vectors(path: impl AsRef<Path>, format: VectorFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let elem = format.elem_size();
    let (d, n) = scan_records(path, &bytes, elem)?;
    let mut data = Vec::with_capacity(n * d);
    for record in bytes.chunks_exact(4 + d * elem) {
        let payload = &record[4..];
        match format {
            VectorFormat::Fvecs => data.extend(
                payload
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
            ),
            VectorFormat::Bvecs => data.extend(payload.iter().map(|&b| b as f32)),
        }
    }
    let kind = match format {
        VectorFormat::Fvecs => ElementKind::F32,
        VectorFormat::Bvecs => ElementKind::U8,
    };
    Dataset::from_vec(data, d, kind)
}

/// Writes a dataset in the given format. Writing `bvecs` requires every element to be a byte value.
pub fn save_vectors(path: impl AsRef<Path>, ds: &Dataset, format: VectorFormat) -> Result<()> {
    let path = path.as_ref();
    let d = ds.dim();
    let mut out = Vec::with_capacity(ds.len() * (4 + d * format.elem_size()));
    for row in ds.rows() {
        out.extend_from_slice(&(d as i32).to_le_bytes());
        match format {
            VectorFormat::Fvecs => {
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            VectorFormat::Bvecs => {
                for &v in row {
                    if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                        return Err(Error::invalid(format!(
                            "value {v} cannot be stored as a byte"
                        )));
                    }
                    out.push(v as u8);
                }
            }
        }
    }
    write_file(path, &out)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Loads an `ivecs` file as a flat row-major buffer plus its row width.
pub fn load_ivecs(path: impl AsRef<Path>) -> Result<(Vec<i32>, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (k, n) = scan_records(path, &bytes, 4)?;
    let mut out = Vec::with_capacity(n * k);
    for record in bytes.chunks_exact(4 + 4 * k) {
        out.extend(
            record[4..]
                .chunks_exact(4)
                .map(|b| i32::from_le_bytes(b.try_into().unwrap())),
        );
    }
    Ok((out, k))
}

/// Writes `rows` (each of width `k`) as an `ivecs` file.
pub fn save_ivecs(path: impl AsRef<Path>, values: &[i32], k: usize) -> Result<()> {
    if k == 0 || !values.len().is_multiple_of(k) {
        return Err(Error::invalid("ivecs rows must have a positive common width"));
    }
    let mut out = Vec::with_capacity(values.len() / k * (4 + 4 * k));
    for row in values.chunks_exact(k) {
        out.extend_from_slice(&(k as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_file(path.as_ref(), &out)
}
