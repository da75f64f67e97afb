//! Vector datasets, distance metrics and exact ground truth.

mod ground_truth;
pub(crate) mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ground_truth::{compute_ground_truth, GroundTruth};
pub use io::{load_ivecs, load_vectors, save_ivecs, save_vectors, VectorFormat};

/// Storage kind of the elements a dataset was loaded from.
///
/// Elements are always held as `f32`; `U8` datasets were widened on load and are written back
/// as bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    F32,
    U8,
}

impl ElementKind {
    /// Bytes per dimension in the original encoding; used for the brute-force footprint `|X|`.
    pub fn bytes_per_dim(self) -> u64 {
        match self {
            ElementKind::F32 => 4,
            ElementKind::U8 => 1,
        }
    }
}

/// Dissimilarity used for search. Smaller is closer for both kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SquaredEuclidean,
    NegatedInnerProduct,
}

impl Metric {
    /// Distance between two equal-length vectors, accumulated in double precision.
    #[inline]
    pub fn eval(self, a: &[f32], b: &[f32]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::SquaredEuclidean => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let diff = x as f64 - y as f64;
                    diff * diff
                })
                .sum(),
            Metric::NegatedInnerProduct => -a
                .iter()
                .zip(b)
                .map(|(&x, &y)| x as f64 * y as f64)
                .sum::<f64>(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::SquaredEuclidean => "squared_euclidean",
            Metric::NegatedInnerProduct => "negated_inner_product",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_euclidean" | "l2" => Ok(Metric::SquaredEuclidean),
            "negated_inner_product" | "dot" | "ip" => Ok(Metric::NegatedInnerProduct),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Checked distance between `a` and `b`.
pub fn distance(metric: Metric, a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(metric.eval(a, b))
}

/// Squared euclidean distance in single precision, used by the quantizer trainers.
#[inline]
pub(crate) fn l2_sq_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    acc.iter().sum::<f32>() + tail
}

/// An `n x d` row-major matrix of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f32>,
    n: usize,
    d: usize,
    kind: ElementKind,
}

impl Dataset {
    /// Wraps a row-major buffer. Fails on an empty buffer or a length that is not a multiple of `d`.
    pub fn from_vec(data: Vec<f32>, d: usize, kind: ElementKind) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimensionality must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "buffer of {} elements is not a multiple of d={d}",
                data.len()
            )));
        }
        if kind == ElementKind::U8
            && data
                .iter()
                .any(|&v| !(0.0..=255.0).contains(&v) || v.fract() != 0.0)
        {
            return Err(Error::invalid("u8 dataset holds a non-byte value"));
        }
        let n = data.len() / d;
        Ok(Dataset { data, n, d, kind })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Dataset::from_vec(data, d, ElementKind::F32)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// Footprint of brute-force search over this dataset, `|X| = n * d * bytes_per_dim`.
    pub fn footprint_bytes(&self) -> u64 {
        self.n as u64 * self.d as u64 * self.kind.bytes_per_dim()
    }

    /// New dataset made of the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::invalid(format!("row {i} out of range 0..{}", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Dataset::from_vec(data, self.d, self.kind)
    }
}

/// Queries searched against a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet(Dataset);

impl QuerySet {
    pub fn new(vectors: Dataset) -> Self {
        QuerySet(vectors)
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        Dataset::from_rows(rows).map(QuerySet)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    #[inline]
    pub fn query(&self, i: usize) -> &[f32] {
        self.0.row(i)
    }

    pub fn vectors(&self) -> &Dataset {
        &self.0
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        self.0.select(indices).map(QuerySet)
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<Dataset> for QuerySet {
    fn from(d: Dataset) -> Self {
        QuerySet(d)
    }
}
