//! Product quantization with asymmetric distance computation.

use rayon::prelude::*;

use super::kmeans::{nearest, train_vq};
use crate::dataset::Metric;
use crate::error::{Error, Result};

/// `K` independent codebooks over consecutive dimension blocks, plus the codes of every
/// encoded row.
#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    bits: u32,
    /// Start column of each block, with a trailing `dim`.
    bounds: Vec<usize>,
    /// Per block, `centers x width` row-major.
    codebooks: Vec<Vec<f32>>,
    /// `rows x K` codes.
    codes: Vec<u8>,
}

/// Per-query lookup table: `K` blocks of `2^bits` partial distances.
#[derive(Debug, Clone)]
pub struct LookupTable {
    centers: usize,
    table: Vec<f32>,
}

impl LookupTable {
    /// Sum of the table entries selected by `codes`.
    #[inline]
    pub fn distance(&self, codes: &[u8]) -> f32 {
        let mut acc = 0f32;
        for (block, &c) in codes.iter().enumerate() {
            acc += self.table[block * self.centers + c as usize];
        }
        acc
    }
}

/// Block boundaries for `dim` dimensions split into blocks of `dims_per_block` (last one may be
/// narrower).
pub fn block_bounds(dim: usize, dims_per_block: usize) -> Vec<usize> {
    let mut bounds: Vec<usize> = (0..dim).step_by(dims_per_block).collect();
    bounds.push(dim);
    bounds
}

/// Bytes per encoded row: `K` codes of `bits` each, rounded up to whole bytes.
pub fn code_bytes(blocks: usize, bits: u32) -> u64 {
    (blocks as u64 * bits as u64).div_ceil(8)
}

fn check_params(dim: usize, dims_per_block: usize, bits: u32) -> Result<()> {
    if dims_per_block == 0 || dims_per_block > dim {
        return Err(Error::invalid(format!(
            "dims_per_block={dims_per_block} must lie in 1..={dim}"
        )));
    }
    if bits != 4 && bits != 8 {
        return Err(Error::invalid(format!("bits={bits}; supported values are 4 and 8")));
    }
    Ok(())
}

fn block_column(data: &[f32], dim: usize, lo: usize, hi: usize) -> Vec<f32> {
    data.chunks_exact(dim)
        .flat_map(|row| row[lo..hi].iter().copied())
        .collect()
}

/// Trains one `2^bits`-center k-means per block and encodes the training rows.
pub fn train_pq(
    data: &[f32],
    dim: usize,
    dims_per_block: usize,
    bits: u32,
    seed: u64,
    iters: usize,
) -> Result<PqCodebook> {
    check_params(dim, dims_per_block, bits)?;
    if !data.len().is_multiple_of(dim) {
        return Err(Error::invalid("training data is not a whole number of rows"));
    }
    let rows = data.len() / dim;
    let centers = 1usize << bits;
    if rows < centers {
        return Err(Error::invalid(format!(
            "{rows} training rows cannot fit {centers} centers per block"
        )));
    }
    let bounds = block_bounds(dim, dims_per_block);
    let mut codebooks = Vec::with_capacity(bounds.len() - 1);
    let mut block_codes = Vec::with_capacity(bounds.len() - 1);
    for (b, w) in bounds.windows(2).enumerate() {
        let width = w[1] - w[0];
        let column = block_column(data, dim, w[0], w[1]);
        let block_seed = seed ^ (b as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let vq = train_vq(&column, width, centers, block_seed, iters)?;
        block_codes.push(vq.assignments().to_vec());
        codebooks.push(vq.centroids().to_vec());
    }
    let k = codebooks.len();
    let mut codes = vec![0u8; rows * k];
    for (b, bc) in block_codes.iter().enumerate() {
        for (r, &c) in bc.iter().enumerate() {
            codes[r * k + b] = c as u8;
        }
    }
    Ok(PqCodebook {
        dim,
        bits,
        bounds,
        codebooks,
        codes,
    })
}

impl PqCodebook {
    pub(crate) fn from_parts(
        dim: usize,
        bits: u32,
        dims_per_block: usize,
        codebooks: Vec<Vec<f32>>,
        codes: Vec<u8>,
    ) -> Result<Self> {
        check_params(dim, dims_per_block, bits)?;
        let bounds = block_bounds(dim, dims_per_block);
        let k = bounds.len() - 1;
        let centers = 1usize << bits;
        if codebooks.len() != k
            || codebooks
                .iter()
                .zip(bounds.windows(2))
                .any(|(cb, w)| cb.len() != centers * (w[1] - w[0]))
            || !codes.len().is_multiple_of(k)
            || codes.iter().any(|&c| c as usize >= centers)
        {
            return Err(Error::invalid("product quantizer arrays are inconsistent"));
        }
        Ok(PqCodebook {
            dim,
            bits,
            bounds,
            codebooks,
            codes,
        })
    }

    /// Number of blocks `K`.
    pub fn num_blocks(&self) -> usize {
        self.codebooks.len()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_widths(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn dims_per_block(&self) -> usize {
        self.bounds[1] - self.bounds[0]
    }

    pub fn centers_per_block(&self) -> usize {
        1 << self.bits
    }

    pub fn codebook(&self, block: usize) -> &[f32] {
        &self.codebooks[block]
    }

    pub fn num_rows(&self) -> usize {
        self.codes.len() / self.num_blocks()
    }

    #[inline]
    pub fn codes(&self, row: usize) -> &[u8] {
        let k = self.num_blocks();
        &self.codes[row * k..(row + 1) * k]
    }

    pub(crate) fn all_codes(&self) -> &[u8] {
        &self.codes
    }

    /// Storage of one encoded row in bytes.
    pub fn bytes_per_row(&self) -> u64 {
        code_bytes(self.num_blocks(), self.bits)
    }

    /// Re-encodes this quantizer's rows from `data`, replacing the stored codes.
    pub fn encode_rows(&mut self, data: &[f32]) {
        let k = self.num_blocks();
        let mut codes = vec![0u8; data.len() / self.dim * k];
        codes
            .par_chunks_exact_mut(k)
            .zip(data.par_chunks_exact(self.dim))
            .for_each(|(out, row)| {
                for (b, w) in self.bounds.windows(2).enumerate() {
                    out[b] = nearest(&row[w[0]..w[1]], &self.codebooks[b], w[1] - w[0]).0 as u8;
                }
            });
        self.codes = codes;
    }

    /// Concatenation of the assigned centers of `row`.
    pub fn reconstruct(&self, row: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        for (b, (&c, w)) in self.codes(row).iter().zip(self.bounds.windows(2)).enumerate() {
            let width = w[1] - w[0];
            out.extend_from_slice(&self.codebooks[b][c as usize * width..(c as usize + 1) * width]);
        }
        out
    }

    /// Per-block partial distances from `query` to every center.
    pub fn lookup_table(&self, query: &[f32], metric: Metric) -> LookupTable {
        let centers = self.centers_per_block();
        let mut table = Vec::with_capacity(self.num_blocks() * centers);
        for (b, w) in self.bounds.windows(2).enumerate() {
            let q = &query[w[0]..w[1]];
            for center in self.codebooks[b].chunks_exact(w[1] - w[0]) {
                table.push(metric.eval(q, center) as f32);
            }
        }
        LookupTable { centers, table }
    }
}
