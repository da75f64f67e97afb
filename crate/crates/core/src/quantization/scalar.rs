//! Symmetric per-dimension int8 scalar quantization for centroid tables.

/// `rows x dim` table of int8 codes with one scale per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Int8Table {
    dim: usize,
    scales: Vec<f32>,
    codes: Vec<i8>,
    decoded: Vec<f32>,
}

impl Int8Table {
    pub fn encode(data: &[f32], dim: usize) -> Self {
        let mut scales = vec![0f32; dim];
        for row in data.chunks_exact(dim) {
            for (s, &x) in scales.iter_mut().zip(row) {
                *s = s.max(x.abs());
            }
        }
        for s in &mut scales {
            *s = if *s > 0.0 { *s / 127.0 } else { 1.0 };
        }
        let codes: Vec<i8> = data
            .chunks_exact(dim)
            .flat_map(|row| {
                row.iter()
                    .zip(&scales)
                    .map(|(&x, &s)| (x / s).round().clamp(-127.0, 127.0) as i8)
            })
            .collect();
        Self::from_parts(dim, scales, codes)
    }

    pub(crate) fn from_parts(dim: usize, scales: Vec<f32>, codes: Vec<i8>) -> Self {
        let decoded = codes
            .chunks_exact(dim)
            .flat_map(|row| row.iter().zip(&scales).map(|(&c, &s)| c as f32 * s))
            .collect();
        Int8Table {
            dim,
            scales,
            codes,
            decoded,
        }
    }

    pub fn rows(&self) -> usize {
        self.codes.len() / self.dim
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    /// Dequantized row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.decoded[i * self.dim..(i + 1) * self.dim]
    }
}
