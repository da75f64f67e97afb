use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ElementKind, QuerySet};
use crate::error::{Error, Result};

fn default_clusters() -> usize {
    64
}

fn default_spread() -> f64 {
    4.0
}

/// Seeded mixture of isotropic Gaussians. Queries are drawn from the same mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub n_queries: usize,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Standard deviation of the cluster centers; members have unit variance scaled per cluster.
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, n_queries: usize, seed: u64) -> Self {
        SyntheticSpec {
            n,
            d,
            n_queries,
            clusters: default_clusters(),
            spread: default_spread(),
            seed,
        }
    }

    pub fn generate(&self) -> Result<(Dataset, QuerySet)> {
        if self.n == 0 || self.d == 0 || self.clusters == 0 {
            return Err(Error::invalid("synthetic n, d and clusters must be positive"));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::invalid("synthetic spread must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let center = Normal::new(0.0, self.spread).expect("positive spread");
        let unit = Normal::new(0.0f64, 1.0).expect("unit normal");
        let centers: Vec<f64> = (0..self.clusters * self.d).map(|_| center.sample(&mut rng)).collect();
        let scales: Vec<f64> = (0..self.clusters).map(|_| rng.random_range(0.5..1.5)).collect();
        let draw = |rows: usize, rng: &mut ChaCha8Rng| {
            let mut out = Vec::with_capacity(rows * self.d);
            for _ in 0..rows {
                let c = rng.random_range(0..self.clusters);
                for j in 0..self.d {
                    out.push((centers[c * self.d + j] + scales[c] * unit.sample(rng)) as f32);
                }
            }
            out
        };
        let points = draw(self.n, &mut rng);
        let mut query_rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let queries = draw(self.n_queries, &mut query_rng);
        Ok((
            Dataset::from_vec(points, self.d, ElementKind::F32)?,
            QuerySet::new(Dataset::from_vec(queries, self.d, ElementKind::F32)?),
        ))
    }
}
