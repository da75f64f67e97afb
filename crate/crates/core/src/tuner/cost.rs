use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantization::QuantizationHierarchy;
use crate::search::Tuning;
use crate::stats::LossMatrix;

/// Linear cost `J(t) = a_0 + sum_{i<m} a_i t_i`: bytes read per query relative to a brute-force
/// scan, with `a_0 = |X1| / |X|` and `a_i = |X(i+1)| / (n |X|)`. The last level's depth is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    n: usize,
    footprints: Vec<u64>,
    dataset_bytes: u64,
}

impl CostModel {
    pub fn new(n: usize, footprints: Vec<u64>, dataset_bytes: u64) -> Result<Self> {
        if n == 0 || footprints.is_empty() || dataset_bytes == 0 || footprints.contains(&0) {
            return Err(Error::invalid("cost model needs n > 0 and positive footprints"));
        }
        Ok(CostModel {
            n,
            footprints,
            dataset_bytes,
        })
    }

    pub fn from_hierarchy(h: &QuantizationHierarchy) -> Self {
        Self::new(h.n(), h.footprints(), h.dataset_bytes()).expect("hierarchy footprints are positive")
    }

    pub fn from_loss_matrix(lm: &LossMatrix) -> Self {
        Self::new(lm.n(), lm.footprints().to_vec(), lm.dataset_bytes()).expect("validated on construction")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_levels(&self) -> usize {
        self.footprints.len()
    }

    pub fn footprints(&self) -> &[u64] {
        &self.footprints
    }

    pub fn dataset_bytes(&self) -> u64 {
        self.dataset_bytes
    }

    /// `a_0`.
    pub fn constant(&self) -> f64 {
        self.footprints[0] as f64 / self.dataset_bytes as f64
    }

    /// Cost per unit of `t` at `level` (0-based); zero for the last level.
    pub fn coefficient(&self, level: usize) -> f64 {
        match self.footprints.get(level + 1) {
            Some(&fp) => fp as f64 / (self.n as f64 * self.dataset_bytes as f64),
            None => 0.0,
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        (0..self.num_levels()).map(|l| self.coefficient(l)).collect()
    }

    pub(crate) fn check_levels(&self, m: usize) -> Result<()> {
        if m != self.num_levels() {
            return Err(Error::invalid(format!(
                "{m} levels for a cost model of {}",
                self.num_levels()
            )));
        }
        Ok(())
    }

    fn check(&self, t: &[usize]) -> Result<()> {
        self.check_levels(t.len())?;
        if t.iter().any(|&x| x > self.n) {
            return Err(Error::invalid(format!("tuning {t:?} exceeds n={}", self.n)));
        }
        Ok(())
    }

    /// `J(t)`.
    pub fn cost(&self, t: &Tuning) -> Result<f64> {
        self.cost_of(t.as_slice())
    }

    pub fn cost_of(&self, t: &[usize]) -> Result<f64> {
        self.check(t)?;
        Ok(self.cost_unchecked(t))
    }

    pub(crate) fn cost_unchecked(&self, t: &[usize]) -> f64 {
        let mut j = self.constant();
        for (l, &ti) in t.iter().enumerate().take(t.len() - 1) {
            j += self.coefficient(l) * ti as f64;
        }
        j
    }

    /// `n |X| J(t)` as an exact integer: `n |X1| + sum_{i<m} t_i |X(i+1)|`.
    pub fn cost_numerator(&self, t: &Tuning) -> Result<u128> {
        let t = t.as_slice();
        self.check(t)?;
        let mut total = self.n as u128 * self.footprints[0] as u128;
        for (l, &ti) in t.iter().enumerate().take(t.len() - 1) {
            total += ti as u128 * self.footprints[l + 1] as u128;
        }
        Ok(total)
    }

    /// Roofline cost of a batch of `batch` queries with arithmetic-to-bandwidth ratio `rho`:
    /// `sum_i max(alpha_i B / rho, min(1, alpha_i B)) |X(i)| / |X|`, `alpha_1 = 1`,
    /// `alpha_i = t_(i-1) / n`.
    pub fn batched_cost(&self, t: &Tuning, batch: usize, rho: f64) -> Result<f64> {
        let t = t.as_slice();
        self.check(t)?;
        if batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if rho.is_nan() || rho <= 0.0 {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        let b = batch as f64;
        let mut total = 0.0;
        for (i, &fp) in self.footprints.iter().enumerate() {
            let alpha = if i == 0 { 1.0 } else { t[i - 1] as f64 / self.n as f64 };
            let share = (alpha * b / rho).max((alpha * b).min(1.0));
            total += share * fp as f64;
        }
        Ok(total / self.dataset_bytes as f64)
    }
}
