use std::collections::VecDeque;

use super::cost::CostModel;
use crate::error::{Error, Result};
use crate::search::Tuning;
use crate::stats::{ConvexLossCurve, LossMatrix};

/// Hull values and cost coefficients on the shared column grid, with the prefix sums the fast
/// solver needs. Built once per loss matrix and reused across multipliers.
#[derive(Debug, Clone)]
pub struct LagrangianTables {
    pub(super) hulls: Vec<ConvexLossCurve>,
    pub(super) cm: CostModel,
    t_min: usize,
    /// Candidate depths: every hull breakpoint at or above `t_min`, plus `t_min` and `n`.
    cols: Vec<usize>,
    /// `loss[l][j] = hull_l(cols[j])`.
    loss: Vec<Vec<f64>>,
    /// `prefix[r][j] = sum_{r' < r} loss[r'][j]`.
    prefix: Vec<Vec<f64>>,
    coef: Vec<f64>,
    coef_prefix: Vec<f64>,
}

/// A run of columns whose dynamic-program value is `offset + sum_{r = rows_from..=l} M[r][j]`.
#[derive(Debug, Clone, Copy)]
struct Component {
    start: usize,
    rows_from: usize,
    offset: f64,
}

impl LagrangianTables {
    pub fn new(hulls: &[ConvexLossCurve], cm: &CostModel, t_min: usize) -> Result<Self> {
        cm.check_levels(hulls.len())?;
        let n = cm.n();
        if t_min > n {
            return Err(Error::Infeasible(format!("t_min={t_min} exceeds n={n}")));
        }
        if let Some(h) = hulls.iter().find(|h| h.min_depth() != 0 || h.max_depth() != n) {
            return Err(Error::invalid(format!(
                "loss hull covers {}..={}, expected 0..={n}",
                h.min_depth(),
                h.max_depth()
            )));
        }
        let mut cols: Vec<usize> = hulls
            .iter()
            .flat_map(|h| h.breakpoints().iter().map(|&(t, _)| t))
            .filter(|&t| t >= t_min)
            .chain([t_min, n])
            .collect();
        cols.sort_unstable();
        cols.dedup();
        let loss: Vec<Vec<f64>> = hulls
            .iter()
            .map(|h| cols.iter().map(|&t| h.value_at(t)).collect())
            .collect();
        let mut prefix = vec![vec![0.0; cols.len()]];
        for row in &loss {
            let next: Vec<f64> = prefix.last().unwrap().iter().zip(row).map(|(p, v)| p + v).collect();
            prefix.push(next);
        }
        let coef = cm.coefficients();
        let mut coef_prefix = vec![0.0];
        for &a in &coef {
            coef_prefix.push(coef_prefix.last().unwrap() + a);
        }
        Ok(LagrangianTables {
            hulls: hulls.to_vec(),
            cm: cm.clone(),
            t_min,
            cols,
            loss,
            prefix,
            coef,
            coef_prefix,
        })
    }

    pub fn from_loss_matrix(lm: &LossMatrix, t_min: usize) -> Result<Self> {
        Self::new(lm.hulls(), &CostModel::from_loss_matrix(lm), t_min)
    }

    pub fn num_levels(&self) -> usize {
        self.loss.len()
    }

    pub fn t_min(&self) -> usize {
        self.t_min
    }

    pub fn columns(&self) -> &[usize] {
        &self.cols
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cm
    }

    pub fn hulls(&self) -> &[ConvexLossCurve] {
        &self.hulls
    }

    /// `sum_i hull_i(t_i)`, summed in level order.
    pub fn loss_of(&self, t: &[usize]) -> f64 {
        t.iter().zip(&self.hulls).map(|(&ti, h)| h.value_at(ti)).sum()
    }

    pub fn cost_of(&self, t: &[usize]) -> f64 {
        self.cm.cost_unchecked(t)
    }

    /// `sum_i hull_i(t_i) + lambda * a_i * t_i`, summed in level order.
    pub fn objective(&self, t: &[usize], lambda: f64) -> f64 {
        let mut acc = 0.0;
        for (l, &ti) in t.iter().enumerate() {
            acc += self.hulls[l].value_at(ti) + lambda * self.coef[l] * ti as f64;
        }
        acc
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        Ok(())
    }

    #[inline]
    fn entry(&self, l: usize, j: usize, lambda: f64) -> f64 {
        self.loss[l][j] + lambda * self.coef[l] * self.cols[j] as f64
    }

    fn finish(&self, idx: &[usize], lambda: f64) -> (Tuning, f64) {
        let t: Vec<usize> = idx.iter().map(|&j| self.cols[j]).collect();
        let value = self.objective(&t, lambda);
        (Tuning::new(t).expect("backtracking yields a monotone tuning"), value)
    }

    /// Explicit rows `M'[l][j]`: the best objective of levels `0..=l` with `t_l >= cols[j]`.
    /// Also returns the unreduced rows `M[l][j] + M'[l-1][j]` for backtracking.
    fn basic_rows(&self, lambda: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let width = self.cols.len();
        let mut reduced = Vec::with_capacity(self.num_levels());
        let mut raw = Vec::with_capacity(self.num_levels());
        let mut prev = vec![0.0; width];
        for l in 0..self.num_levels() {
            let g: Vec<f64> = (0..width).map(|j| self.entry(l, j, lambda) + prev[j]).collect();
            let mut f = g.clone();
            for j in (0..width - 1).rev() {
                if f[j + 1] <= f[j] {
                    f[j] = f[j + 1];
                }
            }
            raw.push(g);
            prev = f.clone();
            reduced.push(f);
        }
        (reduced, raw)
    }

    /// O(m n) dynamic program; ties resolve toward larger depths.
    pub fn solve_basic(&self, lambda: f64) -> Result<(Tuning, f64)> {
        Self::check_lambda(lambda)?;
        let (_, raw) = self.basic_rows(lambda);
        let m = self.num_levels();
        let mut idx = vec![0; m];
        let mut lo = 0;
        for l in (0..m).rev() {
            let row = &raw[l];
            let mut best = lo;
            for j in lo + 1..row.len() {
                if row[j] <= row[best] {
                    best = j;
                }
            }
            idx[l] = best;
            lo = best;
        }
        Ok(self.finish(&idx, lambda))
    }

    /// Value of component `c` at column `j` once rows up to `l` are included.
    #[inline]
    fn component_value(&self, c: &Component, l: usize, j: usize, lambda: f64) -> f64 {
        let r = c.rows_from;
        c.offset
            + (self.prefix[l + 1][j] - self.prefix[r][j])
            + lambda * self.cols[j] as f64 * (self.coef_prefix[l + 1] - self.coef_prefix[r])
    }

    #[inline]
    fn eval(&self, comps: &VecDeque<Component>, l: usize, j: usize, lambda: f64) -> f64 {
        let c = comps.partition_point(|c| c.start <= j) - 1;
        self.component_value(&comps[c], l, j, lambda)
    }

    /// Runs the component recursion, calling `visit(l, comps)` after each row.
    fn fast_rows(&self, lambda: f64, mut visit: impl FnMut(usize, &VecDeque<Component>)) -> Vec<usize> {
        let width = self.cols.len();
        let mut comps = VecDeque::from([Component {
            start: 0,
            rows_from: 0,
            offset: 0.0,
        }]);
        let mut argmins = Vec::with_capacity(self.num_levels());
        for l in 0..self.num_levels() {
            // Rightmost minimizer of a convex row: first j whose successor is strictly larger.
            let (mut lo, mut hi) = (0, width - 1);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if self.eval(&comps, l, mid + 1, lambda) > self.eval(&comps, l, mid, lambda) {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            let star = lo;
            let best = self.eval(&comps, l, star, lambda);
            while comps.len() > 1 && comps[1].start <= star {
                comps.pop_front();
            }
            if star + 1 < width {
                comps[0].start = star + 1;
            } else {
                comps.clear();
            }
            comps.push_front(Component {
                start: 0,
                rows_from: l + 1,
                offset: best,
            });
            argmins.push(star);
            visit(l, &comps);
        }
        argmins
    }

    /// Same minimizer as [`solve_basic`](Self::solve_basic) from `O(log n)` work per level.
    pub fn solve_fast(&self, lambda: f64) -> Result<(Tuning, f64)> {
        Self::check_lambda(lambda)?;
        let argmins = self.fast_rows(lambda, |_, _| {});
        let m = self.num_levels();
        let mut idx = vec![0; m];
        idx[m - 1] = argmins[m - 1];
        for l in (0..m - 1).rev() {
            idx[l] = argmins[l].max(idx[l + 1]);
        }
        Ok(self.finish(&idx, lambda))
    }

    /// The explicit `M'` matrix of the basic program.
    pub fn basic_matrix(&self, lambda: f64) -> Result<Vec<Vec<f64>>> {
        Self::check_lambda(lambda)?;
        Ok(self.basic_rows(lambda).0)
    }

    /// `M'` reconstructed from the fast solver's components; grids of at most 4096 columns.
    pub fn fast_matrix(&self, lambda: f64) -> Result<Vec<Vec<f64>>> {
        Self::check_lambda(lambda)?;
        if self.cols.len() > 4096 {
            return Err(Error::invalid("audit reconstruction is limited to 4096 columns"));
        }
        let mut rows = Vec::with_capacity(self.num_levels());
        self.fast_rows(lambda, |l, comps| {
            rows.push((0..self.cols.len()).map(|j| self.eval(comps, l, j, lambda)).collect());
        });
        Ok(rows)
    }
}
