use crate::error::{Error, Result};

/// Lower convex hull of a loss curve, as breakpoints with linear interpolation between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexLossCurve {
    points: Vec<(usize, f64)>,
}

impl ConvexLossCurve {
    /// Monotone chain over points sorted by depth; collinear points are dropped.
    pub(crate) fn lower_hull(points: &[(usize, f64)]) -> Self {
        let mut hull: Vec<(usize, f64)> = Vec::with_capacity(points.len());
        for &p in points {
            while hull.len() >= 2 {
                let o = hull[hull.len() - 2];
                let a = hull[hull.len() - 1];
                let lhs = (a.1 - o.1) * (p.0 - o.0) as f64;
                let rhs = (p.1 - o.1) * (a.0 - o.0) as f64;
                if lhs >= rhs {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        ConvexLossCurve { points: hull }
    }

    /// Hull through explicit breakpoints, which must already be convex.
    pub fn from_breakpoints(points: Vec<(usize, f64)>) -> Result<Self> {
        if points.is_empty() || points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid("breakpoints must be non-empty with increasing depths"));
        }
        let hull = Self::lower_hull(&points);
        if hull.points.len() != points.len() {
            return Err(Error::invalid("breakpoints are not strictly convex"));
        }
        Ok(hull)
    }

    pub fn breakpoints(&self) -> &[(usize, f64)] {
        &self.points
    }

    pub fn min_depth(&self) -> usize {
        self.points[0].0
    }

    pub fn max_depth(&self) -> usize {
        self.points.last().unwrap().0
    }

    /// Slope of each segment between consecutive breakpoints.
    pub fn slopes(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0) as f64)
            .collect()
    }

    /// Hull value at depth `t`, clamped to the covered range.
    pub fn value_at(&self, t: usize) -> f64 {
        let s = self.points.partition_point(|&(d, _)| d <= t);
        if s == 0 {
            return self.points[0].1;
        }
        let (t0, v0) = self.points[s - 1];
        if t0 == t || s == self.points.len() {
            return v0;
        }
        let (t1, v1) = self.points[s];
        v0 + (v1 - v0) * ((t - t0) as f64 / (t1 - t0) as f64)
    }
}

/// Lower convex hull of a dense row `L(0..row.len())`.
pub fn convexify(row: &[f64]) -> Result<ConvexLossCurve> {
    if row.is_empty() {
        return Err(Error::invalid("cannot convexify an empty row"));
    }
    let points: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
    Ok(ConvexLossCurve::lower_hull(&points))
}

/// `exp(-sum_i hull_i(t_i))`.
pub fn proxy_recall(t: &[usize], hulls: &[ConvexLossCurve]) -> Result<f64> {
    if t.len() != hulls.len() {
        return Err(Error::invalid(format!("{} depths for {} curves", t.len(), hulls.len())));
    }
    let mut total = 0.0;
    for (&ti, hull) in t.iter().zip(hulls) {
        if ti > hull.max_depth() {
            return Err(Error::invalid(format!("depth {ti} beyond {}", hull.max_depth())));
        }
        total += hull.value_at(ti);
    }
    Ok((-total).exp())
}
