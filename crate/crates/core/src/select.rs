//! Top-t selection under the global `(distance, index)` order.

use std::cmp::Ordering;

#[inline]
pub(crate) fn by_distance_then_index(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Keeps the `t` smallest entries of `scored` in unspecified order.
pub(crate) fn retain_smallest(scored: &mut Vec<(f64, u32)>, t: usize) {
    if t == 0 {
        scored.clear();
    } else if t < scored.len() {
        scored.select_nth_unstable_by(t - 1, by_distance_then_index);
        scored.truncate(t);
    }
}

/// Keeps the `t` smallest entries of `scored`, sorted ascending.
pub(crate) fn smallest_sorted(scored: &mut Vec<(f64, u32)>, t: usize) {
    retain_smallest(scored, t);
    scored.sort_unstable_by(by_distance_then_index);
}
