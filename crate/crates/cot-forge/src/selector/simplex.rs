//! Euclidean projection onto the probability simplex.

use crate::error::SelectorError;

/// Projects `v` onto the probability simplex: the unique point with
/// non-negative entries summing to one that is closest to `v` in Euclidean
/// distance. Computed by the sort-and-threshold rule — find the largest
/// prefix of the descending sort whose running mean leaves every kept entry
/// positive after shifting, shift by that threshold, and clip at zero — with
/// a final renormalization to absorb floating-point residue.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>, SelectorError> {
    assert!(!v.is_empty(), "projection input must be non-empty");
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SelectorError::NonFiniteInput);
    }

    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));

    let mut threshold = 0.0;
    let mut cumulative = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }

    let mut projected: Vec<f64> = v.iter().map(|&x| (x - threshold).max(0.0)).collect();
    let sum: f64 = projected.iter().sum();
    debug_assert!(sum > 0.0, "projection keeps at least one positive entry");
    for p in &mut projected {
        *p /= sum;
    }
    Ok(projected)
}
