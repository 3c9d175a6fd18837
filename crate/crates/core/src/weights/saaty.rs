//! The discrete 1-9 judgment scale.

use super::{PairwiseMatrix, WeightVector};

pub const MIN: f64 = 1.0 / 9.0;
pub const MAX: f64 = 9.0;

/// {1/9, ..., 1/2, 1, 2, ..., 9} in ascending order.
pub fn scale() -> [f64; 17] {
    let mut out = [0.0; 17];
    for k in 0..8 {
        out[k] = 1.0 / (9 - k) as f64;
        out[16 - k] = (9 - k) as f64;
    }
    out[8] = 1.0;
    out
}

pub fn clamp(value: f64) -> f64 {
    value.clamp(MIN, MAX)
}

/// The scale value nearest to `ratio` in log space; ties go to the smaller value.
pub fn nearest(ratio: f64) -> f64 {
    let target = ratio.ln();
    let mut best = 1.0;
    let mut best_dist = f64::INFINITY;
    for v in scale() {
        let dist = (target - v.ln()).abs();
        if dist < best_dist {
            best = v;
            best_dist = dist;
        }
    }
    best
}

/// Maps the ratios w_i / w_j onto the nearest scale values (reciprocal fill,
/// unit diagonal).
pub fn snap_to_saaty(weights: &WeightVector) -> PairwiseMatrix {
    let w = weights.weights();
    PairwiseMatrix::from_upper(weights.criterion_ids().to_vec(), |i, j| nearest(w[i] / w[j]))
        .expect("snapped scale values are positive and reciprocal")
}
