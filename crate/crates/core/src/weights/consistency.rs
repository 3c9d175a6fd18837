//! Principal eigenpair by power iteration and the consistency ratio.

use serde::{Deserialize, Serialize};

use super::{PairwiseMatrix, WeightVector, WeightsError};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 1000;
/// Matrices with CR strictly below this pass.
pub const CR_THRESHOLD: f64 = 0.1;

/// Saaty random indices for n = 0..=15. Orders above 15 reuse the n = 15 value.
const RANDOM_INDEX: [f64; 16] = [
    0.0, 0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49, 1.51, 1.48, 1.56, 1.57, 1.59,
];

pub fn random_index(n: usize) -> f64 {
    RANDOM_INDEX[n.min(RANDOM_INDEX.len() - 1)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Principal eigenvector scaled to sum to one.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration on a positive square matrix, starting from the uniform
/// vector. Converged when the sup-norm change of the sum-normalized iterate
/// drops below `tol`.
pub fn power_iteration(a: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<Eigenpair, WeightsError> {
    let n = a.len();
    if n == 0 || a.iter().any(|row| row.len() != n) {
        return Err(WeightsError::InvalidMatrix("power iteration needs a non-empty square matrix".into()));
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let y: Vec<f64> = a.iter().map(|row| row.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
        let lambda: f64 = y.iter().sum();
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(WeightsError::InvalidMatrix("matrix is not positive".into()));
        }
        let next: Vec<f64> = y.iter().map(|x| x / lambda).collect();
        residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual < tol {
            // Rayleigh-style estimate from the converged vector.
            let av: Vec<f64> = a.iter().map(|row| row.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
            let value = av.iter().sum::<f64>() / v.iter().sum::<f64>();
            return Ok(Eigenpair { value, vector: v, iterations: iter, residual });
        }
    }
    Err(WeightsError::NonConvergence { iterations: max_iter, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub lambda_max: f64,
    pub ci: f64,
    pub cr: f64,
    pub n: usize,
    pub passes: bool,
}

pub fn consistency_ratio(m: &PairwiseMatrix) -> Result<ConsistencyReport, WeightsError> {
    let n = m.n();
    if n <= 2 {
        return Ok(ConsistencyReport { lambda_max: n as f64, ci: 0.0, cr: 0.0, n, passes: true });
    }
    let eig = power_iteration(m.entries(), POWER_TOL, POWER_MAX_ITER)?;
    // lambda_max >= n for positive reciprocal matrices; clip rounding noise.
    let ci = ((eig.value - n as f64) / (n - 1) as f64).max(0.0);
    let cr = ci / random_index(n);
    Ok(ConsistencyReport { lambda_max: eig.value, ci, cr, n, passes: cr < CR_THRESHOLD })
}

/// Normalized principal eigenvector of `m`.
pub fn eigenvector_weights(m: &PairwiseMatrix) -> Result<WeightVector, WeightsError> {
    let eig = power_iteration(m.entries(), POWER_TOL, POWER_MAX_ITER)?;
    WeightVector::normalized(m.criterion_ids().to_vec(), &eig.vector)
}
