//! Leader-constrained logarithmic least squares.
//!
//! Minimizes `sum_ij (ln a_ij - (x_i - x_j))^2` over log-weights `x` subject
//! to `x_i - x_j >= ln beta` for every leader constraint, by projected
//! gradient descent. The Hessian is `4(nI - 11^T)`, so `1/(4n)` is the
//! Lipschitz step. Projection onto the constraint polyhedron uses Dykstra's
//! alternating projections over the half-spaces. All iterates keep the sum of
//! `x` fixed; the gauge `x_n = 0` is applied before exponentiation.

use serde::{Deserialize, Serialize};

use super::{PairwiseMatrix, WeightVector, WeightsError};

pub const KKT_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 50_000;
const DYKSTRA_TOL: f64 = 1e-15;
const DYKSTRA_MAX_SWEEPS: usize = 100_000;

/// `w_i >= beta * w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderConstraint {
    pub i: String,
    pub j: String,
    pub beta: f64,
}

impl LeaderConstraint {
    pub fn new(i: impl Into<String>, j: impl Into<String>, beta: f64) -> Self {
        Self { i: i.into(), j: j.into(), beta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlsmSolution {
    pub weights: WeightVector,
    /// Log-weights with the last coordinate fixed at zero.
    pub log_weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Index form of a constraint: `x[hi] - x[lo] >= gap`.
#[derive(Debug, Clone, Copy)]
struct HalfSpace {
    hi: usize,
    lo: usize,
    gap: f64,
}

pub fn objective(m: &PairwiseMatrix, x: &[f64]) -> f64 {
    let n = m.n();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = m.get(i, j).ln() - (x[i] - x[j]);
            f += r * r;
        }
    }
    f
}

fn gradient(log_a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let sum: f64 = x.iter().sum();
    log_a
        .iter()
        .zip(x)
        .map(|(row, xk)| -4.0 * row.iter().sum::<f64>() + 4.0 * n * xk - 4.0 * sum)
        .collect()
}

fn resolve(m: &PairwiseMatrix, constraints: &[LeaderConstraint]) -> Result<Vec<HalfSpace>, WeightsError> {
    constraints
        .iter()
        .map(|c| {
            let hi = m.index_of(&c.i);
            let lo = m.index_of(&c.j);
            match (hi, lo) {
                (Some(hi), Some(lo)) if hi != lo && c.beta.is_finite() && c.beta >= 1.0 => {
                    Ok(HalfSpace { hi, lo, gap: c.beta.ln() })
                }
                _ => Err(WeightsError::InvalidConstraint(format!(
                    "constraint {} >= {} * {} does not fit the sibling group",
                    c.i, c.beta, c.j
                ))),
            }
        })
        .collect()
}

/// Detects a cycle of constraints whose log-gaps sum to a positive value,
/// e.g. `w_a >= 2 w_b` together with `w_b >= 2 w_a`.
fn check_feasible(n: usize, halfspaces: &[HalfSpace]) -> Result<(), WeightsError> {
    // Longest-path closure over edges lo -> hi weighted by gap.
    let mut best = vec![vec![f64::NEG_INFINITY; n]; n];
    for h in halfspaces {
        best[h.lo][h.hi] = best[h.lo][h.hi].max(h.gap);
    }
    for k in 0..n {
        for i in 0..n {
            if best[i][k] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..n {
                let via = best[i][k] + best[k][j];
                if via > best[i][j] {
                    best[i][j] = via;
                }
            }
        }
    }
    match (0..n).find(|&i| best[i][i] > 1e-12) {
        Some(i) => Err(WeightsError::InfeasibleConstraints(format!(
            "constraint cycle through criterion index {i} requires a weight ratio of {:.4} with itself",
            best[i][i].exp()
        ))),
        None => Ok(()),
    }
}

/// Euclidean projection onto the intersection of half-spaces (Dykstra).
fn project(point: &[f64], halfspaces: &[HalfSpace]) -> Vec<f64> {
    let mut x = point.to_vec();
    match halfspaces {
        [] => return x,
        [h] => {
            project_one(&mut x, h);
            return x;
        }
        _ => {}
    }
    // Each correction term lies along e_hi - e_lo, so a scalar suffices.
    let mut corrections = vec![0.0; halfspaces.len()];
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let mut moved: f64 = 0.0;
        for (h, q) in halfspaces.iter().zip(corrections.iter_mut()) {
            let (old_hi, old_lo) = (x[h.hi], x[h.lo]);
            x[h.hi] += *q;
            x[h.lo] -= *q;
            let (z_hi, z_lo) = (x[h.hi], x[h.lo]);
            project_one(&mut x, h);
            *q = z_hi - x[h.hi];
            debug_assert!((*q + (z_lo - x[h.lo])).abs() < 1e-12);
            moved = moved.max((x[h.hi] - old_hi).abs()).max((x[h.lo] - old_lo).abs());
        }
        if moved < DYKSTRA_TOL {
            break;
        }
    }
    x
}

fn project_one(x: &mut [f64], h: &HalfSpace) {
    let violation = h.gap - (x[h.hi] - x[h.lo]);
    if violation > 0.0 {
        x[h.hi] += violation / 2.0;
        x[h.lo] -= violation / 2.0;
    }
}

pub fn solve_constrained_llsm(
    m: &PairwiseMatrix,
    constraints: &[LeaderConstraint],
) -> Result<LlsmSolution, WeightsError> {
    let n = m.n();
    let halfspaces = resolve(m, constraints)?;
    check_feasible(n, &halfspaces)?;

    let log_a: Vec<Vec<f64>> = m.entries().iter().map(|row| row.iter().map(|a| a.ln()).collect()).collect();
    let lipschitz = 4.0 * n as f64;

    let mut x = project(&vec![0.0; n], &halfspaces);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let g = gradient(&log_a, &x);
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / lipschitz).collect();
        let next = project(&trial, &halfspaces);
        // Norm of the gradient mapping; zero exactly at a KKT point.
        residual = lipschitz * next.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        x = next;
        iterations += 1;
        if residual < KKT_TOL {
            break;
        }
    }
    if residual >= KKT_TOL {
        return Err(WeightsError::NonConvergence { iterations, residual });
    }

    let gauge = x[n - 1];
    for xi in x.iter_mut() {
        *xi -= gauge;
    }
    let raw: Vec<f64> = x.iter().map(|xi| xi.exp()).collect();
    let weights = WeightVector::normalized(m.criterion_ids().to_vec(), &raw)?;
    Ok(LlsmSolution { objective: objective(m, &x), weights, log_weights: x, iterations, kkt_residual: residual })
}

/// Normalized row geometric means, the closed-form unconstrained optimum.
pub fn row_geometric_mean(m: &PairwiseMatrix) -> Result<WeightVector, WeightsError> {
    let n = m.n() as f64;
    let raw: Vec<f64> =
        m.entries().iter().map(|row| (row.iter().map(|a| a.ln()).sum::<f64>() / n).exp()).collect();
    WeightVector::normalized(m.criterion_ids().to_vec(), &raw)
}
