use serde::{Deserialize, Serialize};

use super::WeightsError;

/// Tolerance for unit diagonal, reciprocity and weight normalization.
pub const RECIPROCITY_TOL: f64 = 1e-9;

/// Positive reciprocal judgment matrix over an ordered sibling group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct PairwiseMatrix {
    criterion_ids: Vec<String>,
    entries: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    criterion_ids: Vec<String>,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<RawMatrix> for PairwiseMatrix {
    type Error = WeightsError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        PairwiseMatrix::new(raw.criterion_ids, raw.entries)
    }
}

impl From<PairwiseMatrix> for RawMatrix {
    fn from(m: PairwiseMatrix) -> Self {
        RawMatrix { criterion_ids: m.criterion_ids, entries: m.entries }
    }
}

impl PairwiseMatrix {
    pub fn new(criterion_ids: Vec<String>, entries: Vec<Vec<f64>>) -> Result<Self, WeightsError> {
        let n = criterion_ids.len();
        let bad = |msg: String| Err(WeightsError::InvalidMatrix(msg));
        if n < 2 {
            return bad(format!("need at least 2 criteria, got {n}"));
        }
        if entries.len() != n || entries.iter().any(|row| row.len() != n) {
            return bad(format!("entries must be {n}x{n}"));
        }
        for i in 0..n {
            if (entries[i][i] - 1.0).abs() > RECIPROCITY_TOL {
                return bad(format!("diagonal entry ({i},{i}) is {}", entries[i][i]));
            }
            for j in 0..n {
                let a = entries[i][j];
                if !(a.is_finite() && a > 0.0) {
                    return bad(format!("entry ({i},{j}) = {a} is not positive"));
                }
                if (a * entries[j][i] - 1.0).abs() > RECIPROCITY_TOL {
                    return bad(format!("entries ({i},{j}) and ({j},{i}) are not reciprocal"));
                }
            }
        }
        Ok(Self { criterion_ids, entries })
    }

    /// Builds a reciprocal matrix from the strict upper triangle `upper(i, j)`, i < j.
    pub fn from_upper(criterion_ids: Vec<String>, upper: impl Fn(usize, usize) -> f64) -> Result<Self, WeightsError> {
        let n = criterion_ids.len();
        let mut entries = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let a = upper(i, j);
                entries[i][j] = a;
                entries[j][i] = 1.0 / a;
            }
        }
        Self::new(criterion_ids, entries)
    }

    /// The perfectly consistent matrix with entries w_i / w_j.
    pub fn from_weights(weights: &WeightVector) -> Self {
        let w = weights.weights();
        let n = w.len();
        let mut entries = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    entries[i][j] = w[i] / w[j];
                }
            }
        }
        Self { criterion_ids: weights.criterion_ids().to_vec(), entries }
    }

    pub fn n(&self) -> usize {
        self.criterion_ids.len()
    }

    pub fn criterion_ids(&self) -> &[String] {
        &self.criterion_ids
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.criterion_ids.iter().position(|c| c == id)
    }
}

/// Normalized positive weights over an ordered sibling group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct WeightVector {
    criterion_ids: Vec<String>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    criterion_ids: Vec<String>,
    weights: Vec<f64>,
}

impl TryFrom<RawWeights> for WeightVector {
    type Error = WeightsError;

    fn try_from(raw: RawWeights) -> Result<Self, Self::Error> {
        WeightVector::new(raw.criterion_ids, raw.weights)
    }
}

impl From<WeightVector> for RawWeights {
    fn from(w: WeightVector) -> Self {
        RawWeights { criterion_ids: w.criterion_ids, weights: w.weights }
    }
}

impl WeightVector {
    pub fn new(criterion_ids: Vec<String>, weights: Vec<f64>) -> Result<Self, WeightsError> {
        if criterion_ids.is_empty() || criterion_ids.len() != weights.len() {
            return Err(WeightsError::InvalidWeights(format!(
                "{} ids for {} weights",
                criterion_ids.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(WeightsError::InvalidWeights(format!("weight {w} is not positive")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > RECIPROCITY_TOL {
            return Err(WeightsError::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(Self { criterion_ids, weights })
    }

    /// Normalizes positive `raw` values to sum to one.
    pub fn normalized(criterion_ids: Vec<String>, raw: &[f64]) -> Result<Self, WeightsError> {
        let sum: f64 = raw.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(WeightsError::InvalidWeights(format!("cannot normalize values summing to {sum}")));
        }
        Self::new(criterion_ids, raw.iter().map(|w| w / sum).collect())
    }

    pub fn criterion_ids(&self) -> &[String] {
        &self.criterion_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.criterion_ids.iter().position(|c| c == id).map(|i| self.weights[i])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn rejects_non_reciprocal_and_non_positive() {
        assert!(PairwiseMatrix::new(ids(2), vec![vec![1.0, 3.0], vec![0.5, 1.0]]).is_err());
        assert!(PairwiseMatrix::new(ids(2), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).is_err());
        assert!(PairwiseMatrix::new(ids(2), vec![vec![2.0, 1.0], vec![1.0, 1.0]]).is_err());
        assert!(PairwiseMatrix::new(ids(1), vec![vec![1.0]]).is_err());
    }

    #[test]
    fn upper_triangle_fill() {
        let m = PairwiseMatrix::from_upper(ids(2), |_, _| 3.0).unwrap();
        assert_eq!(m.entries(), &[vec![1.0, 3.0], vec![1.0 / 3.0, 1.0]]);
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(ids(2), vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(ids(2), vec![1.0, 0.0]).is_err());
        let w = WeightVector::normalized(ids(3), &[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(w.weights(), &[0.5, 0.25, 0.25]);
        assert_eq!(w.get("c0"), Some(0.5));
    }

    #[test]
    fn serde_validates_on_load() {
        let bad = r#"{"criterion_ids":["a","b"],"entries":[[1,2],[2,1]]}"#;
        assert!(serde_json::from_str::<PairwiseMatrix>(bad).is_err());
        let good = r#"{"criterion_ids":["a","b"],"entries":[[1,2],[0.5,1]]}"#;
        assert!(serde_json::from_str::<PairwiseMatrix>(good).is_ok());
    }
}
