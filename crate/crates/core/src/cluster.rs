//! Ward agglomerative clustering and adaptive dendrogram cuts.
//!
//! Node ids follow the SciPy linkage convention: leaves are `0..L`, and the
//! cluster created by the `s`-th merge gets id `L + s`. Heights are Ward
//! distances in squared-Euclidean units, i.e. `2 n_a n_b / (n_a + n_b)`
//! times the squared centroid distance, so two singletons merge at their
//! squared Euclidean distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EmbeddedCorpus;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least 2 points to cluster, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("invalid dendrogram: {0}")]
    InvalidTree(String),
    #[error("unknown dendrogram node {0}")]
    UnknownNode(usize),
    #[error("node {0} is a leaf and cannot be split")]
    LeafSubtree(usize),
    #[error("k_max must be at least 2, got {0}")]
    InvalidKMax(usize),
}

/// One merge step: `left < right` are node ids, `height` the Ward distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

impl From<(usize, usize, f64)> for Merge {
    fn from((left, right, height): (usize, usize, f64)) -> Self {
        Self { left, right, height }
    }
}

impl From<Merge> for (usize, usize, f64) {
    fn from(m: Merge) -> Self {
        (m.left, m.right, m.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DendrogramNode {
    pub id: usize,
    pub height: f64,
    pub children: Option<[usize; 2]>,
    /// Sorted paragraph indices under this node.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDendrogram", into = "RawDendrogram")]
pub struct Dendrogram {
    leaves: usize,
    merges: Vec<Merge>,
    nodes: Vec<DendrogramNode>,
}

#[derive(Serialize, Deserialize)]
struct RawDendrogram {
    leaves: usize,
    merges: Vec<Merge>,
}

impl TryFrom<RawDendrogram> for Dendrogram {
    type Error = ClusterError;

    fn try_from(raw: RawDendrogram) -> Result<Self, Self::Error> {
        Dendrogram::from_merges(raw.leaves, raw.merges)
    }
}

impl From<Dendrogram> for RawDendrogram {
    fn from(d: Dendrogram) -> Self {
        RawDendrogram { leaves: d.leaves, merges: d.merges }
    }
}

impl Dendrogram {
    /// Rebuilds the node table from a merge list, checking that every node
    /// is consumed exactly once and that heights never decrease toward the root.
    pub fn from_merges(leaves: usize, merges: Vec<Merge>) -> Result<Self, ClusterError> {
        if leaves < 2 {
            return Err(ClusterError::TooFewPoints(leaves));
        }
        if merges.len() != leaves - 1 {
            return Err(ClusterError::InvalidTree(format!(
                "{leaves} leaves need {} merges, got {}",
                leaves - 1,
                merges.len()
            )));
        }
        let mut nodes: Vec<DendrogramNode> = (0..leaves)
            .map(|i| DendrogramNode { id: i, height: 0.0, children: None, members: vec![i] })
            .collect();
        let mut used = vec![false; 2 * leaves - 1];
        for (step, m) in merges.iter().enumerate() {
            let id = leaves + step;
            if m.left >= m.right || m.right >= id {
                return Err(ClusterError::InvalidTree(format!("merge {step} joins {} and {}", m.left, m.right)));
            }
            if used[m.left] || used[m.right] {
                return Err(ClusterError::InvalidTree(format!("merge {step} reuses a merged node")));
            }
            if !(m.height.is_finite() && m.height >= 0.0) {
                return Err(ClusterError::InvalidTree(format!("merge {step} has height {}", m.height)));
            }
            let (l, r) = (&nodes[m.left], &nodes[m.right]);
            if l.height > m.height || r.height > m.height {
                return Err(ClusterError::InvalidTree(format!("merge {step} is below its children")));
            }
            used[m.left] = true;
            used[m.right] = true;
            let mut members = [l.members.as_slice(), r.members.as_slice()].concat();
            members.sort_unstable();
            nodes.push(DendrogramNode { id, height: m.height, children: Some([m.left, m.right]), members });
        }
        Ok(Self { leaves, merges, nodes })
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn nodes(&self) -> &[DendrogramNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: usize) -> Result<&DendrogramNode, ClusterError> {
        self.nodes.get(id).ok_or(ClusterError::UnknownNode(id))
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id < self.leaves
    }

    pub fn members(&self, id: usize) -> &[usize] {
        &self.nodes[id].members
    }

    pub fn height(&self, id: usize) -> f64 {
        self.nodes[id].height
    }

    /// Internal node ids of the subtree rooted at `id`, in any order.
    fn internal_below(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(u) = stack.pop() {
            if let Some([a, b]) = self.nodes[u].children {
                out.push(u);
                stack.push(a);
                stack.push(b);
            }
        }
        out
    }
}

pub fn ward_cluster(corpus: &EmbeddedCorpus) -> Result<Dendrogram, ClusterError> {
    ward_linkage(&corpus.points())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ward linkage via the Lance-Williams recurrence. Each step merges the
/// closest active pair; among equal distances the lexicographically smallest
/// `(id, id)` pair wins.
pub fn ward_linkage(points: &[Vec<f64>]) -> Result<Dendrogram, ClusterError> {
    let n = points.len();
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    let dim = points[0].len();
    if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
        return Err(ClusterError::DimensionMismatch { index, expected: dim, found: p.len() });
    }

    // Distances are stored by slot; a merged cluster reuses its left slot.
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(&points[i], &points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut size = vec![1usize; n];
    // Active clusters as (id, slot), kept sorted by id.
    let mut active: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..active.len() {
            let sa = active[a].1;
            for b in a + 1..active.len() {
                let d = dist[sa * n + active[b].1];
                if d < best.2 {
                    best = (a, b, d);
                }
            }
        }
        let (a, b, height) = best;
        let (id_a, sa) = active[a];
        let (id_b, sb) = active[b];
        let (na, nb) = (size[sa] as f64, size[sb] as f64);
        for &(_, sk) in &active {
            if sk == sa || sk == sb {
                continue;
            }
            let nk = size[sk] as f64;
            let d = ((na + nk) * dist[sa * n + sk] + (nb + nk) * dist[sb * n + sk] - nk * height) / (na + nb + nk);
            dist[sa * n + sk] = d;
            dist[sk * n + sa] = d;
        }
        size[sa] += size[sb];
        merges.push(Merge { left: id_a, right: id_b, height });
        active.remove(b);
        active.remove(a);
        active.push((n + step, sa));
    }

    Dendrogram::from_merges(n, merges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutResult {
    pub cluster_roots: Vec<usize>,
    pub separation_score: f64,
}

/// Splits the subtree at `subtree_root` into `m` clusters, `2 <= m <= k_max`.
///
/// A horizontal cut into `m` clusters undoes the `m - 1` highest merges of the
/// subtree. Its score is the gap between the lowest undone merge and the
/// highest merge kept (zero when only leaves remain), divided by the subtree
/// root height. The largest score wins; ties go to the smaller `m`. Cluster
/// roots are ordered by their smallest member index.
pub fn adaptive_cut(tree: &Dendrogram, subtree_root: usize, k_max: usize) -> Result<CutResult, ClusterError> {
    if k_max < 2 {
        return Err(ClusterError::InvalidKMax(k_max));
    }
    let root = tree.node(subtree_root)?;
    if root.children.is_none() {
        return Err(ClusterError::LeafSubtree(subtree_root));
    }

    let mut internal = tree.internal_below(subtree_root);
    // Highest first; a later merge (larger id) ranks above an equal-height earlier one.
    internal.sort_by(|&a, &b| tree.height(b).total_cmp(&tree.height(a)).then(b.cmp(&a)));
    let heights: Vec<f64> = internal.iter().map(|&u| tree.height(u)).collect();
    let leaves = root.members.len();
    let top = root.height;

    let mut best_m = 2;
    let mut best_score = f64::NEG_INFINITY;
    for m in 2..=k_max.min(leaves) {
        let undone = heights[m - 2];
        let kept = heights.get(m - 1).copied().unwrap_or(0.0);
        let score = if top > 0.0 { (undone - kept) / top } else { 0.0 };
        if score > best_score {
            best_m = m;
            best_score = score;
        }
    }

    let split = &internal[..best_m - 1];
    let mut roots: Vec<usize> = split
        .iter()
        .flat_map(|&u| tree.nodes[u].children.expect("internal node"))
        .filter(|c| !split.contains(c))
        .collect();
    roots.sort_by_key(|&c| tree.members(c)[0]);
    debug_assert_eq!(roots.len(), best_m);
    Ok(CutResult { cluster_roots: roots, separation_score: best_score })
}
