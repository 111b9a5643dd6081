//! Item-item collaborative filtering: cosine similarity between item
//! columns and similarity-weighted averaging of the user's own entries over
//! the most similar neighbors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::baselines::InteractionMatrix;

/// Cosine similarity of two item columns; 0.0 when either column is empty.
pub fn item_similarity(matrix: &InteractionMatrix, item_i: usize, item_j: usize) -> f64 {
    let col_i: BTreeMap<usize, f64> = matrix.column(item_i).into_iter().collect();
    let col_j: BTreeMap<usize, f64> = matrix.column(item_j).into_iter().collect();
    let norm_i = col_i.values().map(|v| v * v).sum::<f64>().sqrt();
    let norm_j = col_j.values().map(|v| v * v).sum::<f64>().sqrt();
    if norm_i == 0.0 || norm_j == 0.0 {
        return 0.0;
    }
    let dot: f64 = col_i
        .iter()
        .filter_map(|(u, vi)| col_j.get(u).map(|vj| vi * vj))
        .sum();
    dot / (norm_i * norm_j)
}

/// Precomputed per-item neighborhoods: for each token, the `j_size` most
/// similar other items with positive similarity, ordered by similarity
/// descending (token ascending on ties). The item itself is excluded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborModel {
    pub j_size: usize,
    pub binary: bool,
    /// `neighbors[token]` lists (token, similarity) pairs.
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

/// Builds all neighborhoods one item at a time: walk the item's user column
/// and accumulate co-occurrence dot products against each user's row. Memory
/// stays bounded by the item count instead of the pair count.
pub fn build_neighbors(matrix: &InteractionMatrix, j_size: usize) -> NeighborModel {
    let n = matrix.n_tokens();
    let mut sq_norms = vec![0.0f64; n];
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for u in 0..matrix.n_users() {
        for (&token, &v) in matrix.row(u) {
            sq_norms[token] += v * v;
            columns[token].push((u, v));
        }
    }

    let mut neighbor_lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut dots: HashMap<usize, f64> = HashMap::new();
    for token in 0..n {
        dots.clear();
        for &(u, value) in &columns[token] {
            for (&other, &other_value) in matrix.row(u) {
                if other != token {
                    *dots.entry(other).or_insert(0.0) += value * other_value;
                }
            }
        }
        let mut list: Vec<(usize, f64)> = dots
            .iter()
            .filter(|&(_, &dot)| dot > 0.0)
            .map(|(&other, &dot)| {
                (other, dot / (sq_norms[token].sqrt() * sq_norms[other].sqrt()))
            })
            .collect();
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        list.truncate(j_size);
        neighbor_lists[token] = list;
    }
    NeighborModel {
        j_size,
        binary: matrix.is_binary(),
        neighbors: neighbor_lists,
    }
}

/// A preference estimate plus whether any evidence backed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub evidence: bool,
}

impl Estimate {
    pub const NO_EVIDENCE: Estimate = Estimate {
        value: 0.0,
        evidence: false,
    };
}

/// Similarity-weighted average of the user's entries over the neighborhood
/// of `item`. Entries the user lacks count as zero, keeping the estimate a
/// convex combination of the user's (implicit) ratings. An empty positive
/// neighborhood yields the no-evidence marker.
pub fn cf_predict(
    model: &NeighborModel,
    profile: &BTreeMap<usize, f64>,
    item: usize,
) -> Estimate {
    let Some(neighbors) = model.neighbors.get(item) else {
        return Estimate::NO_EVIDENCE;
    };
    let mut weighted = 0.0;
    let mut weight_sum = 0.0;
    for &(j, sim) in neighbors {
        weighted += sim * profile.get(&j).copied().unwrap_or(0.0);
        weight_sum += sim;
    }
    if weight_sum == 0.0 {
        return Estimate::NO_EVIDENCE;
    }
    Estimate {
        value: weighted / weight_sum,
        evidence: true,
    }
}
