//! Uplift-based ranking: per-item probabilities become top-K recommendation
//! lists by dividing out the population base rate, with business-rule
//! filtering and a popularity fallback for empty or all-UNK histories.
//!
//! Ranking stays outside model training by design: business filters never
//! touch learned parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{RecommendableItems, TargetVector};

/// Denominator floor for items no training user interacted with; without it
/// the uplift ratio is undefined.
pub const BASE_POPULARITY_FLOOR: f64 = 1e-6;

/// Per-item probability that a random training user interacts with the item
/// over the performance horizon.
#[derive(Debug, Clone)]
pub struct BasePopularity {
    p: Vec<f64>,
    pub n_train_users: usize,
}

impl BasePopularity {
    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, item_index: usize) -> f64 {
        self.p[item_index]
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// I' indices whose base popularity is above the floor, i.e. items some
    /// training user actually interacted with during the performance window.
    pub fn active_items(&self) -> Vec<usize> {
        self.p
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > BASE_POPULARITY_FLOOR)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Fraction of training users with y = 1 per item, floored for ratio safety.
pub fn estimate_base_popularity(
    targets: &BTreeMap<String, TargetVector>,
    train_users: &BTreeSet<String>,
    n_items: usize,
) -> Result<BasePopularity> {
    if train_users.is_empty() {
        return Err(Error::Invalid(
            "base popularity needs at least one training user".to_string(),
        ));
    }
    let mut counts = vec![0usize; n_items];
    let mut seen_users = 0usize;
    for user in train_users {
        let Some(target) = targets.get(user) else {
            continue;
        };
        seen_users += 1;
        for k in target.positives() {
            counts[k] += 1;
        }
    }
    if seen_users == 0 {
        return Err(Error::Invalid(
            "no training user has a target vector".to_string(),
        ));
    }
    let p = counts
        .into_iter()
        .map(|c| (c as f64 / seen_users as f64).max(BASE_POPULARITY_FLOOR))
        .collect();
    Ok(BasePopularity {
        p,
        n_train_users: seen_users,
    })
}

/// Elementwise uplift R = P_u / P(i): how many times more likely this user
/// is to interact with the item than a random user.
pub fn uplift(probabilities: &[f64], base: &BasePopularity) -> Vec<f64> {
    assert_eq!(
        probabilities.len(),
        base.len(),
        "uplift dimension mismatch"
    );
    probabilities
        .iter()
        .zip(base.values())
        .map(|(p, b)| p / b)
        .collect()
}

/// Business filter over I' indices.
#[derive(Debug, Clone)]
pub struct AllowedItems {
    mask: Vec<bool>,
    count: usize,
}

impl AllowedItems {
    pub fn all(n_items: usize) -> AllowedItems {
        AllowedItems {
            mask: vec![true; n_items],
            count: n_items,
        }
    }

    pub fn from_indices(n_items: usize, indices: &[usize]) -> AllowedItems {
        let mut mask = vec![false; n_items];
        for &k in indices {
            mask[k] = true;
        }
        let count = mask.iter().filter(|&&m| m).count();
        AllowedItems { mask, count }
    }

    /// Removes the given indices from the allowed set.
    pub fn exclude(&mut self, indices: impl IntoIterator<Item = usize>) {
        for k in indices {
            if self.mask[k] {
                self.mask[k] = false;
                self.count -= 1;
            }
        }
    }

    pub fn contains(&self, item_index: usize) -> bool {
        self.mask[item_index]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// One ranked list entry: I' index, uplift score, and raw probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RecEntry {
    pub item_index: usize,
    pub uplift: f64,
    pub probability: f64,
}

/// A user's recommendation list, strictly ordered by uplift descending with
/// ties broken by ascending item token.
#[derive(Debug, Clone)]
pub struct Recommendation {
    pub user_id: String,
    pub entries: Vec<RecEntry>,
    pub fallback: bool,
}

/// Ranks the allowed items by score descending (ties by token ascending) and
/// truncates to K. `scores` and `probabilities` are indexed by I'.
pub fn top_k(
    scores: &[f64],
    probabilities: &[f64],
    k: usize,
    allowed: &AllowedItems,
    items: &RecommendableItems,
) -> Result<Vec<RecEntry>> {
    if allowed.is_empty() {
        return Err(Error::Invalid(
            "allowed item set is empty, nothing can be recommended".to_string(),
        ));
    }
    assert_eq!(scores.len(), items.len(), "score vector width mismatch");
    let mut ranked: Vec<usize> = (0..scores.len()).filter(|&i| allowed.contains(i)).collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| items.token(a).cmp(&items.token(b)))
    });
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .map(|i| RecEntry {
            item_index: i,
            uplift: scores[i],
            probability: probabilities[i],
        })
        .collect())
}

/// Popularity-ordered default list for users the model cannot score
/// (empty or all-UNK histories). The probability column carries the base
/// popularity; uplift is 1 by definition for a user indistinguishable from
/// random.
pub fn fallback_ranking(
    base: &BasePopularity,
    k: usize,
    allowed: &AllowedItems,
    items: &RecommendableItems,
) -> Result<Vec<RecEntry>> {
    let ranked = top_k(base.values(), base.values(), k, allowed, items)?;
    Ok(ranked
        .into_iter()
        .map(|e| RecEntry {
            item_index: e.item_index,
            uplift: 1.0,
            probability: e.probability,
        })
        .collect())
}

/// Builds the final per-user recommendation, applying the uplift ranking to
/// scored users and the popularity fallback otherwise.
pub fn recommend_user(
    user_id: &str,
    probabilities: Option<&[f64]>,
    base: &BasePopularity,
    k: usize,
    allowed: &AllowedItems,
    items: &RecommendableItems,
) -> Result<Recommendation> {
    match probabilities {
        Some(probs) => {
            let scores = uplift(probs, base);
            let entries = top_k(&scores, probs, k, allowed, items)?;
            Ok(Recommendation {
                user_id: user_id.to_string(),
                entries,
                fallback: false,
            })
        }
        None => Ok(Recommendation {
            user_id: user_id.to_string(),
            entries: fallback_ranking(base, k, allowed, items)?,
            fallback: true,
        }),
    }
}

/// CSV export consumed by downstream campaign tooling:
/// `user_id,rank,item_id,uplift,probability,fallback`.
pub fn write_recommendations_csv(
    path: &Path,
    recommendations: &[Recommendation],
    items: &RecommendableItems,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(out, "user_id,rank,item_id,uplift,probability,fallback")
        .map_err(|e| Error::io(path, e))?;
    for rec in recommendations {
        for (rank, entry) in rec.entries.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{}",
                rec.user_id,
                rank + 1,
                items.item(entry.item_index),
                entry.uplift,
                entry.probability,
                u8::from(rec.fallback)
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}
