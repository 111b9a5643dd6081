//! Temporal and population splits, and the popularity ablation filter.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Transaction;

/// Result of the analysis-date split. Transactions at exactly the analysis
/// date land in the performance window.
#[derive(Debug)]
pub struct DateSplit {
    pub observation: Vec<Transaction>,
    pub performance: Vec<Transaction>,
    /// Degenerate-partition warnings for the caller to surface.
    pub warnings: Vec<String>,
}

/// Partitions transactions by `t < analysis_date` vs `t >= analysis_date`,
/// keeping original record order on both sides.
pub fn split_by_analysis_date(transactions: Vec<Transaction>, analysis_date: i64) -> DateSplit {
    let total = transactions.len();
    let (performance, observation): (Vec<_>, Vec<_>) = transactions
        .into_iter()
        .partition(|tx| tx.timestamp >= analysis_date);

    let mut warnings = Vec::new();
    if observation.is_empty() && total > 0 {
        warnings.push(format!(
            "observation window is empty: every transaction is at or after {analysis_date}"
        ));
    }
    if performance.is_empty() && total > 0 {
        warnings.push(format!(
            "performance window is empty: every transaction is before {analysis_date}"
        ));
    }
    DateSplit {
        observation,
        performance,
        warnings,
    }
}

/// Splits users into disjoint train/validation sets, deterministic for a
/// given seed. The training side takes floor(train_fraction * n); the
/// remainder validates.
pub fn split_users(
    users: &BTreeSet<String>,
    train_fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if users.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 users to split, got {}",
            users.len()
        )));
    }
    let mut shuffled: Vec<&String> = users.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n_train = (train_fraction * users.len() as f64).floor() as usize;
    let train: BTreeSet<String> = shuffled[..n_train].iter().map(|s| s.to_string()).collect();
    let validation: BTreeSet<String> = shuffled[n_train..].iter().map(|s| s.to_string()).collect();
    Ok((train, validation))
}

/// Output of the popularity ablation: the surviving log plus the dropped
/// item set.
#[derive(Debug)]
pub struct PopularityFilter {
    pub kept: Vec<Transaction>,
    pub removed_items: BTreeSet<String>,
}

/// Removes every row of the top ceil(top_fraction * |I|) items ranked by
/// distinct-user interaction count (ties broken by item id). A fraction of
/// zero is the identity.
pub fn drop_popular_items(transactions: &[Transaction], top_fraction: f64) -> PopularityFilter {
    let mut users_per_item: HashMap<&str, HashSet<&str>> = HashMap::new();
    for tx in transactions {
        users_per_item
            .entry(tx.item_id.as_str())
            .or_default()
            .insert(tx.user_id.as_str());
    }
    let n_items = users_per_item.len();
    // Guard against float fuzz so e.g. 0.3 * 10 never ceils to 4.
    let n_drop = ((top_fraction * n_items as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_drop = n_drop.min(n_items);

    let mut ranked: Vec<(&str, usize)> = users_per_item
        .iter()
        .map(|(item, users)| (*item, users.len()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let removed_items: BTreeSet<String> = ranked[..n_drop]
        .iter()
        .map(|(item, _)| item.to_string())
        .collect();
    let kept = transactions
        .iter()
        .filter(|tx| !removed_items.contains(&tx.item_id))
        .cloned()
        .collect();
    PopularityFilter {
        kept,
        removed_items,
    }
}

/// Distinct users with at least one transaction in the given window.
pub fn distinct_users(transactions: &[Transaction]) -> BTreeSet<String> {
    transactions.iter().map(|tx| tx.user_id.clone()).collect()
}

/// Distinct-user interaction count per item, for popularity diagnostics.
pub fn item_user_counts(transactions: &[Transaction]) -> BTreeMap<String, usize> {
    let mut users_per_item: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
    for tx in transactions {
        users_per_item
            .entry(tx.item_id.as_str())
            .or_default()
            .insert(tx.user_id.as_str());
    }
    users_per_item
        .into_iter()
        .map(|(item, users)| (item.to_string(), users.len()))
        .collect()
}
