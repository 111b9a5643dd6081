//! Binary per-user targets over the recommendable item set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::ingest::ItemVocabulary;
use crate::ingest::Transaction;

/// The ordered recommendable set I'. Defaults to every vocabulary item in
/// token order; an explicit list can narrow it to model business constraints.
/// Index k in every target/probability/score vector refers to `items[k]`.
#[derive(Debug, Clone)]
pub struct RecommendableItems {
    items: Vec<String>,
    /// Token of each recommendable item, used for deterministic tie-breaks.
    tokens: Vec<usize>,
    index_of: HashMap<String, usize>,
}

impl RecommendableItems {
    /// All vocabulary items, ordered by token.
    pub fn from_vocabulary(vocab: &ItemVocabulary) -> RecommendableItems {
        let items: Vec<String> = vocab.items().to_vec();
        Self::build(items, vocab).expect("vocabulary items are always encodable")
    }

    /// An explicit subset; every entry must exist in the vocabulary.
    pub fn from_list(items: Vec<String>, vocab: &ItemVocabulary) -> Result<RecommendableItems> {
        Self::build(items, vocab)
    }

    fn build(items: Vec<String>, vocab: &ItemVocabulary) -> Result<RecommendableItems> {
        let mut tokens = Vec::with_capacity(items.len());
        let mut index_of = HashMap::with_capacity(items.len());
        let mut missing = Vec::new();
        for (k, item) in items.iter().enumerate() {
            match vocab.token_exact(item) {
                Some(tok) => tokens.push(tok),
                None => missing.push(item.clone()),
            }
            if index_of.insert(item.clone(), k).is_some() {
                return Err(Error::Invalid(format!(
                    "recommendable item list contains `{item}` twice"
                )));
            }
        }
        if !missing.is_empty() {
            return Err(Error::Invalid(format!(
                "recommendable items not in the vocabulary: {}",
                missing.join(", ")
            )));
        }
        Ok(RecommendableItems {
            items,
            tokens,
            index_of,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn item(&self, index: usize) -> &str {
        &self.items[index]
    }

    /// Token of the item at I' index `index`.
    pub fn token(&self, index: usize) -> usize {
        self.tokens[index]
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.index_of.get(item_id).copied()
    }
}

/// Binary indicator vector over I': did the user interact with each item
/// during the performance window?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetVector {
    pub user_id: String,
    pub y: Vec<u8>,
}

impl TargetVector {
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.y
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v == 1)
            .map(|(k, _)| k)
    }

    pub fn n_relevant(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }
}

/// Builds one target per user in `users` (the observation universe). Users
/// absent from the performance window get all-zero vectors; performance
/// interactions with items outside I' are ignored, as are performance-only
/// users.
pub fn build_targets(
    performance: &[Transaction],
    users: &BTreeSet<String>,
    items: &RecommendableItems,
) -> BTreeMap<String, TargetVector> {
    let mut targets: BTreeMap<String, TargetVector> = users
        .iter()
        .map(|u| {
            (
                u.clone(),
                TargetVector {
                    user_id: u.clone(),
                    y: vec![0; items.len()],
                },
            )
        })
        .collect();

    for tx in performance {
        if let (Some(target), Some(k)) = (targets.get_mut(&tx.user_id), items.index_of(&tx.item_id))
        {
            target.y[k] = 1;
        }
    }
    targets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items_of(ids: &[&str]) -> (ItemVocabulary, RecommendableItems) {
        let vocab = ItemVocabulary::from_items(ids.iter().map(|s| s.to_string()).collect());
        let items = RecommendableItems::from_vocabulary(&vocab);
        (vocab, items)
    }

    fn users(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn indicator_ignores_multiplicity() {
        let (_, items) = items_of(&["i1", "i2", "i3"]);
        let perf = vec![
            Transaction::new("u", "i3", 100),
            Transaction::new("u", "i3", 101),
        ];
        let targets = build_targets(&perf, &users(&["u"]), &items);
        assert_eq!(targets["u"].y, vec![0, 0, 1]);
    }

    #[test]
    fn absent_user_gets_all_zeros() {
        let (_, items) = items_of(&["i1", "i2", "i3"]);
        let targets = build_targets(&[], &users(&["u"]), &items);
        assert_eq!(targets["u"].y, vec![0, 0, 0]);
    }

    #[test]
    fn items_outside_recommendable_set_are_ignored() {
        let vocab = ItemVocabulary::from_items(vec!["i1".into(), "i2".into(), "other".into()]);
        let items =
            RecommendableItems::from_list(vec!["i1".into(), "i2".into()], &vocab).unwrap();
        let perf = vec![Transaction::new("u", "other", 100)];
        let targets = build_targets(&perf, &users(&["u"]), &items);
        assert_eq!(targets["u"].y, vec![0, 0]);
    }

    #[test]
    fn performance_only_users_are_excluded() {
        let (_, items) = items_of(&["i1"]);
        let perf = vec![Transaction::new("stranger", "i1", 100)];
        let targets = build_targets(&perf, &users(&["u"]), &items);
        assert!(!targets.contains_key("stranger"));
        assert_eq!(targets.len(), 1);
    }

    #[test]
    fn recommendable_list_must_be_in_vocabulary() {
        let vocab = ItemVocabulary::from_items(vec!["i1".into()]);
        let err = RecommendableItems::from_list(vec!["i1".into(), "ghost".into()], &vocab);
        assert!(err.is_err());
    }

    /// Brute-force recount oracle: rebuild every vector by scanning the whole
    /// log per (user, item) pair.
    #[test]
    fn recount_oracle_small_log() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let item_ids: Vec<String> = (0..12).map(|i| format!("i{i}")).collect();
        let user_ids: Vec<String> = (0..30).map(|u| format!("u{u}")).collect();
        let log: Vec<Transaction> = (0..1000)
            .map(|t| {
                Transaction::new(
                    user_ids[rng.gen_range(0..user_ids.len())].clone(),
                    item_ids[rng.gen_range(0..item_ids.len())].clone(),
                    t,
                )
            })
            .collect();
        let vocab = ItemVocabulary::from_items(item_ids.clone());
        // Restrict I' to a strict subset so out-of-I' rows exercise the filter.
        let subset: Vec<String> = item_ids[..8].to_vec();
        let items = RecommendableItems::from_list(subset.clone(), &vocab).unwrap();
        let universe = users(&user_ids.iter().map(String::as_str).collect::<Vec<_>>());

        let targets = build_targets(&log, &universe, &items);
        for u in &user_ids {
            for (k, item) in subset.iter().enumerate() {
                let expected = log
                    .iter()
                    .any(|tx| &tx.user_id == u && &tx.item_id == item);
                assert_eq!(targets[u].y[k] == 1, expected, "user {u} item {item}");
            }
        }
    }
}
