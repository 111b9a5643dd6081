//! Learned item dictionary: a bijection between raw item ids and dense
//! token indices, with reserved PAD and UNK tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv64;
use crate::ingest::Transaction;

pub const PAD_TOKEN: usize = 0;
pub const UNK_TOKEN: usize = 1;
pub const RESERVED_TOKENS: usize = 2;

/// Item-id <-> token bijection. Tokens are contiguous: 0 = PAD, 1 = UNK,
/// and items occupy `2..len()` ordered by descending observation frequency
/// (ties broken by item id).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemVocabulary {
    /// Item ids in token order; `items[k]` owns token `k + RESERVED_TOKENS`.
    items: Vec<String>,
    #[serde(skip)]
    token_of: HashMap<String, usize>,
}

impl ItemVocabulary {
    /// Learns the dictionary from observation-window transactions. Items with
    /// fewer than `min_count` interactions are left out and map to UNK at
    /// encode time.
    pub fn build(observation: &[Transaction], min_count: usize) -> Result<ItemVocabulary> {
        if observation.is_empty() {
            return Err(Error::Invalid(
                "cannot build a vocabulary from an empty observation window".to_string(),
            ));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tx in observation {
            *counts.entry(tx.item_id.as_str()).or_insert(0) += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let items = ranked.into_iter().map(|(item, _)| item.to_string()).collect();
        Ok(Self::from_items(items))
    }

    /// Rebuilds from a persisted token-ordered item list.
    pub fn from_items(items: Vec<String>) -> ItemVocabulary {
        let token_of = items
            .iter()
            .enumerate()
            .map(|(k, item)| (item.clone(), k + RESERVED_TOKENS))
            .collect();
        ItemVocabulary { items, token_of }
    }

    /// Total token count including PAD and UNK.
    pub fn len(&self) -> usize {
        self.items.len() + RESERVED_TOKENS
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of real (non-reserved) items.
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Encodes an item id; unknown items map to UNK.
    pub fn token(&self, item_id: &str) -> usize {
        self.token_of.get(item_id).copied().unwrap_or(UNK_TOKEN)
    }

    /// Exact token if the item is in the dictionary.
    pub fn token_exact(&self, item_id: &str) -> Option<usize> {
        self.token_of.get(item_id).copied()
    }

    /// Inverse map for non-reserved tokens.
    pub fn item_of(&self, token: usize) -> Option<&str> {
        if token < RESERVED_TOKENS {
            return None;
        }
        self.items.get(token - RESERVED_TOKENS).map(String::as_str)
    }

    /// Item ids in token order.
    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Stable fingerprint of the dictionary contents; checkpoints carry it so
    /// a model can refuse to run against a different vocabulary.
    pub fn hash_hex(&self) -> String {
        let mut h = Fnv64::new();
        h.update_field(&(self.items.len() as u64).to_le_bytes());
        for item in &self.items {
            h.update_field(item.as_bytes());
        }
        h.finish_hex()
    }
}

// serde skips `token_of`; restore it after deserializing.
impl From<Vec<String>> for ItemVocabulary {
    fn from(items: Vec<String>) -> Self {
        ItemVocabulary::from_items(items)
    }
}
