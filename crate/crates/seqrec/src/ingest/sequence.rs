//! Per-user, timestamp-ordered token sequences from the observation window.

use std::collections::BTreeMap;

use crate::ingest::{ItemVocabulary, Transaction, UNK_TOKEN};

/// A user's observation history as an ordered token list. Repeated purchases
/// keep their multiplicity; ordering is by timestamp with ties preserving
/// input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user_id: String,
    pub tokens: Vec<usize>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// True when every token is UNK: the user's whole history fell outside
    /// the vocabulary. Such users are scored but flagged downstream.
    pub fn is_unk_only(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|&t| t == UNK_TOKEN)
    }
}

/// Builds one sequence per user with at least one observation transaction.
/// Sequences longer than `max_seq_len` keep only the most recent tokens.
pub fn build_sequences(
    observation: &[Transaction],
    vocab: &ItemVocabulary,
    max_seq_len: usize,
) -> BTreeMap<String, UserSequence> {
    let mut per_user: BTreeMap<&str, Vec<(i64, usize)>> = BTreeMap::new();
    for tx in observation {
        per_user
            .entry(tx.user_id.as_str())
            .or_default()
            .push((tx.timestamp, vocab.token(&tx.item_id)));
    }

    per_user
        .into_iter()
        .map(|(user, mut events)| {
            // Stable sort: equal timestamps keep their input-file order.
            events.sort_by_key(|&(ts, _)| ts);
            let mut tokens: Vec<usize> = events.into_iter().map(|(_, tok)| tok).collect();
            if tokens.len() > max_seq_len {
                tokens.drain(..tokens.len() - max_seq_len);
            }
            (
                user.to_string(),
                UserSequence {
                    user_id: user.to_string(),
                    tokens,
                },
            )
        })
        .collect()
}
