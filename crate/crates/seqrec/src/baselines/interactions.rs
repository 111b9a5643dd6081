//! Sparse user-by-item interaction matrix over token indices.

use std::collections::{BTreeMap, BTreeSet};

use crate::ingest::{ItemVocabulary, Transaction, RESERVED_TOKENS};

/// Sparse interaction matrix. Rows are users, columns are item tokens;
/// entries are interaction counts, or 1.0 in binary mode. Items outside the
/// vocabulary are skipped (they cannot be recommended).
#[derive(Debug, Clone)]
pub struct InteractionMatrix {
    rows: Vec<BTreeMap<usize, f64>>,
    user_index: BTreeMap<String, usize>,
    n_tokens: usize,
    binary: bool,
}

impl InteractionMatrix {
    /// Builds the matrix from observation transactions of the given users.
    pub fn build(
        observation: &[Transaction],
        users: &BTreeSet<String>,
        vocab: &ItemVocabulary,
        binary: bool,
    ) -> InteractionMatrix {
        let user_index: BTreeMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(idx, u)| (u.clone(), idx))
            .collect();
        let mut rows = vec![BTreeMap::new(); user_index.len()];
        for tx in observation {
            let (Some(&row), Some(token)) = (
                user_index.get(&tx.user_id),
                vocab.token_exact(&tx.item_id),
            ) else {
                continue;
            };
            let entry = rows[row].entry(token).or_insert(0.0);
            if binary {
                *entry = 1.0;
            } else {
                *entry += 1.0;
            }
        }
        InteractionMatrix {
            rows,
            user_index,
            n_tokens: vocab.len(),
            binary,
        }
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    /// Width of the token space (including reserved tokens, which never hold
    /// entries).
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn row(&self, user_idx: usize) -> &BTreeMap<usize, f64> {
        &self.rows[user_idx]
    }

    pub fn user_row(&self, user_id: &str) -> Option<&BTreeMap<usize, f64>> {
        self.user_index.get(user_id).map(|&idx| &self.rows[idx])
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_index.get(user_id).copied()
    }

    pub fn users(&self) -> impl Iterator<Item = (&str, usize)> {
        self.user_index.iter().map(|(u, &idx)| (u.as_str(), idx))
    }

    /// Column vector of an item as (user index, value) pairs.
    pub fn column(&self, token: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(u, row)| row.get(&token).map(|&v| (u, v)))
            .collect()
    }

    /// All observed (user, token, value) entries in deterministic order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (u, row) in self.rows.iter().enumerate() {
            for (&token, &v) in row {
                out.push((u, token, v));
            }
        }
        out
    }

    /// Tokens that appear in at least one row, ascending.
    pub fn active_tokens(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for row in &self.rows {
            set.extend(row.keys().copied());
        }
        set.into_iter().collect()
    }

    /// Builds the matrix from already-tokenized sequences, so every system
    /// trains on the identical observation representation. Reserved tokens
    /// (PAD/UNK) carry no entries.
    pub fn from_sequences<'a>(
        sequences: impl IntoIterator<Item = &'a crate::ingest::UserSequence>,
        users: &BTreeSet<String>,
        n_tokens: usize,
        binary: bool,
    ) -> InteractionMatrix {
        let user_index: BTreeMap<String, usize> = users
            .iter()
            .enumerate()
            .map(|(idx, u)| (u.clone(), idx))
            .collect();
        let mut rows = vec![BTreeMap::new(); user_index.len()];
        for seq in sequences {
            let Some(&row) = user_index.get(&seq.user_id) else {
                continue;
            };
            for &token in &seq.tokens {
                if token < RESERVED_TOKENS {
                    continue;
                }
                let entry = rows[row].entry(token).or_insert(0.0);
                if binary {
                    *entry = 1.0;
                } else {
                    *entry += 1.0;
                }
            }
        }
        InteractionMatrix {
            rows,
            user_index,
            n_tokens,
            binary,
        }
    }

    /// Builds a matrix directly from dense rows (tests and fixtures). Token
    /// column c of `dense` maps to token `c + RESERVED_TOKENS`.
    pub fn from_dense(dense: &[Vec<f64>], binary: bool) -> InteractionMatrix {
        let n_cols = dense.first().map_or(0, Vec::len);
        let user_index: BTreeMap<String, usize> = (0..dense.len())
            .map(|u| (format!("u{u:04}"), u))
            .collect();
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c + RESERVED_TOKENS, v))
                    .collect()
            })
            .collect();
        InteractionMatrix {
            rows,
            user_index,
            n_tokens: n_cols + RESERVED_TOKENS,
            binary,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_binary_modes() {
        let vocab = ItemVocabulary::from_items(vec!["a".into(), "b".into()]);
        let users: BTreeSet<String> = ["u1".to_string(), "u2".to_string()].into();
        let log = vec![
            Transaction::new("u1", "a", 1),
            Transaction::new("u1", "a", 2),
            Transaction::new("u1", "b", 3),
            Transaction::new("u2", "ghost", 4),
            Transaction::new("stranger", "a", 5),
        ];
        let counts = InteractionMatrix::build(&log, &users, &vocab, false);
        assert_eq!(counts.user_row("u1").unwrap()[&vocab.token("a")], 2.0);
        assert_eq!(counts.user_row("u2").unwrap().len(), 0);
        assert!(counts.user_row("stranger").is_none());

        let binary = InteractionMatrix::build(&log, &users, &vocab, true);
        assert_eq!(binary.user_row("u1").unwrap()[&vocab.token("a")], 1.0);
    }

    #[test]
    fn dense_round_trip() {
        let m = InteractionMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 3.0]], false);
        assert_eq!(m.column(RESERVED_TOKENS), vec![(0, 1.0)]);
        assert_eq!(m.column(RESERVED_TOKENS + 1), vec![(1, 3.0)]);
        assert_eq!(m.entries().len(), 2);
    }
}
