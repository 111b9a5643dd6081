//! Comparison systems: item-item collaborative filtering, latent-factor
//! matrix factorization, and the n-gram next-token model, behind one scoring
//! adapter so the evaluation harness treats every system identically.

mod cf;
mod interactions;
mod mf;
mod ngram;

pub use cf::{build_neighbors, cf_predict, item_similarity, Estimate, NeighborModel};
pub use interactions::InteractionMatrix;
pub use mf::{mf_predict, mf_train, observed_mse, LatentFactors};
pub use ngram::{NGramTable, NGramTableFile};

use std::collections::BTreeMap;

use crate::ingest::{RecommendableItems, UserSequence};

/// Score floor for items (or whole users) without evidence. Keeping it at
/// zero puts no-evidence items at the bottom of every non-negative scale.
pub const NO_EVIDENCE_FLOOR: f64 = 0.0;

/// A trained collaborative-filtering system: item neighborhoods plus the
/// per-user observation profiles it scores against.
#[derive(Debug, Clone)]
pub struct CfModel {
    pub neighbors: NeighborModel,
    /// Observation profiles for every scoreable user (train and validation).
    pub profiles: InteractionMatrix,
}

impl CfModel {
    /// Per-item scores over I' for one user; `None` when the user has no
    /// observation profile.
    pub fn score_user(&self, user_id: &str, items: &RecommendableItems) -> Option<Vec<f64>> {
        let profile = self.profiles.user_row(user_id)?;
        let scores = items
            .tokens()
            .iter()
            .map(|&token| {
                let est = cf_predict(&self.neighbors, profile, token);
                if est.evidence {
                    est.value
                } else {
                    NO_EVIDENCE_FLOOR
                }
            })
            .collect();
        Some(scores)
    }
}

/// A trained matrix-factorization system.
#[derive(Debug, Clone)]
pub struct MfModel {
    pub factors: LatentFactors,
}

impl MfModel {
    /// Scores equal `mf_predict` per item. Users outside the trained factor
    /// rows are cold starts: every item sits at the no-evidence floor.
    pub fn score_user(&self, user_id: &str, items: &RecommendableItems) -> Vec<f64> {
        let user = self.factors.user_index(user_id);
        items
            .tokens()
            .iter()
            .map(|&token| {
                let est = mf_predict(&self.factors, user, token);
                if est.evidence {
                    est.value
                } else {
                    NO_EVIDENCE_FLOOR
                }
            })
            .collect()
    }
}

/// A trained n-gram system.
#[derive(Debug, Clone)]
pub struct NgramModel {
    pub table: NGramTable,
}

impl NgramModel {
    /// Scores equal the next-token probabilities at the user's final
    /// context, restricted to I'.
    pub fn score_user(&self, sequence: &UserSequence, items: &RecommendableItems) -> Vec<f64> {
        let dist = self.table.predict(&sequence.tokens);
        items.tokens().iter().map(|&token| dist[token]).collect()
    }
}

/// Uniform adapter over the baseline systems for harness code that scores a
/// set of users.
pub enum BaselineSystem {
    Cf(CfModel),
    Mf(MfModel),
    Ngram(NgramModel),
}

impl BaselineSystem {
    /// Scores one user over I'. Users without any usable history get the
    /// floor everywhere rather than an error, keeping scoring total.
    pub fn score_user(
        &self,
        user_id: &str,
        sequences: &BTreeMap<String, UserSequence>,
        items: &RecommendableItems,
    ) -> Vec<f64> {
        match self {
            BaselineSystem::Cf(m) => m
                .score_user(user_id, items)
                .unwrap_or_else(|| vec![NO_EVIDENCE_FLOOR; items.len()]),
            BaselineSystem::Mf(m) => m.score_user(user_id, items),
            BaselineSystem::Ngram(m) => match sequences.get(user_id) {
                Some(seq) if !seq.is_empty() => m.score_user(seq, items),
                _ => vec![NO_EVIDENCE_FLOOR; items.len()],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ItemVocabulary, Transaction};
    use std::collections::BTreeSet;

    fn fixture() -> (
        ItemVocabulary,
        RecommendableItems,
        BTreeMap<String, UserSequence>,
        InteractionMatrix,
    ) {
        let vocab = ItemVocabulary::from_items(vec!["a".into(), "b".into(), "c".into()]);
        let items = RecommendableItems::from_vocabulary(&vocab);
        let users: BTreeSet<String> = ["u1".to_string(), "u2".to_string()].into();
        let log = vec![
            Transaction::new("u1", "a", 1),
            Transaction::new("u1", "b", 2),
            Transaction::new("u2", "a", 3),
        ];
        let matrix = InteractionMatrix::build(&log, &users, &vocab, false);
        let sequences: BTreeMap<String, UserSequence> =
            crate::ingest::build_sequences(&log, &vocab, 64);
        (vocab, items, sequences, matrix)
    }

    #[test]
    fn cf_scores_a_single_interaction_user_without_error() {
        let (_, items, _, matrix) = fixture();
        let model = CfModel {
            neighbors: build_neighbors(&matrix, 50),
            profiles: matrix,
        };
        let scores = model.score_user("u2", &items).unwrap();
        assert_eq!(scores.len(), items.len());
        assert!(scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn mf_adapter_is_transparent() {
        let (_, items, _, matrix) = fixture();
        let factors = mf_train(&matrix, 2, 0.01, 0.05, 5, 1).unwrap();
        let model = MfModel { factors };
        let scores = model.score_user("u1", &items);
        let user = model.factors.user_index("u1");
        for (k, &token) in items.tokens().iter().enumerate() {
            assert_eq!(scores[k], mf_predict(&model.factors, user, token).value);
        }
        // Unknown user: all floor.
        let cold = model.score_user("nobody", &items);
        assert!(cold.iter().all(|&s| s == NO_EVIDENCE_FLOOR));
    }

    #[test]
    fn ngram_adapter_matches_final_context_prediction() {
        let (_, items, sequences, _) = fixture();
        let table = NGramTable::train(sequences.values(), 2, 0.1, 5).unwrap();
        let model = NgramModel { table };
        let scores = model.score_user(&sequences["u1"], &items);
        let dist = model.table.predict(&sequences["u1"].tokens);
        for (k, &token) in items.tokens().iter().enumerate() {
            assert_eq!(scores[k], dist[token]);
        }
    }
}
