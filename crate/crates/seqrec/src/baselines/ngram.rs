//! N-gram next-token model with additive smoothing and shorter-history
//! backoff.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::UserSequence;

/// Counts for one context: total observations and per-next-token counts.
#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<usize, u64>,
}

/// Maximum-likelihood next-token table of order `n` with additive smoothing
/// `alpha`. Orders 1..=n are all counted so shorter histories can back off.
#[derive(Debug, Clone)]
pub struct NGramTable {
    pub n: usize,
    pub alpha: f64,
    pub vocab_size: usize,
    /// `counts[len]` maps contexts of that length to their counts.
    counts: Vec<HashMap<Vec<usize>, ContextCounts>>,
}

impl NGramTable {
    /// Counts every context of length 0..n over the given sequences.
    pub fn train<'a>(
        sequences: impl IntoIterator<Item = &'a UserSequence>,
        n: usize,
        alpha: f64,
        vocab_size: usize,
    ) -> Result<NGramTable> {
        if n < 2 {
            return Err(Error::Invalid(format!("n-gram order must be >= 2, got {n}")));
        }
        if alpha < 0.0 {
            return Err(Error::Invalid(format!(
                "smoothing constant must be >= 0, got {alpha}"
            )));
        }
        let mut counts: Vec<HashMap<Vec<usize>, ContextCounts>> =
            (0..n).map(|_| HashMap::new()).collect();
        for seq in sequences {
            let tokens = &seq.tokens;
            for pos in 0..tokens.len() {
                let next = tokens[pos];
                for ctx_len in 0..n.min(pos + 1) {
                    let context = tokens[pos - ctx_len..pos].to_vec();
                    let slot = counts[ctx_len].entry(context).or_default();
                    slot.total += 1;
                    *slot.next.entry(next).or_insert(0) += 1;
                }
            }
        }
        Ok(NGramTable {
            n,
            alpha,
            vocab_size,
            counts,
        })
    }

    /// Next-token distribution over the full token space given a user
    /// history. Uses the last n-1 tokens; shorter histories back off to the
    /// matching lower order, and a zero-count context at alpha = 0 keeps
    /// backing off (uniform if even the unigrams are empty).
    pub fn predict(&self, history: &[usize]) -> Vec<f64> {
        let max_ctx = (self.n - 1).min(history.len());
        for ctx_len in (0..=max_ctx).rev() {
            let context = &history[history.len() - ctx_len..];
            let Some(slot) = self.counts[ctx_len].get(context) else {
                if self.alpha > 0.0 {
                    // Smoothing floor: the formula itself covers unseen
                    // contexts, no backoff needed.
                    return self.smoothed(&ContextCounts::default());
                }
                continue;
            };
            if slot.total == 0 && self.alpha == 0.0 {
                continue;
            }
            return self.smoothed(slot);
        }
        vec![1.0 / self.vocab_size as f64; self.vocab_size]
    }

    fn smoothed(&self, slot: &ContextCounts) -> Vec<f64> {
        let denom = slot.total as f64 + self.alpha * self.vocab_size as f64;
        if denom == 0.0 {
            return vec![1.0 / self.vocab_size as f64; self.vocab_size];
        }
        let mut probs = vec![self.alpha / denom; self.vocab_size];
        for (&token, &count) in &slot.next {
            probs[token] = (count as f64 + self.alpha) / denom;
        }
        probs
    }

    /// Raw count of `next` after `context`, for test oracles.
    pub fn count(&self, context: &[usize], next: usize) -> u64 {
        self.counts
            .get(context.len())
            .and_then(|m| m.get(context))
            .and_then(|slot| slot.next.get(&next).copied())
            .unwrap_or(0)
    }

    /// Serializable snapshot with deterministic ordering.
    pub fn to_file(&self) -> NGramTableFile {
        let orders = self
            .counts
            .iter()
            .map(|map| {
                let mut contexts: Vec<ContextEntry> = map
                    .iter()
                    .map(|(ctx, slot)| {
                        let mut next: Vec<(usize, u64)> =
                            slot.next.iter().map(|(&t, &c)| (t, c)).collect();
                        next.sort_unstable();
                        ContextEntry {
                            context: ctx.clone(),
                            next,
                        }
                    })
                    .collect();
                contexts.sort_by(|a, b| a.context.cmp(&b.context));
                contexts
            })
            .collect();
        NGramTableFile {
            n: self.n,
            alpha: self.alpha,
            vocab_size: self.vocab_size,
            orders,
        }
    }

    pub fn from_file(file: NGramTableFile) -> NGramTable {
        let counts = file
            .orders
            .into_iter()
            .map(|contexts| {
                contexts
                    .into_iter()
                    .map(|entry| {
                        let total = entry.next.iter().map(|&(_, c)| c).sum();
                        let next = entry.next.into_iter().collect();
                        (entry.context, ContextCounts { total, next })
                    })
                    .collect()
            })
            .collect();
        NGramTable {
            n: file.n,
            alpha: file.alpha,
            vocab_size: file.vocab_size,
            counts,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextEntry {
    pub context: Vec<usize>,
    pub next: Vec<(usize, u64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NGramTableFile {
    pub n: usize,
    pub alpha: f64,
    pub vocab_size: usize,
    pub orders: Vec<Vec<ContextEntry>>,
}
