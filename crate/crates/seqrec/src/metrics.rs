//! Offline ranking evaluation: discounted cumulative gain, NDCG, and mean
//! average precision at K, applied uniformly to every system over identical
//! validation users.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{RecommendableItems, TargetVector};
use crate::ranking::{top_k, AllowedItems};

/// DCG over the first `p` positions: sum of relevance / log2(rank + 1) with
/// ranks starting at 1.
pub fn dcg(relevances: &[u8], p: usize) -> f64 {
    assert!(p <= relevances.len(), "dcg cut {p} exceeds list length");
    relevances[..p]
        .iter()
        .enumerate()
        .map(|(idx, &rel)| f64::from(rel) / ((idx + 2) as f64).log2())
        .sum()
}

/// NDCG at `p`: realized DCG over the ideal DCG with every relevant item
/// packed at the top (capped at p). Undefined (None) for users without a
/// single relevant item; callers skip and count them.
pub fn ndcg(ranked_relevances: &[u8], total_relevant: usize, p: usize) -> Option<f64> {
    if total_relevant == 0 {
        return None;
    }
    let cut = p.min(ranked_relevances.len());
    let realized = dcg(ranked_relevances, cut);
    let ideal_ones = total_relevant.min(p);
    let ideal: f64 = (0..ideal_ones).map(|idx| 1.0 / ((idx + 2) as f64).log2()).sum();
    Some(realized / ideal)
}

/// Which denominator AP@K uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApNormalization {
    /// Number of relevant items inside the top K (the formula as written).
    TopK,
    /// min(total relevant, K), the variant common elsewhere in the
    /// literature.
    MinTotalK,
}

/// Average precision at K over one ranked list: precision at each relevant
/// rank, normalized per `norm`. Users with no relevant item in the top K
/// (or none at all) score 0.
pub fn ap_at_k(
    ranked_relevances: &[u8],
    total_relevant: usize,
    k: usize,
    norm: ApNormalization,
) -> f64 {
    let cut = k.min(ranked_relevances.len());
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (idx, &rel) in ranked_relevances[..cut].iter().enumerate() {
        if rel == 1 {
            hits += 1;
            precision_sum += hits as f64 / (idx + 1) as f64;
        }
    }
    let denominator = match norm {
        ApNormalization::TopK => hits,
        ApNormalization::MinTotalK => total_relevant.min(k),
    };
    if denominator == 0 {
        return 0.0;
    }
    precision_sum / denominator as f64
}

/// Scores one system produced for a set of users, over I'.
pub struct SystemScores {
    pub name: String,
    pub scores: BTreeMap<String, Vec<f64>>,
    /// Users whose entire history was UNK; scored but reported.
    pub unk_only_users: usize,
}

/// One row of the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub system: String,
    /// MAP at each requested K, in the same order as the request.
    pub map_at: Vec<(usize, f64)>,
    pub ndcg: f64,
    pub evaluated_users: usize,
    /// Users with zero relevant items: skipped for NDCG, counted as AP = 0
    /// for MAP.
    pub zero_relevant_users: usize,
    pub unk_only_users: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub k_list: Vec<usize>,
    pub ndcg_p: usize,
    pub rows: Vec<MetricRow>,
}

/// Evaluates every system over the same users and judgments. A user scored
/// by one system but not another makes the comparison unfair and is fatal.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_systems(
    systems: &[SystemScores],
    judgments: &BTreeMap<String, TargetVector>,
    k_list: &[usize],
    ndcg_p: usize,
    allowed: &AllowedItems,
    items: &RecommendableItems,
    norm: ApNormalization,
) -> Result<MetricReport> {
    if systems.is_empty() {
        return Err(Error::Invalid("no systems to evaluate".to_string()));
    }
    let users: Vec<&String> = systems[0].scores.keys().collect();
    for system in &systems[1..] {
        if system.scores.len() != users.len()
            || !system.scores.keys().zip(&users).all(|(a, &b)| a == b)
        {
            return Err(Error::Invalid(format!(
                "systems `{}` and `{}` scored different user sets; comparison would be unfair",
                systems[0].name, system.name
            )));
        }
    }
    for user in &users {
        if !judgments.contains_key(*user) {
            return Err(Error::Invalid(format!(
                "user {user} was scored but has no judgment vector"
            )));
        }
    }

    let depth = ndcg_p.max(k_list.iter().copied().max().unwrap_or(0));
    let mut rows = Vec::with_capacity(systems.len());
    for system in systems {
        // Per-user metric tuples, computed in parallel but reduced in user
        // order so sums are deterministic.
        let per_user: Vec<(Vec<f64>, Option<f64>, usize)> = users
            .par_iter()
            .map(|user| {
                let scores = &system.scores[*user];
                let judgment = &judgments[*user];
                let ranked = top_k(scores, scores, depth, allowed, items)
                    .expect("allowed set validated by caller");
                let relevances: Vec<u8> = ranked
                    .iter()
                    .map(|e| judgment.y[e.item_index])
                    .collect();
                let total_relevant = judgment
                    .y
                    .iter()
                    .enumerate()
                    .filter(|&(k, &v)| v == 1 && allowed.contains(k))
                    .count();
                let aps: Vec<f64> = k_list
                    .iter()
                    .map(|&k| ap_at_k(&relevances, total_relevant, k, norm))
                    .collect();
                let user_ndcg = ndcg(&relevances, total_relevant, ndcg_p);
                (aps, user_ndcg, total_relevant)
            })
            .collect();

        let evaluated_users = per_user.len();
        let zero_relevant_users = per_user.iter().filter(|(_, _, t)| *t == 0).count();
        let mut map_at = Vec::with_capacity(k_list.len());
        for (pos, &k) in k_list.iter().enumerate() {
            let sum: f64 = per_user.iter().map(|(aps, _, _)| aps[pos]).sum();
            map_at.push((k, sum / evaluated_users.max(1) as f64));
        }
        let ndcg_values: Vec<f64> = per_user.iter().filter_map(|(_, n, _)| *n).collect();
        let ndcg_mean = if ndcg_values.is_empty() {
            0.0
        } else {
            ndcg_values.iter().sum::<f64>() / ndcg_values.len() as f64
        };
        rows.push(MetricRow {
            system: system.name.clone(),
            map_at,
            ndcg: ndcg_mean,
            evaluated_users,
            zero_relevant_users,
            unk_only_users: system.unk_only_users,
        });
    }
    Ok(MetricReport {
        k_list: k_list.to_vec(),
        ndcg_p,
        rows,
    })
}

impl MetricReport {
    pub fn row(&self, system: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    /// CSV layout: one row per system with MAP@K columns, NDCG, and user
    /// counts.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let map_headers: Vec<String> =
            self.k_list.iter().map(|k| format!("map@{k}")).collect();
        writeln!(
            out,
            "system,{},ndcg@{},evaluated_users,zero_relevant_users,unk_only_users",
            map_headers.join(","),
            self.ndcg_p
        )
        .map_err(|e| Error::io(path, e))?;
        for row in &self.rows {
            let maps: Vec<String> = row
                .map_at
                .iter()
                .map(|(_, v)| format!("{v:.6}"))
                .collect();
            writeln!(
                out,
                "{},{},{:.6},{},{},{}",
                row.system,
                maps.join(","),
                row.ndcg,
                row.evaluated_users,
                row.zero_relevant_users,
                row.unk_only_users
            )
            .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ItemVocabulary;

    fn items_of(n: usize) -> RecommendableItems {
        let vocab =
            ItemVocabulary::from_items((0..n).map(|i| format!("item{i}")).collect());
        RecommendableItems::from_vocabulary(&vocab)
    }

    #[test]
    fn dcg_hand_values() {
        assert!((dcg(&[1, 0, 1], 3) - 1.5).abs() < 1e-12);
        assert_eq!(dcg(&[0, 0, 0], 3), 0.0);
        assert_eq!(dcg(&[1], 1), 1.0);
    }

    #[test]
    fn ndcg_perfect_ranking_is_one() {
        assert_eq!(ndcg(&[1, 1, 0], 2, 3), Some(1.0));
    }

    #[test]
    fn ndcg_hand_value() {
        // Realized [1,0,1] with 2 relevant at p=3: 1.5 / (1 + 1/log2(3)).
        let expected = 1.5 / (1.0 + 1.0 / 3f64.log2());
        let got = ndcg(&[1, 0, 1], 2, 3).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9197207).abs() < 1e-6);
    }

    #[test]
    fn relevant_item_below_cut_contributes_nothing() {
        let ndcg_without = ndcg(&[1, 0, 0, 1], 2, 3).unwrap();
        let ndcg_with_only_top = ndcg(&[1, 0, 0, 0], 2, 3).unwrap();
        assert_eq!(ndcg_without, ndcg_with_only_top);
    }

    #[test]
    fn ndcg_is_undefined_without_relevant_items() {
        assert_eq!(ndcg(&[0, 0], 0, 2), None);
    }

    #[test]
    fn ap_hand_value() {
        // Relevant at ranks 1 and 3, K = 3: (1/1 + 2/3) / 2.
        let ap = ap_at_k(&[1, 0, 1], 2, 3, ApNormalization::TopK);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_no_relevant_in_top_k_is_zero() {
        assert_eq!(ap_at_k(&[0, 0, 0], 5, 3, ApNormalization::TopK), 0.0);
    }

    #[test]
    fn ap_all_relevant_is_one() {
        assert_eq!(ap_at_k(&[1, 1, 1], 3, 3, ApNormalization::TopK), 1.0);
    }

    #[test]
    fn ap_alternate_normalization() {
        // One relevant found in the top 3 of 2 total: TopK divides by 1,
        // MinTotalK by min(2, 3) = 2.
        let top_k_norm = ap_at_k(&[1, 0, 0], 2, 3, ApNormalization::TopK);
        let min_norm = ap_at_k(&[1, 0, 0], 2, 3, ApNormalization::MinTotalK);
        assert_eq!(top_k_norm, 1.0);
        assert_eq!(min_norm, 0.5);
    }

    #[test]
    fn swapping_a_relevant_item_upward_never_hurts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let n = rng.gen_range(2..8);
            let mut rel: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
            let total = rel.iter().filter(|&&r| r == 1).count();
            if total == 0 {
                continue;
            }
            // Pick a relevant item and a non-relevant item above it.
            let Some(rel_pos) = (0..n).rev().find(|&i| rel[i] == 1) else {
                continue;
            };
            let Some(irrel_pos) = (0..rel_pos).find(|&i| rel[i] == 0) else {
                continue;
            };
            let before_ndcg = ndcg(&rel, total, n).unwrap();
            let before_ap = ap_at_k(&rel, total, n, ApNormalization::MinTotalK);
            rel.swap(rel_pos, irrel_pos);
            let after_ndcg = ndcg(&rel, total, n).unwrap();
            let after_ap = ap_at_k(&rel, total, n, ApNormalization::MinTotalK);
            assert!(after_ndcg >= before_ndcg - 1e-12);
            assert!(after_ap >= before_ap - 1e-12);
        }
    }

    fn system_from(name: &str, scores: Vec<(&str, Vec<f64>)>) -> SystemScores {
        SystemScores {
            name: name.to_string(),
            scores: scores
                .into_iter()
                .map(|(u, s)| (u.to_string(), s))
                .collect(),
            unk_only_users: 0,
        }
    }

    fn judgments_from(rows: Vec<(&str, Vec<u8>)>) -> BTreeMap<String, TargetVector> {
        rows.into_iter()
            .map(|(u, y)| {
                (
                    u.to_string(),
                    TargetVector {
                        user_id: u.to_string(),
                        y,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn oracle_system_scores_perfect_ndcg() {
        let items = items_of(4);
        let allowed = AllowedItems::all(4);
        // Scores exactly follow the judgments.
        let judgments = judgments_from(vec![
            ("u1", vec![1, 0, 1, 0]),
            ("u2", vec![0, 0, 0, 1]),
        ]);
        let systems = vec![system_from(
            "oracle",
            vec![
                ("u1", vec![1.0, 0.0, 1.0, 0.0]),
                ("u2", vec![0.0, 0.0, 0.0, 1.0]),
            ],
        )];
        let report = evaluate_systems(
            &systems,
            &judgments,
            &[1],
            4,
            &allowed,
            &items,
            ApNormalization::TopK,
        )
        .unwrap();
        assert_eq!(report.rows[0].ndcg, 1.0);
        assert_eq!(report.rows[0].map_at[0].1, 1.0);
    }

    #[test]
    fn identical_systems_get_identical_rows() {
        let items = items_of(3);
        let allowed = AllowedItems::all(3);
        let judgments = judgments_from(vec![("u1", vec![0, 1, 0])]);
        let mk = || system_from("s", vec![("u1", vec![0.3, 0.2, 0.5])]);
        let report = evaluate_systems(
            &[mk(), mk()],
            &judgments,
            &[1, 10],
            3,
            &allowed,
            &items,
            ApNormalization::TopK,
        )
        .unwrap();
        assert_eq!(report.rows[0].map_at, report.rows[1].map_at);
        assert_eq!(report.rows[0].ndcg, report.rows[1].ndcg);
    }

    #[test]
    fn mismatched_user_sets_are_fatal() {
        let items = items_of(2);
        let allowed = AllowedItems::all(2);
        let judgments = judgments_from(vec![("u1", vec![1, 0]), ("u2", vec![0, 1])]);
        let a = system_from("a", vec![("u1", vec![0.5, 0.5]), ("u2", vec![0.5, 0.5])]);
        let b = system_from("b", vec![("u1", vec![0.5, 0.5])]);
        let err = evaluate_systems(
            &[a, b],
            &judgments,
            &[1],
            2,
            &allowed,
            &items,
            ApNormalization::TopK,
        )
        .unwrap_err();
        assert!(err.to_string().contains("unfair"));
    }

    #[test]
    fn map_equals_mean_of_per_user_ap() {
        use rand::{Rng, SeedableRng};
        let n_items = 6;
        let items = items_of(n_items);
        let allowed = AllowedItems::all(n_items);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let users: Vec<String> = (0..30).map(|u| format!("u{u:02}")).collect();
        let judgments = judgments_from(
            users
                .iter()
                .map(|u| {
                    (
                        u.as_str(),
                        (0..n_items)
                            .map(|_| u8::from(rng.gen_bool(0.3)))
                            .collect::<Vec<u8>>(),
                    )
                })
                .collect(),
        );
        let scores: Vec<(&str, Vec<f64>)> = users
            .iter()
            .map(|u| {
                (
                    u.as_str(),
                    (0..n_items).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>(),
                )
            })
            .collect();
        let system = system_from("random", scores.clone());
        let report = evaluate_systems(
            &[system],
            &judgments,
            &[3],
            4,
            &allowed,
            &items,
            ApNormalization::TopK,
        )
        .unwrap();

        // Recompute the mean by hand from per-user AP values.
        let mut total = 0.0;
        for (u, s) in &scores {
            let ranked = top_k(s, s, 3, &allowed, &items).unwrap();
            let rel: Vec<u8> = ranked.iter().map(|e| judgments[*u].y[e.item_index]).collect();
            let total_relevant = judgments[*u].n_relevant();
            total += ap_at_k(&rel, total_relevant, 3, ApNormalization::TopK);
        }
        let expected = total / users.len() as f64;
        assert!((report.rows[0].map_at[0].1 - expected).abs() < 1e-12);
    }

    /// Monte-Carlo check: for random scores and random judgments, MAP@1 is
    /// the per-user relevance base rate in expectation.
    #[test]
    fn random_scores_hit_base_rate_at_k1() {
        use rand::{Rng, SeedableRng};
        let n_items = 10;
        let relevance_rate = 0.2;
        let n_users = 1000;
        let items = items_of(n_items);
        let allowed = AllowedItems::all(n_items);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(59);
        let users: Vec<String> = (0..n_users).map(|u| format!("u{u:04}")).collect();
        let judgments = judgments_from(
            users
                .iter()
                .map(|u| {
                    (
                        u.as_str(),
                        (0..n_items)
                            .map(|_| u8::from(rng.gen_bool(relevance_rate)))
                            .collect::<Vec<u8>>(),
                    )
                })
                .collect(),
        );
        let system = system_from(
            "random",
            users
                .iter()
                .map(|u| {
                    (
                        u.as_str(),
                        (0..n_items).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>(),
                    )
                })
                .collect(),
        );
        let report = evaluate_systems(
            &[system],
            &judgments,
            &[1],
            10,
            &allowed,
            &items,
            ApNormalization::TopK,
        )
        .unwrap();
        let map1 = report.rows[0].map_at[0].1;
        // Binomial(1000, 0.2): three sigma around the mean.
        let sigma = (relevance_rate * (1.0 - relevance_rate) / n_users as f64).sqrt();
        assert!(
            (map1 - relevance_rate).abs() < 3.0 * sigma,
            "MAP@1 {map1} vs base rate {relevance_rate} (sigma {sigma})"
        );
    }
}
