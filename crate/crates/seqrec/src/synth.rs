//! Deterministic synthetic transaction logs for tests, demos, and
//! benchmarks: a planted-pattern set with a known sequential rule, and a
//! Markov-chain log with popularity skew for desk-scale runs.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::Transaction;

/// A generated log plus the ground truth needed by oracle tests.
#[derive(Debug)]
pub struct PlantedLog {
    pub transactions: Vec<Transaction>,
    pub analysis_date: i64,
    /// Users whose observation history ends in item "A"; they always buy
    /// "B" in the performance window.
    pub ends_in_a: BTreeSet<String>,
    /// Non-A users with long histories; they buy "C0" (short ones buy "C1").
    pub long_history: BTreeSet<String>,
}

pub const PLANTED_TRIGGER: &str = "A";
pub const PLANTED_CONSEQUENT: &str = "B";
const FILLERS: [&str; 8] = ["C0", "C1", "C2", "C3", "C4", "C5", "C6", "C7"];

/// Ten-item log with two planted rules the sequence model can learn:
/// a history ending in "A" is always followed by "B" in the performance
/// window, and otherwise a long history leads to "C0", a short one to "C1".
/// Half of the observation histories also contain an adjacent (A, B) pair
/// so next-token baselines can pick the first rule up.
pub fn planted_pattern_log(n_users: usize, seed: u64) -> PlantedLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analysis_date: i64 = 50_000;
    let mut transactions = Vec::new();
    let mut ends_in_a = BTreeSet::new();
    let mut long_history = BTreeSet::new();

    for u in 0..n_users {
        let user = format!("u{u:04}");
        let trigger_user = u % 2 == 0;
        let long = rng.gen_bool(0.5);
        let body_len = if long { 9 } else { 3 };
        if !trigger_user && long {
            long_history.insert(user.clone());
        }
        if trigger_user {
            ends_in_a.insert(user.clone());
        }

        let mut items: Vec<&str> = (0..body_len)
            .map(|_| FILLERS[rng.gen_range(0..FILLERS.len())])
            .collect();
        if rng.gen_bool(0.5) {
            // Teach the A -> B transition inside the observation window too.
            let at = rng.gen_range(0..=items.len().saturating_sub(1));
            items.insert(at, PLANTED_CONSEQUENT);
            items.insert(at, PLANTED_TRIGGER);
        }
        items.push(if trigger_user {
            PLANTED_TRIGGER
        } else {
            FILLERS[rng.gen_range(0..FILLERS.len())]
        });

        for (pos, item) in items.iter().enumerate() {
            transactions.push(Transaction::new(
                user.clone(),
                *item,
                1_000 + 10 * pos as i64,
            ));
        }

        // Performance purchases.
        let mut performance: Vec<&str> = Vec::new();
        if trigger_user {
            performance.push(PLANTED_CONSEQUENT);
        } else {
            performance.push(if long { "C0" } else { "C1" });
            if rng.gen_bool(0.45) {
                performance.push(FILLERS[rng.gen_range(2..FILLERS.len())]);
            }
            if rng.gen_bool(0.15) {
                performance.push(PLANTED_TRIGGER);
            }
        }
        for (j, item) in performance.iter().enumerate() {
            transactions.push(Transaction::new(
                user.clone(),
                *item,
                analysis_date + 10 * u as i64 + j as i64,
            ));
        }
    }

    PlantedLog {
        transactions,
        analysis_date,
        ends_in_a,
        long_history,
    }
}

/// A desk-scale benchmark log with numeric ids, Zipf-skewed filler
/// popularity, and planted structure at scale: eight parallel
/// trigger-to-consequent rules readable from the final token, plus a
/// history-length rule no short-context model can capture.
#[derive(Debug)]
pub struct BenchmarkLog {
    pub transactions: Vec<Transaction>,
    pub analysis_date: i64,
}

const BENCH_GROUPS: usize = 8;
const BENCH_FILLERS: usize = 40;

pub fn benchmark_log(n_users: usize, seed: u64) -> BenchmarkLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epoch_base: i64 = 1_600_000_000;
    let analysis_date = epoch_base + 500_000;

    // Numeric item ids: triggers 1..=8, consequents 11..=18, the two
    // length-rule items 21 and 22, fillers from 101 up.
    let trigger = |g: usize| format!("{}", 1 + g);
    let consequent = |g: usize| format!("{}", 11 + g);
    let long_item = "21".to_string();
    let short_item = "22".to_string();
    let filler = |i: usize| format!("{}", 101 + i);

    // Zipf-ish filler weights; the tail stays rare but reachable.
    let weights: Vec<f64> = (0..BENCH_FILLERS)
        .map(|i| 1.0 / (i as f64 + 1.5).powf(0.9))
        .collect();
    let total_weight: f64 = weights.iter().sum();
    let filler_draw = |rng: &mut ChaCha8Rng| -> usize {
        let mut target = rng.gen_range(0.0..total_weight);
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        BENCH_FILLERS - 1
    };

    let mut transactions = Vec::new();
    for u in 0..n_users {
        let user = format!("{}", u + 1);
        let group = u % BENCH_GROUPS;
        let trigger_user = rng.gen_bool(0.5);
        let long = rng.gen_bool(0.5);
        let body_len = if long { 30 } else { 14 };

        let mut items: Vec<String> = (0..body_len)
            .map(|_| match rng.gen_range(0..24u8) {
                // Rule items circulate unpaired in observation so they stay
                // in the vocabulary with realistic base rates; the
                // trigger -> consequent link itself lives only across the
                // analysis date and is visible to supervised targets alone.
                0 => long_item.clone(),
                1 => short_item.clone(),
                2 => consequent(rng.gen_range(0..BENCH_GROUPS)),
                3 => trigger(rng.gen_range(0..BENCH_GROUPS)),
                _ => filler(filler_draw(&mut rng)),
            })
            .collect();
        items.push(if trigger_user {
            trigger(group)
        } else {
            filler(filler_draw(&mut rng))
        });

        for (pos, item) in items.iter().enumerate() {
            transactions.push(Transaction::new(
                user.clone(),
                item.clone(),
                epoch_base + 100 * pos as i64,
            ));
        }

        let mut performance: Vec<String> = Vec::new();
        if trigger_user {
            performance.push(consequent(group));
        } else {
            performance.push(if long {
                long_item.clone()
            } else {
                short_item.clone()
            });
            if rng.gen_bool(0.10) {
                performance.push(trigger(rng.gen_range(0..BENCH_GROUPS)));
            }
        }
        // Popularity-driven extras keep filler base rates realistic.
        if rng.gen_bool(0.6) {
            performance.push(filler(filler_draw(&mut rng)));
        }
        if rng.gen_bool(0.3) {
            performance.push(filler(filler_draw(&mut rng)));
        }
        for (j, item) in performance.iter().enumerate() {
            transactions.push(Transaction::new(
                user.clone(),
                item.clone(),
                analysis_date + 100 * u as i64 + j as i64,
            ));
        }
    }

    BenchmarkLog {
        transactions,
        analysis_date,
    }
}

/// Writes a log in the `generic-csv` layout.
pub fn write_generic_csv(path: &Path, transactions: &[Transaction]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(out, "user_id,item_id,timestamp").map_err(|e| Error::io(path, e))?;
    for tx in transactions {
        writeln!(out, "{},{},{}", tx.user_id, tx.item_id, tx.timestamp)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes a log in the `movielens-ratings` layout; the rating column is a
/// constant placeholder since loaders discard it.
pub fn write_movielens_csv(path: &Path, transactions: &[Transaction]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(out, "userId,movieId,rating,timestamp").map_err(|e| Error::io(path, e))?;
    for tx in transactions {
        writeln!(out, "{},{},3.5,{}", tx.user_id, tx.item_id, tx.timestamp)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
