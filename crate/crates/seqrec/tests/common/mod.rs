//! Shared fixtures for the integration and acceptance suites.
//!
//! Each test binary compiles its own copy, so not every helper is used by
//! every suite.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use seqrec::config::ExperimentConfig;
use seqrec::synth::{planted_pattern_log, PlantedLog};

pub struct PlantedRun {
    pub dir: tempfile::TempDir,
    pub config: ExperimentConfig,
    pub log: PlantedLog,
}

/// Writes a planted-pattern log and a config tuned for it into a temp dir.
pub fn planted_run(n_users: usize, data_seed: u64, run_seed: u64, epochs: usize) -> PlantedRun {
    let dir = tempfile::tempdir().unwrap();
    let log = planted_pattern_log(n_users, data_seed);
    seqrec::synth::write_generic_csv(&dir.path().join("log.csv"), &log.transactions).unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "data.path = log.csv\n\
             analysis.date = {}\n\
             seed = {run_seed}\n\
             output.dir = out\n\
             model.epochs = {epochs}\n\
             model.batch_size = 16\n\
             model.learning_rate = 0.08\n",
            log.analysis_date
        ),
    );
    PlantedRun { dir, config, log }
}

/// Writes `exp.conf` under `dir` and parses it.
pub fn write_config(dir: &Path, text: &str) -> ExperimentConfig {
    let path = dir.join("exp.conf");
    std::fs::write(&path, text).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

/// Files a pipeline run is expected to reproduce byte-for-byte. The manifest
/// (timestamped) and the seq train report (wall-clock column) are compared
/// with their volatile parts stripped by the caller.
pub fn deterministic_artifacts(dir: &Path) -> Vec<PathBuf> {
    let names = [
        "vocabulary.json",
        "sequences.csv",
        "targets.csv",
        "split.json",
        "rejects.txt",
        "seq.ckpt.json",
        "cf.ckpt.json",
        "mf.ckpt.json",
        "ngram.ckpt.json",
        "mf_report.csv",
        "metrics.csv",
        "item_ap.csv",
        "recommendations_seq.csv",
        "recommendations_cf.csv",
        "recommendations_mf.csv",
        "recommendations_ngram.csv",
        "recommendations_random.csv",
        "removed_items.txt",
    ];
    names
        .iter()
        .map(|n| dir.join(n))
        .filter(|p| p.exists())
        .collect()
}

/// The seq train report with the wall-clock column removed.
pub fn train_report_without_seconds(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join("train_report_seq.csv")).ok()?;
    Some(
        text.lines()
            .map(|line| {
                let mut fields: Vec<&str> = line.split(',').collect();
                fields.pop();
                fields.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n"),
    )
}
