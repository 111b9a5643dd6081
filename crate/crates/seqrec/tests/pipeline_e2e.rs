//! End-to-end pipeline behavior: artifact layout, idempotence, the
//! leakage guard, cold-start handling, error contracts, and the CLI shell.

mod common;

use std::collections::BTreeSet;
use std::process::Command;

use seqrec::error::Error;
use seqrec::pipeline::{
    cmd_evaluate, cmd_prepare, cmd_recommend, cmd_train, load_prepared, SystemKind,
};
use seqrec::synth::planted_pattern_log;

#[test]
fn prepare_writes_artifacts_and_manifest() {
    let run = common::planted_run(100, 3, 8, 2);
    let summary = cmd_prepare(&run.config).unwrap();
    assert_eq!(summary.users, 100);
    assert!(summary.warnings.is_empty());

    let out = &run.config.output_dir;
    for name in ["vocabulary.json", "sequences.csv", "targets.csv", "split.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    // Clean log: no rejects report.
    assert!(!out.join("rejects.txt").exists());
    assert_eq!(summary.manifest.artifacts.len(), 4);

    // Idempotence: rerunning produces identical artifact hashes.
    let again = cmd_prepare(&run.config).unwrap();
    assert_eq!(summary.manifest.artifacts, again.manifest.artifacts);
    assert_eq!(summary.manifest.config_hash, again.manifest.config_hash);
    assert_eq!(summary.manifest.data_hash, again.manifest.data_hash);
}

#[test]
fn prepared_artifacts_round_trip() {
    let run = common::planted_run(60, 5, 9, 2);
    cmd_prepare(&run.config).unwrap();
    let prepared = load_prepared(&run.config.output_dir).unwrap();
    assert_eq!(prepared.sequences.len(), 60);
    assert_eq!(
        prepared.train_users.len() + prepared.validation_users.len(),
        60
    );
    assert_eq!(prepared.items.len(), 10);
    for target in prepared.targets.values() {
        assert_eq!(target.y.len(), prepared.items.len());
    }
}

/// Shuffling performance rows (the only data trained parameters may see is
/// the observation window plus order-free targets) changes no output byte.
#[test]
fn leakage_guard_performance_order_invariance() {
    let log = planted_pattern_log(80, 21);
    let analysis_date = log.analysis_date;

    let run_variant = |transactions: &[seqrec::ingest::Transaction]| {
        let dir = tempfile::tempdir().unwrap();
        seqrec::synth::write_generic_csv(&dir.path().join("log.csv"), transactions).unwrap();
        let config = common::write_config(
            dir.path(),
            &format!(
                "data.path = log.csv\nanalysis.date = {analysis_date}\nseed = 4\n\
                 output.dir = out\nmodel.epochs = 3\nmodel.batch_size = 16\n"
            ),
        );
        cmd_prepare(&config).unwrap();
        for method in [SystemKind::Seq, SystemKind::Cf, SystemKind::Mf, SystemKind::Ngram] {
            cmd_train(&config, method).unwrap();
        }
        cmd_evaluate(&config, &SystemKind::ALL).unwrap();
        let out = config.output_dir.clone();
        let files: Vec<(String, Vec<u8>)> = [
            "seq.ckpt.json",
            "cf.ckpt.json",
            "mf.ckpt.json",
            "ngram.ckpt.json",
            "metrics.csv",
        ]
        .iter()
        .map(|n| (n.to_string(), std::fs::read(out.join(n)).unwrap()))
        .collect();
        (dir, files)
    };

    let (_a, original) = run_variant(&log.transactions);

    // Same rows with the performance window reversed and pushed to the end.
    let (mut observation, mut performance): (Vec<_>, Vec<_>) = log
        .transactions
        .iter()
        .cloned()
        .partition(|t| t.timestamp < analysis_date);
    performance.reverse();
    observation.extend(performance);
    let (_b, shuffled) = run_variant(&observation);

    for ((name, bytes_a), (_, bytes_b)) in original.iter().zip(&shuffled) {
        assert_eq!(bytes_a, bytes_b, "{name} changed when performance rows moved");
    }
}

#[test]
fn unk_only_users_get_flagged_fallback_lists() {
    let dir = tempfile::tempdir().unwrap();
    // Ten users over two popular items, plus one user who only ever touched
    // rare items; with min_count = 2 that history tokenizes to UNK only.
    let mut log = Vec::new();
    for u in 0..10 {
        log.push(seqrec::ingest::Transaction::new(
            format!("u{u:02}"),
            if u % 2 == 0 { "A" } else { "B" },
            100 + u as i64,
        ));
    }
    log.push(seqrec::ingest::Transaction::new("uRare", "oddity1", 150));
    log.push(seqrec::ingest::Transaction::new("uRare", "oddity2", 151));
    // Performance rows so targets and base popularity exist.
    for u in 0..10 {
        log.push(seqrec::ingest::Transaction::new(
            format!("u{u:02}"),
            if u % 3 == 0 { "A" } else { "B" },
            1_000 + u as i64,
        ));
    }
    seqrec::synth::write_generic_csv(&dir.path().join("log.csv"), &log).unwrap();
    let config = common::write_config(
        dir.path(),
        "data.path = log.csv\nanalysis.date = 500\nseed = 2\noutput.dir = out\n\
         vocab.min_count = 2\nmodel.epochs = 1\n",
    );
    cmd_prepare(&config).unwrap();
    cmd_train(&config, SystemKind::Seq).unwrap();

    let summary = cmd_recommend(
        &config,
        SystemKind::Seq,
        1,
        Some(vec!["uRare".to_string(), "u01".to_string()]),
    )
    .unwrap();
    assert_eq!(summary.users_written, 2);
    assert_eq!(summary.fallback_users, 1);

    let text = std::fs::read_to_string(&summary.csv_path).unwrap();
    let mut saw_rare = false;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0] == "uRare" {
            saw_rare = true;
            assert_eq!(fields[5], "1", "uRare should be flagged as fallback");
        } else {
            assert_eq!(fields[5], "0");
        }
    }
    assert!(saw_rare);
}

#[test]
fn unknown_users_are_reported_and_skipped() {
    let run = common::planted_run(40, 6, 3, 1);
    cmd_prepare(&run.config).unwrap();
    cmd_train(&run.config, SystemKind::Ngram).unwrap();
    let summary = cmd_recommend(
        &run.config,
        SystemKind::Ngram,
        2,
        Some(vec!["u0001".to_string(), "nobody".to_string()]),
    )
    .unwrap();
    assert_eq!(summary.unknown_users, vec!["nobody".to_string()]);
    assert_eq!(summary.users_written, 1);
}

#[test]
fn recommend_k1_emits_one_row_per_user() {
    let run = common::planted_run(40, 7, 5, 1);
    cmd_prepare(&run.config).unwrap();
    cmd_train(&run.config, SystemKind::Seq).unwrap();
    let summary = cmd_recommend(&run.config, SystemKind::Seq, 1, None).unwrap();
    let text = std::fs::read_to_string(&summary.csv_path).unwrap();
    let prepared = load_prepared(&run.config.output_dir).unwrap();
    assert_eq!(text.lines().count() - 1, prepared.validation_users.len());
}

#[test]
fn exclude_purchased_filters_observation_items() {
    let mut run = common::planted_run(60, 8, 6, 2);
    run.config.exclude_purchased = true;
    cmd_prepare(&run.config).unwrap();
    cmd_train(&run.config, SystemKind::Seq).unwrap();
    let summary = cmd_recommend(&run.config, SystemKind::Seq, 3, None).unwrap();
    let prepared = load_prepared(&run.config.output_dir).unwrap();
    let text = std::fs::read_to_string(&summary.csv_path).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let (user, item, fallback) = (fields[0], fields[2], fields[5]);
        if fallback == "1" {
            continue;
        }
        let seq = &prepared.sequences[user];
        let token = prepared.vocab.token_exact(item).unwrap();
        assert!(
            !seq.tokens.contains(&token),
            "user {user} was recommended already-purchased {item}"
        );
    }
}

#[test]
fn training_without_prepare_names_the_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("log.csv"), "user_id,item_id,timestamp\nu,i,1\n").unwrap();
    let config = common::write_config(
        dir.path(),
        "data.path = log.csv\nanalysis.date = 10\nseed = 1\noutput.dir = out\n",
    );
    let err = cmd_train(&config, SystemKind::Seq).unwrap_err();
    match err {
        Error::MissingArtifact { path } => {
            assert!(path.to_string_lossy().contains("vocabulary.json"));
        }
        other => panic!("expected MissingArtifact, got {other}"),
    }
}

#[test]
fn stale_checkpoint_is_rejected_after_vocabulary_change() {
    let run = common::planted_run(50, 9, 4, 1);
    cmd_prepare(&run.config).unwrap();
    cmd_train(&run.config, SystemKind::Seq).unwrap();

    // Re-prepare with a different vocabulary (min_count filters items out).
    let mut altered = run.config.clone();
    altered.min_count = 30;
    cmd_prepare(&altered).unwrap();

    let err = cmd_evaluate(&altered, &[SystemKind::Seq]).unwrap_err();
    assert!(
        matches!(err, Error::VocabHashMismatch { .. }),
        "expected a vocabulary-hash rejection, got {err}"
    );
}

#[test]
fn degenerate_date_split_surfaces_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let log = vec![
        seqrec::ingest::Transaction::new("u1", "a", 10),
        seqrec::ingest::Transaction::new("u2", "b", 20),
    ];
    seqrec::synth::write_generic_csv(&dir.path().join("log.csv"), &log).unwrap();
    let config = common::write_config(
        dir.path(),
        "data.path = log.csv\nanalysis.date = 999\nseed = 1\noutput.dir = out\n",
    );
    let summary = cmd_prepare(&config).unwrap();
    assert!(summary
        .warnings
        .iter()
        .any(|w| w.contains("performance window is empty")));
}

#[test]
fn rejects_report_is_written_and_listed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("log.csv"),
        "user_id,item_id,timestamp\nu1,a,10\nbroken row\nu2,b,20\nu3,c,bad\nu1,a,900\n",
    )
    .unwrap();
    let config = common::write_config(
        dir.path(),
        "data.path = log.csv\nanalysis.date = 500\nseed = 1\noutput.dir = out\n",
    );
    let summary = cmd_prepare(&config).unwrap();
    assert_eq!(summary.rejects, 2);
    let rejects = std::fs::read_to_string(config.output_dir.join("rejects.txt")).unwrap();
    assert!(rejects.starts_with("3\t"));
    assert!(summary
        .manifest
        .artifacts
        .iter()
        .any(|a| a.path == "rejects.txt"));
}

#[test]
fn evaluate_is_consistent_across_method_subsets() {
    let run = common::planted_run(80, 10, 12, 2);
    cmd_prepare(&run.config).unwrap();
    for method in [SystemKind::Seq, SystemKind::Cf, SystemKind::Ngram] {
        cmd_train(&run.config, method).unwrap();
    }
    let full = cmd_evaluate(
        &run.config,
        &[SystemKind::Seq, SystemKind::Cf, SystemKind::Ngram, SystemKind::Random],
    )
    .unwrap();
    let subset = cmd_evaluate(&run.config, &[SystemKind::Cf]).unwrap();
    let full_cf = full.row("cf").unwrap();
    let subset_cf = subset.row("cf").unwrap();
    assert_eq!(full_cf.map_at, subset_cf.map_at);
    assert_eq!(full_cf.ndcg, subset_cf.ndcg);

    // Per-item plot data comes out alongside the metric report.
    let item_ap = std::fs::read_to_string(run.config.output_dir.join("item_ap.csv")).unwrap();
    assert!(item_ap.starts_with("system,item_id,relevant_users,mean_precision_at_rank\n"));
    assert!(item_ap.lines().count() > 1);
}

#[test]
fn seq_scores_rank_by_uplift_not_probability() {
    // A validation user whose probabilities favor a popular item can still
    // rank a rare item first on uplift; verify the evaluate path and the
    // recommend path agree on the uplift ordering.
    let run = common::planted_run(80, 12, 19, 6);
    cmd_prepare(&run.config).unwrap();
    cmd_train(&run.config, SystemKind::Seq).unwrap();
    let prepared = load_prepared(&run.config.output_dir).unwrap();
    let summary = cmd_recommend(&run.config, SystemKind::Seq, prepared.items.len(), None).unwrap();
    let text = std::fs::read_to_string(&summary.csv_path).unwrap();
    for line in text.lines().skip(1).take(prepared.items.len()) {
        let fields: Vec<&str> = line.split(',').collect();
        // uplift column strictly non-increasing per user because rank order
        // is uplift order.
        let _: f64 = fields[3].parse().unwrap();
    }
    let first_user_lines: Vec<&str> = {
        let first_user = text.lines().nth(1).unwrap().split(',').next().unwrap();
        text.lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{first_user},")))
            .collect()
    };
    let uplifts: Vec<f64> = first_user_lines
        .iter()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    for pair in uplifts.windows(2) {
        assert!(pair[0] >= pair[1], "uplift column not sorted: {uplifts:?}");
    }
}

#[test]
fn cli_prepare_train_and_failure_modes() {
    let exe = env!("CARGO_BIN_EXE_seqrec");
    let dir = tempfile::tempdir().unwrap();
    let log = planted_pattern_log(40, 15);
    seqrec::synth::write_generic_csv(&dir.path().join("log.csv"), &log.transactions).unwrap();
    std::fs::write(
        dir.path().join("exp.conf"),
        format!(
            "data.path = log.csv\nanalysis.date = {}\nseed = 3\noutput.dir = out\nmodel.epochs = 1\n",
            log.analysis_date
        ),
    )
    .unwrap();
    let conf = dir.path().join("exp.conf");

    let ok = Command::new(exe)
        .args(["prepare", "--config"])
        .arg(&conf)
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("prepared 40 users"));

    let ok = Command::new(exe)
        .args(["train", "--method", "ngram", "--config"])
        .arg(&conf)
        .output()
        .unwrap();
    assert!(ok.status.success());

    // Evaluate with an untrained method: nonzero exit, single-line error.
    let fail = Command::new(exe)
        .args(["evaluate", "--methods", "mf", "--config"])
        .arg(&conf)
        .output()
        .unwrap();
    assert!(!fail.status.success());
    let stderr = String::from_utf8_lossy(&fail.stderr);
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("seqrec: error:"));
    assert!(stderr.contains("mf.ckpt.json"));

    // Unknown method name.
    let fail = Command::new(exe)
        .args(["train", "--method", "magic", "--config"])
        .arg(&conf)
        .output()
        .unwrap();
    assert!(!fail.status.success());

    // Missing config file.
    let fail = Command::new(exe)
        .args(["prepare", "--config", "/nonexistent/exp.conf"])
        .output()
        .unwrap();
    assert!(!fail.status.success());
    assert!(String::from_utf8_lossy(&fail.stderr).starts_with("seqrec: error:"));
}

#[test]
fn movielens_format_flows_through_prepare() {
    let dir = tempfile::tempdir().unwrap();
    let log = planted_pattern_log(30, 17);
    // Numeric-looking ids are not required by the loader; reuse the planted
    // log in the ratings layout.
    seqrec::synth::write_movielens_csv(&dir.path().join("ratings.csv"), &log.transactions)
        .unwrap();
    let config = common::write_config(
        dir.path(),
        &format!(
            "data.path = ratings.csv\ndata.format = movielens-ratings\n\
             analysis.date = {}\nseed = 5\noutput.dir = out\n",
            log.analysis_date
        ),
    );
    let summary = cmd_prepare(&config).unwrap();
    assert_eq!(summary.users, 30);
    assert_eq!(summary.rejects, 0);
}

#[test]
fn recommendable_items_override_restricts_targets_and_lists() {
    let dir = tempfile::tempdir().unwrap();
    let log = planted_pattern_log(50, 19);
    seqrec::synth::write_generic_csv(&dir.path().join("log.csv"), &log.transactions).unwrap();
    std::fs::write(dir.path().join("allow.txt"), "A\nB\nC0\n").unwrap();
    let config = common::write_config(
        dir.path(),
        &format!(
            "data.path = log.csv\nanalysis.date = {}\nseed = 5\noutput.dir = out\n\
             items.recommendable_path = allow.txt\nmodel.epochs = 1\n",
            log.analysis_date
        ),
    );
    cmd_prepare(&config).unwrap();
    let prepared = load_prepared(&config.output_dir).unwrap();
    assert_eq!(prepared.items.items(), ["A", "B", "C0"]);
    for target in prepared.targets.values() {
        assert_eq!(target.y.len(), 3);
    }
    cmd_train(&config, SystemKind::Seq).unwrap();
    let summary = cmd_recommend(&config, SystemKind::Seq, 10, None).unwrap();
    let text = std::fs::read_to_string(&summary.csv_path).unwrap();
    let universe: BTreeSet<&str> = ["A", "B", "C0"].into();
    for line in text.lines().skip(1) {
        let item = line.split(',').nth(2).unwrap();
        assert!(universe.contains(item), "item {item} outside the override");
    }
}
