//! Command bodies behind the CLI: prepare, train, evaluate, ablate, and
//! recommend. Every command reads its inputs from the run directory, writes
//! its outputs there, and refreshes the run manifest; config + data + seed
//! fully determine every data artifact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    build_neighbors, mf_train, observed_mse, InteractionMatrix, LatentFactors, MfModel,
    NGramTable, NGramTableFile, NeighborModel, NgramModel,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::hash::{fnv64, hash_file};
use crate::ingest::{
    build_sequences, build_targets, drop_popular_items, load_transactions,
    split_by_analysis_date, split_users, write_rejects_report, ItemVocabulary,
    RecommendableItems, TargetVector, Transaction, UserSequence,
};
use crate::metrics::{evaluate_systems, MetricReport, SystemScores};
use crate::model::{init_model, train, SequenceModel, TrainReport};
use crate::neural::{load_envelope, save_envelope};
use crate::ranking::{
    estimate_base_popularity, recommend_user, top_k, write_recommendations_csv, AllowedItems,
    BasePopularity, RecEntry, Recommendation,
};

const FORMAT_VERSION: u32 = 1;

pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const SEQUENCES_FILE: &str = "sequences.csv";
pub const TARGETS_FILE: &str = "targets.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const REJECTS_FILE: &str = "rejects.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ITEM_AP_FILE: &str = "item_ap.csv";
pub const REMOVED_ITEMS_FILE: &str = "removed_items.txt";
pub const ABLATION_DIR: &str = "ablation";

/// Every system the harness can train, evaluate, or export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Seq,
    Cf,
    Mf,
    Ngram,
    /// Seeded uniform scorer; the floor any learning method must clear.
    Random,
}

impl SystemKind {
    pub const ALL: [SystemKind; 5] = [
        SystemKind::Seq,
        SystemKind::Cf,
        SystemKind::Mf,
        SystemKind::Ngram,
        SystemKind::Random,
    ];

    pub fn checkpoint_file(self) -> Option<&'static str> {
        match self {
            SystemKind::Seq => Some("seq.ckpt.json"),
            SystemKind::Cf => Some("cf.ckpt.json"),
            SystemKind::Mf => Some("mf.ckpt.json"),
            SystemKind::Ngram => Some("ngram.ckpt.json"),
            SystemKind::Random => None,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SystemKind::Seq => "seq",
            SystemKind::Cf => "cf",
            SystemKind::Mf => "mf",
            SystemKind::Ngram => "ngram",
            SystemKind::Random => "random",
        };
        write!(f, "{name}")
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SystemKind> {
        match s {
            "seq" => Ok(SystemKind::Seq),
            "cf" => Ok(SystemKind::Cf),
            "mf" => Ok(SystemKind::Mf),
            "ngram" => Ok(SystemKind::Ngram),
            "random" => Ok(SystemKind::Random),
            other => Err(Error::Invalid(format!(
                "unknown method `{other}` (expected seq, cf, mf, ngram, or random)"
            ))),
        }
    }
}

/// Everything the downstream commands need from the prepare step.
#[derive(Debug)]
pub struct PreparedData {
    pub vocab: ItemVocabulary,
    pub items: RecommendableItems,
    pub sequences: BTreeMap<String, UserSequence>,
    pub targets: BTreeMap<String, TargetVector>,
    pub train_users: BTreeSet<String>,
    pub validation_users: BTreeSet<String>,
    pub analysis_date: i64,
    pub horizon_note: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabularyFilePayload {
    format_version: u32,
    vocab_hash: String,
    items: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFilePayload {
    format_version: u32,
    analysis_date: i64,
    horizon_note: String,
    train_users: Vec<String>,
    validation_users: Vec<String>,
    recommendable_items: Vec<String>,
    observation_rows: usize,
    performance_rows: usize,
    warnings: Vec<String>,
}

/// Manifest of one run directory: config and data fingerprints plus a
/// content hash for every artifact present. The creation timestamp is
/// informational and the one field exempt from byte-for-byte reproducibility.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub created_unix: u64,
    pub tool_version: String,
    pub config_hash: String,
    pub data_hash: String,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ArtifactEntry {
    pub path: String,
    pub fnv64: String,
}

#[derive(Debug)]
pub struct PrepareSummary {
    pub rows_read: usize,
    pub rejects: usize,
    pub users: usize,
    pub items: usize,
    pub warnings: Vec<String>,
    pub manifest: RunManifest,
}

/// Loads the raw log, splits it at the analysis date and into train and
/// validation users, builds the vocabulary, sequences, and targets, and
/// persists everything plus a run manifest.
pub fn cmd_prepare(config: &ExperimentConfig) -> Result<PrepareSummary> {
    let report = load_transactions(&config.data_path, config.data_format)?;
    let rows_read = report.rows_read();
    let n_rejects = report.rejects.len();

    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    if n_rejects > 0 {
        write_rejects_report(&out_dir.join(REJECTS_FILE), &report.rejects)?;
    }

    let prepared = build_prepared(config, report.transactions)?;
    persist_prepared(&out_dir, &prepared)?;
    let manifest = write_manifest(config, &out_dir)?;
    Ok(PrepareSummary {
        rows_read,
        rejects: n_rejects,
        users: prepared.sequences.len(),
        items: prepared.items.len(),
        warnings: prepared.warnings.clone(),
        manifest,
    })
}

/// The pure core of prepare: transactions in, prepared data out.
pub fn build_prepared(
    config: &ExperimentConfig,
    transactions: Vec<Transaction>,
) -> Result<PreparedData> {
    let split = split_by_analysis_date(transactions, config.analysis_date);
    if split.observation.is_empty() {
        return Err(Error::Invalid(
            "observation window is empty; check analysis.date against the data".to_string(),
        ));
    }
    let vocab = ItemVocabulary::build(&split.observation, config.min_count)?;
    let items = match &config.recommendable_items_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let list: Vec<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect();
            RecommendableItems::from_list(list, &vocab)?
        }
        None => RecommendableItems::from_vocabulary(&vocab),
    };
    let sequences = build_sequences(&split.observation, &vocab, config.max_seq_len);
    let observation_users: BTreeSet<String> = sequences.keys().cloned().collect();
    let targets = build_targets(&split.performance, &observation_users, &items);
    let (train_users, validation_users) =
        split_users(&observation_users, config.train_fraction, config.seed)?;

    Ok(PreparedData {
        vocab,
        items,
        sequences,
        targets,
        train_users,
        validation_users,
        analysis_date: config.analysis_date,
        horizon_note: config.horizon_note.clone(),
        warnings: split.warnings,
    })
}

fn persist_prepared(out_dir: &Path, prepared: &PreparedData) -> Result<()> {
    write_json_pretty(
        &out_dir.join(VOCABULARY_FILE),
        &VocabularyFilePayload {
            format_version: FORMAT_VERSION,
            vocab_hash: prepared.vocab.hash_hex(),
            items: prepared.vocab.items().to_vec(),
        },
    )?;

    let seq_path = out_dir.join(SEQUENCES_FILE);
    let mut out = String::from("user_id,tokens\n");
    for (user, seq) in &prepared.sequences {
        let tokens: Vec<String> = seq.tokens.iter().map(usize::to_string).collect();
        out.push_str(user);
        out.push(',');
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    std::fs::write(&seq_path, out).map_err(|e| Error::io(&seq_path, e))?;

    let tgt_path = out_dir.join(TARGETS_FILE);
    let mut out = String::from("user_id,positives\n");
    for (user, target) in &prepared.targets {
        let positives: Vec<String> = target.positives().map(|k| k.to_string()).collect();
        out.push_str(user);
        out.push(',');
        out.push_str(&positives.join(" "));
        out.push('\n');
    }
    std::fs::write(&tgt_path, out).map_err(|e| Error::io(&tgt_path, e))?;

    write_json_pretty(
        &out_dir.join(SPLIT_FILE),
        &SplitFilePayload {
            format_version: FORMAT_VERSION,
            analysis_date: prepared.analysis_date,
            horizon_note: prepared.horizon_note.clone(),
            train_users: prepared.train_users.iter().cloned().collect(),
            validation_users: prepared.validation_users.iter().cloned().collect(),
            recommendable_items: prepared.items.items().to_vec(),
            observation_rows: prepared.sequences.values().map(UserSequence::len).sum(),
            performance_rows: prepared
                .targets
                .values()
                .map(TargetVector::n_relevant)
                .sum(),
            warnings: prepared.warnings.clone(),
        },
    )
}

/// Reads prepare artifacts back. Missing files name themselves.
pub fn load_prepared(out_dir: &Path) -> Result<PreparedData> {
    let vocab_file: VocabularyFilePayload = read_json(&out_dir.join(VOCABULARY_FILE))?;
    let vocab = ItemVocabulary::from_items(vocab_file.items);
    if vocab.hash_hex() != vocab_file.vocab_hash {
        return Err(Error::VocabHashMismatch {
            expected: vocab_file.vocab_hash,
            found: vocab.hash_hex(),
        });
    }
    let split_file: SplitFilePayload = read_json(&out_dir.join(SPLIT_FILE))?;
    let items = RecommendableItems::from_list(split_file.recommendable_items, &vocab)?;

    let seq_path = out_dir.join(SEQUENCES_FILE);
    let mut sequences = BTreeMap::new();
    for (user, field) in read_two_column_csv(&seq_path, "user_id,tokens")? {
        let tokens = parse_token_list(&field, &seq_path)?;
        sequences.insert(
            user.clone(),
            UserSequence {
                user_id: user,
                tokens,
            },
        );
    }

    let tgt_path = out_dir.join(TARGETS_FILE);
    let mut targets = BTreeMap::new();
    for (user, field) in read_two_column_csv(&tgt_path, "user_id,positives")? {
        let mut y = vec![0u8; items.len()];
        for k in parse_token_list(&field, &tgt_path)? {
            if k >= y.len() {
                return Err(Error::DataFormat {
                    path: tgt_path.clone(),
                    message: format!("positive index {k} out of range for {} items", y.len()),
                });
            }
            y[k] = 1;
        }
        targets.insert(user.clone(), TargetVector { user_id: user, y });
    }

    Ok(PreparedData {
        vocab,
        items,
        sequences,
        targets,
        train_users: split_file.train_users.into_iter().collect(),
        validation_users: split_file.validation_users.into_iter().collect(),
        analysis_date: split_file.analysis_date,
        horizon_note: split_file.horizon_note,
        warnings: split_file.warnings,
    })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub method: SystemKind,
    pub checkpoint: PathBuf,
    /// Present for the sequence model.
    pub report: Option<TrainReport>,
    /// Present for matrix factorization.
    pub final_mse: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CfPayload {
    neighborhood: usize,
    binary: bool,
    neighbors: NeighborModel,
    /// Observation profiles of every user, token -> count pairs.
    profiles: Vec<(String, Vec<(usize, f64)>)>,
}

#[derive(Serialize, Deserialize)]
struct MfPayload {
    factors: LatentFactors,
}

#[derive(Serialize, Deserialize)]
struct NgramPayload {
    table: NGramTableFile,
}

/// Trains one system on the training users only and writes its checkpoint
/// (plus a per-epoch report where the method has epochs).
pub fn cmd_train(config: &ExperimentConfig, method: SystemKind) -> Result<TrainSummary> {
    let out_dir = &config.output_dir;
    let prepared = load_prepared(out_dir)?;
    let vocab_hash = prepared.vocab.hash_hex();
    let Some(ckpt_name) = method.checkpoint_file() else {
        return Err(Error::Invalid(
            "the random ranker has nothing to train".to_string(),
        ));
    };
    let ckpt_path = out_dir.join(ckpt_name);

    let mut summary = TrainSummary {
        method,
        checkpoint: ckpt_path.clone(),
        report: None,
        final_mse: None,
    };

    match method {
        SystemKind::Seq => {
            let mut model = init_model(
                prepared.vocab.len(),
                prepared.items.len(),
                &vocab_hash,
                config.model.clone(),
            )?;
            let report = train(
                &mut model,
                &prepared.sequences,
                &prepared.targets,
                &prepared.train_users,
                &prepared.validation_users,
            )?;
            model.save(&ckpt_path)?;
            let report_path = out_dir.join("train_report_seq.csv");
            let mut text = String::from("epoch,train_loss,val_loss,seconds\n");
            for e in &report.epochs {
                text.push_str(&format!(
                    "{},{:.6},{:.6},{:.3}\n",
                    e.epoch, e.train_loss, e.val_loss, e.seconds
                ));
            }
            std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
            summary.report = Some(report);
        }
        SystemKind::Cf => {
            let train_matrix = InteractionMatrix::from_sequences(
                prepared
                    .sequences
                    .values()
                    .filter(|s| prepared.train_users.contains(&s.user_id)),
                &prepared.train_users,
                prepared.vocab.len(),
                config.cf_binary,
            );
            let neighbors = build_neighbors(&train_matrix, config.cf_neighborhood);
            let all_users: BTreeSet<String> = prepared.sequences.keys().cloned().collect();
            let profile_matrix = InteractionMatrix::from_sequences(
                prepared.sequences.values(),
                &all_users,
                prepared.vocab.len(),
                config.cf_binary,
            );
            let profiles = profile_matrix
                .users()
                .map(|(user, idx)| {
                    (
                        user.to_string(),
                        profile_matrix
                            .row(idx)
                            .iter()
                            .map(|(&t, &v)| (t, v))
                            .collect(),
                    )
                })
                .collect();
            save_envelope(
                &ckpt_path,
                "cf",
                &vocab_hash,
                &CfPayload {
                    neighborhood: config.cf_neighborhood,
                    binary: config.cf_binary,
                    neighbors,
                    profiles,
                },
            )?;
        }
        SystemKind::Mf => {
            let train_matrix = InteractionMatrix::from_sequences(
                prepared
                    .sequences
                    .values()
                    .filter(|s| prepared.train_users.contains(&s.user_id)),
                &prepared.train_users,
                prepared.vocab.len(),
                config.cf_binary,
            );
            let factors = mf_train(
                &train_matrix,
                config.mf_factors,
                config.mf_learning_rate,
                config.mf_regularization,
                config.mf_epochs,
                config.seed,
            )?;
            let report_path = out_dir.join("mf_report.csv");
            let mut text = String::from("epoch,observed_mse\n");
            for (epoch, mse) in factors.epoch_mse.iter().enumerate() {
                text.push_str(&format!("{epoch},{mse:.6}\n"));
            }
            std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
            summary.final_mse = Some(observed_mse(&factors, &train_matrix));
            save_envelope(&ckpt_path, "mf", &vocab_hash, &MfPayload { factors })?;
        }
        SystemKind::Ngram => {
            let table = NGramTable::train(
                prepared
                    .sequences
                    .values()
                    .filter(|s| prepared.train_users.contains(&s.user_id)),
                config.ngram_order,
                config.ngram_alpha,
                prepared.vocab.len(),
            )?;
            save_envelope(
                &ckpt_path,
                "ngram",
                &vocab_hash,
                &NgramPayload {
                    table: table.to_file(),
                },
            )?;
        }
        SystemKind::Random => unreachable!("handled above"),
    }

    write_manifest(config, out_dir)?;
    Ok(summary)
}

/// The ranking context shared by evaluate and recommend.
struct RankingContext {
    base: BasePopularity,
    allowed: AllowedItems,
}

fn ranking_context(config: &ExperimentConfig, prepared: &PreparedData) -> Result<RankingContext> {
    let base = estimate_base_popularity(
        &prepared.targets,
        &prepared.train_users,
        prepared.items.len(),
    )?;
    let mut allowed = AllowedItems::all(prepared.items.len());
    if config.active_items_only {
        allowed = AllowedItems::from_indices(prepared.items.len(), &base.active_items());
        if allowed.is_empty() {
            return Err(Error::Invalid(
                "ranking.active_items_only left no recommendable item; no training user \
                 interacted during the performance window"
                    .to_string(),
            ));
        }
    }
    Ok(RankingContext { base, allowed })
}

fn load_seq_model(config: &ExperimentConfig, out_dir: &Path, vocab_hash: &str, n_tokens: usize, n_items: usize) -> Result<SequenceModel> {
    let path = out_dir.join(SystemKind::Seq.checkpoint_file().unwrap());
    if !path.exists() && config.allow_untrained {
        return init_model(n_tokens, n_items, vocab_hash, config.model.clone());
    }
    SequenceModel::load(&path, Some(vocab_hash))
}

/// Scores every requested system for the given users, sharing one ranking
/// context so comparisons stay fair.
fn score_systems(
    config: &ExperimentConfig,
    out_dir: &Path,
    prepared: &PreparedData,
    context: &RankingContext,
    users: &BTreeSet<String>,
    methods: &[SystemKind],
) -> Result<Vec<SystemScores>> {
    let vocab_hash = prepared.vocab.hash_hex();
    let unk_only = users
        .iter()
        .filter(|u| prepared.sequences.get(*u).is_some_and(UserSequence::is_unk_only))
        .count();

    let mut systems = Vec::with_capacity(methods.len());
    for &method in methods {
        let scores: BTreeMap<String, Vec<f64>> = match method {
            SystemKind::Seq => {
                let model = load_seq_model(
                    config,
                    out_dir,
                    &vocab_hash,
                    prepared.vocab.len(),
                    prepared.items.len(),
                )?;
                let seqs: Vec<&UserSequence> = users
                    .iter()
                    .map(|u| {
                        prepared.sequences.get(u).ok_or_else(|| {
                            Error::Invalid(format!("user {u} has no observation sequence"))
                        })
                    })
                    .collect::<Result<_>>()?;
                let probs = model.predict_batch(seqs)?;
                probs
                    .into_iter()
                    .map(|(user, p)| {
                        let uplifted = crate::ranking::uplift(&p, &context.base);
                        (user, uplifted)
                    })
                    .collect()
            }
            SystemKind::Cf => {
                let envelope = load_envelope::<CfPayload>(
                    &out_dir.join(SystemKind::Cf.checkpoint_file().unwrap()),
                    "cf",
                    Some(&vocab_hash),
                )?;
                let payload = envelope.payload;
                let profiles: BTreeMap<String, BTreeMap<usize, f64>> = payload
                    .profiles
                    .into_iter()
                    .map(|(u, entries)| (u, entries.into_iter().collect()))
                    .collect();
                let neighbors = payload.neighbors;
                users
                    .iter()
                    .map(|u| {
                        let scores = match profiles.get(u) {
                            Some(profile) => prepared
                                .items
                                .tokens()
                                .iter()
                                .map(|&token| {
                                    let est =
                                        crate::baselines::cf_predict(&neighbors, profile, token);
                                    if est.evidence {
                                        est.value
                                    } else {
                                        crate::baselines::NO_EVIDENCE_FLOOR
                                    }
                                })
                                .collect(),
                            None => vec![crate::baselines::NO_EVIDENCE_FLOOR; prepared.items.len()],
                        };
                        (u.clone(), scores)
                    })
                    .collect()
            }
            SystemKind::Mf => {
                let envelope = load_envelope::<MfPayload>(
                    &out_dir.join(SystemKind::Mf.checkpoint_file().unwrap()),
                    "mf",
                    Some(&vocab_hash),
                )?;
                let model = MfModel {
                    factors: envelope.payload.factors,
                };
                users
                    .iter()
                    .map(|u| (u.clone(), model.score_user(u, &prepared.items)))
                    .collect()
            }
            SystemKind::Ngram => {
                let envelope = load_envelope::<NgramPayload>(
                    &out_dir.join(SystemKind::Ngram.checkpoint_file().unwrap()),
                    "ngram",
                    Some(&vocab_hash),
                )?;
                let model = NgramModel {
                    table: NGramTable::from_file(envelope.payload.table),
                };
                users
                    .iter()
                    .map(|u| {
                        (
                            u.clone(),
                            model.score_user(&prepared.sequences[u], &prepared.items),
                        )
                    })
                    .collect()
            }
            SystemKind::Random => users
                .iter()
                .map(|u| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(config.seed ^ fnv64(u.as_bytes()));
                    let scores: Vec<f64> =
                        (0..prepared.items.len()).map(|_| rng.gen()).collect();
                    (u.clone(), scores)
                })
                .collect(),
        };
        systems.push(SystemScores {
            name: method.to_string(),
            scores,
            unk_only_users: unk_only,
        });
    }
    Ok(systems)
}

/// Evaluates the requested systems over the validation users and writes the
/// metric report CSV.
pub fn cmd_evaluate(config: &ExperimentConfig, methods: &[SystemKind]) -> Result<MetricReport> {
    let out_dir = config.output_dir.clone();
    let prepared = load_prepared(&out_dir)?;
    let report = evaluate_in_dir(config, &out_dir, &prepared, methods)?;
    write_manifest(config, &out_dir)?;
    Ok(report)
}

fn evaluate_in_dir(
    config: &ExperimentConfig,
    out_dir: &Path,
    prepared: &PreparedData,
    methods: &[SystemKind],
) -> Result<MetricReport> {
    let context = ranking_context(config, prepared)?;
    let systems = score_systems(
        config,
        out_dir,
        prepared,
        &context,
        &prepared.validation_users,
        methods,
    )?;
    let judgments: BTreeMap<String, TargetVector> = prepared
        .validation_users
        .iter()
        .map(|u| (u.clone(), prepared.targets[u].clone()))
        .collect();
    let report = evaluate_systems(
        &systems,
        &judgments,
        &config.k_list,
        config.ndcg_p,
        &context.allowed,
        &prepared.items,
        config.ap_normalization,
    )?;
    report.write_csv(&out_dir.join(METRICS_FILE))?;
    write_item_ap_csv(
        &out_dir.join(ITEM_AP_FILE),
        config,
        prepared,
        &context,
        &systems,
        &judgments,
    )?;
    Ok(report)
}

/// Plot data: per-item ranking quality per system. For every recommendable
/// item with at least one relevant validation user, reports the mean
/// precision at the rank where the item lands in those users' lists
/// (zero when it falls outside the evaluation depth).
fn write_item_ap_csv(
    path: &Path,
    config: &ExperimentConfig,
    prepared: &PreparedData,
    context: &RankingContext,
    systems: &[SystemScores],
    judgments: &BTreeMap<String, TargetVector>,
) -> Result<()> {
    let depth = config
        .ndcg_p
        .max(config.k_list.iter().copied().max().unwrap_or(0));
    let mut out = String::from("system,item_id,relevant_users,mean_precision_at_rank\n");
    for system in systems {
        let mut relevant_users = vec![0usize; prepared.items.len()];
        let mut precision_sums = vec![0.0f64; prepared.items.len()];
        for (user, scores) in &system.scores {
            let judgment = &judgments[user];
            let ranked = top_k(scores, scores, depth, &context.allowed, &prepared.items)?;
            let mut hits = 0usize;
            let mut rank_precision = vec![None; prepared.items.len()];
            for (idx, entry) in ranked.iter().enumerate() {
                if judgment.y[entry.item_index] == 1 {
                    hits += 1;
                    rank_precision[entry.item_index] = Some(hits as f64 / (idx + 1) as f64);
                }
            }
            for (item, &y) in judgment.y.iter().enumerate() {
                if y == 1 && context.allowed.contains(item) {
                    relevant_users[item] += 1;
                    precision_sums[item] += rank_precision[item].unwrap_or(0.0);
                }
            }
        }
        for item in 0..prepared.items.len() {
            if relevant_users[item] == 0 {
                continue;
            }
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                system.name,
                prepared.items.item(item),
                relevant_users[item],
                precision_sums[item] / relevant_users[item] as f64
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct AblationSummary {
    pub removed_items: BTreeSet<String>,
    pub report: MetricReport,
}

/// Popularity ablation: drops the most popular items from the observation
/// window, rebuilds everything in `<output>/ablation/`, retrains the
/// requested methods, and evaluates them under the untouched protocol.
pub fn cmd_ablate(config: &ExperimentConfig, methods: &[SystemKind]) -> Result<AblationSummary> {
    let report = load_transactions(&config.data_path, config.data_format)?;
    let split = split_by_analysis_date(report.transactions, config.analysis_date);
    let filtered = drop_popular_items(&split.observation, config.ablation_top_fraction);

    let ablation_dir = config.output_dir.join(ABLATION_DIR);
    std::fs::create_dir_all(&ablation_dir).map_err(|e| Error::io(&ablation_dir, e))?;
    let removed_path = ablation_dir.join(REMOVED_ITEMS_FILE);
    let mut text = String::new();
    for item in &filtered.removed_items {
        text.push_str(item);
        text.push('\n');
    }
    std::fs::write(&removed_path, text).map_err(|e| Error::io(&removed_path, e))?;

    let mut transactions = filtered.kept;
    transactions.extend(split.performance);
    let sub_config = ExperimentConfig {
        output_dir: ablation_dir.clone(),
        ..config.clone()
    };
    let prepared = build_prepared(&sub_config, transactions)?;
    persist_prepared(&ablation_dir, &prepared)?;
    for &method in methods {
        if method != SystemKind::Random {
            cmd_train(&sub_config, method)?;
        }
    }
    let report = evaluate_in_dir(&sub_config, &ablation_dir, &prepared, methods)?;
    write_manifest(&sub_config, &ablation_dir)?;
    Ok(AblationSummary {
        removed_items: filtered.removed_items,
        report,
    })
}

#[derive(Debug)]
pub struct RecommendSummary {
    pub csv_path: PathBuf,
    pub users_written: usize,
    pub fallback_users: usize,
    pub unknown_users: Vec<String>,
}

/// Emits the top-K recommendation export for the validation users (or an
/// explicit user list). Unknown users are reported and skipped.
pub fn cmd_recommend(
    config: &ExperimentConfig,
    method: SystemKind,
    k: usize,
    user_list: Option<Vec<String>>,
) -> Result<RecommendSummary> {
    let out_dir = config.output_dir.clone();
    let prepared = load_prepared(&out_dir)?;
    let context = ranking_context(config, &prepared)?;

    let mut unknown_users = Vec::new();
    let users: BTreeSet<String> = match user_list {
        Some(list) => {
            let mut known = BTreeSet::new();
            for user in list {
                if prepared.sequences.contains_key(&user) {
                    known.insert(user);
                } else {
                    unknown_users.push(user);
                }
            }
            known
        }
        None => prepared.validation_users.clone(),
    };
    if users.is_empty() {
        return Err(Error::Invalid(
            "no known users to recommend for".to_string(),
        ));
    }

    let systems = score_systems(config, &out_dir, &prepared, &context, &users, &[method])?;
    let scores = &systems[0].scores;

    let mut recommendations = Vec::with_capacity(users.len());
    let mut fallback_users = 0usize;
    for user in &users {
        let seq = &prepared.sequences[user];
        let mut allowed = context.allowed.clone();
        if config.exclude_purchased {
            let purchased: Vec<usize> = prepared
                .items
                .tokens()
                .iter()
                .enumerate()
                .filter(|&(_, &token)| seq.tokens.contains(&token))
                .map(|(idx, _)| idx)
                .collect();
            allowed.exclude(purchased);
            if allowed.is_empty() {
                allowed = context.allowed.clone();
            }
        }
        let rec = if seq.is_unk_only() || seq.is_empty() {
            fallback_users += 1;
            recommend_user(user, None, &context.base, k, &allowed, &prepared.items)?
        } else if method == SystemKind::Seq {
            // Scores are uplift already; recompute probability column from
            // uplift times base for the export.
            let uplifted = &scores[user];
            let entries = top_k(uplifted, uplifted, k, &allowed, &prepared.items)?;
            let entries: Vec<RecEntry> = entries
                .into_iter()
                .map(|e| RecEntry {
                    probability: e.uplift * context.base.get(e.item_index),
                    ..e
                })
                .collect();
            Recommendation {
                user_id: user.clone(),
                entries,
                fallback: false,
            }
        } else {
            let s = &scores[user];
            let entries = top_k(s, s, k, &allowed, &prepared.items)?;
            Recommendation {
                user_id: user.clone(),
                entries,
                fallback: false,
            }
        };
        recommendations.push(rec);
    }

    let csv_path = out_dir.join(format!("recommendations_{method}.csv"));
    write_recommendations_csv(&csv_path, &recommendations, &prepared.items)?;
    write_manifest(config, &out_dir)?;
    Ok(RecommendSummary {
        csv_path,
        users_written: recommendations.len(),
        fallback_users,
        unknown_users,
    })
}

/// Refreshes the manifest: fingerprints of the config, the input data, and
/// every known artifact present in the directory.
pub fn write_manifest(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let mut names: Vec<String> = vec![
        VOCABULARY_FILE.to_string(),
        SEQUENCES_FILE.to_string(),
        TARGETS_FILE.to_string(),
        SPLIT_FILE.to_string(),
        REJECTS_FILE.to_string(),
        "train_report_seq.csv".to_string(),
        "mf_report.csv".to_string(),
        METRICS_FILE.to_string(),
        ITEM_AP_FILE.to_string(),
        REMOVED_ITEMS_FILE.to_string(),
    ];
    for kind in SystemKind::ALL {
        if let Some(name) = kind.checkpoint_file() {
            names.push(name.to_string());
            names.push(format!("recommendations_{kind}.csv"));
        }
    }
    names.push("recommendations_random.csv".to_string());
    names.sort();

    let mut artifacts = Vec::new();
    for name in names {
        let path = out_dir.join(&name);
        if path.exists() {
            artifacts.push(ArtifactEntry {
                fnv64: hash_file(&path)?,
                path: name,
            });
        }
    }
    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash_hex(),
        data_hash: hash_file(&config.data_path)?,
        artifacts,
    };
    write_json_pretty(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(json.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn read_two_column_csv(path: &Path, expected_header: &str) -> Result<Vec<(String, String)>> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == expected_header => {}
        other => {
            return Err(Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("bad header {other:?}, expected `{expected_header}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let Some((user, field)) = line.split_once(',') else {
            return Err(Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("bad row `{line}`"),
            });
        };
        rows.push((user.to_string(), field.to_string()));
    }
    Ok(rows)
}

fn parse_token_list(field: &str, path: &Path) -> Result<Vec<usize>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(' ')
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("bad token `{tok}`"),
            })
        })
        .collect()
}

/// Formats a metric report as an aligned text table for the CLI.
pub fn format_report_table(report: &MetricReport) -> String {
    let mut out = String::new();
    let mut header = String::from("system");
    for k in &report.k_list {
        header.push_str(&format!(",map@{k}"));
    }
    header.push_str(&format!(
        ",ndcg@{},evaluated,zero_relevant,unk_only",
        report.ndcg_p
    ));
    out.push_str(&header);
    out.push('\n');
    for row in &report.rows {
        out.push_str(&row.system);
        for (_, v) in &row.map_at {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push_str(&format!(
            ",{:.6},{},{},{}\n",
            row.ndcg, row.evaluated_users, row.zero_relevant_users, row.unk_only_users
        ));
    }
    out
}
