//! Experiment configuration: a flat `key = value` text file with `#`
//! comments. Every tunable the pipeline uses appears here with its default;
//! the seed is mandatory so no run ever depends on wall-clock entropy.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hash::Fnv64;
use crate::ingest::LogFormat;
use crate::metrics::ApNormalization;
use crate::model::ModelConfig;
use crate::neural::LossKind;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    // Data.
    pub data_path: PathBuf,
    pub data_format: LogFormat,
    pub analysis_date: i64,
    /// Free-text documentation of the performance horizon the analysis date
    /// encodes (for example "six months"); carried into the split artifact.
    pub horizon_note: String,
    pub train_fraction: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub min_count: usize,
    pub max_seq_len: usize,
    /// Optional newline-separated item-id file overriding I'.
    pub recommendable_items_path: Option<PathBuf>,

    // Sequence model.
    pub model: ModelConfig,

    // Baselines.
    pub cf_neighborhood: usize,
    pub cf_binary: bool,
    pub mf_factors: usize,
    pub mf_learning_rate: f64,
    pub mf_regularization: f64,
    pub mf_epochs: usize,
    pub ngram_order: usize,
    pub ngram_alpha: f64,

    // Evaluation and ranking.
    pub k_list: Vec<usize>,
    pub ndcg_p: usize,
    pub ap_normalization: ApNormalization,
    pub ranking_top_k: usize,
    pub exclude_purchased: bool,
    /// Restrict ranking to items with nonzero training-window base
    /// popularity; keeps the uplift ratio meaningful on sparse data.
    pub active_items_only: bool,
    pub allow_untrained: bool,
    pub ablation_top_fraction: f64,
}

impl ExperimentConfig {
    /// Parses a config file. Unknown keys are fatal (they are almost always
    /// typos), and so are missing mandatory keys (`data.path`,
    /// `analysis.date`, `seed`).
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            if pairs
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    idx + 1
                )));
            }
        }
        Self::from_pairs(pairs, base_dir)
    }

    fn from_pairs(mut pairs: BTreeMap<String, String>, base_dir: &Path) -> Result<ExperimentConfig> {
        fn take<T: FromStr>(
            pairs: &mut BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T> {
            match pairs.remove(key) {
                Some(raw) => raw.parse().map_err(|_| {
                    Error::Config(format!("key `{key}`: cannot parse `{raw}`"))
                }),
                None => Ok(default),
            }
        }
        fn require<T: FromStr>(pairs: &mut BTreeMap<String, String>, key: &str) -> Result<T> {
            match pairs.remove(key) {
                Some(raw) => raw.parse().map_err(|_| {
                    Error::Config(format!("key `{key}`: cannot parse `{raw}`"))
                }),
                None => Err(Error::Config(format!("mandatory key `{key}` is missing"))),
            }
        }
        let resolve = |raw: String| -> PathBuf {
            let p = PathBuf::from(raw);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };

        let data_path = resolve(require::<String>(&mut pairs, "data.path")?);
        let data_format: LogFormat = pairs
            .remove("data.format")
            .map(|raw| raw.parse())
            .transpose()?
            .unwrap_or(LogFormat::GenericCsv);
        let analysis_date: i64 = require(&mut pairs, "analysis.date")?;
        let horizon_note: String = take(&mut pairs, "performance.horizon_note", String::new())?;
        let seed: u64 = require(&mut pairs, "seed")?;
        let output_dir = resolve(take::<String>(&mut pairs, "output.dir", "runs/default".into())?);

        let train_fraction: f64 = take(&mut pairs, "split.train_fraction", 0.8)?;
        let min_count: usize = take(&mut pairs, "vocab.min_count", 1)?;
        let max_seq_len: usize = take(&mut pairs, "sequence.max_len", 128)?;
        let recommendable_items_path = pairs
            .remove("items.recommendable_path")
            .filter(|s| !s.is_empty())
            .map(resolve);

        let loss = match take::<String>(&mut pairs, "model.loss", "full".into())?.as_str() {
            "full" => LossKind::Full,
            "positives_only" => LossKind::PositivesOnly,
            other => {
                return Err(Error::Config(format!(
                    "key `model.loss`: expected `full` or `positives_only`, got `{other}`"
                )))
            }
        };
        let mlp_hidden_raw: String =
            take(&mut pairs, "model.mlp_widths", "64,64,48,32".into())?;
        let mlp_hidden = parse_usize_list(&mlp_hidden_raw, "model.mlp_widths")?;
        let model = ModelConfig {
            embedding_dim: take(&mut pairs, "model.embedding_dim", 32)?,
            hidden_dim: take(&mut pairs, "model.hidden_dim", 64)?,
            mlp_hidden,
            learning_rate: take(&mut pairs, "model.learning_rate", 0.05)?,
            batch_size: take(&mut pairs, "model.batch_size", 32)?,
            epochs: take(&mut pairs, "model.epochs", 20)?,
            loss,
            grad_clip: take(&mut pairs, "model.grad_clip", 5.0)?,
            seed,
        };

        let ap_normalization =
            match take::<String>(&mut pairs, "eval.ap_normalization", "top_k".into())?.as_str() {
                "top_k" => ApNormalization::TopK,
                "min_total_k" => ApNormalization::MinTotalK,
                other => {
                    return Err(Error::Config(format!(
                        "key `eval.ap_normalization`: expected `top_k` or `min_total_k`, got `{other}`"
                    )))
                }
            };
        let k_list_raw: String = take(&mut pairs, "eval.k_list", "1,10".into())?;
        let k_list = parse_usize_list(&k_list_raw, "eval.k_list")?;

        let config = ExperimentConfig {
            data_path,
            data_format,
            analysis_date,
            horizon_note,
            train_fraction,
            seed,
            output_dir,
            min_count,
            max_seq_len,
            recommendable_items_path,
            model,
            cf_neighborhood: take(&mut pairs, "cf.neighborhood", 50)?,
            cf_binary: take(&mut pairs, "cf.binary", false)?,
            mf_factors: take(&mut pairs, "mf.factors", 16)?,
            mf_learning_rate: take(&mut pairs, "mf.learning_rate", 0.01)?,
            mf_regularization: take(&mut pairs, "mf.regularization", 0.05)?,
            mf_epochs: take(&mut pairs, "mf.epochs", 30)?,
            ngram_order: take(&mut pairs, "ngram.order", 3)?,
            ngram_alpha: take(&mut pairs, "ngram.alpha", 0.1)?,
            k_list,
            ndcg_p: take(&mut pairs, "eval.ndcg_p", 10)?,
            ap_normalization,
            ranking_top_k: take(&mut pairs, "ranking.top_k", 10)?,
            exclude_purchased: take(&mut pairs, "ranking.exclude_purchased", false)?,
            active_items_only: take(&mut pairs, "ranking.active_items_only", false)?,
            allow_untrained: take(&mut pairs, "predict.allow_untrained", false)?,
            ablation_top_fraction: take(&mut pairs, "ablation.top_fraction", 0.10)?,
        };

        if let Some(unknown) = pairs.keys().next() {
            return Err(Error::Config(format!("unknown key `{unknown}`")));
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            violations.push(format!(
                "split.train_fraction must be in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.max_seq_len == 0 {
            violations.push("sequence.max_len must be positive".to_string());
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            violations.push("eval.k_list must hold positive cut-offs".to_string());
        }
        if self.ndcg_p == 0 {
            violations.push("eval.ndcg_p must be positive".to_string());
        }
        if self.ranking_top_k == 0 {
            violations.push("ranking.top_k must be positive".to_string());
        }
        if self.ngram_order < 2 {
            violations.push(format!(
                "ngram.order must be >= 2, got {}",
                self.ngram_order
            ));
        }
        if self.ngram_alpha < 0.0 {
            violations.push(format!(
                "ngram.alpha must be >= 0, got {}",
                self.ngram_alpha
            ));
        }
        if !(0.0..=1.0).contains(&self.ablation_top_fraction) {
            violations.push(format!(
                "ablation.top_fraction must be in [0, 1], got {}",
                self.ablation_top_fraction
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Violations(violations))
        }
    }

    /// Stable fingerprint of every effective setting, for the run manifest.
    pub fn hash_hex(&self) -> String {
        let mut h = Fnv64::new();
        h.update_field(format!("{self:?}").as_bytes());
        h.finish_hex()
    }
}

fn parse_usize_list(raw: &str, key: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{part}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "data.path = log.csv\nanalysis.date = 1000\nseed = 7\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let config = ExperimentConfig::parse(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(config.data_path, Path::new("/base/log.csv"));
        assert_eq!(config.seed, 7);
        assert_eq!(config.train_fraction, 0.8);
        assert_eq!(config.model.embedding_dim, 32);
        assert_eq!(config.model.mlp_hidden, vec![64, 64, 48, 32]);
        assert_eq!(config.k_list, vec![1, 10]);
        assert_eq!(config.model.seed, 7);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# experiment\n\n{MINIMAL}\nmodel.epochs = 3 # small\n");
        let config = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(config.model.epochs, 3);
    }

    #[test]
    fn missing_seed_is_fatal() {
        let err = ExperimentConfig::parse("data.path = x\nanalysis.date = 5\n", Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn unknown_key_is_fatal() {
        let text = format!("{MINIMAL}mode.epochs = 3\n");
        let err = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("mode.epochs"));
    }

    #[test]
    fn bad_values_name_the_key() {
        let text = format!("{MINIMAL}model.epochs = soon\n");
        let err = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("model.epochs"));
    }

    #[test]
    fn validation_collects_violations() {
        let text = format!("{MINIMAL}split.train_fraction = 1.5\neval.ndcg_p = 0\n");
        let err = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train_fraction"));
        assert!(msg.contains("ndcg_p"));
    }

    #[test]
    fn hash_tracks_settings() {
        let a = ExperimentConfig::parse(MINIMAL, Path::new(".")).unwrap();
        let b = ExperimentConfig::parse(MINIMAL, Path::new(".")).unwrap();
        let c =
            ExperimentConfig::parse(&format!("{MINIMAL}model.epochs = 9\n"), Path::new("."))
                .unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
        assert_ne!(a.hash_hex(), c.hash_hex());
    }
}
