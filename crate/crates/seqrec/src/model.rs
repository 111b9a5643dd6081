//! The sequence model: token embedding, two stacked LSTM layers, and a
//! five-layer feed-forward head ending in per-item logistic outputs, one
//! probability per recommendable item.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{TargetVector, UserSequence};
use crate::neural::{
    affine, bce_loss, embed, embed_backward, glorot_uniform, load_envelope, lstm_step,
    lstm_step_backward, relu, relu_backward, save_envelope, sigmoid, sigmoid_backward, LossKind,
    LstmStepCache, Matrix, NamedTensor, ParamId, ParameterSet, RecurrentCellParams,
};

/// Outputs stay strictly inside (0, 1) even when the logistic saturates in
/// f64.
const OUTPUT_CLAMP: f64 = 1e-12;

/// Number of affine layers in the head (four rectified hidden layers plus
/// the logistic output layer).
const HEAD_LAYERS: usize = 5;

/// Hyperparameters of the sequence model. All defaults are overridable from
/// the experiment config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// Widths of the four hidden head layers; the output width is always the
    /// recommendable-item count.
    pub mlp_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 32,
            hidden_dim: 64,
            mlp_hidden: vec![64, 64, 48, 32],
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 20,
            loss: LossKind::Full,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

/// The full parameter set of the network plus its identity: vocabulary
/// fingerprint, vocabulary size, and output width.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    pub vocab_hash: String,
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub n_items: usize,
    params: ParameterSet,
    embedding: ParamId,
    cell1: RecurrentCellParams,
    cell2: RecurrentCellParams,
    head: Vec<(ParamId, ParamId)>,
}

/// Deterministically initializes a model. Every violated constraint is
/// reported at once.
pub fn init_model(
    vocab_size: usize,
    n_items: usize,
    vocab_hash: &str,
    config: ModelConfig,
) -> Result<SequenceModel> {
    let mut violations = Vec::new();
    if vocab_size < 3 {
        violations.push(format!(
            "vocabulary must hold PAD, UNK and at least one item (got size {vocab_size})"
        ));
    }
    if n_items == 0 {
        violations.push("recommendable item count must be positive".to_string());
    }
    if config.embedding_dim == 0 {
        violations.push("embedding_dim must be positive".to_string());
    }
    if config.hidden_dim == 0 {
        violations.push("hidden_dim must be positive".to_string());
    }
    if config.mlp_hidden.len() != HEAD_LAYERS - 1 {
        violations.push(format!(
            "head needs exactly {} hidden widths, got {}",
            HEAD_LAYERS - 1,
            config.mlp_hidden.len()
        ));
    }
    for (idx, &w) in config.mlp_hidden.iter().enumerate() {
        if w == 0 {
            violations.push(format!("head width {idx} must be positive"));
        }
    }
    if config.batch_size == 0 {
        violations.push("batch_size must be positive".to_string());
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        violations.push(format!(
            "learning_rate must be finite and non-negative, got {}",
            config.learning_rate
        ));
    }
    if config.grad_clip.is_nan() || config.grad_clip <= 0.0 {
        violations.push(format!("grad_clip must be positive, got {}", config.grad_clip));
    }
    if !violations.is_empty() {
        return Err(Error::Violations(violations));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParameterSet::new();
    let embedding = params.register(
        "embedding",
        glorot_uniform(vocab_size, config.embedding_dim, &mut rng),
    );
    let cell1 = RecurrentCellParams::init(
        "cell1",
        config.embedding_dim,
        config.hidden_dim,
        &mut params,
        &mut rng,
    );
    let cell2 = RecurrentCellParams::init(
        "cell2",
        config.hidden_dim,
        config.hidden_dim,
        &mut params,
        &mut rng,
    );

    let mut head = Vec::with_capacity(HEAD_LAYERS);
    let mut in_width = config.hidden_dim;
    let mut widths = config.mlp_hidden.clone();
    widths.push(n_items);
    for (layer, out_width) in widths.into_iter().enumerate() {
        let w = params.register(
            format!("head{layer}.w"),
            glorot_uniform(out_width, in_width, &mut rng),
        );
        // Rectified layers start with a small positive bias so no unit is
        // born dead; the logistic output layer starts centered at 0.5.
        let bias_init = if layer + 1 < HEAD_LAYERS { 0.01 } else { 0.0 };
        let b = params.register(
            format!("head{layer}.b"),
            Matrix::from_fn(out_width, 1, |_, _| bias_init),
        );
        head.push((w, b));
        in_width = out_width;
    }

    Ok(SequenceModel {
        vocab_hash: vocab_hash.to_string(),
        config,
        vocab_size,
        n_items,
        params,
        embedding,
        cell1,
        cell2,
        head,
    })
}

/// Forward intermediates kept for backpropagation.
struct ForwardTrace {
    tokens: Vec<usize>,
    cell1_caches: Vec<LstmStepCache>,
    cell2_caches: Vec<LstmStepCache>,
    /// Input vector of each head layer (index 0 is the final hidden state).
    head_inputs: Vec<Vec<f64>>,
    /// Pre-activations of the rectified hidden layers.
    head_pre: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl SequenceModel {
    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// One forward/backward pass for a single user, returning a snapshot of
    /// the parameter store with the fresh gradients. Used by gradient-check
    /// harnesses; training goes through [`train`].
    pub fn loss_gradients(
        &mut self,
        tokens: &[usize],
        y: &[u8],
        kind: LossKind,
    ) -> Result<ParameterSet> {
        self.params.zero_grads();
        let (probs, trace) = self.rollout(tokens, true)?;
        let (_, dprobs) = bce_loss(&probs, y, kind);
        self.backward(&trace.expect("trace requested"), &dprobs);
        Ok(self.params.clone())
    }

    /// Per-item interaction probabilities for one sequence. The sequence must
    /// be non-empty; empty-history users are handled by the ranking fallback.
    pub fn forward(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        Ok(self.rollout(tokens, false)?.0)
    }

    fn rollout(&self, tokens: &[usize], want_trace: bool) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
        if tokens.is_empty() {
            return Err(Error::Invalid(
                "cannot run the sequence model on an empty token sequence".to_string(),
            ));
        }
        let embedded = embed(tokens, self.params.value(self.embedding));

        let mut cell1_caches = Vec::new();
        let mut cell2_caches = Vec::new();
        let mut state1 = self.cell1.zero_state();
        let mut state2 = self.cell2.zero_state();
        for t in 0..tokens.len() {
            let (next1, cache1) = lstm_step(&self.cell1, &self.params, embedded.row(t), &state1)?;
            let (next2, cache2) = lstm_step(&self.cell2, &self.params, &next1.h, &state2)?;
            state1 = next1;
            state2 = next2;
            if want_trace {
                cell1_caches.push(cache1);
                cell2_caches.push(cache2);
            }
        }

        let mut head_inputs = Vec::with_capacity(HEAD_LAYERS);
        let mut head_pre = Vec::with_capacity(HEAD_LAYERS - 1);
        let mut x = state2.h;
        for (layer, &(w, b)) in self.head.iter().enumerate() {
            head_inputs.push(x.clone());
            let pre = affine(self.params.value(w), self.params.value(b).data(), &x);
            if layer + 1 < HEAD_LAYERS {
                x = relu(&pre);
                head_pre.push(pre);
            } else {
                x = sigmoid(&pre);
            }
        }
        for p in &mut x {
            *p = p.clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP);
        }

        let trace = want_trace.then(|| ForwardTrace {
            tokens: tokens.to_vec(),
            cell1_caches,
            cell2_caches,
            head_inputs,
            head_pre,
            probs: x.clone(),
        });
        Ok((x, trace))
    }

    /// Accumulates parameter gradients for one user given d loss / d probs.
    fn backward(&mut self, trace: &ForwardTrace, dprobs: &[f64]) {
        // Head, output layer first. Same math as `affine_backward`, unrolled
        // so weight reads and gradient writes borrow sequentially.
        let mut dy = sigmoid_backward(&trace.probs, dprobs);
        for layer in (0..HEAD_LAYERS).rev() {
            let (w, b) = self.head[layer];
            let dx = self.params.value(w).matvec_transpose(&dy);
            self.params
                .grad_mut(w)
                .add_outer(&dy, &trace.head_inputs[layer]);
            for (slot, v) in self.params.grad_mut(b).data_mut().iter_mut().zip(&dy) {
                *slot += v;
            }
            dy = if layer == 0 {
                dx
            } else {
                relu_backward(&trace.head_pre[layer - 1], &dx)
            };
        }
        // `dy` is now the gradient at cell2's final hidden state.
        let steps = trace.tokens.len();
        let hidden = self.config.hidden_dim;
        let mut d_embedded = Matrix::zeros(steps, self.config.embedding_dim);

        let mut dh2 = dy;
        let mut dc2 = vec![0.0; hidden];
        let mut dh1 = vec![0.0; hidden];
        let mut dc1 = vec![0.0; hidden];
        for t in (0..steps).rev() {
            let (dx2, dh2_prev, dc2_prev) = lstm_step_backward(
                &self.cell2,
                &mut self.params,
                &trace.cell2_caches[t],
                &dh2,
                &dc2,
            );
            dh2 = dh2_prev;
            dc2 = dc2_prev;
            // cell2's input at step t is cell1's hidden output at step t.
            for (acc, v) in dh1.iter_mut().zip(&dx2) {
                *acc += v;
            }
            let (dx1, dh1_prev, dc1_prev) = lstm_step_backward(
                &self.cell1,
                &mut self.params,
                &trace.cell1_caches[t],
                &dh1,
                &dc1,
            );
            dh1 = dh1_prev;
            dc1 = dc1_prev;
            d_embedded.row_mut(t).copy_from_slice(&dx1);
        }

        embed_backward(&trace.tokens, &d_embedded, self.params.grad_mut(self.embedding));
    }

    /// Forward for many users on the shared read-only parameters; output per
    /// user is bit-identical to a solo [`Self::forward`] call.
    pub fn predict_batch<'a>(
        &self,
        sequences: impl IntoIterator<Item = &'a UserSequence>,
    ) -> Result<BTreeMap<String, Vec<f64>>> {
        let seqs: Vec<&UserSequence> = sequences.into_iter().collect();
        let results: Vec<(String, Result<Vec<f64>>)> = seqs
            .par_iter()
            .map(|s| (s.user_id.clone(), self.forward(&s.tokens)))
            .collect();
        let mut out = BTreeMap::new();
        for (user, result) in results {
            out.insert(user, result?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let tensors: Vec<NamedTensor> = self
            .params
            .iter()
            .map(|(name, m)| NamedTensor::from_matrix(name, m))
            .collect();
        let payload = SeqPayload {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            n_items: self.n_items,
            tensors,
        };
        save_envelope(path, "seq", &self.vocab_hash, &payload)
    }

    pub fn load(path: &std::path::Path, expected_vocab_hash: Option<&str>) -> Result<SequenceModel> {
        let envelope = load_envelope::<SeqPayload>(path, "seq", expected_vocab_hash)?;
        let payload = envelope.payload;
        let mut model = init_model(
            payload.vocab_size,
            payload.n_items,
            &envelope.vocab_hash,
            payload.config,
        )?;
        let by_name: BTreeMap<&str, &NamedTensor> = payload
            .tensors
            .iter()
            .map(|t| (t.name.as_str(), t))
            .collect();
        if by_name.len() != model.params.len() {
            return Err(Error::Invalid(format!(
                "checkpoint {} holds {} tensors, model expects {}",
                path.display(),
                by_name.len(),
                model.params.len()
            )));
        }
        for idx in 0..model.params.len() {
            let id = ParamId::from_index(idx);
            let name = model.params.name(id).to_string();
            let tensor = by_name.get(name.as_str()).ok_or_else(|| {
                Error::Invalid(format!("checkpoint missing parameter `{name}`"))
            })?;
            let m = tensor.to_matrix();
            if m.shape() != model.params.value(id).shape() {
                return Err(Error::Invalid(format!(
                    "checkpoint parameter `{name}` has shape {:?}, expected {:?}",
                    m.shape(),
                    model.params.value(id).shape()
                )));
            }
            *model.params.value_mut(id) = m;
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct SeqPayload {
    config: ModelConfig,
    vocab_size: usize,
    n_items: usize,
    tensors: Vec<NamedTensor>,
}

/// Per-epoch training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub sgd_steps: usize,
    pub final_param_norms: Vec<(String, f64)>,
}

/// Mini-batch SGD over the training users in seeded shuffled order. Records
/// train and validation loss per epoch and restores the parameters from the
/// best-validation epoch before returning.
pub fn train(
    model: &mut SequenceModel,
    sequences: &BTreeMap<String, UserSequence>,
    targets: &BTreeMap<String, TargetVector>,
    train_users: &BTreeSet<String>,
    validation_users: &BTreeSet<String>,
) -> Result<TrainReport> {
    let missing: Vec<&String> = train_users
        .iter()
        .filter(|u| !sequences.contains_key(*u) || !targets.contains_key(*u))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Invalid(format!(
            "{} training users lack a sequence or target (first: {})",
            missing.len(),
            missing[0]
        )));
    }
    for user in train_users {
        let t = &targets[user];
        if t.y.len() != model.n_items {
            return Err(Error::Invalid(format!(
                "target for user {user} has length {}, model outputs {}",
                t.y.len(),
                model.n_items
            )));
        }
    }

    let mut order: Vec<&String> = train_users.iter().collect();
    let val_order: Vec<&String> = validation_users
        .iter()
        .filter(|u| sequences.contains_key(*u) && targets.contains_key(*u))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(0x5eed));

    let mut report = TrainReport {
        epochs: Vec::with_capacity(model.config.epochs),
        best_epoch: 0,
        sgd_steps: 0,
        final_param_norms: Vec::new(),
    };
    let mut best_val = f64::INFINITY;
    let mut best_snapshot: Option<ParameterSet> = None;

    for epoch in 0..model.config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;

        for (batch_idx, batch) in order.chunks(model.config.batch_size).enumerate() {
            model.params.zero_grads();
            let mut batch_loss = 0.0;
            for user in batch {
                let seq = &sequences[*user];
                let (probs, trace) = model.rollout(&seq.tokens, true)?;
                let trace = trace.expect("trace requested");
                let (loss, dprobs) = bce_loss(&probs, &targets[*user].y, model.config.loss);
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!(
                            "training loss at epoch {epoch}, batch {batch_idx}, user {user}"
                        ),
                    });
                }
                batch_loss += loss;
                model.backward(&trace, &dprobs);
            }
            model.params.scale_grads(1.0 / batch.len() as f64);
            model.params.clip_global_norm(model.config.grad_clip);
            model.params.sgd_step(model.config.learning_rate)?;
            report.sgd_steps += 1;
            epoch_loss += batch_loss;
        }

        let train_loss = epoch_loss / order.len().max(1) as f64;
        let val_loss = validation_loss(model, sequences, targets, &val_order)?;
        let selection_loss = if val_order.is_empty() { train_loss } else { val_loss };
        if selection_loss < best_val {
            best_val = selection_loss;
            report.best_epoch = epoch;
            best_snapshot = Some(model.params.clone());
        }
        report.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    if let Some(snapshot) = best_snapshot {
        model.params.restore_values(&snapshot);
    }
    report.final_param_norms = model.params.norms();
    Ok(report)
}

fn validation_loss(
    model: &SequenceModel,
    sequences: &BTreeMap<String, UserSequence>,
    targets: &BTreeMap<String, TargetVector>,
    val_order: &[&String],
) -> Result<f64> {
    if val_order.is_empty() {
        return Ok(f64::NAN);
    }
    let losses: Vec<Result<f64>> = val_order
        .par_iter()
        .map(|user| {
            let probs = model.forward(&sequences[*user].tokens)?;
            Ok(bce_loss(&probs, &targets[*user].y, model.config.loss).0)
        })
        .collect();
    let mut total = 0.0;
    for loss in losses {
        total += loss?;
    }
    Ok(total / val_order.len() as f64)
}
