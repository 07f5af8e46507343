//! Masked-word training: loss assembly, Adam, and the deterministic
//! step loop.
//!
//! Two loss modes are supported and never mixed: softmax cross-entropy
//! against the single hidden word, and summed binary cross-entropy against
//! the expanded target set (the hidden word plus every vocabulary word
//! sharing a concept identifier with it). Both are means over the masked
//! positions of a batch, but they live on different scales, so a loss value
//! is only comparable to another run in the same mode.
//!
//! Everything random is drawn from labelled substreams of the master seed —
//! the shuffle for epoch `e`, the masking for step `s` — so a run is fully
//! determined by its seed, and a resumed run replays exactly the batches
//! and masks of an uninterrupted one.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::model::{forward_batch, ModelError, ModelParams, ParamNodes, SentenceInput};
use crate::rng;
use crate::tape::Tape;
use crate::tensor::{Tensor, TensorError};
use crate::tokenizer::{
    apply_masking, build_targets, EncodedSentence, MaskingOutcome, TargetMatrix, TargetMode,
    TokenizerError, Vocab,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss mode {mode:?} cannot consume {targets:?} targets")]
    ModeMismatch { mode: LossMode, targets: TargetMode },
    #[error("{targets} target rows for {positions} masked positions")]
    TargetCount { targets: usize, positions: usize },
    #[error("gradient for {0:?} missing from tape")]
    MissingGradient(String),
    #[error("optimizer state does not cover parameter {0:?}")]
    MissingSlot(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad train config: {0}")]
    Config(String),
    #[error("unknown loss mode {0:?} (expected \"ce\" or \"bce-cui\")")]
    UnknownLossMode(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Which objective the masked positions are trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Cross-entropy against the hidden word only.
    #[serde(rename = "ce")]
    Ce,
    /// Binary cross-entropy against the concept-expanded target set.
    #[serde(rename = "bce-cui")]
    Bce,
}

impl LossMode {
    pub fn target_mode(self) -> TargetMode {
        match self {
            LossMode::Ce => TargetMode::OneHot,
            LossMode::Bce => TargetMode::CuiExpanded,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Ce => "ce",
            LossMode::Bce => "bce-cui",
        }
    }
}

impl FromStr for LossMode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<LossMode, TrainError> {
        match s {
            "ce" => Ok(LossMode::Ce),
            "bce-cui" | "bce" => Ok(LossMode::Bce),
            other => Err(TrainError::UnknownLossMode(other.to_string())),
        }
    }
}

/// Training hyperparameters. Desk-scale defaults; see [`TrainConfig::desk`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub master_seed: u64,
    pub loss_mode: LossMode,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub mask_rate: f64,
    /// Substitute masked words the classic way (80% `[MASK]`, 10% random
    /// word, 10% unchanged) instead of always `[MASK]`.
    pub classic_masking: bool,
    /// Periodic checkpoint cadence in steps; 0 disables intermediate
    /// checkpoints (the final one is always written by the caller).
    pub checkpoint_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl TrainConfig {
    pub fn desk(master_seed: u64, loss_mode: LossMode) -> TrainConfig {
        TrainConfig {
            master_seed,
            loss_mode,
            lr: 3e-4,
            batch_size: 16,
            steps: 2000,
            mask_rate: 0.15,
            classic_masking: false,
            checkpoint_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(TrainError::Config(format!(
                "mask_rate {} must lie strictly between 0 and 1",
                self.mask_rate
            )));
        }
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config(
                "batch_size must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// First and second Adam moments for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamSlot {
    pub m: Tensor,
    pub v: Tensor,
}

impl AdamSlot {
    /// Fresh zeroed accumulators for a tensor of the given shape.
    pub fn new(shape: &[usize]) -> AdamSlot {
        AdamSlot {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
        }
    }

    /// One Adam update of a single tensor. `t` is the 1-based update count
    /// shared by every tensor in the step. The epsilon sits outside the
    /// square root, so a parameter whose gradient is exactly zero is left
    /// bit-for-bit unchanged, and `lr = 0` makes the update a no-op.
    pub fn update(&mut self, param: &mut Tensor, grad: &Tensor, cfg: &TrainConfig, t: i32) {
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..param.numel() {
            let gi = grad.data()[i];
            let m = &mut self.m.data_mut()[i];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            let v = &mut self.v.data_mut()[i];
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            param.data_mut()[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Adam accumulators, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub slots: BTreeMap<String, AdamSlot>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> OptimizerState {
        let slots = params
            .named()
            .into_iter()
            .map(|(name, t)| (name, AdamSlot::new(t.shape())))
            .collect();
        OptimizerState { step: 0, slots }
    }

    /// One Adam update over every model parameter; see [`AdamSlot::update`]
    /// for the exact rule.
    pub fn apply(
        &mut self,
        params: &mut ModelParams,
        grads: &[(String, Tensor)],
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        self.step += 1;
        let t = self.step as i32;
        let mut grad_map: BTreeMap<&str, &Tensor> = BTreeMap::new();
        for (name, g) in grads {
            grad_map.insert(name.as_str(), g);
        }
        for (name, p) in params.named_mut() {
            let g = grad_map
                .remove(name.as_str())
                .ok_or_else(|| TrainError::MissingGradient(name.clone()))?;
            let slot = self
                .slots
                .get_mut(&name)
                .ok_or_else(|| TrainError::MissingSlot(name.clone()))?;
            slot.update(p, g, cfg, t);
        }
        Ok(())
    }
}

/// Flat row indices of the masked positions inside stacked batch logits,
/// in batch-then-position order — the order target rows are built in.
pub fn flat_masked_rows(outcomes: &[&MaskingOutcome], seq_len: usize) -> Vec<usize> {
    let mut rows = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        for &p in &o.masked_positions {
            rows.push(i * seq_len + p);
        }
    }
    rows
}

/// Forward a batch, select the masked logit rows, and attach the loss for
/// `mode`. Returns the loss value and the gradients of every parameter.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &[SentenceInput],
    masked_rows: &[usize],
    targets: &TargetMatrix,
    mode: LossMode,
) -> Result<(f64, Vec<(String, Tensor)>), TrainError> {
    let (loss, grads) = run_batch(params, batch, masked_rows, targets, mode, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// Forward-only variant of [`loss_and_grads`].
pub fn loss_value(
    params: &ModelParams,
    batch: &[SentenceInput],
    masked_rows: &[usize],
    targets: &TargetMatrix,
    mode: LossMode,
) -> Result<f64, TrainError> {
    let (loss, _) = run_batch(params, batch, masked_rows, targets, mode, false)?;
    Ok(loss)
}

#[allow(clippy::type_complexity)]
fn run_batch(
    params: &ModelParams,
    batch: &[SentenceInput],
    masked_rows: &[usize],
    targets: &TargetMatrix,
    mode: LossMode,
    want_grads: bool,
) -> Result<(f64, Option<Vec<(String, Tensor)>>), TrainError> {
    if targets.mode() != mode.target_mode() {
        return Err(TrainError::ModeMismatch {
            mode,
            targets: targets.mode(),
        });
    }
    if targets.len() != masked_rows.len() {
        return Err(TrainError::TargetCount {
            targets: targets.len(),
            positions: masked_rows.len(),
        });
    }
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let trace = forward_batch(&mut tape, &nodes, &params.config, batch)?;
    let selected = tape.gather_rows(trace.logits, masked_rows)?;
    let loss = match mode {
        LossMode::Ce => {
            let indices = targets.class_indices()?;
            tape.ce_loss(selected, &indices)?
        }
        LossMode::Bce => tape.bce_loss(selected, &targets.to_dense())?,
    };
    let loss_value = tape.value(loss).scalar_value();
    if !want_grads {
        return Ok((loss_value, None));
    }
    let grads = tape.backward(loss)?;
    let mut named = Vec::new();
    for (name, id) in nodes.named() {
        let g = grads
            .get(id)
            .ok_or_else(|| TrainError::MissingGradient(name.clone()))?;
        named.push((name, g.clone()));
    }
    Ok((loss_value, Some(named)))
}

/// Sentence visit order for one epoch: a seeded Fisher-Yates permutation
/// of `0..n`, different per epoch, identical across runs with one seed.
pub fn epoch_order(master_seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(master_seed, "shuffle", epoch);
    order.shuffle(&mut r);
    order
}

/// Corpus indices making up the batch of a given global step. Epochs are
/// ceil(n / batch_size) steps long; the final batch of an epoch may be
/// short.
pub fn batch_for_step(
    corpus_len: usize,
    batch_size: usize,
    master_seed: u64,
    step: usize,
) -> Vec<usize> {
    let bpe = corpus_len.div_ceil(batch_size);
    let epoch = (step / bpe) as u64;
    let offset = step % bpe;
    let order = epoch_order(master_seed, epoch, corpus_len);
    let start = offset * batch_size;
    let end = (start + batch_size).min(corpus_len);
    order[start..end].to_vec()
}

/// One line of training telemetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub mode: LossMode,
    pub masked_positions: usize,
}

/// The batch a given step trains on: sentence indices, masking outcomes,
/// and the concatenated target matrix. Everything is re-derived from the
/// config and step number alone, so callers can inspect exactly what any
/// step saw without touching training state.
pub fn masked_batch(
    corpus: &[EncodedSentence],
    vocab: &Vocab,
    lexicon: &Lexicon,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(Vec<usize>, Vec<MaskingOutcome>, TargetMatrix), TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let indices = batch_for_step(corpus.len(), cfg.batch_size, cfg.master_seed, step);
    let mut mask_rng = rng::stream(cfg.master_seed, "mask", step as u64);
    let mut outcomes = Vec::with_capacity(indices.len());
    let mut target_parts = Vec::with_capacity(indices.len());
    for &i in &indices {
        let e = &corpus[i];
        let outcome = apply_masking(e, cfg.mask_rate, cfg.classic_masking, vocab, &mut mask_rng);
        let t = build_targets(e, &outcome, vocab, lexicon, cfg.loss_mode.target_mode())?;
        target_parts.push(t);
        outcomes.push(outcome);
    }
    let targets = TargetMatrix::concat(&target_parts)?;
    Ok((indices, outcomes, targets))
}

/// Run one optimization step: pick the step's batch, mask it from the
/// step's own randomness substream, build targets, descend.
pub fn train_step(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    corpus: &[EncodedSentence],
    vocab: &Vocab,
    lexicon: &Lexicon,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepRecord, TrainError> {
    let (indices, outcomes, targets) = masked_batch(corpus, vocab, lexicon, cfg, step)?;
    let batch: Vec<SentenceInput> = indices
        .iter()
        .zip(&outcomes)
        .map(|(&i, o)| SentenceInput::masked(&corpus[i], o))
        .collect();
    let outcome_refs: Vec<&MaskingOutcome> = outcomes.iter().collect();
    let seq_len = corpus[indices[0]].token_ids.len();
    let masked_rows = flat_masked_rows(&outcome_refs, seq_len);

    let (loss, grads) = loss_and_grads(params, &batch, &masked_rows, &targets, cfg.loss_mode)?;
    opt.apply(params, &grads, cfg)?;
    Ok(StepRecord {
        step,
        loss,
        mode: cfg.loss_mode,
        masked_positions: masked_rows.len(),
    })
}

/// Steps `start_step .. cfg.steps`, reporting each step to `on_step`.
pub fn train_loop(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    corpus: &[EncodedSentence],
    vocab: &Vocab,
    lexicon: &Lexicon,
    cfg: &TrainConfig,
    start_step: usize,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<(), TrainError> {
    cfg.validate()?;
    for step in start_step..cfg.steps {
        let record = train_step(params, opt, corpus, vocab, lexicon, cfg, step)?;
        on_step(&record);
    }
    Ok(())
}

/// Result of comparing analytic gradients against central finite
/// differences, element by element.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error seen, with `max(|a|, |b|, 1e-8)` in the
    /// denominator.
    pub worst: f64,
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub elements_checked: usize,
}

/// Check every parameter element of a model against central differences on
/// a fixed batch. `h` is the probe half-width; use small models — the cost
/// is two forward passes per element.
///
/// The relative-error denominator is floored at 1e-5: well below every
/// live gradient pathway of a healthy-scale model (see
/// [`ModelParams::random_uniform`]), but far enough above the difference
/// oracle's own rounding noise (up to ~2e-10 at h = 1e-5 on the summed
/// binary loss, whose magnitude grows with the vocabulary) that
/// structurally gradient-free parameters compare cleanly as zero against
/// zero. The key-projection bias is such a parameter: it shifts every
/// attention score in a row equally, and row softmax ignores the shift.
/// Any defect that moves a gradient by more than 1e-9 still fails the
/// 1e-4 tolerance.
pub fn gradient_check(
    params: &ModelParams,
    batch: &[SentenceInput],
    masked_rows: &[usize],
    targets: &TargetMatrix,
    mode: LossMode,
    h: f64,
) -> Result<GradCheckReport, TrainError> {
    let (_, grads) = loss_and_grads(params, batch, masked_rows, targets, mode)?;
    let mut worst = 0.0f64;
    let mut worst_param = String::new();
    let mut worst_pair = (0.0, 0.0);
    let mut checked = 0usize;
    for (name, g) in &grads {
        for e in 0..g.numel() {
            let probe = |delta: f64| -> Result<f64, TrainError> {
                let mut p = params.clone();
                for (n, t) in p.named_mut() {
                    if &n == name {
                        t.data_mut()[e] += delta;
                    }
                }
                loss_value(&p, batch, masked_rows, targets, mode)
            };
            let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
            let analytic = g.data()[e];
            let denom = analytic.abs().max(numeric.abs()).max(1e-5);
            let rel = (analytic - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
                worst_param = format!("{name}[{e}]");
                worst_pair = (analytic, numeric);
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        worst,
        worst_param,
        worst_analytic: worst_pair.0,
        worst_numeric: worst_pair.1,
        elements_checked: checked,
    })
}
