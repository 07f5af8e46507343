//! Transformer encoder for masked-word prediction, with optional
//! lexicon-group input augmentation.
//!
//! The input embedding of a position is the sum of its word, position, and
//! segment vectors. When augmentation is enabled and the position's word
//! carries a semantic group, the group's vector is added on top before the
//! embedding layer norm; positions without a group add nothing — a sentence
//! with no lexicon word takes exactly the baseline code path, so its
//! encoding is bit-for-bit identical with augmentation on or off.
//!
//! Output logits are tied to the input word table: `logits = H · E + b`,
//! where the columns of `E` are the word vectors used on the way in.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::{Tensor, TensorError};
use crate::tokenizer::{EncodedSentence, MaskingOutcome};

/// Additive attention-mask value for padded key positions. Large enough
/// that `exp` underflows to exactly zero after the row-max shift, so padded
/// keys get exactly zero attention weight.
pub const ATTENTION_MASK_VALUE: f64 = -1e30;

/// Standard deviation of the truncated-normal weight initialisation.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Architecture hyperparameters. The defaults are desk-scale: small enough
/// to train in minutes on a CPU while still being a real multi-layer,
/// multi-head encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Vocabulary size including the four reserved ids.
    pub vocab_size: usize,
    /// Number of semantic groups in the lexicon.
    pub group_count: usize,
    /// Hidden width `d`.
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_seq_len: usize,
    /// Add semantic-group vectors to the input embeddings of lexicon words.
    pub augment_inputs: bool,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize, group_count: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            group_count,
            dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 256,
            max_seq_len: 32,
            augment_inputs: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size <= crate::tokenizer::RESERVED_TOKENS.len() {
            return Err(ModelError::Config(format!(
                "vocab_size {} leaves no room for real words",
                self.vocab_size
            )));
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.layers == 0 || self.ff_dim == 0 || self.max_seq_len < 2 {
            return Err(ModelError::Config(
                "layers, ff_dim, and max_seq_len must allow at least [CLS] plus one word"
                    .to_string(),
            ));
        }
        Ok(())
    }
}

/// Weights of one encoder layer. Projection matrices are stored so that
/// activations multiply on the left: `out = h · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

/// All model weights plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Word table `[dim, vocab_size]`; column `j` is the vector of word `j`,
    /// shared between input embedding and output logits.
    pub token_table: Tensor,
    /// `[max_seq_len, dim]`, one row per position.
    pub position_table: Tensor,
    /// `[2, dim]`, one row per segment.
    pub segment_table: Tensor,
    /// Semantic-group table `[dim, group_count]`; column `g` is the vector
    /// added to lexicon words of group `g`.
    pub group_table: Tensor,
    pub embed_ln_gain: Tensor,
    pub embed_ln_bias: Tensor,
    pub layers: Vec<LayerParams>,
    /// Output bias `[vocab_size]` for the tied logits.
    pub mlm_bias: Tensor,
}

fn truncated_normal(shape: &[usize], rng: &mut ChaCha20Rng) -> Tensor {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let x: f64 = normal.sample(rng);
        if x.abs() <= 2.0 * INIT_STD {
            data.push(x);
        }
    }
    Tensor::from_vec(shape, data).expect("length matches shape")
}

impl ModelParams {
    /// Fresh weights: truncated normal for tables and projections, ones for
    /// layer-norm gains, zeros for every bias. Filling order is fixed, so
    /// one seed always produces the same weights.
    pub fn init(config: ModelConfig, master_seed: u64) -> Result<ModelParams, ModelError> {
        config.validate()?;
        let mut r = rng::stream(master_seed, "init", 0);
        let d = config.dim;
        let token_table = truncated_normal(&[d, config.vocab_size], &mut r);
        let position_table = truncated_normal(&[config.max_seq_len, d], &mut r);
        let segment_table = truncated_normal(&[2, d], &mut r);
        let group_table = truncated_normal(&[d, config.group_count], &mut r);
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(LayerParams {
                wq: truncated_normal(&[d, d], &mut r),
                bq: Tensor::zeros(&[d]),
                wk: truncated_normal(&[d, d], &mut r),
                bk: Tensor::zeros(&[d]),
                wv: truncated_normal(&[d, d], &mut r),
                bv: Tensor::zeros(&[d]),
                wo: truncated_normal(&[d, d], &mut r),
                bo: Tensor::zeros(&[d]),
                ln1_gain: Tensor::filled(&[d], 1.0),
                ln1_bias: Tensor::zeros(&[d]),
                w1: truncated_normal(&[d, config.ff_dim], &mut r),
                b1: Tensor::zeros(&[config.ff_dim]),
                w2: truncated_normal(&[config.ff_dim, d], &mut r),
                b2: Tensor::zeros(&[d]),
                ln2_gain: Tensor::filled(&[d], 1.0),
                ln2_bias: Tensor::zeros(&[d]),
            });
        }
        Ok(ModelParams {
            token_table,
            position_table,
            segment_table,
            group_table,
            embed_ln_gain: Tensor::filled(&[d], 1.0),
            embed_ln_bias: Tensor::zeros(&[d]),
            layers,
            mlm_bias: Tensor::zeros(&[config.vocab_size]),
            config,
        })
    }

    /// Weights drawn uniformly from `[-scale, scale]` (layer-norm gains
    /// centred on 1). Not a training initialisation: at the trained-model
    /// scale the attention softmaxes start out nearly uniform and some
    /// projection gradients sit below finite-difference noise, so gradient
    /// checking uses this instead — a scale around 0.25 keeps every
    /// gradient pathway well away from both uniformity and saturation.
    pub fn random_uniform(
        config: ModelConfig,
        master_seed: u64,
        scale: f64,
    ) -> Result<ModelParams, ModelError> {
        let mut params = ModelParams::init(config, master_seed)?;
        let mut r = rng::stream(master_seed, "init", 1);
        for (name, t) in params.named_mut() {
            let centre = if name.contains("gain") { 1.0 } else { 0.0 };
            for x in t.data_mut() {
                *x = centre + r.gen_range(-scale..scale);
            }
        }
        Ok(params)
    }

    /// Stable `(name, tensor)` listing used by the optimizer and the
    /// checkpoint format.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("token_table".into(), &self.token_table),
            ("position_table".into(), &self.position_table),
            ("segment_table".into(), &self.segment_table),
            ("group_table".into(), &self.group_table),
            ("embed_ln_gain".into(), &self.embed_ln_gain),
            ("embed_ln_bias".into(), &self.embed_ln_bias),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (field, t) in layer_fields(l) {
                out.push((format!("layer{i}.{field}"), t));
            }
        }
        out.push(("mlm_bias".into(), &self.mlm_bias));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("token_table".into(), &mut self.token_table),
            ("position_table".into(), &mut self.position_table),
            ("segment_table".into(), &mut self.segment_table),
            ("group_table".into(), &mut self.group_table),
            ("embed_ln_gain".into(), &mut self.embed_ln_gain),
            ("embed_ln_bias".into(), &mut self.embed_ln_bias),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (field, t) in layer_fields_mut(l) {
                out.push((format!("layer{i}.{field}"), t));
            }
        }
        out.push(("mlm_bias".into(), &mut self.mlm_bias));
        out
    }
}

fn layer_fields(l: &LayerParams) -> Vec<(&'static str, &Tensor)> {
    vec![
        ("wq", &l.wq),
        ("bq", &l.bq),
        ("wk", &l.wk),
        ("bk", &l.bk),
        ("wv", &l.wv),
        ("bv", &l.bv),
        ("wo", &l.wo),
        ("bo", &l.bo),
        ("ln1_gain", &l.ln1_gain),
        ("ln1_bias", &l.ln1_bias),
        ("w1", &l.w1),
        ("b1", &l.b1),
        ("w2", &l.w2),
        ("b2", &l.b2),
        ("ln2_gain", &l.ln2_gain),
        ("ln2_bias", &l.ln2_bias),
    ]
}

fn layer_fields_mut(l: &mut LayerParams) -> Vec<(&'static str, &mut Tensor)> {
    vec![
        ("wq", &mut l.wq),
        ("bq", &mut l.bq),
        ("wk", &mut l.wk),
        ("bk", &mut l.bk),
        ("wv", &mut l.wv),
        ("bv", &mut l.bv),
        ("wo", &mut l.wo),
        ("bo", &mut l.bo),
        ("ln1_gain", &mut l.ln1_gain),
        ("ln1_bias", &mut l.ln1_bias),
        ("w1", &mut l.w1),
        ("b1", &mut l.b1),
        ("w2", &mut l.w2),
        ("b2", &mut l.b2),
        ("ln2_gain", &mut l.ln2_gain),
        ("ln2_bias", &mut l.ln2_bias),
    ]
}

/// Tape handles for one layer's weights.
#[derive(Debug, Clone)]
pub struct LayerNodes {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
    pub ln1_gain: NodeId,
    pub ln1_bias: NodeId,
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub ln2_gain: NodeId,
    pub ln2_bias: NodeId,
}

/// Tape handles for all weights, plus derived nodes shared by every
/// sentence of a batch (the transposed word table and the group-row table
/// with its trailing all-zero "no group" row).
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub token_table: NodeId,
    pub position_table: NodeId,
    pub segment_table: NodeId,
    pub group_table: NodeId,
    pub embed_ln_gain: NodeId,
    pub embed_ln_bias: NodeId,
    pub layers: Vec<LayerNodes>,
    pub mlm_bias: NodeId,
    /// `transpose(token_table)`: `[vocab_size, dim]`, one row per word.
    pub token_rows: NodeId,
    /// `[group_count + 1, dim]`; row `group_count` is constant zero and is
    /// gathered by positions that carry no group.
    pub group_rows: NodeId,
}

impl ParamNodes {
    /// Copy all weights onto a fresh tape for one forward/backward pass.
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Result<ParamNodes, ModelError> {
        let token_table = tape.parameter(params.token_table.clone());
        let position_table = tape.parameter(params.position_table.clone());
        let segment_table = tape.parameter(params.segment_table.clone());
        let group_table = tape.parameter(params.group_table.clone());
        let embed_ln_gain = tape.parameter(params.embed_ln_gain.clone());
        let embed_ln_bias = tape.parameter(params.embed_ln_bias.clone());
        let mut layers = Vec::with_capacity(params.layers.len());
        for l in &params.layers {
            layers.push(LayerNodes {
                wq: tape.parameter(l.wq.clone()),
                bq: tape.parameter(l.bq.clone()),
                wk: tape.parameter(l.wk.clone()),
                bk: tape.parameter(l.bk.clone()),
                wv: tape.parameter(l.wv.clone()),
                bv: tape.parameter(l.bv.clone()),
                wo: tape.parameter(l.wo.clone()),
                bo: tape.parameter(l.bo.clone()),
                ln1_gain: tape.parameter(l.ln1_gain.clone()),
                ln1_bias: tape.parameter(l.ln1_bias.clone()),
                w1: tape.parameter(l.w1.clone()),
                b1: tape.parameter(l.b1.clone()),
                w2: tape.parameter(l.w2.clone()),
                b2: tape.parameter(l.b2.clone()),
                ln2_gain: tape.parameter(l.ln2_gain.clone()),
                ln2_bias: tape.parameter(l.ln2_bias.clone()),
            });
        }
        let mlm_bias = tape.parameter(params.mlm_bias.clone());
        let token_rows = tape.transpose(token_table)?;
        let group_rows = {
            let gt = tape.transpose(group_table)?;
            let zero = tape.constant(Tensor::zeros(&[1, params.config.dim]));
            tape.concat_rows(&[gt, zero])?
        };
        Ok(ParamNodes {
            token_table,
            position_table,
            segment_table,
            group_table,
            embed_ln_gain,
            embed_ln_bias,
            layers,
            mlm_bias,
            token_rows,
            group_rows,
        })
    }

    /// `(name, node)` in the same order as [`ModelParams::named`].
    pub fn named(&self) -> Vec<(String, NodeId)> {
        let mut out: Vec<(String, NodeId)> = vec![
            ("token_table".into(), self.token_table),
            ("position_table".into(), self.position_table),
            ("segment_table".into(), self.segment_table),
            ("group_table".into(), self.group_table),
            ("embed_ln_gain".into(), self.embed_ln_gain),
            ("embed_ln_bias".into(), self.embed_ln_bias),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (field, id) in [
                ("wq", l.wq),
                ("bq", l.bq),
                ("wk", l.wk),
                ("bk", l.bk),
                ("wv", l.wv),
                ("bv", l.bv),
                ("wo", l.wo),
                ("bo", l.bo),
                ("ln1_gain", l.ln1_gain),
                ("ln1_bias", l.ln1_bias),
                ("w1", l.w1),
                ("b1", l.b1),
                ("w2", l.w2),
                ("b2", l.b2),
                ("ln2_gain", l.ln2_gain),
                ("ln2_bias", l.ln2_bias),
            ] {
                out.push((format!("layer{i}.{field}"), id));
            }
        }
        out.push(("mlm_bias".into(), self.mlm_bias));
        out
    }
}

/// Per-position input for one sentence, borrowed from an encoding and an
/// optional masking outcome.
#[derive(Debug, Clone, Copy)]
pub struct SentenceInput<'a> {
    pub input_ids: &'a [usize],
    pub segment_ids: &'a [usize],
    pub group_ids: &'a [Option<usize>],
    pub attention_len: usize,
}

impl<'a> SentenceInput<'a> {
    /// The sentence exactly as encoded, nothing hidden.
    pub fn unmasked(e: &'a EncodedSentence) -> SentenceInput<'a> {
        SentenceInput {
            input_ids: &e.token_ids,
            segment_ids: &e.segment_ids,
            group_ids: &e.group_ids,
            attention_len: e.attention_len,
        }
    }

    /// The sentence with its masking applied. Group and segment ids are the
    /// original sentence's: a hidden lexicon word keeps its group vector.
    pub fn masked(e: &'a EncodedSentence, o: &'a MaskingOutcome) -> SentenceInput<'a> {
        SentenceInput {
            input_ids: &o.input_ids,
            segment_ids: &e.segment_ids,
            group_ids: &e.group_ids,
            attention_len: e.attention_len,
        }
    }
}

/// Sum word, position, and segment vectors per position — plus the group
/// vector where augmentation applies — then layer-normalise.
pub fn input_embed(
    tape: &mut Tape,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    input: &SentenceInput,
) -> Result<NodeId, ModelError> {
    let s = input.input_ids.len();
    if s == 0 || s != input.segment_ids.len() || s != input.group_ids.len() {
        return Err(ModelError::Config(format!(
            "inconsistent sentence: {} ids, {} segment ids, {} group ids",
            s,
            input.segment_ids.len(),
            input.group_ids.len()
        )));
    }
    let tok = tape.gather_rows(nodes.token_rows, input.input_ids)?;
    let positions: Vec<usize> = (0..s).collect();
    let pos = tape.gather_rows(nodes.position_table, &positions)?;
    let seg = tape.gather_rows(nodes.segment_table, input.segment_ids)?;
    let mut sum = tape.add(tok, pos)?;
    sum = tape.add(sum, seg)?;
    if cfg.augment_inputs && input.group_ids.iter().any(Option::is_some) {
        let indices: Vec<usize> = input
            .group_ids
            .iter()
            .map(|g| g.unwrap_or(cfg.group_count))
            .collect();
        let groups = tape.gather_rows(nodes.group_rows, &indices)?;
        sum = tape.add(sum, groups)?;
    }
    Ok(tape.layer_norm(sum, nodes.embed_ln_gain, nodes.embed_ln_bias)?)
}

fn attention_mask(seq_len: usize, attention_len: usize) -> Tensor {
    let mut m = Tensor::zeros(&[seq_len, seq_len]);
    for r in 0..seq_len {
        for c in attention_len..seq_len {
            m.set2(r, c, ATTENTION_MASK_VALUE);
        }
    }
    m
}

/// Run the encoder stack over one embedded sentence. Keys at padded
/// positions are masked out of every softmax. Returns the hidden states
/// after each layer; the last entry feeds the output logits.
pub fn encoder_forward(
    tape: &mut Tape,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    u: NodeId,
    attention_len: usize,
) -> Result<Vec<NodeId>, ModelError> {
    let s = tape.value(u).rows();
    let mask = tape.constant(attention_mask(s, attention_len));
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut h = u;
    let mut per_layer = Vec::with_capacity(cfg.layers);
    for layer in &nodes.layers {
        let q = tape.matmul(h, layer.wq)?;
        let q = tape.add_row(q, layer.bq)?;
        let k = tape.matmul(h, layer.wk)?;
        let k = tape.add_row(k, layer.bk)?;
        let v = tape.matmul(h, layer.wv)?;
        let v = tape.add_row(v, layer.bv)?;

        let mut heads = Vec::with_capacity(cfg.heads);
        for i in 0..cfg.heads {
            let qh = tape.slice_cols(q, i * dh, dh)?;
            let kh = tape.slice_cols(k, i * dh, dh)?;
            let vh = tape.slice_cols(v, i * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scaled = tape.scale(scores, scale);
            let masked = tape.add(scaled, mask)?;
            let probs = tape.softmax_rows(masked)?;
            heads.push(tape.matmul(probs, vh)?);
        }
        let ctx = tape.concat_cols(&heads)?;
        let attn = tape.matmul(ctx, layer.wo)?;
        let attn = tape.add_row(attn, layer.bo)?;
        let res = tape.add(h, attn)?;
        h = tape.layer_norm(res, layer.ln1_gain, layer.ln1_bias)?;

        let ff = tape.matmul(h, layer.w1)?;
        let ff = tape.add_row(ff, layer.b1)?;
        let act = tape.gelu(ff);
        let ff2 = tape.matmul(act, layer.w2)?;
        let ff2 = tape.add_row(ff2, layer.b2)?;
        let res2 = tape.add(h, ff2)?;
        h = tape.layer_norm(res2, layer.ln2_gain, layer.ln2_bias)?;
        per_layer.push(h);
    }
    Ok(per_layer)
}

/// Tied output logits for a block of hidden states: `H · E + b`.
pub fn mlm_logits(
    tape: &mut Tape,
    nodes: &ParamNodes,
    hidden: NodeId,
) -> Result<NodeId, ModelError> {
    let raw = tape.matmul(hidden, nodes.token_table)?;
    Ok(tape.add_row(raw, nodes.mlm_bias)?)
}

/// Everything a loss or probe needs from one batch forward pass. Sentence
/// `i` occupies rows `i * seq_len .. (i + 1) * seq_len` of `hidden` and
/// `logits`.
#[derive(Debug)]
pub struct ForwardTrace {
    /// Per-sentence embedded input, after the embedding layer norm.
    pub input_embeddings: Vec<NodeId>,
    /// Per-sentence hidden states after each encoder layer.
    pub layer_hidden: Vec<Vec<NodeId>>,
    /// `[batch * seq_len, dim]`, all sentences stacked.
    pub hidden: NodeId,
    /// `[batch * seq_len, vocab_size]`.
    pub logits: NodeId,
    pub seq_len: usize,
}

/// Embed and encode a batch of sentences and compute their logits.
pub fn forward_batch(
    tape: &mut Tape,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    batch: &[SentenceInput],
) -> Result<ForwardTrace, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Config("empty batch".to_string()));
    }
    let seq_len = batch[0].input_ids.len();
    let mut input_embeddings = Vec::with_capacity(batch.len());
    let mut layer_hidden = Vec::with_capacity(batch.len());
    let mut finals = Vec::with_capacity(batch.len());
    for input in batch {
        if input.input_ids.len() != seq_len {
            return Err(ModelError::Config(format!(
                "ragged batch: sentence of length {} in a batch of length {}",
                input.input_ids.len(),
                seq_len
            )));
        }
        let u = input_embed(tape, nodes, cfg, input)?;
        input_embeddings.push(u);
        let states = encoder_forward(tape, nodes, cfg, u, input.attention_len)?;
        finals.push(*states.last().expect("at least one layer"));
        layer_hidden.push(states);
    }
    let hidden = tape.concat_rows(&finals)?;
    let logits = mlm_logits(tape, nodes, hidden)?;
    Ok(ForwardTrace {
        input_embeddings,
        layer_hidden,
        hidden,
        logits,
        seq_len,
    })
}
