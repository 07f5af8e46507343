//! Reads a trained model back as data: nearest-neighbor tables over the
//! word-embedding space, semantic-group cluster quality, synonym-pair
//! similarity, a deterministic 2-D projection for plotting, and a small
//! token-classification fine-tune probe.
//!
//! Analyses run in one of two vector spaces. `InputTable` is the raw token
//! embedding table: one context-free vector per word. `AugmentedInput` adds
//! the word's semantic-group column on top, mirroring what the encoder sees
//! at its input (minus position and segment terms, which do not depend on
//! the word). Words outside the lexicon have identical vectors in both
//! spaces.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::model::{
    forward_batch, ModelError, ModelParams, ParamNodes, SentenceInput, INIT_STD,
};
use crate::rng::stream;
use crate::tape::Tape;
use crate::tensor::{cosine_similarity, Tensor, TensorError};
use crate::tokenizer::{encode, EncodedSentence, TokenizerError, Vocab};
use crate::training::{epoch_order, AdamSlot, LossMode, OptimizerState, TrainConfig, TrainError};

/// Power-iteration budget for each principal component. Fixed rather than
/// tolerance-driven so two runs on the same input execute the same
/// arithmetic and produce bit-identical projections.
const POWER_ITERATIONS: usize = 300;

/// Sentences per fine-tuning step and per evaluation forward pass.
const FINETUNE_BATCH: usize = 8;

/// Every n-th tagged sentence is held out of fine-tuning for scoring.
const HELD_OUT_EVERY: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unknown embedding space {0:?}; expected \"input_table\" or \"augmented_input\"")]
    UnknownSpace(String),
    #[error("need at least two groups with two or more vocabulary members, found {usable}")]
    TooFewGroups { usable: usize },
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("all points are identical; there is no plane to project onto")]
    DegeneratePoints,
    #[error("{vectors} vectors but {labels} labels")]
    LabelCount { vectors: usize, labels: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("line {line}: token {token:?} is not of the form word/TAG")]
    BadTaggedToken { line: usize, token: String },
    #[error("tag id {id} out of range for a tag set of {count}")]
    UnknownTag { id: usize, count: usize },
    #[error("sentence {sentence} has {words} words but {tags} tags")]
    RaggedTags {
        sentence: usize,
        words: usize,
        tags: usize,
    },
    #[error("need at least {need} tagged sentences to hold some out, got {got}")]
    TooFewSentences { need: usize, got: usize },
    #[error("no word pairs to score")]
    EmptyPairs,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which vector stands in for a word during analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingSpace {
    /// The word's column of the token embedding table, untouched.
    #[serde(rename = "input_table")]
    InputTable,
    /// The token column plus the column of the word's semantic group, for
    /// words the lexicon covers; identical to `InputTable` for the rest.
    #[serde(rename = "augmented_input")]
    AugmentedInput,
}

impl EmbeddingSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSpace::InputTable => "input_table",
            EmbeddingSpace::AugmentedInput => "augmented_input",
        }
    }
}

impl FromStr for EmbeddingSpace {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<EmbeddingSpace, EvalError> {
        match s {
            "input" | "input-table" | "input_table" => Ok(EmbeddingSpace::InputTable),
            "augmented" | "augmented-input" | "augmented_input" => {
                Ok(EmbeddingSpace::AugmentedInput)
            }
            other => Err(EvalError::UnknownSpace(other.to_string())),
        }
    }
}

/// The vector for a vocabulary word in the chosen space.
///
/// The query is lowercased first, matching how the vocabulary stores words.
pub fn word_vector(
    params: &ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    word: &str,
    space: EmbeddingSpace,
) -> Result<Vec<f64>, EvalError> {
    let word = word.to_lowercase();
    let id = vocab
        .id(&word)
        .ok_or_else(|| EvalError::UnknownWord(word.clone()))?;
    Ok(vector_for_id(params, vocab, lexicon, id, space))
}

fn vector_for_id(
    params: &ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    id: usize,
    space: EmbeddingSpace,
) -> Vec<f64> {
    let d = params.config.dim;
    let mut v: Vec<f64> = (0..d).map(|r| params.token_table.get2(r, id)).collect();
    if space == EmbeddingSpace::AugmentedInput {
        if let Some(g) = lexicon.group_of(vocab.token(id)) {
            for (r, x) in v.iter_mut().enumerate() {
                *x += params.group_table.get2(r, g);
            }
        }
    }
    v
}

/// One ranked neighbor of a query word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub word: String,
    pub cosine: f64,
}

/// Top-k most similar vocabulary words to a query, by cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborReport {
    pub query: String,
    pub space: EmbeddingSpace,
    pub neighbors: Vec<Neighbor>,
}

/// Rank every other vocabulary word by cosine similarity to `word`.
///
/// Similarities are clamped to `[-1, 1]` and sorted descending; exact ties
/// fall back to lexicographic word order so the ranking is deterministic.
/// The query itself never appears in its own list, and the reserved tokens
/// are not words, so they are never candidates.
pub fn nearest_neighbors(
    params: &ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    word: &str,
    k: usize,
    space: EmbeddingSpace,
) -> Result<NeighborReport, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let query = word.to_lowercase();
    let qid = vocab
        .id(&query)
        .ok_or_else(|| EvalError::UnknownWord(query.clone()))?;
    let qv = vector_for_id(params, vocab, lexicon, qid, space);
    let mut neighbors = Vec::new();
    for (id, w) in vocab.words() {
        if id == qid {
            continue;
        }
        let v = vector_for_id(params, vocab, lexicon, id, space);
        let cosine = cosine_similarity(&qv, &v).clamp(-1.0, 1.0);
        neighbors.push(Neighbor {
            word: w.to_string(),
            cosine,
        });
    }
    neighbors.sort_by(|a, b| {
        b.cosine
            .partial_cmp(&a.cosine)
            .expect("similarities are finite")
            .then_with(|| a.word.cmp(&b.word))
    });
    neighbors.truncate(k);
    Ok(NeighborReport {
        query,
        space,
        neighbors,
    })
}

/// Mean silhouette of one semantic group's member words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group: String,
    pub mean_silhouette: f64,
    pub size: usize,
}

/// A group left out of the silhouette because it has fewer than two
/// vocabulary members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub group: String,
    pub size: usize,
}

/// How cleanly the word vectors cluster by semantic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub space: EmbeddingSpace,
    pub overall: f64,
    pub groups: Vec<GroupScore>,
    pub skipped: Vec<SkippedGroup>,
}

/// Per-point silhouette scores under cosine distance `1 - cos`.
///
/// `labels[i]` is the cluster of `vectors[i]`. Every cluster must have at
/// least two members and there must be at least two clusters; callers
/// enforce that, and this function panics otherwise. For point `i`,
/// `a` is the mean distance to the rest of its own cluster, `b` the
/// smallest mean distance to any other cluster, and the score is
/// `(b - a) / max(a, b)` — or `0` when both means are zero.
///
/// All sums run in ascending point order and clusters are visited in
/// ascending label order, so the result is reproducible to the bit.
pub fn silhouette_scores(vectors: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    assert_eq!(vectors.len(), labels.len(), "one label per vector");
    let n = vectors.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dist[i][j] = 1.0 - cosine_similarity(&vectors[i], &vectors[j]).clamp(-1.0, 1.0);
            }
        }
    }
    (0..n)
        .map(|i| {
            let mut own = (0.0, 0usize);
            let mut others: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let bucket = if labels[j] == labels[i] {
                    &mut own
                } else {
                    others.entry(labels[j]).or_insert((0.0, 0))
                };
                bucket.0 += dist[i][j];
                bucket.1 += 1;
            }
            assert!(own.1 >= 1, "every cluster needs at least two members");
            assert!(!others.is_empty(), "need at least two clusters");
            let a = own.0 / own.1 as f64;
            let b = others
                .values()
                .map(|&(sum, count)| sum / count as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect()
}

/// Silhouette of the vocabulary's lexicon words, clustered by semantic
/// group, in the chosen space.
///
/// Groups with fewer than two vocabulary members cannot be scored; they are
/// dropped from the point set entirely and listed in
/// [`ClusterReport::skipped`]. At least two scorable groups must remain.
pub fn group_silhouette(
    params: &ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    space: EmbeddingSpace,
) -> Result<ClusterReport, EvalError> {
    let mut labeled: Vec<(usize, usize)> = Vec::new();
    for (id, w) in vocab.words() {
        if let Some(g) = lexicon.group_of(w) {
            labeled.push((id, g));
        }
    }
    let mut sizes = vec![0usize; lexicon.group_count()];
    for &(_, g) in &labeled {
        sizes[g] += 1;
    }
    let usable: Vec<usize> = (0..sizes.len()).filter(|&g| sizes[g] >= 2).collect();
    let skipped: Vec<SkippedGroup> = (0..sizes.len())
        .filter(|&g| sizes[g] < 2)
        .map(|g| SkippedGroup {
            group: group_name(lexicon, g),
            size: sizes[g],
        })
        .collect();
    if usable.len() < 2 {
        return Err(EvalError::TooFewGroups {
            usable: usable.len(),
        });
    }
    let points: Vec<(usize, usize)> = labeled
        .into_iter()
        .filter(|&(_, g)| sizes[g] >= 2)
        .collect();
    let vectors: Vec<Vec<f64>> = points
        .iter()
        .map(|&(id, _)| vector_for_id(params, vocab, lexicon, id, space))
        .collect();
    let labels: Vec<usize> = points.iter().map(|&(_, g)| g).collect();
    let scores = silhouette_scores(&vectors, &labels);
    let overall = mean(&scores);
    let groups = usable
        .iter()
        .map(|&g| {
            let member_scores: Vec<f64> = scores
                .iter()
                .zip(&labels)
                .filter(|&(_, &l)| l == g)
                .map(|(&s, _)| s)
                .collect();
            GroupScore {
                group: group_name(lexicon, g),
                mean_silhouette: mean(&member_scores),
                size: sizes[g],
            }
        })
        .collect();
    Ok(ClusterReport {
        space,
        overall,
        groups,
        skipped,
    })
}

fn group_name(lexicon: &Lexicon, g: usize) -> String {
    lexicon
        .group_name(g)
        .expect("group id came from this lexicon")
        .to_string()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One labeled point of a 2-D projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// A mean-centered projection onto the top two principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    /// Unit-length principal axes in the original space, first then second.
    pub axes: [Vec<f64>; 2],
    /// Variance of the data along each axis.
    pub variance: [f64; 2],
}

/// Project labeled vectors onto their top two principal components.
///
/// Points are mean-centered first, so the projected cloud is centered on
/// the origin. Axes come from fixed-budget power iteration with deflation,
/// and each axis is flipped so its largest-magnitude loading is positive —
/// together that makes the output a pure function of the input, stable
/// across runs. If the data leaves no variance for a second axis (all
/// points collinear), the second coordinate collapses to zero rather than
/// failing.
pub fn project_2d(vectors: &[Vec<f64>], labels: &[String]) -> Result<Projection, EvalError> {
    if vectors.len() != labels.len() {
        return Err(EvalError::LabelCount {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    if vectors.len() < 3 {
        return Err(EvalError::TooFewPoints {
            need: 3,
            got: vectors.len(),
        });
    }
    let d = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(EvalError::DimensionMismatch {
                index: i,
                got: v.len(),
                expected: d,
            });
        }
    }
    if vectors.iter().all(|v| v == &vectors[0]) {
        return Err(EvalError::DegeneratePoints);
    }
    let n = vectors.len();
    let mut center = vec![0.0; d];
    for v in vectors {
        for (m, x) in center.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut center {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&center).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for v in &centered {
        for r in 0..d {
            for c in 0..d {
                cov[r][c] += v[r] * v[c];
            }
        }
    }
    for row in &mut cov {
        for x in row.iter_mut() {
            *x /= n as f64;
        }
    }
    let (mut axis1, lam1) = top_component(&cov);
    for r in 0..d {
        for c in 0..d {
            cov[r][c] -= lam1 * axis1[r] * axis1[c];
        }
    }
    let (mut axis2, _) = top_component(&cov);
    // Deflation leaves rounding-level leakage along the first axis; project
    // it out so the two axes are orthogonal to working precision.
    let drift: f64 = axis2.iter().zip(&axis1).map(|(a, b)| a * b).sum();
    for (x, y) in axis2.iter_mut().zip(&axis1) {
        *x -= drift * y;
    }
    normalize_or_zero(&mut axis2);
    fix_sign(&mut axis1);
    fix_sign(&mut axis2);
    let mut points = Vec::with_capacity(n);
    let mut variance = [0.0, 0.0];
    for (v, label) in centered.iter().zip(labels) {
        let x: f64 = v.iter().zip(&axis1).map(|(a, b)| a * b).sum();
        let y: f64 = v.iter().zip(&axis2).map(|(a, b)| a * b).sum();
        variance[0] += x * x;
        variance[1] += y * y;
        points.push(ProjectedPoint {
            label: label.clone(),
            x,
            y,
        });
    }
    variance[0] /= n as f64;
    variance[1] /= n as f64;
    Ok(Projection {
        points,
        axes: [axis1, axis2],
        variance,
    })
}

/// Leading eigenvector and eigenvalue of a symmetric PSD matrix by power
/// iteration. The start vector is the matrix's largest-norm column — a
/// deterministic choice that already lies in the range of the matrix, so
/// iteration cannot stall on a zero vector while any variance remains.
fn top_component(cov: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let d = cov.len();
    let mut best = 0;
    let mut best_norm = f64::NEG_INFINITY;
    for j in 0..d {
        let norm: f64 = (0..d).map(|r| cov[r][j] * cov[r][j]).sum();
        if norm > best_norm {
            best_norm = norm;
            best = j;
        }
    }
    let mut v: Vec<f64> = (0..d).map(|r| cov[r][best]).collect();
    if !normalize_or_zero(&mut v) {
        return (vec![0.0; d], 0.0);
    }
    for _ in 0..POWER_ITERATIONS {
        let mut w = matvec(cov, &v);
        if !normalize_or_zero(&mut w) {
            break;
        }
        v = w;
    }
    let cv = matvec(cov, &v);
    let lam: f64 = v.iter().zip(&cv).map(|(a, b)| a * b).sum();
    (v, lam)
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Scale to unit length in place; returns false (leaving zeros) for a
/// vector with no length to normalize.
fn normalize_or_zero(v: &mut [f64]) -> bool {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

/// Flip a vector so its largest-magnitude entry is positive. Ties keep the
/// earliest index, so the convention is deterministic.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Project every vocabulary word and render `word<TAB>group<TAB>x<TAB>y`
/// lines, one per word, for external plotting. Words outside the lexicon
/// get `-` as their group.
pub fn embedding_tsv(
    params: &ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    space: EmbeddingSpace,
) -> Result<String, EvalError> {
    let mut vectors = Vec::new();
    let mut words = Vec::new();
    let mut groups = Vec::new();
    for (id, w) in vocab.words() {
        vectors.push(vector_for_id(params, vocab, lexicon, id, space));
        words.push(w.to_string());
        groups.push(match lexicon.group_of(w) {
            Some(g) => group_name(lexicon, g),
            None => "-".to_string(),
        });
    }
    let projection = project_2d(&vectors, &words)?;
    let mut out = String::new();
    for (p, g) in projection.points.iter().zip(&groups) {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", p.label, g, p.x, p.y));
    }
    Ok(out)
}

/// Mean cosine similarity over a list of word pairs in the chosen space.
///
/// A pair of a word with itself contributes exactly `1.0`; other pairs
/// contribute their clamped cosine. Every word must be in the vocabulary.
pub fn synonym_similarity(
    params: &ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    pairs: &[(String, String)],
    space: EmbeddingSpace,
) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        let a = a.to_lowercase();
        let b = b.to_lowercase();
        let ia = vocab.id(&a).ok_or(EvalError::UnknownWord(a))?;
        let ib = vocab.id(&b).ok_or(EvalError::UnknownWord(b))?;
        if ia == ib {
            total += 1.0;
            continue;
        }
        let va = vector_for_id(params, vocab, lexicon, ia, space);
        let vb = vector_for_id(params, vocab, lexicon, ib, space);
        total += cosine_similarity(&va, &vb).clamp(-1.0, 1.0);
    }
    Ok(total / pairs.len() as f64)
}

/// One sentence with a tag id per word.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tag_ids: Vec<usize>,
}

/// A token-tagged corpus plus its tag set, ids in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
    pub tags: Vec<String>,
}

impl TaggedCorpus {
    /// Parse `word/TAG` tokens, one sentence per line, blank lines skipped.
    ///
    /// The split is on the last `/`, so words may contain slashes but tags
    /// may not. Words are lowercased to match the vocabulary; tags are kept
    /// verbatim.
    pub fn parse_str(text: &str) -> Result<TaggedCorpus, EvalError> {
        let mut tags: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut sentences = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut words = Vec::new();
            let mut tag_ids = Vec::new();
            for token in line.split_whitespace() {
                let bad = || EvalError::BadTaggedToken {
                    line: lineno + 1,
                    token: token.to_string(),
                };
                let (word, tag) = token.rsplit_once('/').ok_or_else(bad)?;
                if word.is_empty() || tag.is_empty() {
                    return Err(bad());
                }
                let id = match index.get(tag) {
                    Some(&id) => id,
                    None => {
                        tags.push(tag.to_string());
                        index.insert(tag.to_string(), tags.len() - 1);
                        tags.len() - 1
                    }
                };
                words.push(word.to_lowercase());
                tag_ids.push(id);
            }
            sentences.push(TaggedSentence { words, tag_ids });
        }
        Ok(TaggedCorpus { sentences, tags })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<TaggedCorpus, EvalError> {
        TaggedCorpus::parse_str(&fs::read_to_string(path)?)
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }
}

/// A single linear layer mapping hidden states to tag scores.
#[derive(Debug, Clone, PartialEq)]
pub struct NerHead {
    /// `[tag_count, dim]`: row t scores tag t.
    pub weight: Tensor,
    /// `[tag_count]`.
    pub bias: Tensor,
}

impl NerHead {
    /// Fresh head with the encoder's truncated-normal init and zero bias.
    pub fn init(tag_count: usize, dim: usize, master_seed: u64) -> NerHead {
        let mut rng = stream(master_seed, "head", 0);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut weight = Tensor::zeros(&[tag_count, dim]);
        for x in weight.data_mut() {
            *x = loop {
                let z: f64 = normal.sample(&mut rng);
                if z.abs() <= 2.0 * INIT_STD {
                    break z;
                }
            };
        }
        NerHead {
            weight,
            bias: Tensor::zeros(&[tag_count]),
        }
    }

    /// Tag scores for a matrix of hidden rows: `hidden · weightᵀ + bias`.
    pub fn scores(&self, hidden: &Tensor) -> Result<Tensor, TensorError> {
        let mut s = hidden.matmul(&self.weight.transpose()?)?;
        for r in 0..s.rows() {
            for (x, b) in s.row_mut(r).iter_mut().zip(self.bias.data()) {
                *x += b;
            }
        }
        Ok(s)
    }
}

/// Token-level score for one tag on the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagF1 {
    pub tag: String,
    pub f1: f64,
    /// How many held-out tokens truly carry this tag.
    pub support: usize,
}

/// Held-out quality of a fine-tuned token classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub accuracy: f64,
    pub per_tag: Vec<TagF1>,
    pub train_sentences: usize,
    pub held_out_sentences: usize,
    pub held_out_tokens: usize,
}

struct TaggedItem {
    enc: EncodedSentence,
    tags: Vec<usize>,
}

/// Fine-tune the encoder jointly with a fresh linear head to predict each
/// word's tag, then score on held-out sentences.
///
/// Every fifth sentence is held out; the rest are visited in a seeded
/// per-epoch shuffle, in batches, with cross-entropy over the tag scores
/// at word positions (never `[CLS]`, never padding). Encoder and head
/// share one Adam schedule. With `epochs = 0` the model is left untouched
/// and the randomly initialized head is scored as-is — a chance baseline.
///
/// Returns the head together with held-out token accuracy and token-level
/// per-tag F1 (no span matching; each token counts on its own).
pub fn finetune_token_classifier(
    params: &mut ModelParams,
    vocab: &Vocab,
    lexicon: &Lexicon,
    corpus: &TaggedCorpus,
    epochs: usize,
    lr: f64,
    master_seed: u64,
) -> Result<(NerHead, FinetuneReport), EvalError> {
    let tag_count = corpus.tag_count();
    for (si, s) in corpus.sentences.iter().enumerate() {
        if s.words.len() != s.tag_ids.len() {
            return Err(EvalError::RaggedTags {
                sentence: si,
                words: s.words.len(),
                tags: s.tag_ids.len(),
            });
        }
        for &t in &s.tag_ids {
            if t >= tag_count {
                return Err(EvalError::UnknownTag {
                    id: t,
                    count: tag_count,
                });
            }
        }
    }
    if corpus.sentences.len() < HELD_OUT_EVERY {
        return Err(EvalError::TooFewSentences {
            need: HELD_OUT_EVERY,
            got: corpus.sentences.len(),
        });
    }
    params.config.validate()?;
    let items: Vec<TaggedItem> = corpus
        .sentences
        .iter()
        .map(|s| {
            let enc = encode(&s.words.join(" "), vocab, lexicon, params.config.max_seq_len);
            let kept = enc.attention_len - 1;
            TaggedItem {
                enc,
                tags: s.tag_ids[..kept].to_vec(),
            }
        })
        .collect();
    let (held, train): (Vec<usize>, Vec<usize>) =
        (0..items.len()).partition(|i| (i + 1) % HELD_OUT_EVERY == 0);

    let mut head = NerHead::init(tag_count, params.config.dim, master_seed);
    let mut cfg = TrainConfig::desk(master_seed, LossMode::Ce);
    cfg.lr = lr;
    let mut opt = OptimizerState::new(params);
    let mut w_slot = AdamSlot::new(head.weight.shape());
    let mut b_slot = AdamSlot::new(head.bias.shape());

    for epoch in 0..epochs {
        let order = epoch_order(master_seed, epoch as u64, train.len());
        for chunk in order.chunks(FINETUNE_BATCH) {
            let batch: Vec<&TaggedItem> = chunk.iter().map(|&i| &items[train[i]]).collect();
            let (model_grads, wg, bg) = finetune_step(params, &head, &batch)?;
            opt.apply(params, &model_grads, &cfg)?;
            let t = opt.step as i32;
            w_slot.update(&mut head.weight, &wg, &cfg, t);
            b_slot.update(&mut head.bias, &bg, &cfg, t);
        }
    }

    let outcomes = predict(params, &head, &items, &held)?;
    let held_out_tokens = outcomes.len();
    let correct = outcomes.iter().filter(|(t, p)| t == p).count();
    let accuracy = correct as f64 / held_out_tokens as f64;
    let mut tp = vec![0usize; tag_count];
    let mut fp = vec![0usize; tag_count];
    let mut missed = vec![0usize; tag_count];
    let mut support = vec![0usize; tag_count];
    for &(truth, pred) in &outcomes {
        support[truth] += 1;
        if pred == truth {
            tp[truth] += 1;
        } else {
            fp[pred] += 1;
            missed[truth] += 1;
        }
    }
    let per_tag = (0..tag_count)
        .map(|t| {
            let precision_den = tp[t] + fp[t];
            let recall_den = tp[t] + missed[t];
            let precision = if precision_den == 0 {
                0.0
            } else {
                tp[t] as f64 / precision_den as f64
            };
            let recall = if recall_den == 0 {
                0.0
            } else {
                tp[t] as f64 / recall_den as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            TagF1 {
                tag: corpus.tags[t].clone(),
                f1,
                support: support[t],
            }
        })
        .collect();
    Ok((
        head,
        FinetuneReport {
            accuracy,
            per_tag,
            train_sentences: train.len(),
            held_out_sentences: held.len(),
            held_out_tokens,
        },
    ))
}

/// One joint gradient step's worth of work: forward the batch, score word
/// positions, and return gradients for the model and both head tensors.
fn finetune_step(
    params: &ModelParams,
    head: &NerHead,
    batch: &[&TaggedItem],
) -> Result<(Vec<(String, Tensor)>, Tensor, Tensor), EvalError> {
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let w_node = tape.parameter(head.weight.clone());
    let b_node = tape.parameter(head.bias.clone());
    let inputs: Vec<SentenceInput> = batch
        .iter()
        .map(|it| SentenceInput::unmasked(&it.enc))
        .collect();
    let trace = forward_batch(&mut tape, &nodes, &params.config, &inputs)?;
    let mut rows = Vec::new();
    let mut tags = Vec::new();
    for (i, it) in batch.iter().enumerate() {
        for p in it.enc.word_positions() {
            rows.push(i * trace.seq_len + p);
            tags.push(it.tags[p - 1]);
        }
    }
    let picked = tape.gather_rows(trace.hidden, &rows)?;
    let wt = tape.transpose(w_node)?;
    let scores = tape.matmul(picked, wt)?;
    let scores = tape.add_row(scores, b_node)?;
    let loss = tape.ce_loss(scores, &tags)?;
    let grads = tape.backward(loss)?;
    let mut model_grads = Vec::new();
    for (name, id) in nodes.named() {
        let g = grads
            .get(id)
            .ok_or_else(|| TrainError::MissingGradient(name.clone()))?;
        model_grads.push((name, g.clone()));
    }
    let wg = grads.get(w_node).expect("head weight is a parameter").clone();
    let bg = grads.get(b_node).expect("head bias is a parameter").clone();
    Ok((model_grads, wg, bg))
}

/// `(true tag, predicted tag)` for every word token of the given
/// sentences, predicted with the current encoder and head.
fn predict(
    params: &ModelParams,
    head: &NerHead,
    items: &[TaggedItem],
    idxs: &[usize],
) -> Result<Vec<(usize, usize)>, EvalError> {
    let mut out = Vec::new();
    for chunk in idxs.chunks(FINETUNE_BATCH) {
        let mut tape = Tape::new();
        let nodes = ParamNodes::register(&mut tape, params)?;
        let inputs: Vec<SentenceInput> = chunk
            .iter()
            .map(|&i| SentenceInput::unmasked(&items[i].enc))
            .collect();
        let trace = forward_batch(&mut tape, &nodes, &params.config, &inputs)?;
        let scores = head.scores(tape.value(trace.hidden))?;
        for (bi, &i) in chunk.iter().enumerate() {
            let it = &items[i];
            for p in it.enc.word_positions() {
                let row = scores.row(bi * trace.seq_len + p);
                let pred = argmax(row);
                out.push((it.tags[p - 1], pred));
            }
        }
    }
    Ok(out)
}

/// Index of the largest value; earliest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn lexicon() -> Lexicon {
        Lexicon::load_str(concat!(
            "lungs\tC0024109\tANATOMY\n",
            "lung\tC0024109\tANATOMY\n",
            "pulmonary\tC0024109\tANATOMY\n",
            "kidney\tC0022646\tANATOMY\n",
            "ren\tC0022646\tANATOMY\n",
            "mass\tC0577559\tDISORDER\n",
            "lump\tC0577559\tDISORDER\n",
        ))
        .unwrap()
    }

    fn vocab() -> Vocab {
        Vocab::build_from_lines(
            [
                "the lungs and the lung and pulmonary things",
                "kidney ren mass lump",
                "clear report noted today",
            ]
            .iter(),
        )
    }

    fn tiny_params(vocab: &Vocab, lex: &Lexicon) -> ModelParams {
        let mut cfg = ModelConfig::desk(vocab.len(), lex.group_count());
        cfg.dim = 4;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.ff_dim = 8;
        cfg.max_seq_len = 10;
        ModelParams::init(cfg, 11).unwrap()
    }

    fn set_word_vec(params: &mut ModelParams, id: usize, v: &[f64]) {
        for (r, &x) in v.iter().enumerate() {
            params.token_table.set2(r, id, x);
        }
    }

    fn set_group_vec(params: &mut ModelParams, g: usize, v: &[f64]) {
        for (r, &x) in v.iter().enumerate() {
            params.group_table.set2(r, g, x);
        }
    }

    #[test]
    fn augmented_space_shifts_only_lexicon_words() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        let plain = word_vector(&params, &vocab, &lex, "today", EmbeddingSpace::InputTable).unwrap();
        let plain_aug =
            word_vector(&params, &vocab, &lex, "today", EmbeddingSpace::AugmentedInput).unwrap();
        assert_eq!(plain, plain_aug);

        let base = word_vector(&params, &vocab, &lex, "lungs", EmbeddingSpace::InputTable).unwrap();
        let aug =
            word_vector(&params, &vocab, &lex, "lungs", EmbeddingSpace::AugmentedInput).unwrap();
        let g = lex.group_of("lungs").unwrap();
        for r in 0..4 {
            assert_eq!(aug[r], base[r] + params.group_table.get2(r, g));
        }
    }

    #[test]
    fn neighbors_rank_by_cosine_and_exclude_the_query() {
        let (vocab, lex) = (vocab(), lexicon());
        let mut params = tiny_params(&vocab, &lex);
        let id = |w: &str| vocab.id(w).unwrap();
        set_word_vec(&mut params, id("lungs"), &[1.0, 0.0, 0.0, 0.0]);
        set_word_vec(&mut params, id("lung"), &[0.9, 0.1, 0.0, 0.0]);
        set_word_vec(&mut params, id("pulmonary"), &[0.0, 1.0, 0.0, 0.0]);
        set_word_vec(&mut params, id("kidney"), &[-1.0, 0.0, 0.0, 0.0]);

        let report =
            nearest_neighbors(&params, &vocab, &lex, "LUNGS", 3, EmbeddingSpace::InputTable)
                .unwrap();
        assert_eq!(report.query, "lungs");
        assert_eq!(report.neighbors[0].word, "lung");
        assert!(report.neighbors.iter().all(|n| n.word != "lungs"));
        assert!(report
            .neighbors
            .windows(2)
            .all(|w| w[0].cosine >= w[1].cosine));
        assert!(report
            .neighbors
            .iter()
            .all(|n| (-1.0..=1.0).contains(&n.cosine)));

        let full =
            nearest_neighbors(&params, &vocab, &lex, "lungs", 100, EmbeddingSpace::InputTable)
                .unwrap();
        assert_eq!(full.neighbors.last().unwrap().word, "kidney");
        assert_relative_eq!(full.neighbors.last().unwrap().cosine, -1.0);
    }

    #[test]
    fn unknown_query_word_is_an_error() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        let err = nearest_neighbors(&params, &vocab, &lex, "zzz", 3, EmbeddingSpace::InputTable)
            .unwrap_err();
        assert!(matches!(err, EvalError::UnknownWord(w) if w == "zzz"));
    }

    #[test]
    fn neighbor_ranking_survives_global_scaling() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        let before =
            nearest_neighbors(&params, &vocab, &lex, "mass", 50, EmbeddingSpace::InputTable)
                .unwrap();
        let mut scaled = params.clone();
        for x in scaled.token_table.data_mut() {
            *x *= 7.0;
        }
        let after =
            nearest_neighbors(&scaled, &vocab, &lex, "mass", 50, EmbeddingSpace::InputTable)
                .unwrap();
        let words = |r: &NeighborReport| r.neighbors.iter().map(|n| n.word.clone()).collect::<Vec<_>>();
        assert_eq!(words(&before), words(&after));
        for (a, b) in before.neighbors.iter().zip(&after.neighbors) {
            assert_relative_eq!(a.cosine, b.cosine, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 1..8),
            scale in 0.1f64..100.0,
        ) {
            let b: Vec<f64> = a.iter().rev().map(|x| x * 0.5 + 1.0).collect();
            prop_assert_eq!(cosine_similarity(&a, &b), cosine_similarity(&b, &a));
            let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
            let lhs = cosine_similarity(&scaled, &b);
            let rhs = cosine_similarity(&a, &b);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn orthogonal_duplicate_clusters_score_a_perfect_silhouette() {
        let (vocab, lex) = (vocab(), lexicon());
        let mut params = tiny_params(&vocab, &lex);
        let id = |w: &str| vocab.id(w).unwrap();
        // Two tight groups on orthogonal axes; the other lexicon words are
        // parked on a third axis so they do not blur the picture.
        for w in ["lungs", "lung", "pulmonary", "kidney", "ren"] {
            set_word_vec(&mut params, id(w), &[1.0, 0.0, 0.0, 0.0]);
        }
        for w in ["mass", "lump"] {
            set_word_vec(&mut params, id(w), &[0.0, 1.0, 0.0, 0.0]);
        }
        let report = group_silhouette(&params, &vocab, &lex, EmbeddingSpace::InputTable).unwrap();
        assert_eq!(report.overall, 1.0);
        for g in &report.groups {
            assert_eq!(g.mean_silhouette, 1.0);
        }
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn single_member_groups_are_skipped_and_reported() {
        let lex = Lexicon::load_str(concat!(
            "lungs\tC0024109\tANATOMY\n",
            "lung\tC0024109\tANATOMY\n",
            "mass\tC0577559\tDISORDER\n",
            "lump\tC0577559\tDISORDER\n",
            "aspirin\tC0004057\tCHEMICAL\n",
        ))
        .unwrap();
        let vocab = vocab();
        let params = {
            let mut cfg = ModelConfig::desk(vocab.len(), lex.group_count());
            cfg.dim = 4;
            cfg.layers = 1;
            cfg.heads = 2;
            cfg.ff_dim = 8;
            ModelParams::init(cfg, 3).unwrap()
        };
        // "aspirin" is not even in the vocabulary, so CHEMICAL has zero
        // usable members and must be skipped, not scored.
        let report = group_silhouette(&params, &vocab, &lex, EmbeddingSpace::InputTable).unwrap();
        assert_eq!(report.groups.len(), 2);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].group, "CHEMICAL");
        assert_eq!(report.skipped[0].size, 0);
    }

    #[test]
    fn too_few_usable_groups_is_an_error() {
        let lex = Lexicon::load_str(concat!(
            "lungs\tC0024109\tANATOMY\n",
            "lung\tC0024109\tANATOMY\n",
            "mass\tC0577559\tDISORDER\n",
        ))
        .unwrap();
        let vocab = vocab();
        let mut cfg = ModelConfig::desk(vocab.len(), lex.group_count());
        cfg.dim = 4;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.ff_dim = 8;
        let params = ModelParams::init(cfg, 3).unwrap();
        let err =
            group_silhouette(&params, &vocab, &lex, EmbeddingSpace::InputTable).unwrap_err();
        assert!(matches!(err, EvalError::TooFewGroups { usable: 1 }));
    }

    #[test]
    fn silhouette_matches_a_naive_reference_exactly() {
        let mut rng = stream(29, "eval-test", 0);
        let n = 60;
        let d = 16;
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let scores = silhouette_scores(&vectors, &labels);

        // Naive reference: no distance matrix, everything recomputed in
        // plain nested loops.
        for i in 0..n {
            let dist = |j: usize| 1.0 - cosine_similarity(&vectors[i], &vectors[j]).clamp(-1.0, 1.0);
            let mut a_sum = 0.0;
            let mut a_n = 0;
            for j in 0..n {
                if j != i && labels[j] == labels[i] {
                    a_sum += dist(j);
                    a_n += 1;
                }
            }
            let a = a_sum / a_n as f64;
            let mut b = f64::INFINITY;
            for c in 0..3 {
                if c == labels[i] {
                    continue;
                }
                let mut sum = 0.0;
                let mut count = 0;
                for j in 0..n {
                    if labels[j] == c {
                        sum += dist(j);
                        count += 1;
                    }
                }
                b = b.min(sum / count as f64);
            }
            let expected = if a.max(b) == 0.0 { 0.0 } else { (b - a) / a.max(b) };
            assert_eq!(scores[i], expected, "silhouette of point {i}");
        }
    }

    #[test]
    fn random_high_dimensional_groups_sit_near_zero() {
        let mut rng = stream(31, "eval-test", 1);
        let d = 256;
        let vectors: Vec<Vec<f64>> = (0..36)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..36).map(|i| i / 12).collect();
        let scores = silhouette_scores(&vectors, &labels);
        for g in 0..3 {
            let group: Vec<f64> = scores
                .iter()
                .zip(&labels)
                .filter(|&(_, &l)| l == g)
                .map(|(&s, _)| s)
                .collect();
            assert!(
                mean(&group).abs() < 0.15,
                "random clusters should be indistinguishable, got {}",
                mean(&group)
            );
        }
    }

    #[test]
    fn plane_embedded_points_project_with_distances_intact() {
        // Points live on a tilted plane spanned by two orthonormal axes of
        // a 10-dimensional space, offset away from the origin.
        let d = 10;
        let mut u = vec![0.0; d];
        let mut w = vec![0.0; d];
        u[2] = 0.6;
        u[7] = 0.8;
        w[2] = -0.8;
        w[7] = 0.6;
        let coords: Vec<(f64, f64)> = vec![
            (0.0, 0.0),
            (1.0, 0.2),
            (2.0, -0.4),
            (-1.5, 0.9),
            (0.7, -1.3),
            (2.4, 1.1),
            (-0.9, -0.8),
        ];
        let vectors: Vec<Vec<f64>> = coords
            .iter()
            .map(|&(a, b)| (0..d).map(|r| a * u[r] + b * w[r] + 3.0).collect())
            .collect();
        let labels: Vec<String> = (0..coords.len()).map(|i| format!("p{i}")).collect();
        let proj = project_2d(&vectors, &labels).unwrap();

        for i in 0..coords.len() {
            for j in 0..coords.len() {
                let original = ((coords[i].0 - coords[j].0).powi(2)
                    + (coords[i].1 - coords[j].1).powi(2))
                .sqrt();
                let pi = &proj.points[i];
                let pj = &proj.points[j];
                let projected = ((pi.x - pj.x).powi(2) + (pi.y - pj.y).powi(2)).sqrt();
                assert!(
                    (original - projected).abs() < 1e-9,
                    "distance {i}-{j}: {original} vs {projected}"
                );
            }
        }
        let mean_x = proj.points.iter().map(|p| p.x).sum::<f64>() / coords.len() as f64;
        let mean_y = proj.points.iter().map(|p| p.y).sum::<f64>() / coords.len() as f64;
        assert!(mean_x.abs() < 1e-12 && mean_y.abs() < 1e-12);
        assert!(proj.variance[0] >= proj.variance[1]);
        for axis in &proj.axes {
            let biggest = axis.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(biggest > 0.0, "largest-magnitude loading must be positive");
        }
    }

    #[test]
    fn projection_rejects_degenerate_input() {
        let same = vec![vec![1.0, 2.0]; 5];
        let labels: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        assert!(matches!(
            project_2d(&same, &labels).unwrap_err(),
            EvalError::DegeneratePoints
        ));
        assert!(matches!(
            project_2d(&same[..2], &labels[..2]).unwrap_err(),
            EvalError::TooFewPoints { need: 3, got: 2 }
        ));
        assert!(matches!(
            project_2d(&same, &labels[..4]).unwrap_err(),
            EvalError::LabelCount { vectors: 5, labels: 4 }
        ));
    }

    #[test]
    fn projection_is_deterministic() {
        let mut rng = stream(5, "eval-test", 2);
        let vectors: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let a = project_2d(&vectors, &labels).unwrap();
        let b = project_2d(&vectors, &labels).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_tsv_lists_every_word_once() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        let tsv = embedding_tsv(&params, &vocab, &lex, EmbeddingSpace::InputTable).unwrap();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), vocab.words().count());
        for line in &lines {
            assert_eq!(line.split('\t').count(), 4);
        }
        let lungs = lines.iter().find(|l| l.starts_with("lungs\t")).unwrap();
        assert_eq!(lungs.split('\t').nth(1).unwrap(), "ANATOMY");
        let today = lines.iter().find(|l| l.starts_with("today\t")).unwrap();
        assert_eq!(today.split('\t').nth(1).unwrap(), "-");
    }

    #[test]
    fn self_pairs_score_exactly_one() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        let pairs = vec![("mass".to_string(), "MASS".to_string())];
        let sim =
            synonym_similarity(&params, &vocab, &lex, &pairs, EmbeddingSpace::InputTable).unwrap();
        assert_eq!(sim, 1.0);
    }

    #[test]
    fn pair_mean_matches_hand_computation() {
        let (vocab, lex) = (vocab(), lexicon());
        let mut params = tiny_params(&vocab, &lex);
        let id = |w: &str| vocab.id(w).unwrap();
        set_word_vec(&mut params, id("mass"), &[1.0, 0.0, 0.0, 0.0]);
        set_word_vec(&mut params, id("lump"), &[0.0, 1.0, 0.0, 0.0]);
        set_word_vec(&mut params, id("kidney"), &[1.0, 1.0, 0.0, 0.0]);
        set_word_vec(&mut params, id("ren"), &[1.0, 0.0, 0.0, 0.0]);
        let pairs = vec![
            ("mass".to_string(), "lump".to_string()),
            ("kidney".to_string(), "ren".to_string()),
        ];
        let sim =
            synonym_similarity(&params, &vocab, &lex, &pairs, EmbeddingSpace::InputTable).unwrap();
        let expected = (0.0 + 1.0 / 2.0f64.sqrt()) / 2.0;
        assert_relative_eq!(sim, expected, epsilon = 1e-12);
    }

    #[test]
    fn empty_or_unknown_pairs_are_errors() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        assert!(matches!(
            synonym_similarity(&params, &vocab, &lex, &[], EmbeddingSpace::InputTable).unwrap_err(),
            EvalError::EmptyPairs
        ));
        let pairs = vec![("mass".to_string(), "zzz".to_string())];
        assert!(matches!(
            synonym_similarity(&params, &vocab, &lex, &pairs, EmbeddingSpace::InputTable)
                .unwrap_err(),
            EvalError::UnknownWord(w) if w == "zzz"
        ));
    }

    #[test]
    fn augmented_pairs_use_the_group_column() {
        let (vocab, lex) = (vocab(), lexicon());
        let mut params = tiny_params(&vocab, &lex);
        let id = |w: &str| vocab.id(w).unwrap();
        // Orthogonal token vectors that a shared group column pulls together.
        set_word_vec(&mut params, id("kidney"), &[1.0, 0.0, 0.0, 0.0]);
        set_word_vec(&mut params, id("ren"), &[0.0, 1.0, 0.0, 0.0]);
        let g = lex.group_of("kidney").unwrap();
        set_group_vec(&mut params, g, &[0.0, 0.0, 10.0, 0.0]);
        let pairs = vec![("kidney".to_string(), "ren".to_string())];
        let plain =
            synonym_similarity(&params, &vocab, &lex, &pairs, EmbeddingSpace::InputTable).unwrap();
        let augmented =
            synonym_similarity(&params, &vocab, &lex, &pairs, EmbeddingSpace::AugmentedInput)
                .unwrap();
        assert_relative_eq!(plain, 0.0);
        assert!(augmented > 0.9, "shared group column dominates: {augmented}");
    }

    #[test]
    fn tagged_corpus_parses_words_and_tags() {
        let text = concat!(
            "The/O heart/ANAT beats/O\n",
            "\n",
            "no/O mass/DIS seen/O in/O the/O heart/ANAT\n",
        );
        let corpus = TaggedCorpus::parse_str(text).unwrap();
        assert_eq!(corpus.tags, vec!["O", "ANAT", "DIS"]);
        assert_eq!(corpus.sentences.len(), 2);
        assert_eq!(corpus.sentences[0].words, vec!["the", "heart", "beats"]);
        assert_eq!(corpus.sentences[0].tag_ids, vec![0, 1, 0]);
        assert_eq!(corpus.sentences[1].tag_ids, vec![0, 2, 0, 0, 0, 1]);
    }

    #[test]
    fn tagged_corpus_splits_on_the_last_slash() {
        let corpus = TaggedCorpus::parse_str("mg/dl/UNIT ok/O\n").unwrap();
        assert_eq!(corpus.sentences[0].words, vec!["mg/dl", "ok"]);
        assert_eq!(corpus.tags, vec!["UNIT", "O"]);
    }

    #[test]
    fn malformed_tagged_tokens_carry_their_line() {
        let err = TaggedCorpus::parse_str("fine/O\nbroken\n").unwrap_err();
        assert!(matches!(
            err,
            EvalError::BadTaggedToken { line: 2, ref token } if token == "broken"
        ));
        let err = TaggedCorpus::parse_str("/O\n").unwrap_err();
        assert!(matches!(err, EvalError::BadTaggedToken { line: 1, .. }));
        let err = TaggedCorpus::parse_str("word/\n").unwrap_err();
        assert!(matches!(err, EvalError::BadTaggedToken { line: 1, .. }));
    }

    fn tagged_fixture() -> (Vocab, Lexicon, TaggedCorpus) {
        // Tags are a function of the word: heart/kidney are ANAT, massTag
        // words are DIS, everything else O.
        let mut lines = Vec::new();
        let anat = ["heart", "kidney"];
        let dis = ["mass", "lesion"];
        let filler = ["the", "was", "noted", "on", "review", "today"];
        let mut rng = stream(77, "eval-test", 3);
        for _ in 0..25 {
            let a = anat[rng.gen_range(0..anat.len())];
            let d = dis[rng.gen_range(0..dis.len())];
            let f1 = filler[rng.gen_range(0..filler.len())];
            let f2 = filler[rng.gen_range(0..filler.len())];
            lines.push(format!("{f1}/O {a}/ANAT {f2}/O {d}/DIS today/O"));
        }
        let text = lines.join("\n");
        let corpus = TaggedCorpus::parse_str(&text).unwrap();
        let plain: Vec<String> = corpus
            .sentences
            .iter()
            .map(|s| s.words.join(" "))
            .collect();
        let vocab = Vocab::build_from_lines(plain.iter());
        let lex = Lexicon::load_str("").unwrap();
        (vocab, lex, corpus)
    }

    fn tagged_config(vocab: &Vocab, lex: &Lexicon) -> ModelConfig {
        let mut cfg = ModelConfig::desk(vocab.len(), lex.group_count());
        cfg.dim = 16;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.ff_dim = 32;
        cfg.max_seq_len = 8;
        cfg
    }

    #[test]
    fn single_class_tags_hit_full_accuracy_after_one_epoch() {
        let text = "the/O scan/O was/O clear/O\n".repeat(6);
        let corpus = TaggedCorpus::parse_str(&text).unwrap();
        let vocab = Vocab::build_from_lines(["the scan was clear"].iter());
        let lex = Lexicon::load_str("").unwrap();
        let mut params = ModelParams::init(tagged_config(&vocab, &lex), 5).unwrap();
        let (_, report) =
            finetune_token_classifier(&mut params, &vocab, &lex, &corpus, 1, 1e-3, 9).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.per_tag.len(), 1);
        assert_eq!(report.per_tag[0].f1, 1.0);
    }

    #[test]
    fn untrained_head_scores_at_chance() {
        let (vocab, lex, corpus) = tagged_fixture();
        let mut params = ModelParams::init(tagged_config(&vocab, &lex), 5).unwrap();
        let before = params.clone();
        let (head, report) =
            finetune_token_classifier(&mut params, &vocab, &lex, &corpus, 0, 1e-3, 9).unwrap();
        assert_eq!(params, before, "zero epochs must not touch the encoder");
        assert_eq!(head.weight.shape(), &[3, 16]);
        assert_eq!(head.bias.shape(), &[3]);
        assert_eq!(report.held_out_sentences, 5);
        assert!(
            report.accuracy > 0.05 && report.accuracy < 0.75,
            "random head should sit near 1/3, got {}",
            report.accuracy
        );
    }

    #[test]
    fn finetune_learns_tags_that_follow_the_words() {
        let (vocab, lex, corpus) = tagged_fixture();
        let mut params = ModelParams::init(tagged_config(&vocab, &lex), 5).unwrap();
        let (_, report) =
            finetune_token_classifier(&mut params, &vocab, &lex, &corpus, 5, 1e-2, 9).unwrap();
        assert!(
            report.accuracy >= 0.9,
            "word-determined tags should be learnable, got {}",
            report.accuracy
        );
        let o_tag = report.per_tag.iter().find(|t| t.tag == "O").unwrap();
        assert!(o_tag.support > 0 && o_tag.f1 > 0.9);
    }

    #[test]
    fn finetune_rejects_bad_corpora() {
        let (vocab, lex, _) = tagged_fixture();
        let mut params = ModelParams::init(tagged_config(&vocab, &lex), 5).unwrap();
        let few = TaggedCorpus::parse_str("a/O b/O\n").unwrap();
        assert!(matches!(
            finetune_token_classifier(&mut params, &vocab, &lex, &few, 1, 1e-3, 9).unwrap_err(),
            EvalError::TooFewSentences { got: 1, .. }
        ));
        let rogue = TaggedCorpus {
            sentences: vec![
                TaggedSentence {
                    words: vec!["a".into()],
                    tag_ids: vec![7],
                };
                6
            ],
            tags: vec!["O".into()],
        };
        assert!(matches!(
            finetune_token_classifier(&mut params, &vocab, &lex, &rogue, 1, 1e-3, 9).unwrap_err(),
            EvalError::UnknownTag { id: 7, count: 1 }
        ));
    }

    #[test]
    fn space_names_round_trip() {
        for space in [EmbeddingSpace::InputTable, EmbeddingSpace::AugmentedInput] {
            assert_eq!(space.as_str().parse::<EmbeddingSpace>().unwrap(), space);
        }
        assert_eq!(
            "input".parse::<EmbeddingSpace>().unwrap(),
            EmbeddingSpace::InputTable
        );
        assert_eq!(
            "augmented".parse::<EmbeddingSpace>().unwrap(),
            EmbeddingSpace::AugmentedInput
        );
        assert!("token".parse::<EmbeddingSpace>().is_err());
        let json = serde_json::to_string(&EmbeddingSpace::AugmentedInput).unwrap();
        assert_eq!(json, "\"augmented_input\"");
    }

    #[test]
    fn reports_serialize_to_single_json_lines() {
        let (vocab, lex) = (vocab(), lexicon());
        let params = tiny_params(&vocab, &lex);
        let report =
            nearest_neighbors(&params, &vocab, &lex, "mass", 2, EmbeddingSpace::InputTable)
                .unwrap();
        let line = serde_json::to_string(&report).unwrap();
        assert!(!line.contains('\n'));
        assert!(line.contains("\"space\":\"input_table\""));
        let cluster = group_silhouette(&params, &vocab, &lex, EmbeddingSpace::InputTable).unwrap();
        let line = serde_json::to_string(&cluster).unwrap();
        assert!(!line.contains('\n'));
    }
}
