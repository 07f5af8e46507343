//! Vocabulary, sentence encoding, masking, and prediction targets.
//!
//! Sentences are whitespace-tokenised and lowercased. A [`Vocab`] maps
//! tokens to dense ids with four reserved slots (`[PAD]`, `[UNK]`,
//! `[CLS]`, `[MASK]`) ahead of the real words, which are ordered by corpus
//! frequency and then lexicographically so vocabulary construction is
//! deterministic.
//!
//! [`apply_masking`] hides a fraction of word positions; [`build_targets`]
//! then produces the prediction targets for those positions, either as the
//! usual single correct word per position or expanded to every vocabulary
//! word that shares a concept identifier with the hidden word.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::tensor::Tensor;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const MASK_ID: usize = 3;
pub const RESERVED_TOKENS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocab line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("vocab line {line}: {token:?} collides with a reserved token")]
    ReservedToken { line: usize, token: String },
    #[error("vocab line {line}: empty token")]
    EmptyToken { line: usize },
    #[error("target row for position {position} is empty")]
    EmptyTargetRow { position: usize },
    #[error("expected {expected:?} targets, found {found:?}")]
    TargetModeMismatch {
        expected: TargetMode,
        found: TargetMode,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Token table with four reserved ids followed by corpus words.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Lowercase whitespace tokenisation used everywhere a sentence is read.
    pub fn tokenize(line: &str) -> Vec<String> {
        line.split_whitespace()
            .map(|t| t.to_lowercase())
            .collect()
    }

    /// Build from corpus lines: words sorted by descending frequency, ties
    /// broken lexicographically, appended after the reserved tokens.
    pub fn build_from_lines<I, S>(lines: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for line in lines {
            for token in Self::tokenize(line.as_ref()) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(String, u64)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_words(words.into_iter().map(|(w, _)| w))
    }

    fn from_words<I: IntoIterator<Item = String>>(words: I) -> Vocab {
        let mut tokens: Vec<String> =
            RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Total number of ids, reserved tokens included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED_TOKENS.len()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED_TOKENS.len()
    }

    /// Iterate real words as `(id, token)`, skipping the reserved slots.
    pub fn words(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .skip(RESERVED_TOKENS.len())
            .map(|(i, t)| (i, t.as_str()))
    }

    /// One word per line; the reserved tokens are implicit, so the word on
    /// line `n` (1-based) has id `n + 3`.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), TokenizerError> {
        for (_, token) in self.words() {
            writeln!(w, "{token}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<Vocab, TokenizerError> {
        let mut words = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let token = line.trim();
            let line_no = n + 1;
            if token.is_empty() {
                return Err(TokenizerError::EmptyToken { line: line_no });
            }
            if RESERVED_TOKENS.contains(&token) {
                return Err(TokenizerError::ReservedToken {
                    line: line_no,
                    token: token.to_string(),
                });
            }
            if seen.insert(token.to_string(), line_no).is_some() {
                return Err(TokenizerError::DuplicateToken {
                    line: line_no,
                    token: token.to_string(),
                });
            }
            words.push(token.to_string());
        }
        Ok(Self::from_words(words))
    }
}

/// A sentence encoded to fixed length: `[CLS]` first, then word ids,
/// padded with `[PAD]` up to `max_seq_len` (or truncated).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    /// One id per position, length `max_seq_len`.
    pub token_ids: Vec<usize>,
    /// Surface forms aligned with `token_ids` (reserved markers included).
    pub tokens: Vec<String>,
    /// Semantic group per position; `None` for reserved tokens and words
    /// absent from the lexicon.
    pub group_ids: Vec<Option<usize>>,
    /// All zeros for single-segment input; kept explicit so the embedding
    /// sum reads the same for any segment layout.
    pub segment_ids: Vec<usize>,
    /// Positions `0..attention_len` are real (`[CLS]` plus words); the rest
    /// is padding.
    pub attention_len: usize,
}

impl EncodedSentence {
    /// Positions eligible for masking: every real word, never `[CLS]` or
    /// `[PAD]`.
    pub fn word_positions(&self) -> impl Iterator<Item = usize> + '_ {
        1..self.attention_len
    }
}

/// Encode one sentence line against a vocabulary and lexicon.
pub fn encode(
    line: &str,
    vocab: &Vocab,
    lexicon: &Lexicon,
    max_seq_len: usize,
) -> EncodedSentence {
    assert!(max_seq_len >= 1, "need room for [CLS]");
    let words = Vocab::tokenize(line);
    let kept = words.len().min(max_seq_len - 1);

    let mut token_ids = vec![CLS_ID];
    let mut tokens = vec![RESERVED_TOKENS[CLS_ID].to_string()];
    let mut group_ids: Vec<Option<usize>> = vec![None];
    for w in &words[..kept] {
        token_ids.push(vocab.id_or_unk(w));
        group_ids.push(lexicon.group_of(w));
        tokens.push(w.clone());
    }
    let attention_len = token_ids.len();
    while token_ids.len() < max_seq_len {
        token_ids.push(PAD_ID);
        tokens.push(RESERVED_TOKENS[PAD_ID].to_string());
        group_ids.push(None);
    }
    EncodedSentence {
        segment_ids: vec![0; max_seq_len],
        token_ids,
        tokens,
        group_ids,
        attention_len,
    }
}

/// The ids actually fed to the model after masking, plus which positions
/// were hidden. Group and segment ids are untouched by masking; they stay
/// those of the original sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingOutcome {
    pub input_ids: Vec<usize>,
    /// Ascending positions whose original word must be predicted.
    pub masked_positions: Vec<usize>,
}

/// Hide word positions with independent probability `rate`.
///
/// By default every hidden position becomes `[MASK]`. With `classic`
/// substitution, 80% become `[MASK]`, 10% a uniformly random real word,
/// and 10% stay unchanged (but are still predicted). A sentence that comes
/// out with no masked position gets one forced, chosen uniformly, so every
/// training sentence contributes to the loss. Draw order is fixed: one
/// selection draw per word position in ascending order, then the forced
/// pick if needed, then one substitution draw per masked position — so a
/// given generator state always produces the same outcome.
pub fn apply_masking(
    encoded: &EncodedSentence,
    rate: f64,
    classic: bool,
    vocab: &Vocab,
    rng: &mut ChaCha20Rng,
) -> MaskingOutcome {
    let mut masked: Vec<usize> = encoded
        .word_positions()
        .filter(|_| rng.gen::<f64>() < rate)
        .collect();
    let word_count = encoded.attention_len - 1;
    if masked.is_empty() && word_count > 0 {
        masked.push(1 + rng.gen_range(0..word_count));
    }

    let mut input_ids = encoded.token_ids.clone();
    for &p in &masked {
        input_ids[p] = if classic {
            let u = rng.gen::<f64>();
            if u < 0.8 {
                MASK_ID
            } else if u < 0.9 {
                rng.gen_range(RESERVED_TOKENS.len()..vocab.len())
            } else {
                encoded.token_ids[p]
            }
        } else {
            MASK_ID
        };
    }
    MaskingOutcome {
        input_ids,
        masked_positions: masked,
    }
}

/// How prediction targets for masked positions are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Exactly the hidden word.
    OneHot,
    /// The hidden word plus every vocabulary word sharing a concept
    /// identifier with it.
    CuiExpanded,
}

/// Targets for the masked positions of one sentence: one sorted id set per
/// masked position, tagged with the mode that produced it so a loss can
/// refuse mismatched targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    mode: TargetMode,
    num_classes: usize,
    rows: Vec<Vec<usize>>,
}

impl TargetMatrix {
    pub fn mode(&self) -> TargetMode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Single class index per row; only one-hot targets have this form.
    pub fn class_indices(&self) -> Result<Vec<usize>, TokenizerError> {
        if self.mode != TargetMode::OneHot {
            return Err(TokenizerError::TargetModeMismatch {
                expected: TargetMode::OneHot,
                found: self.mode,
            });
        }
        Ok(self.rows.iter().map(|r| r[0]).collect())
    }

    /// Dense 0/1 matrix, one row per masked position.
    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(&[self.rows.len(), self.num_classes]);
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                out.set2(r, c, 1.0);
            }
        }
        out
    }

    /// Merge target matrices of several sentences into one, in order.
    pub fn concat(parts: &[TargetMatrix]) -> Result<TargetMatrix, TokenizerError> {
        let mode = parts[0].mode;
        let num_classes = parts[0].num_classes;
        let mut rows = Vec::new();
        for p in parts {
            if p.mode != mode {
                return Err(TokenizerError::TargetModeMismatch {
                    expected: mode,
                    found: p.mode,
                });
            }
            rows.extend(p.rows.iter().cloned());
        }
        Ok(TargetMatrix {
            mode,
            num_classes,
            rows,
        })
    }
}

/// Build the targets for the masked positions of one sentence.
///
/// Every row contains the hidden word's id. In expanded mode the row also
/// contains the id of each vocabulary word reachable through a shared
/// concept identifier, so the one-hot row is always a subset of the
/// expanded row for the same masking.
pub fn build_targets(
    encoded: &EncodedSentence,
    outcome: &MaskingOutcome,
    vocab: &Vocab,
    lexicon: &Lexicon,
    mode: TargetMode,
) -> Result<TargetMatrix, TokenizerError> {
    let mut rows = Vec::with_capacity(outcome.masked_positions.len());
    for &p in &outcome.masked_positions {
        let word = &encoded.tokens[p];
        let mut row = std::collections::BTreeSet::new();
        row.insert(vocab.id_or_unk(word));
        if mode == TargetMode::CuiExpanded {
            for sibling in lexicon.siblings(word) {
                if let Some(id) = vocab.id(&sibling) {
                    row.insert(id);
                }
            }
        }
        if row.is_empty() {
            return Err(TokenizerError::EmptyTargetRow { position: p });
        }
        rows.push(row.into_iter().collect());
    }
    Ok(TargetMatrix {
        mode,
        num_classes: vocab.len(),
        rows,
    })
}

/// Non-blank lines of a corpus, in file order.
pub fn load_corpus<R: BufRead>(r: R) -> Result<Vec<String>, TokenizerError> {
    let mut lines = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    Ok(lines)
}
