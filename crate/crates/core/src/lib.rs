//! Core library for a desk-scale masked-language-model lab with
//! lexicon-driven knowledge augmentation.

pub mod checkpoint;
pub mod eval;
pub mod lexicon;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use eval::{ClusterReport, EmbeddingSpace, FinetuneReport, NeighborReport, TaggedCorpus};
pub use lexicon::{ConceptId, Lexicon, LexiconEntry, SemanticGroup};
pub use model::{ModelConfig, ModelParams};
pub use tensor::Tensor;
pub use tokenizer::{EncodedSentence, MaskingOutcome, TargetMatrix, TargetMode, Vocab};
pub use training::{LossMode, TrainConfig};
