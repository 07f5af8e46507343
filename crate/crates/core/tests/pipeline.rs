//! Whole-pipeline check through the public API only: generate a corpus,
//! train briefly in both loss modes, round-trip a checkpoint, and run the
//! evaluation reports — the way a downstream consumer would.

use medlm_core::checkpoint::{self, Checkpoint};
use medlm_core::eval::{self, EmbeddingSpace};
use medlm_core::synth;
use medlm_core::tokenizer::{encode, EncodedSentence, Vocab};
use medlm_core::training::{masked_batch, train_loop, OptimizerState};
use medlm_core::{LossMode, ModelConfig, ModelParams, TrainConfig};

fn small_setup() -> (Vec<EncodedSentence>, Vocab, synth::SynthData) {
    let data = synth::corpus(3, 200);
    let vocab = Vocab::build_from_lines(data.sentences.iter());
    let encoded = data
        .sentences
        .iter()
        .map(|s| encode(s, &vocab, &data.lexicon, 12))
        .collect();
    (encoded, vocab, data)
}

#[test]
fn pipeline_trains_checkpoints_and_evaluates() {
    let (encoded, vocab, data) = small_setup();
    let mut cfg = ModelConfig::desk(vocab.len(), data.lexicon.group_count());
    cfg.dim = 16;
    cfg.ff_dim = 32;
    cfg.max_seq_len = 12;
    cfg.augment_inputs = true;
    let mut params = ModelParams::init(cfg, 5).unwrap();
    let mut opt = OptimizerState::new(&params);
    let mut tcfg = TrainConfig::desk(5, LossMode::Bce);
    tcfg.steps = 25;
    let mut losses = Vec::new();
    train_loop(
        &mut params,
        &mut opt,
        &encoded,
        &vocab,
        &data.lexicon,
        &tcfg,
        0,
        |r| losses.push(r.loss),
    )
    .unwrap();
    assert_eq!(losses.len(), 25);
    assert!(losses.iter().all(|l| l.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ckpt = Checkpoint {
        params: params.clone(),
        opt,
        train: tcfg,
        completed_steps: 25,
    };
    checkpoint::save_file(&ckpt, &path).unwrap();
    let loaded = checkpoint::load_file(&path).unwrap();
    assert_eq!(loaded.params, params);
    assert_eq!(loaded.completed_steps, 25);

    let neighbors = eval::nearest_neighbors(
        &loaded.params,
        &vocab,
        &data.lexicon,
        "lung",
        5,
        EmbeddingSpace::AugmentedInput,
    )
    .unwrap();
    assert_eq!(neighbors.neighbors.len(), 5);
    assert!(neighbors.neighbors.iter().all(|n| n.word != "lung"));

    let clusters = eval::group_silhouette(
        &loaded.params,
        &vocab,
        &data.lexicon,
        EmbeddingSpace::AugmentedInput,
    )
    .unwrap();
    assert_eq!(clusters.groups.len(), 4);
    assert!(clusters.overall.is_finite());

    let tsv = eval::embedding_tsv(
        &loaded.params,
        &vocab,
        &data.lexicon,
        EmbeddingSpace::InputTable,
    )
    .unwrap();
    for line in tsv.lines() {
        assert_eq!(line.split('\t').count(), 4);
    }
}

#[test]
fn loss_modes_draw_identical_batches() {
    let (encoded, vocab, data) = small_setup();
    let ce_cfg = TrainConfig::desk(9, LossMode::Ce);
    let bce_cfg = TrainConfig::desk(9, LossMode::Bce);
    for step in 0..5 {
        let (ce_idx, ce_out, _) =
            masked_batch(&encoded, &vocab, &data.lexicon, &ce_cfg, step).unwrap();
        let (bce_idx, bce_out, _) =
            masked_batch(&encoded, &vocab, &data.lexicon, &bce_cfg, step).unwrap();
        assert_eq!(ce_idx, bce_idx, "step {step}: sentence picks must match");
        assert_eq!(ce_out, bce_out, "step {step}: masking must match");
    }
}
