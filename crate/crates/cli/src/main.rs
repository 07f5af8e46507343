//! Single binary exposing the full pipeline: vocabulary building, training
//! in either loss mode, evaluation reports, gradient self-check, and
//! embedding export.
//!
//! Results go to stdout (JSON lines or TSV); diagnostics go to stderr.
//! Exit codes: 0 success, 1 usage error, 2 data or file-format error,
//! 3 numerical failure (non-finite loss, failed gradient check). All
//! randomness flows from `--seed`; identical command lines over identical
//! inputs write identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use medlm_core::checkpoint::{self, Checkpoint};
use medlm_core::eval::{self, EmbeddingSpace, TaggedCorpus};
use medlm_core::lexicon::Lexicon;
use medlm_core::model::{ModelConfig, ModelParams};
use medlm_core::tokenizer::{encode, load_corpus, EncodedSentence, Vocab};
use medlm_core::training::{
    flat_masked_rows, gradient_check, masked_batch, train_step, LossMode, OptimizerState,
    TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "medlm",
    version,
    about = "Desk-scale masked-LM training with lexicon-augmented embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary file from a corpus (one word per line, ordered
    /// by frequency then alphabetically).
    BuildVocab(BuildVocabArgs),
    /// Train a model and write a checkpoint; step metrics stream to
    /// stdout as JSON lines.
    Train(Box<TrainArgs>),
    /// Nearest neighbors of a word in embedding space.
    EvalNn(EvalNnArgs),
    /// Silhouette of the lexicon words clustered by semantic group.
    EvalCluster(EvalClusterArgs),
    /// Mean cosine similarity over a file of word pairs.
    EvalSynonyms(EvalSynonymsArgs),
    /// Fine-tune a linear token classifier on a word/TAG corpus.
    FinetuneNer(FinetuneNerArgs),
    /// Project every word to 2-D and export word/group/x/y TSV.
    ExportEmbeddings(ExportEmbeddingsArgs),
    /// Compare analytic gradients against central finite differences on a
    /// small built-in model; fails (exit 3) above 1e-4 relative error.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Attach the offending path to a data-level error.
fn data_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::BuildVocab(args) => cmd_build_vocab(args),
        Command::Train(args) => cmd_train(*args),
        Command::EvalNn(args) => cmd_eval_nn(args),
        Command::EvalCluster(args) => cmd_eval_cluster(args),
        Command::EvalSynonyms(args) => cmd_eval_synonyms(args),
        Command::FinetuneNer(args) => cmd_finetune_ner(args),
        Command::ExportEmbeddings(args) => cmd_export_embeddings(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

// ---------------------------------------------------------------- loaders

fn open_reader(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| data_err(path, e))
}

fn load_corpus_file(path: &Path) -> Result<Vec<String>, CliError> {
    load_corpus(open_reader(path)?).map_err(|e| data_err(path, e))
}

fn load_lexicon_file(path: Option<&PathBuf>) -> Result<Lexicon, CliError> {
    match path {
        Some(p) => Lexicon::load(open_reader(p)?).map_err(|e| data_err(p, e)),
        None => Ok(Lexicon::load_str("").expect("empty lexicon is valid")),
    }
}

fn parse_loss(s: &str) -> Result<LossMode, CliError> {
    LossMode::from_str(s).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_space(s: &str) -> Result<EmbeddingSpace, CliError> {
    EmbeddingSpace::from_str(s).map_err(|e| CliError::Usage(e.to_string()))
}

/// Where a model, its vocabulary, and its lexicon come from. The
/// vocabulary is either loaded from a file or rebuilt from the training
/// corpus — both give the same deterministic word order.
#[derive(Args)]
struct ModelSource {
    /// Checkpoint to read.
    #[arg(long)]
    ckpt: PathBuf,
    /// Corpus to rebuild the vocabulary from.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Saved vocabulary file (alternative to --corpus).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Lexicon TSV; empty lexicon if omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

impl ModelSource {
    fn load(&self) -> Result<(Checkpoint, Vocab, Lexicon), CliError> {
        let ckpt = checkpoint::load_file(&self.ckpt).map_err(|e| data_err(&self.ckpt, e))?;
        let vocab = match (&self.corpus, &self.vocab) {
            (Some(corpus), None) => Vocab::build_from_lines(load_corpus_file(corpus)?.iter()),
            (None, Some(vocab)) => {
                Vocab::load(open_reader(vocab)?).map_err(|e| data_err(vocab, e))?
            }
            _ => {
                return Err(CliError::Usage(
                    "pass exactly one of --corpus or --vocab".to_string(),
                ))
            }
        };
        if vocab.len() != ckpt.params.config.vocab_size {
            return Err(CliError::Data(format!(
                "vocabulary has {} entries but the checkpoint was trained with {}",
                vocab.len(),
                ckpt.params.config.vocab_size
            )));
        }
        let lexicon = load_lexicon_file(self.lexicon.as_ref())?;
        if lexicon.group_count() > ckpt.params.config.group_count {
            return Err(CliError::Data(format!(
                "lexicon has {} groups but the checkpoint was trained with {}",
                lexicon.group_count(),
                ckpt.params.config.group_count
            )));
        }
        Ok((ckpt, vocab, lexicon))
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value).expect("reports always serialize");
    println!("{line}");
    Ok(())
}

// ------------------------------------------------------------ build-vocab

#[derive(Args)]
struct BuildVocabArgs {
    /// Corpus, one sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Vocabulary file to write.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_build_vocab(args: BuildVocabArgs) -> Result<(), CliError> {
    let lines = load_corpus_file(&args.corpus)?;
    let vocab = Vocab::build_from_lines(lines.iter());
    let file = File::create(&args.out).map_err(|e| data_err(&args.out, e))?;
    vocab
        .save(BufWriter::new(file))
        .map_err(|e| data_err(&args.out, e))?;
    eprintln!(
        "wrote {} words ({} ids with the reserved tokens)",
        vocab.words().count(),
        vocab.len()
    );
    Ok(())
}

// ------------------------------------------------------------------ train

#[derive(Args, Default)]
struct TrainArgs {
    /// Training corpus, one sentence per line.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Lexicon TSV; empty lexicon if omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Saved vocabulary file; derived from the corpus if omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Loss mode: ce | bce-cui.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume from this checkpoint; its configuration wins over flags
    /// except --steps (to extend a run) and --out.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// key=value file supplying defaults for any train flag; command-line
    /// flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    mask_rate: Option<f64>,
    /// Substitute masked words 80/10/10 instead of always [MASK].
    #[arg(long)]
    classic_masking: bool,
    /// Add semantic-group vectors to the input embeddings.
    #[arg(long)]
    augment: bool,
    /// Intermediate checkpoint cadence in steps; 0 disables.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    /// Print each step's target rows as JSON lines instead of training.
    #[arg(long)]
    dump_targets: bool,
    /// Worker threads for corpus encoding; training itself stays
    /// single-threaded either way.
    #[arg(long)]
    threads: Option<usize>,
}

/// Parsed key=value config file with known keys consumed one by one, so
/// leftovers can be rejected.
struct ConfigFile(BTreeMap<String, String>);

impl ConfigFile {
    fn load(path: Option<&PathBuf>) -> Result<ConfigFile, CliError> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(data_err(path, format!("line {}: expected key=value", i + 1)));
                };
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(ConfigFile(map))
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Data(format!("config key {key}: {e}"))),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.0.into_keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Data(format!("unknown config key {k:?}"))),
        }
    }
}

const TRAIN_USAGE: &str =
    "usage: medlm train --corpus <FILE> --out <FILE> [--lexicon <FILE>] [--loss ce|bce-cui] \
     [--steps N] [--seed N] [--augment] [more options: --help]";

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut file = ConfigFile::load(args.config.as_ref())?;
    let corpus_path = args
        .corpus
        .or(file.take("corpus")?)
        .ok_or_else(|| CliError::Usage(format!("missing --corpus\n{TRAIN_USAGE}")))?;
    let out_path: PathBuf = args
        .out
        .or(file.take("out")?)
        .ok_or_else(|| CliError::Usage(format!("missing --out\n{TRAIN_USAGE}")))?;
    let lexicon_path = args.lexicon.or(file.take("lexicon")?);
    let vocab_path = args.vocab.or(file.take("vocab")?);
    let loss = parse_loss(
        &args
            .loss
            .or(file.take("loss")?)
            .unwrap_or_else(|| "ce".to_string()),
    )?;
    let steps = args.steps.or(file.take("steps")?);
    let seed = args.seed.or(file.take("seed")?).unwrap_or(0);
    let threads = args.threads.or(file.take("threads")?).unwrap_or(1).max(1);
    let lr = args.lr.or(file.take("lr")?);
    let batch_size = args.batch_size.or(file.take("batch-size")?);
    let mask_rate = args.mask_rate.or(file.take("mask-rate")?);
    let checkpoint_every = args.checkpoint_every.or(file.take("checkpoint-every")?);
    let classic_masking = args.classic_masking || file.take("classic-masking")?.unwrap_or(false);
    let augment = args.augment || file.take("augment")?.unwrap_or(false);
    let dim = args.dim.or(file.take("dim")?);
    let layers = args.layers.or(file.take("layers")?);
    let heads = args.heads.or(file.take("heads")?);
    let ff_dim = args.ff_dim.or(file.take("ff-dim")?);
    let max_seq_len = args.max_seq_len.or(file.take("max-seq-len")?);
    file.finish()?;

    let corpus_lines = load_corpus_file(&corpus_path)?;
    let lexicon = load_lexicon_file(lexicon_path.as_ref())?;
    let vocab = match &vocab_path {
        Some(p) => Vocab::load(open_reader(p)?).map_err(|e| data_err(p, e))?,
        None => Vocab::build_from_lines(corpus_lines.iter()),
    };

    let (mut params, mut opt, tcfg, start_step) = match &args.resume {
        Some(path) => {
            let ckpt = checkpoint::load_file(path).map_err(|e| data_err(path, e))?;
            let mut tcfg = ckpt.train.clone();
            if let Some(s) = steps {
                tcfg.steps = s;
            }
            let start = ckpt.completed_steps as usize;
            (ckpt.params, ckpt.opt, tcfg, start)
        }
        None => {
            let mut mcfg = ModelConfig::desk(vocab.len(), lexicon.group_count());
            mcfg.augment_inputs = augment;
            if let Some(v) = dim {
                mcfg.dim = v;
            }
            if let Some(v) = layers {
                mcfg.layers = v;
            }
            if let Some(v) = heads {
                mcfg.heads = v;
            }
            if let Some(v) = ff_dim {
                mcfg.ff_dim = v;
            }
            if let Some(v) = max_seq_len {
                mcfg.max_seq_len = v;
            }
            let params =
                ModelParams::init(mcfg, seed).map_err(|e| CliError::Data(e.to_string()))?;
            let mut tcfg = TrainConfig::desk(seed, loss);
            if let Some(v) = steps {
                tcfg.steps = v;
            }
            if let Some(v) = lr {
                tcfg.lr = v;
            }
            if let Some(v) = batch_size {
                tcfg.batch_size = v;
            }
            if let Some(v) = mask_rate {
                tcfg.mask_rate = v;
            }
            if let Some(v) = checkpoint_every {
                tcfg.checkpoint_every = v;
            }
            tcfg.classic_masking = classic_masking;
            let opt = OptimizerState::new(&params);
            (params, opt, tcfg, 0)
        }
    };
    tcfg.validate().map_err(|e| CliError::Data(e.to_string()))?;
    if vocab.len() != params.config.vocab_size {
        return Err(CliError::Data(format!(
            "vocabulary has {} entries but the model expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }

    let encoded = encode_corpus(
        &corpus_lines,
        &vocab,
        &lexicon,
        params.config.max_seq_len,
        threads,
    );

    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());

    if args.dump_targets {
        for step in start_step..tcfg.steps {
            let (_, _, targets) = masked_batch(&encoded, &vocab, &lexicon, &tcfg, step)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let line = serde_json::to_string(&TargetDump {
                step,
                rows: targets.rows(),
            })
            .expect("target dump serializes");
            writeln!(out, "{line}").map_err(|e| CliError::Data(e.to_string()))?;
        }
        out.flush().map_err(|e| CliError::Data(e.to_string()))?;
        return Ok(());
    }

    for step in start_step..tcfg.steps {
        let record = train_step(&mut params, &mut opt, &encoded, &vocab, &lexicon, &tcfg, step)
            .map_err(|e| CliError::Data(e.to_string()))?;
        if !record.loss.is_finite() {
            return Err(CliError::Numerical(format!(
                "loss became non-finite at step {step}"
            )));
        }
        let line = serde_json::to_string(&record).expect("step records serialize");
        writeln!(out, "{line}").map_err(|e| CliError::Data(e.to_string()))?;
        let done = step + 1;
        if tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0 && done < tcfg.steps {
            save_ckpt(&params, &opt, &tcfg, done as u64, &out_path)?;
        }
    }
    out.flush().map_err(|e| CliError::Data(e.to_string()))?;
    save_ckpt(&params, &opt, &tcfg, tcfg.steps as u64, &out_path)?;
    eprintln!("checkpoint written to {}", out_path.display());
    Ok(())
}

#[derive(Serialize)]
struct TargetDump<'a> {
    step: usize,
    rows: &'a [Vec<usize>],
}

fn save_ckpt(
    params: &ModelParams,
    opt: &OptimizerState,
    tcfg: &TrainConfig,
    completed_steps: u64,
    path: &Path,
) -> Result<(), CliError> {
    let ckpt = Checkpoint {
        params: params.clone(),
        opt: opt.clone(),
        train: tcfg.clone(),
        completed_steps,
    };
    checkpoint::save_file(&ckpt, path).map_err(|e| data_err(path, e))
}

/// Encode the corpus, optionally splitting the work over `threads`
/// contiguous chunks. Chunks are reassembled in order, so the result is
/// identical for any thread count.
fn encode_corpus(
    lines: &[String],
    vocab: &Vocab,
    lexicon: &Lexicon,
    max_seq_len: usize,
    threads: usize,
) -> Vec<EncodedSentence> {
    if threads <= 1 || lines.len() < 2 * threads {
        return lines
            .iter()
            .map(|l| encode(l, vocab, lexicon, max_seq_len))
            .collect();
    }
    let chunk = lines.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = lines
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|l| encode(l, vocab, lexicon, max_seq_len))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(lines.len());
        for h in handles {
            out.extend(h.join().expect("encoder thread panicked"));
        }
        out
    })
}

// ---------------------------------------------------------------- eval-nn

#[derive(Args)]
struct EvalNnArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Query word.
    #[arg(long)]
    word: String,
    /// Neighbors to list.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Embedding space: input | augmented.
    #[arg(long, default_value = "input")]
    space: String,
}

fn cmd_eval_nn(args: EvalNnArgs) -> Result<(), CliError> {
    let space = parse_space(&args.space)?;
    let (ckpt, vocab, lexicon) = args.source.load()?;
    let report = eval::nearest_neighbors(&ckpt.params, &vocab, &lexicon, &args.word, args.k, space)
        .map_err(|e| CliError::Data(e.to_string()))?;
    print_json(&report)
}

// ----------------------------------------------------------- eval-cluster

#[derive(Args)]
struct EvalClusterArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Embedding space: input | augmented.
    #[arg(long, default_value = "input")]
    space: String,
}

fn cmd_eval_cluster(args: EvalClusterArgs) -> Result<(), CliError> {
    let space = parse_space(&args.space)?;
    let (ckpt, vocab, lexicon) = args.source.load()?;
    let report = eval::group_silhouette(&ckpt.params, &vocab, &lexicon, space)
        .map_err(|e| CliError::Data(e.to_string()))?;
    print_json(&report)
}

// ---------------------------------------------------------- eval-synonyms

#[derive(Args)]
struct EvalSynonymsArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Word pairs, one per line, the two words separated by whitespace.
    #[arg(long)]
    pairs: PathBuf,
    /// Embedding space: input | augmented.
    #[arg(long, default_value = "input")]
    space: String,
}

#[derive(Serialize)]
struct SynonymReport {
    space: EmbeddingSpace,
    pairs: usize,
    mean_cosine: f64,
}

fn cmd_eval_synonyms(args: EvalSynonymsArgs) -> Result<(), CliError> {
    let space = parse_space(&args.space)?;
    let (ckpt, vocab, lexicon) = args.source.load()?;
    let text = std::fs::read_to_string(&args.pairs).map_err(|e| data_err(&args.pairs, e))?;
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        match (words.next(), words.next(), words.next()) {
            (Some(a), Some(b), None) => pairs.push((a.to_string(), b.to_string())),
            _ => {
                return Err(data_err(
                    &args.pairs,
                    format!("line {}: expected exactly two words", i + 1),
                ))
            }
        }
    }
    let mean_cosine = eval::synonym_similarity(&ckpt.params, &vocab, &lexicon, &pairs, space)
        .map_err(|e| CliError::Data(e.to_string()))?;
    print_json(&SynonymReport {
        space,
        pairs: pairs.len(),
        mean_cosine,
    })
}

// ----------------------------------------------------------- finetune-ner

#[derive(Args)]
struct FinetuneNerArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Tagged corpus: word/TAG tokens, one sentence per line.
    #[arg(long)]
    tagged: PathBuf,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_finetune_ner(args: FinetuneNerArgs) -> Result<(), CliError> {
    let (mut ckpt, vocab, lexicon) = args.source.load()?;
    let tagged = TaggedCorpus::load(&args.tagged).map_err(|e| data_err(&args.tagged, e))?;
    let (_, report) = eval::finetune_token_classifier(
        &mut ckpt.params,
        &vocab,
        &lexicon,
        &tagged,
        args.epochs,
        args.lr,
        args.seed,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    print_json(&report)
}

// ------------------------------------------------------ export-embeddings

#[derive(Args)]
struct ExportEmbeddingsArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Embedding space: input | augmented.
    #[arg(long, default_value = "input")]
    space: String,
    /// Write the TSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_export_embeddings(args: ExportEmbeddingsArgs) -> Result<(), CliError> {
    let space = parse_space(&args.space)?;
    let (ckpt, vocab, lexicon) = args.source.load()?;
    let tsv = eval::embedding_tsv(&ckpt.params, &vocab, &lexicon, space)
        .map_err(|e| CliError::Data(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, tsv).map_err(|e| data_err(path, e)),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

// -------------------------------------------------------------- gradcheck

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Four fixed sentences over sixteen distinct words; with the reserved
/// ids that makes a 20-word vocabulary, checked at width 8 with one
/// two-head layer — small enough that probing every element twice per
/// loss mode stays well under a minute.
const GRADCHECK_SENTENCES: [&str; 4] = [
    "the lung mass grew",
    "a renal scan today",
    "mild fever after biopsy",
    "no new swelling seen",
];

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let lexicon = Lexicon::load_str(&medlm_core::synth::lexicon_tsv())
        .expect("generator lexicon is well-formed");
    let vocab = Vocab::build_from_lines(GRADCHECK_SENTENCES.iter());
    let mut cfg = ModelConfig::desk(vocab.len(), lexicon.group_count());
    cfg.dim = 8;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 16;
    cfg.max_seq_len = 6;
    cfg.augment_inputs = true;
    let params = ModelParams::random_uniform(cfg, args.seed, 0.25)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let encoded: Vec<EncodedSentence> = GRADCHECK_SENTENCES
        .iter()
        .map(|s| encode(s, &vocab, &lexicon, params.config.max_seq_len))
        .collect();

    let tolerance = 1e-4;
    let mut failed = false;
    for mode in [LossMode::Ce, LossMode::Bce] {
        let tcfg = TrainConfig::desk(args.seed, mode);
        let (indices, outcomes, targets) =
            masked_batch(&encoded, &vocab, &lexicon, &tcfg, 0)
                .map_err(|e| CliError::Data(e.to_string()))?;
        let batch: Vec<_> = indices
            .iter()
            .zip(&outcomes)
            .map(|(&i, o)| medlm_core::model::SentenceInput::masked(&encoded[i], o))
            .collect();
        let outcome_refs: Vec<_> = outcomes.iter().collect();
        let rows = flat_masked_rows(&outcome_refs, params.config.max_seq_len);
        let report = gradient_check(&params, &batch, &rows, &targets, mode, 1e-5)
            .map_err(|e| CliError::Data(e.to_string()))?;
        println!(
            "{}: max relative error {:.3e} at {} ({} elements checked)",
            mode.as_str(),
            report.worst,
            report.worst_param,
            report.elements_checked
        );
        if !(report.worst <= tolerance) {
            failed = true;
        }
    }
    if failed {
        return Err(CliError::Numerical(format!(
            "gradient check exceeded the {tolerance:.0e} tolerance"
        )));
    }
    println!("gradcheck: ok");
    Ok(())
}
