use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use syntempo::metrics::{self, EmbeddingTable, ParaphraseSet, ReportOptions};
use syntempo::model::ModelError;
use syntempo::retrieval::{self, Ranked, RetrievalError, Scorer};
use syntempo::synth::{self, SynthConfig};
use syntempo::trainer::{self, Oracle, Sample, TrainError};
use syntempo::{parse_bracket, DtsOptions, EncodingCache, Hyper, Model, TemplateLibrary, TrainConfig};

/// Syntactic template retrieval: build template libraries, train the
/// sentence/template quality scorer, and retrieve templates for new inputs.
#[derive(Parser, Debug)]
#[command(name = "syntempo", version, args_override_self = true)]
struct Cli {
    /// Worker threads for scoring (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a template library from target-side parse trees.
    Index(IndexArgs),
    /// Train a scorer and write a checkpoint.
    Train(TrainArgs),
    /// Score one sentence against one template.
    Score(ScoreArgs),
    /// Exact top-k retrieval for every input sentence.
    Retrieve(RetrieveArgs),
    /// Diverse template search for every input sentence.
    RetrieveDiverse(DiverseArgs),
    /// Compute paraphrase metrics.
    Eval(EvalArgs),
    /// Generate a synthetic corpus with a planted quality oracle.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct IndexArgs {
    /// Target parse trees, one bracket string per line.
    #[arg(long, value_name = "PATH")]
    targets: PathBuf,
    /// Source parse trees parallel to the targets.
    #[arg(long, value_name = "PATH")]
    sources: Option<PathBuf>,
    /// Levels kept when truncating trees.
    #[arg(long, default_value_t = 4)]
    max_levels: usize,
    /// Library file to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct TrainArgs {
    /// Training samples (JSONL).
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Template library.
    #[arg(long, value_name = "PATH")]
    library: PathBuf,
    /// Quality oracle: planted description or precomputed records.
    #[arg(long, value_name = "PATH")]
    oracle: PathBuf,
    /// Checkpoint to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Per-epoch log (JSONL).
    #[arg(long, value_name = "PATH")]
    log: Option<PathBuf>,
    /// Held-out samples; without it the tail of the dataset is held out.
    #[arg(long, value_name = "PATH")]
    dev: Option<PathBuf>,
    /// Fraction of the dataset held out when no dev file is given.
    #[arg(long, default_value_t = 0.1)]
    dev_fraction: f64,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Hidden width of the feed-forward sublayers.
    #[arg(long, default_value_t = 128)]
    ffn_hidden: usize,
    #[arg(long, default_value_t = Hyper::DEFAULT_MAX_SENTENCE_LEN)]
    max_sentence_len: usize,
    #[arg(long, default_value_t = Hyper::DEFAULT_MAX_TEMPLATE_LEN)]
    max_template_len: usize,
    /// Drop the bias term of the scoring head.
    #[arg(long)]
    no_head_bias: bool,
    /// Weight of the squared-error loss.
    #[arg(long, default_value_t = 1.0)]
    lambda_mse: f64,
    /// Weight of the pairwise ranking loss.
    #[arg(long, default_value_t = 1.0)]
    lambda_rank: f64,
    /// Candidates per source.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Candidate sets per optimizer step.
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    /// Fraction of steps spent in learning-rate warmup.
    #[arg(long, default_value_t = 0.1)]
    warmup_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct ScoreArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Whitespace-tokenized sentence.
    #[arg(long)]
    source: String,
    /// Template as a bracket string.
    #[arg(long)]
    template: String,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "PATH")]
    library: PathBuf,
    /// Sentences, one per line, whitespace-tokenized.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Template encoding cache; built and written when missing or stale.
    #[arg(long, value_name = "PATH")]
    cache: Option<PathBuf>,
    /// Results file (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct RetrieveArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Templates returned per sentence.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct DiverseArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Templates returned per sentence.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Minimum normalized tree edit distance between members.
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    /// Apply the diversity test while filling the set too.
    #[arg(long)]
    strict_dts: bool,
    /// Mutation log of the search (JSONL).
    #[arg(long, value_name = "PATH")]
    replay_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct EvalArgs {
    /// Paraphrase sets (JSONL).
    #[arg(long, value_name = "PATH")]
    paraphrases: PathBuf,
    /// References, one per line, parallel to the sets.
    #[arg(long, value_name = "PATH")]
    references: Option<PathBuf>,
    /// Templates as bracket strings, one per line, parallel to the sets.
    #[arg(long, value_name = "PATH")]
    templates: Option<PathBuf>,
    /// Sentence embeddings (JSONL of {sentence, vector}).
    #[arg(long, value_name = "PATH")]
    embeddings: Option<PathBuf>,
    /// Weight of reference BLEU in iBLEU.
    #[arg(long, default_value_t = metrics::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 4)]
    max_levels: usize,
    /// Compare full-depth paraphrase trees against templates.
    #[arg(long)]
    full_depth_ted: bool,
    /// Report file (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct SynthArgs {
    /// Directory receiving dataset.jsonl, targets.txt, sources.txt and oracle.jsonl.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    sources: usize,
    /// Word types, punctuation included.
    #[arg(long, default_value_t = 200)]
    vocab: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the planted quality function (default: --seed).
    #[arg(long)]
    planted_seed: Option<u64>,
}

struct Failure {
    code: u8,
    kind: &'static str,
    error: anyhow::Error,
}

impl Failure {
    fn data(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, kind: "data", error: error.into() }
    }

    fn internal(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, kind: "internal", error: error.into() }
    }

    fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, kind: "usage", error: error.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::data(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::TraceMismatch => Failure::internal(e),
            other => Failure::data(other),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => Failure::internal(e),
            TrainError::Model(m) => m.into(),
            TrainError::InvalidConfig(_) => Failure::usage(e),
            other => Failure::data(other),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Model(m) => m.into(),
            RetrievalError::InvalidArgument(_) | RetrievalError::KTooLarge { .. } => Failure::usage(e),
            other => Failure::data(other),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let result = expand_config(argv)
        .map_err(Failure::usage)
        .and_then(|argv| match Cli::try_parse_from(argv) {
            Ok(cli) => run(cli),
            Err(e) if !e.use_stderr() => {
                let _ = e.print();
                Ok(())
            }
            Err(e) => Err(Failure::usage(anyhow::anyhow!(e.render().to_string().trim().to_string()))),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = serde_json::json!({ "error": f.kind, "code": f.code, "message": format!("{:#}", f.error) });
            eprintln!("{msg}");
            ExitCode::from(f.code)
        }
    }
}

const SUBCOMMANDS: [&str; 7] = ["index", "train", "score", "retrieve", "retrieve-diverse", "eval", "synth"];

/// Splices the values of a `--config` file in right after the subcommand
/// name, so that later command-line occurrences override them.
fn expand_config(argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut config = None;
    let mut sub_at = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            config = argv.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.into());
        } else if a == "--threads" {
            i += 2;
            continue;
        } else if sub_at.is_none() && SUBCOMMANDS.contains(&a.as_ref()) {
            sub_at = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config, sub_at) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("config is not valid JSON")?;
    let obj = value.as_object().context("config must be a JSON object")?;
    let mut spliced = Vec::new();
    for (key, v) in obj {
        if key == "config" {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Bool(true) => spliced.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => spliced.extend([flag.into(), s.into()]),
            serde_json::Value::Number(n) => spliced.extend([flag.into(), n.to_string().into()]),
            _ => anyhow::bail!("config key {key:?} must be a string, number or boolean"),
        }
    }
    let mut out = argv;
    out.splice(at + 1..at + 1, spliced);
    Ok(out)
}

fn run(cli: Cli) -> CmdResult {
    let threads = match cli.threads {
        Some(0) => return Err(Failure::usage(anyhow::anyhow!("--threads must be positive"))),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(Failure::internal)?;
    match cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::RetrieveDiverse(a) => cmd_retrieve_diverse(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f).lines().collect::<io::Result<_>>().with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &impl Serialize) -> CmdResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(Failure::internal)?;
    writeln!(out)?;
    Ok(())
}

fn load_library(path: &Path) -> Result<TemplateLibrary, Failure> {
    TemplateLibrary::load(path).with_context(|| format!("loading library {}", path.display())).map_err(Failure::data)
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Model::load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display())).map_err(Failure::data)
}

fn load_samples(path: &Path) -> Result<Vec<Sample>, Failure> {
    trainer::load_dataset(path).with_context(|| format!("loading dataset {}", path.display())).map_err(Failure::data)
}

fn cmd_index(a: IndexArgs) -> CmdResult {
    if a.max_levels == 0 {
        return Err(Failure::usage(anyhow::anyhow!("--max-levels must be positive")));
    }
    let targets = read_lines(&a.targets)?;
    let sources = a.sources.as_deref().map(read_lines).transpose()?;
    let lib = TemplateLibrary::build_from_corpus(targets, sources, a.max_levels).map_err(Failure::data)?;
    lib.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&serde_json::json!({ "entries": lib.len(), "total_frequency": lib.total_frequency() }))
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let lib = load_library(&a.library)?;
    let oracle = Oracle::load(&a.oracle).with_context(|| format!("loading oracle {}", a.oracle.display()))?;
    let mut samples = load_samples(&a.dataset)?;
    let dev = match &a.dev {
        Some(p) => load_samples(p)?,
        None => {
            if !(0.0..1.0).contains(&a.dev_fraction) {
                return Err(Failure::usage(anyhow::anyhow!("--dev-fraction must lie in [0, 1)")));
            }
            let held = (samples.len() as f64 * a.dev_fraction).round() as usize;
            samples.split_off(samples.len() - held)
        }
    };
    let (sv, tv) = trainer::build_vocabularies(&samples, &lib);
    let mut hyper = Hyper::new(sv, tv);
    hyper.d_model = a.d_model;
    hyper.n_layers = a.layers;
    hyper.n_heads = a.heads;
    hyper.ffn_hidden = a.ffn_hidden;
    hyper.max_sentence_len = a.max_sentence_len;
    hyper.max_template_len = a.max_template_len;
    hyper.head_bias = !a.no_head_bias;
    let mut model = Model::new(hyper, a.seed).map_err(|e| match e {
        ModelError::InvalidHyper(_) => Failure::usage(e),
        other => other.into(),
    })?;
    let config = TrainConfig {
        lambda_mse: a.lambda_mse,
        lambda_rank: a.lambda_rank,
        k: a.k,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        batch_size: a.batch_size,
        warmup_fraction: a.warmup_fraction,
        seed: a.seed,
    };
    eprintln!("training on {} sources, {} held out, {} templates", samples.len(), dev.len(), lib.len());
    let start = Instant::now();
    let outcome = trainer::train(&mut model, &lib, &samples, &dev, &oracle, &config, |e| {
        let pcc = e.dev_pcc.map_or("-".to_string(), |p| format!("{p:.4}"));
        eprintln!("epoch {:>3}  loss {:.6}  dev pcc {pcc}  {:.1}s", e.epoch, e.mean_loss, start.elapsed().as_secs_f64());
    })?;
    model.save_checkpoint(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.log {
        trainer::save_log(p, &outcome.log).with_context(|| format!("writing {}", p.display()))?;
    }
    let best = &outcome.log[outcome.best_epoch];
    print_json(&serde_json::json!({
        "best_epoch": outcome.best_epoch,
        "dev_pcc": best.dev_pcc,
        "model_hash": model.content_hash(),
        "seconds": start.elapsed().as_secs_f64(),
    }))
}

fn cmd_score(a: ScoreArgs) -> CmdResult {
    let model = load_model(&a.checkpoint)?;
    let tree = parse_bracket(&a.template).context("parsing --template").map_err(Failure::usage)?;
    let tokens: Vec<&str> = a.source.split_whitespace().collect();
    let (s, _) = model.score(&tokens, &tree.linearize())?;
    println!("{s:.6}");
    Ok(())
}

fn scorer_parts(q: &QueryArgs) -> Result<(Model, TemplateLibrary, Option<EncodingCache>, Vec<String>), Failure> {
    let model = load_model(&q.checkpoint)?;
    let lib = load_library(&q.library)?;
    let inputs = read_lines(&q.input)?;
    let cache = match &q.cache {
        None => None,
        Some(path) => {
            let loaded = if path.exists() {
                match EncodingCache::load(path) {
                    Ok(c) if c.params_hash() == model.content_hash() && c.len() == lib.len() => Some(c),
                    Ok(_) => {
                        eprintln!("cache {} does not match the model or library; rebuilding", path.display());
                        None
                    }
                    Err(e) => return Err(Failure::data(anyhow::Error::new(e).context(format!("loading {}", path.display())))),
                }
            } else {
                None
            };
            Some(match loaded {
                Some(c) => c,
                None => {
                    let c = model.encode_library(&lib)?;
                    c.save(path).with_context(|| format!("writing {}", path.display()))?;
                    c
                }
            })
        }
    };
    Ok((model, lib, cache, inputs))
}

#[derive(Serialize)]
struct QueryLine<'a> {
    query: usize,
    #[serde(flatten)]
    ranked: &'a Ranked,
}

fn write_ranked(out: &mut dyn Write, query: usize, ranked: &[Ranked]) -> io::Result<()> {
    for r in ranked {
        serde_json::to_writer(&mut *out, &QueryLine { query, ranked: r })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn cmd_retrieve(a: RetrieveArgs) -> CmdResult {
    if a.k == 0 {
        return Err(Failure::usage(anyhow::anyhow!("--k must be positive")));
    }
    let (model, lib, cache, inputs) = scorer_parts(&a.query)?;
    let scorer = match &cache {
        Some(c) => Scorer::Cached(&model, c),
        None => Scorer::Direct(&model),
    };
    let mut out = output(a.query.out.as_deref())?;
    for (i, line) in inputs.iter().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let result = retrieval::retrieve_topk(&tokens, &lib, scorer, a.k)?;
        write_ranked(&mut out, i, &result.ranked)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReplayLine<'a> {
    query: usize,
    #[serde(flatten)]
    event: &'a retrieval::DtsEvent,
}

fn cmd_retrieve_diverse(a: DiverseArgs) -> CmdResult {
    let (model, lib, cache, inputs) = scorer_parts(&a.query)?;
    let scorer = match &cache {
        Some(c) => Scorer::Cached(&model, c),
        None => Scorer::Direct(&model),
    };
    let opts = DtsOptions { d: a.d, beta: a.beta, strict: a.strict_dts };
    let mut out = output(a.query.out.as_deref())?;
    let mut replay = a.replay_log.as_deref().map(create).transpose()?;
    for (i, line) in inputs.iter().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (set, result) = retrieval::dts(&tokens, &lib, scorer, opts)?;
        write_ranked(&mut out, i, &result.ranked)?;
        if let Some(w) = replay.as_mut() {
            for event in &set.events {
                serde_json::to_writer(&mut *w, &ReplayLine { query: i, event }).map_err(Failure::internal)?;
                w.write_all(b"\n")?;
            }
        }
    }
    out.flush()?;
    if let Some(mut w) = replay {
        w.flush()?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let f = File::open(&a.paraphrases).with_context(|| format!("opening {}", a.paraphrases.display()))?;
    let mut sets: Vec<ParaphraseSet> = metrics::read_paraphrase_sets(BufReader::new(f)).map_err(Failure::data)?;
    if let Some(p) = &a.references {
        let refs = read_lines(p)?;
        if refs.len() != sets.len() {
            return Err(Failure::data(anyhow::anyhow!("{} references for {} paraphrase sets", refs.len(), sets.len())));
        }
        for (s, r) in sets.iter_mut().zip(refs) {
            s.reference = Some(r);
        }
    }
    if let Some(p) = &a.templates {
        let lines = read_lines(p)?;
        if lines.len() != sets.len() {
            return Err(Failure::data(anyhow::anyhow!("{} templates for {} paraphrase sets", lines.len(), sets.len())));
        }
        for (n, (s, t)) in sets.iter_mut().zip(lines).enumerate() {
            let tree = parse_bracket(&t).with_context(|| format!("template line {}", n + 1))?;
            s.templates = Some(vec![tree]);
        }
    }
    let table = a
        .embeddings
        .as_deref()
        .map(|p| EmbeddingTable::load(p).with_context(|| format!("loading embeddings {}", p.display())))
        .transpose()?;
    let opts = ReportOptions { alpha: a.alpha, max_levels: a.max_levels, full_depth_ted: a.full_depth_ted };
    let report = metrics::evaluate(&sets, table.as_ref(), opts).map_err(Failure::data)?;
    let mut out = output(a.out.as_deref())?;
    serde_json::to_writer(&mut out, &report).map_err(Failure::internal)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    if a.sources == 0 {
        return Err(Failure::usage(anyhow::anyhow!("--sources must be positive")));
    }
    let config = SynthConfig {
        sources: a.sources,
        vocab: a.vocab,
        seed: a.seed,
        planted_seed: a.planted_seed.unwrap_or(a.seed),
    };
    let corpus = synth::generate(&config);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let dataset = a.out_dir.join("dataset.jsonl");
    let mut w = create(&dataset)?;
    trainer::write_dataset(&mut w, &corpus.samples)?;
    w.flush()?;
    for (name, lines) in [("targets.txt", corpus.target_lines()), ("sources.txt", corpus.source_lines())] {
        let mut w = create(&a.out_dir.join(name))?;
        for l in lines {
            writeln!(w, "{l}")?;
        }
        w.flush()?;
    }
    let mut w = create(&a.out_dir.join("oracle.jsonl"))?;
    writeln!(w, "{}", Oracle::planted_json(&corpus.oracle))?;
    w.flush()?;
    print_json(&serde_json::json!({ "samples": corpus.samples.len(), "out_dir": a.out_dir }))
}
