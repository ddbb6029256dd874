//! `latconf` — generate, tag, train, predict, evaluate, gradient-check.
//!
//! Exit codes: 0 success, 1 validation or check failure, 2 usage
//! error. Diagnostics go to standard error.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use latconf::calibrate::{self, TreeConfig};
use latconf::corpus::{
    self, EmbeddingTable, FeatureConfig, FeatureExtractor, ModelCheckpoint, ReferenceTranscript,
    ScoreRecord, TagRecord,
};
use latconf::graph::{ConfusionNetwork, Lattice};
use latconf::metrics::{self, EvalReport};
use latconf::nn::{grad_check_default, AttnActivation, ModelMeta, ModelParams};
use latconf::propagate::{loss_and_gradient, predict, ScoreInput};
use latconf::synth::{gen_corpus, write_corpus, SynthConfig};
use latconf::tagging::DEFAULT_OVERLAP_THRESHOLD;
use latconf::train::{
    self, build_dataset, build_dataset_from_tags, scorable_lattice, tag_utterance, TrainConfig,
    TrainMode, UtteranceInput, EVAL_THRESHOLDS,
};

#[derive(Parser)]
#[command(name = "latconf", version, about = "Arc confidence estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (refs.ctm, refs.txt, cn/, lat/).
    Gen(GenArgs),
    /// Tag hypotheses against reference transcripts.
    Tag(TagArgs),
    /// Train a confidence model on a tagged corpus.
    Train(TrainArgs),
    /// Score a corpus with a trained model.
    Predict(PredictArgs),
    /// Evaluate score files against tag files.
    Eval(EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Flat key = value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    utterances: Option<usize>,
    #[arg(long)]
    len_min: Option<usize>,
    #[arg(long)]
    len_max: Option<usize>,
    #[arg(long)]
    p_sub: Option<f64>,
    #[arg(long)]
    p_ins: Option<f64>,
    #[arg(long)]
    p_del: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TagArgs {
    /// seq | cn | lat
    #[arg(long)]
    mode: String,
    /// Hypothesis file or directory (.cn for seq/cn, .slf for lat).
    #[arg(long)]
    hyp: PathBuf,
    /// Reference file: .ctm (timed) or plain `<utt> <words...>` text.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_THRESHOLD)]
    overlap_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// seq | cn | lat
    #[arg(long)]
    mode: String,
    /// Corpus directory (uses its cn/ or lat/ subdirectory if present).
    #[arg(long)]
    data: PathBuf,
    /// Tag file from `latconf tag`.
    #[arg(long)]
    tags: PathBuf,
    /// max | mean | posterior | attention
    #[arg(long, default_value = "attention")]
    merge: String,
    /// simple | gated
    #[arg(long, default_value = "gated")]
    cell: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 128)]
    d_h: usize,
    #[arg(long, default_value_t = 128)]
    d_f: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    clip: f64,
    /// logistic | tanh | identity
    #[arg(long, default_value = "logistic")]
    attn_activation: String,
    /// Embedding table file; absent means hash-derived vectors only.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Embedding width when no table file is given.
    #[arg(long, default_value_t = 8)]
    embedding_dim: usize,
    /// Append acoustic/language-model scores to the features.
    #[arg(long)]
    use_scores: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Embedding table file; must match the checkpoint's width.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    tags: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// PR points as `threshold<TAB>precision<TAB>recall` lines.
    #[arg(long)]
    pr: Option<PathBuf>,
    /// Also evaluate the raw-posterior and tree baselines; requires
    /// --mode and --data to recover raw posteriors.
    #[arg(long)]
    baselines: bool,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// seq | cn | lat
    #[arg(long)]
    mode: String,
    /// simple | gated
    #[arg(long, default_value = "gated")]
    cell: String,
    /// max | mean | posterior | attention
    #[arg(long, default_value = "attention")]
    merge: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    d_h: usize,
    #[arg(long, default_value_t = 8)]
    d_f: usize,
}

enum CliError {
    Usage(String),
    Failure(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failure(e)
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Tag(args) => cmd_tag(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn parse_enum<T: std::str::FromStr<Err = String>>(value: &str) -> Result<T, CliError> {
    value.parse().map_err(usage)
}

// -------------------------------------------------------------- gen

fn parse_kv_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key = value", i + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn apply_synth_key(cfg: &mut SynthConfig, key: &str, value: &str) -> Result<(), CliError> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
        value
            .parse()
            .map_err(|_| usage(format!("bad value {value:?} for config key {key:?}")))
    }
    match key {
        "vocab" => cfg.vocab = num(key, value)?,
        "utterances" => cfg.utterances = num(key, value)?,
        "len_min" => cfg.len_min = num(key, value)?,
        "len_max" => cfg.len_max = num(key, value)?,
        "p_sub" => cfg.p_sub = num(key, value)?,
        "p_ins" => cfg.p_ins = num(key, value)?,
        "p_del" => cfg.p_del = num(key, value)?,
        "depth" => cfg.depth = num(key, value)?,
        "temperature" => cfg.temperature = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        _ => return Err(usage(format!("unknown config key {key:?}"))),
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let mut cfg = SynthConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (key, value) in parse_kv_config(&text)? {
            apply_synth_key(&mut cfg, &key, &value)?;
        }
    }
    macro_rules! override_flag {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { cfg.$field = v; } )* };
    }
    override_flag!(vocab, utterances, len_min, len_max, p_sub, p_ins, p_del, depth, temperature, seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = gen_corpus(&cfg).map_err(|e| usage(e.to_string()))?;
    write_corpus(&args.out, &corpus).context("writing corpus")?;
    eprintln!(
        "wrote {} utterances to {}",
        corpus.references.len(),
        args.out.display()
    );
    Ok(())
}

// -------------------------------------------------------------- tag

fn load_references(path: &Path) -> Result<Vec<ReferenceTranscript>, CliError> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().and_then(|e| e.to_str()) == Some("ctm") {
        let (refs, warnings) = corpus::parse_ctm(&text).context("parsing CTM")?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(refs)
    } else {
        Ok(corpus::parse_text_refs(&text).context("parsing references")?)
    }
}

fn load_networks(path: &Path) -> Result<Vec<ConfusionNetwork>, CliError> {
    if path.is_dir() {
        let (networks, warnings) = corpus::load_cn_dir(path)
            .with_context(|| format!("loading {}", path.display()))?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(networks)
    } else {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let (cn, warnings) = corpus::parse_cn(&text).context("parsing CN")?;
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(vec![cn])
    }
}

fn load_lattices(path: &Path) -> Result<Vec<Lattice>, CliError> {
    if path.is_dir() {
        Ok(corpus::load_lattice_dir(path)
            .with_context(|| format!("loading {}", path.display()))?)
    } else {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lattice = corpus::parse_slf(&text).context("parsing SLF")?;
        if lattice.utterance_id.is_empty() {
            lattice.utterance_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
        }
        Ok(vec![lattice])
    }
}

fn cmd_tag(args: TagArgs) -> Result<(), CliError> {
    let mode: TrainMode = parse_enum(&args.mode)?;
    let references = load_references(&args.reference)?;
    let by_id: HashMap<&str, &ReferenceTranscript> = references
        .iter()
        .map(|r| (r.utterance_id.as_str(), r))
        .collect();

    let mut records: Vec<TagRecord> = Vec::new();
    let mut utterances = 0usize;
    let mut tag_one = |id: &str, input: UtteranceInput<'_>| -> Result<(), CliError> {
        let reference = by_id
            .get(id)
            .ok_or_else(|| anyhow!("no reference for utterance {id:?}"))?;
        let tags = tag_utterance(mode, &input, reference, args.overlap_threshold)
            .context("tagging")?;
        records.extend(tags.into_iter().map(|tag| TagRecord {
            utterance_id: id.to_string(),
            tag,
        }));
        utterances += 1;
        Ok(())
    };
    match mode {
        TrainMode::Sequence | TrainMode::Cn => {
            for cn in &load_networks(&args.hyp)? {
                tag_one(&cn.utterance_id, UtteranceInput::Cn(cn))?;
            }
        }
        TrainMode::Lattice => {
            for lattice in &load_lattices(&args.hyp)? {
                tag_one(&lattice.utterance_id, UtteranceInput::Lattice(lattice))?;
            }
        }
    }
    let arcs = records.len();
    fs::write(&args.out, corpus::write_tags(&records))
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("tagged {utterances} utterances, {arcs} arcs");
    Ok(())
}

// ------------------------------------------------------------ train

fn data_subdir(data: &Path, sub: &str) -> PathBuf {
    let nested = data.join(sub);
    if nested.is_dir() {
        nested
    } else {
        data.to_path_buf()
    }
}

fn load_mode_data(
    mode: TrainMode,
    data: &Path,
) -> Result<(Vec<ConfusionNetwork>, Vec<Lattice>), CliError> {
    match mode {
        TrainMode::Sequence | TrainMode::Cn => {
            Ok((load_networks(&data_subdir(data, "cn"))?, Vec::new()))
        }
        TrainMode::Lattice => Ok((Vec::new(), load_lattices(&data_subdir(data, "lat"))?)),
    }
}

fn load_embeddings(
    path: Option<&Path>,
    fallback_dim: usize,
) -> Result<EmbeddingTable, CliError> {
    match path {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(corpus::parse_embeddings(&text).context("parsing embeddings")?)
        }
        None => Ok(EmbeddingTable::new(fallback_dim)),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mode: TrainMode = parse_enum(&args.mode)?;
    let config = TrainConfig {
        mode,
        merge: parse_enum(&args.merge)?,
        cell: parse_enum(&args.cell)?,
        attn_activation: parse_enum(&args.attn_activation)?,
        d_h: args.d_h,
        d_f: args.d_f,
        lr: args.lr,
        epochs: args.epochs,
        workers: args.workers,
        seed: args.seed,
        clip: args.clip,
        ..TrainConfig::default()
    };
    let (networks, lattices) = load_mode_data(mode, &args.data)?;
    let table = load_embeddings(args.embeddings.as_deref(), args.embedding_dim)?;
    let extractor = FeatureExtractor {
        table,
        mapping: None,
        config: FeatureConfig { use_scores: args.use_scores },
    };
    let tag_text = fs::read_to_string(&args.tags)
        .with_context(|| format!("reading {}", args.tags.display()))?;
    let records: Vec<(String, latconf::TargetTag)> = corpus::parse_tags(&tag_text)
        .context("parsing tags")?
        .into_iter()
        .map(|r| (r.utterance_id, r.tag))
        .collect();
    let dataset = build_dataset_from_tags(mode, &networks, &lattices, &records, &extractor)
        .context("building dataset")?;
    let out = train::train(&dataset, &config).context("training")?;
    eprint!("{}", out.report);
    let checkpoint = ModelCheckpoint {
        params: out.params,
        mode,
        merge: config.merge,
        embedding_dim: extractor.table.dim,
        use_scores: args.use_scores,
        mapping: None,
    };
    corpus::save_model(&args.out, &checkpoint)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("checkpoint written to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------- predict

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let checkpoint = corpus::load_model(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let table = load_embeddings(args.embeddings.as_deref(), checkpoint.embedding_dim)?;
    if table.dim != checkpoint.embedding_dim {
        return Err(CliError::Failure(anyhow!(
            "embedding width {} does not match checkpoint width {}",
            table.dim,
            checkpoint.embedding_dim
        )));
    }
    let extractor = FeatureExtractor {
        table,
        mapping: checkpoint.mapping.clone(),
        config: FeatureConfig { use_scores: checkpoint.use_scores },
    };
    let (networks, lattices) = load_mode_data(checkpoint.mode, &args.data)?;
    let mut records: Vec<ScoreRecord> = Vec::new();
    let mut score_one = |id: &str, input: ScoreInput<'_>| -> Result<(), CliError> {
        let confidences = predict(input, &checkpoint.params, checkpoint.merge, &extractor)
            .with_context(|| format!("scoring utterance {id:?}"))?;
        records.extend(confidences.into_iter().map(|a| ScoreRecord {
            utterance_id: id.to_string(),
            arc_id: a.arc_id,
            confidence: a.c,
        }));
        Ok(())
    };
    match checkpoint.mode {
        TrainMode::Sequence => {
            for cn in &networks {
                score_one(&cn.utterance_id, ScoreInput::OneBest(cn))?;
            }
        }
        TrainMode::Cn => {
            for cn in &networks {
                score_one(&cn.utterance_id, ScoreInput::Cn(cn))?;
            }
        }
        TrainMode::Lattice => {
            for lattice in &lattices {
                score_one(&lattice.utterance_id, ScoreInput::Lattice(lattice))?;
            }
        }
    }
    let arcs = records.len();
    fs::write(&args.out, corpus::write_scores(&records))
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("scored {arcs} arcs");
    Ok(())
}

// -------------------------------------------------------------- eval

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let score_text = fs::read_to_string(&args.scores)
        .with_context(|| format!("reading {}", args.scores.display()))?;
    let scores = corpus::parse_scores(&score_text).context("parsing scores")?;
    let tag_text = fs::read_to_string(&args.tags)
        .with_context(|| format!("reading {}", args.tags.display()))?;
    let tags = corpus::parse_tags(&tag_text).context("parsing tags")?;

    let by_arc: HashMap<(&str, usize), f64> = scores
        .iter()
        .map(|r| ((r.utterance_id.as_str(), r.arc_id), r.confidence))
        .collect();
    let mut confidences = Vec::with_capacity(tags.len());
    let mut targets = Vec::with_capacity(tags.len());
    let mut tagged: HashSet<(&str, usize)> = HashSet::new();
    for record in &tags {
        let key = (record.utterance_id.as_str(), record.tag.arc_id);
        let c = by_arc.get(&key).ok_or_else(|| {
            anyhow!("no score for utterance {:?} arc {}", record.utterance_id, record.tag.arc_id)
        })?;
        confidences.push(*c);
        targets.push(record.tag.target);
        tagged.insert(key);
    }
    let excluded = scores
        .iter()
        .filter(|r| !tagged.contains(&(r.utterance_id.as_str(), r.arc_id)))
        .count();
    if excluded > 0 {
        eprintln!("excluded {excluded} scored arcs without tags");
    }

    let model = metrics::evaluate(&confidences, &targets, &EVAL_THRESHOLDS)
        .context("evaluating model scores")?;
    let mut report = String::new();
    let _ = writeln!(report, "== model ==");
    let _ = write!(report, "{model}");

    if args.baselines {
        let mode: TrainMode =
            parse_enum(args.mode.as_deref().ok_or_else(|| usage("--baselines requires --mode"))?)?;
        let data = args.data.as_deref().ok_or_else(|| usage("--baselines requires --data"))?;
        let (networks, lattices) = load_mode_data(mode, data)?;
        let mut posterior_by_arc: HashMap<(String, usize), f64> = HashMap::new();
        let inputs: Vec<(String, UtteranceInput<'_>)> = match mode {
            TrainMode::Sequence | TrainMode::Cn => networks
                .iter()
                .map(|cn| (cn.utterance_id.clone(), UtteranceInput::Cn(cn)))
                .collect(),
            TrainMode::Lattice => lattices
                .iter()
                .map(|l| (l.utterance_id.clone(), UtteranceInput::Lattice(l)))
                .collect(),
        };
        for (id, input) in &inputs {
            let lattice = scorable_lattice(mode, input).context("converting data")?;
            for arc in &lattice.arcs {
                posterior_by_arc.insert((id.clone(), arc.id), arc.posterior);
            }
        }
        let mut raw = Vec::with_capacity(tags.len());
        for record in &tags {
            let key = (record.utterance_id.clone(), record.tag.arc_id);
            let p = posterior_by_arc.get(&key).ok_or_else(|| {
                anyhow!(
                    "data does not cover tagged arc {} of utterance {:?}",
                    record.tag.arc_id,
                    record.utterance_id
                )
            })?;
            raw.push(*p);
        }
        let raw_report =
            metrics::evaluate(&raw, &targets, &EVAL_THRESHOLDS).context("posterior baseline")?;
        let mapping = calibrate::fit_tree(&raw, &targets, &TreeConfig::default())
            .context("fitting tree baseline")?;
        let mapped = calibrate::map_all(&mapping, &raw);
        let tree_report =
            metrics::evaluate(&mapped, &targets, &EVAL_THRESHOLDS).context("tree baseline")?;
        let _ = writeln!(report, "== posterior baseline ==");
        let _ = write!(report, "{raw_report}");
        let _ = writeln!(report, "== tree baseline ==");
        let _ = write!(report, "{tree_report}");
    }

    fs::write(&args.report, &report)
        .with_context(|| format!("writing {}", args.report.display()))?;
    print!("{report}");
    if let Some(pr_path) = &args.pr {
        fs::write(pr_path, pr_lines(&model))
            .with_context(|| format!("writing {}", pr_path.display()))?;
    }
    Ok(())
}

fn pr_lines(report: &EvalReport) -> String {
    let mut out = String::new();
    for p in &report.pr_points {
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}", p.threshold, p.precision, p.recall);
    }
    out
}

// --------------------------------------------------------- gradcheck

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let mode: TrainMode = parse_enum(&args.mode)?;
    let merge = parse_enum(&args.merge)?;
    let cell = parse_enum(&args.cell)?;
    // A seeded three-word utterance exercises every code path: three
    // bins with competing arcs, and a possible skip arc in lattice mode.
    let corpus = gen_corpus(&SynthConfig {
        vocab: 12,
        utterances: 1,
        len_min: 3,
        len_max: 3,
        p_sub: 0.3,
        depth: 3,
        seed: args.seed,
        ..SynthConfig::default()
    })
    .map_err(|e| usage(e.to_string()))?;
    let extractor = FeatureExtractor {
        table: EmbeddingTable::new(4),
        mapping: None,
        config: FeatureConfig { use_scores: false },
    };
    let dataset = build_dataset(
        mode,
        &corpus.networks,
        &corpus.lattices,
        &corpus.references,
        DEFAULT_OVERLAP_THRESHOLD,
        &extractor,
    )
    .context("building instance")?;
    let instance = &dataset[0];
    let meta = ModelMeta {
        cell,
        d_x: extractor.d_x(),
        d_h: args.d_h,
        d_f: args.d_f,
        attn_activation: AttnActivation::Logistic,
    };
    let params = ModelParams::init(meta, args.seed);
    let (_, grad) = loss_and_gradient(
        &instance.lattice,
        &instance.features,
        &instance.targets,
        &params,
        merge,
    )
    .context("computing gradient")?;
    let max_rel = grad_check_default(
        |p| {
            loss_and_gradient(&instance.lattice, &instance.features, &instance.targets, p, merge)
                .expect("probe evaluation")
                .0
        },
        &params,
        &grad,
    );
    println!("max relative error {max_rel:.3e}");
    if max_rel > 1e-4 {
        return Err(CliError::Failure(anyhow!(
            "gradient check failed: max relative error {max_rel:.3e} exceeds 1e-4"
        )));
    }
    Ok(())
}
