//! Training: per-utterance SGD over tagged corpora, an asynchronous
//! multi-worker mode, validation-based model selection, and pooled
//! evaluation against the raw-posterior and tree baselines.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calibrate::{self, CalibrateError, CalibrationMapping, TreeConfig};
use crate::corpus::ReferenceTranscript;
use crate::graph::{self, ConfusionNetwork, GraphError, Lattice};
use crate::metrics::{self, EvalReport, MetricsError};
use crate::nn::{clip_global_norm, AttnActivation, CellKind, ModelMeta, ModelParams};
use crate::propagate::{
    loss_and_gradient, score_lattice, ArcConfidence, FeatureSource, MergeMethod, PropagateError,
};
use crate::tagging::{tag_cn, tag_lattice, TagError, TagMethod, TargetTag, DEFAULT_OVERLAP_THRESHOLD};
use crate::par;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus of {count} utterances is too small to split three ways")]
    CorpusTooSmall { count: usize },
    #[error("split ratio {name} must be positive")]
    ZeroPartition { name: &'static str },
    #[error("split fractions sum to {sum}, must sum to 1")]
    BadSplit { sum: f64 },
    #[error("no reference transcript for utterance {utterance_id:?}")]
    MissingReference { utterance_id: String },
    #[error("no target tags for utterance {utterance_id:?} arc {arc_id}")]
    MissingTag { utterance_id: String, arc_id: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("loss became non-finite at epoch {epoch}, utterance {utterance_id:?}")]
    Divergence { epoch: usize, utterance_id: String },
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// One-best sequence: each bin reduced to its winning entry.
    Sequence,
    /// Every confusion-network arc.
    Cn,
    /// Every lattice arc.
    Lattice,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Sequence => "seq",
            TrainMode::Cn => "cn",
            TrainMode::Lattice => "lat",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequence" => Ok(TrainMode::Sequence),
            "cn" => Ok(TrainMode::Cn),
            "lat" | "lattice" => Ok(TrainMode::Lattice),
            other => Err(format!("unknown mode {other:?}, expected seq|cn|lat")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub merge: MergeMethod,
    pub cell: CellKind,
    pub attn_activation: AttnActivation,
    pub d_h: usize,
    pub d_f: usize,
    pub lr: f64,
    pub epochs: usize,
    pub workers: usize,
    pub seed: u64,
    /// Train/validation/test fractions; must sum to one.
    pub split: (f64, f64, f64),
    /// Global gradient-norm limit.
    pub clip: f64,
    /// Overlap threshold for lattice tagging.
    pub overlap_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Cn,
            merge: MergeMethod::Attention,
            cell: CellKind::Gated,
            attn_activation: AttnActivation::Logistic,
            d_h: 128,
            d_f: 128,
            lr: 0.05,
            epochs: 20,
            workers: 1,
            seed: 0,
            split: (0.8, 0.1, 0.1),
            clip: 5.0,
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("d_h", self.d_h),
            ("epochs", self.epochs),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config("lr must be finite and non-negative".into()));
        }
        if !(self.clip > 0.0) {
            return Err(TrainError::Config("clip must be positive".into()));
        }
        Ok(())
    }
}

/// One utterance ready for the optimizer: the scorable lattice, its
/// per-arc feature vectors and 0/1 targets, all arc-id aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedUtterance {
    pub utterance_id: String,
    pub lattice: Lattice,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TaggedUtterance {
    pub fn bool_targets(&self) -> Vec<bool> {
        self.targets.iter().map(|&t| t > 0.5).collect()
    }
}

/// An utterance in whichever shape the mode consumes.
pub enum UtteranceInput<'a> {
    Cn(&'a ConfusionNetwork),
    Lattice(&'a Lattice),
}

/// Reference tags for one utterance under the mode's tagging method.
/// Sequence mode aligns the one-best entries against the reference —
/// a Levenshtein alignment of the single-entry network.
pub fn tag_utterance(
    mode: TrainMode,
    input: &UtteranceInput<'_>,
    reference: &ReferenceTranscript,
    overlap_threshold: f64,
) -> Result<Vec<TargetTag>, TrainError> {
    match (mode, input) {
        (TrainMode::Sequence, UtteranceInput::Cn(cn)) => {
            let one_best = graph::one_best_cn(cn);
            let mut tags = tag_cn(&one_best, &reference.words);
            for tag in &mut tags {
                tag.method = TagMethod::Levenshtein1Best;
            }
            Ok(tags)
        }
        (TrainMode::Cn, UtteranceInput::Cn(cn)) => Ok(tag_cn(cn, &reference.words)),
        (TrainMode::Lattice, UtteranceInput::Lattice(lattice)) => {
            Ok(tag_lattice(lattice, reference, overlap_threshold)?)
        }
        (mode, _) => Err(TrainError::Config(format!(
            "mode {mode} does not accept this input shape"
        ))),
    }
}

/// The lattice the mode actually scores: one-best reduction, CN
/// conversion, or the lattice itself.
pub fn scorable_lattice(mode: TrainMode, input: &UtteranceInput<'_>) -> Result<Lattice, TrainError> {
    match (mode, input) {
        (TrainMode::Sequence, UtteranceInput::Cn(cn)) => {
            Ok(graph::cn_to_lattice(&graph::one_best_cn(cn))?)
        }
        (TrainMode::Cn, UtteranceInput::Cn(cn)) => Ok(graph::cn_to_lattice(cn)?),
        (TrainMode::Lattice, UtteranceInput::Lattice(lattice)) => Ok((*lattice).clone()),
        (mode, _) => Err(TrainError::Config(format!(
            "mode {mode} does not accept this input shape"
        ))),
    }
}

fn assemble(
    utterance_id: &str,
    lattice: Lattice,
    targets_by_arc: &HashMap<usize, bool>,
    source: &impl FeatureSource,
) -> Result<TaggedUtterance, TrainError> {
    let mut targets = Vec::with_capacity(lattice.arcs.len());
    for arc in &lattice.arcs {
        let t = targets_by_arc
            .get(&arc.id)
            .ok_or_else(|| TrainError::MissingTag {
                utterance_id: utterance_id.to_string(),
                arc_id: arc.id,
            })?;
        targets.push(f64::from(u8::from(*t)));
    }
    let features = lattice
        .arcs
        .iter()
        .map(|arc| source.arc_features(&lattice, arc))
        .collect();
    Ok(TaggedUtterance {
        utterance_id: utterance_id.to_string(),
        lattice,
        features,
        targets,
    })
}

/// Tag and featurize a whole corpus against its references.
pub fn build_dataset(
    mode: TrainMode,
    networks: &[ConfusionNetwork],
    lattices: &[Lattice],
    references: &[ReferenceTranscript],
    overlap_threshold: f64,
    source: &impl FeatureSource,
) -> Result<Vec<TaggedUtterance>, TrainError> {
    let by_id: HashMap<&str, &ReferenceTranscript> = references
        .iter()
        .map(|r| (r.utterance_id.as_str(), r))
        .collect();
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
    if inputs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    inputs
        .into_iter()
        .map(|(id, input)| {
            let reference = by_id
                .get(id.as_str())
                .ok_or_else(|| TrainError::MissingReference { utterance_id: id.clone() })?;
            let tags = tag_utterance(mode, &input, reference, overlap_threshold)?;
            let map: HashMap<usize, bool> = tags.iter().map(|t| (t.arc_id, t.target)).collect();
            assemble(&id, scorable_lattice(mode, &input)?, &map, source)
        })
        .collect()
}

/// Featurize a corpus whose targets come from pre-computed tag
/// records (for example a tags file) instead of references.
pub fn build_dataset_from_tags(
    mode: TrainMode,
    networks: &[ConfusionNetwork],
    lattices: &[Lattice],
    tags: &[(String, TargetTag)],
    source: &impl FeatureSource,
) -> Result<Vec<TaggedUtterance>, TrainError> {
    let mut by_utt: HashMap<&str, HashMap<usize, bool>> = HashMap::new();
    for (utt, tag) in tags {
        by_utt.entry(utt).or_default().insert(tag.arc_id, tag.target);
    }
    let empty = HashMap::new();
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
    if inputs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    inputs
        .into_iter()
        .map(|(id, input)| {
            let map = by_utt.get(id.as_str()).unwrap_or(&empty);
            assemble(&id, scorable_lattice(mode, &input)?, map, source)
        })
        .collect()
}

/// Deterministic seeded three-way split over utterance indices. The
/// validation and test parts are never empty.
pub fn split_corpus(
    count: usize,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), TrainError> {
    if count == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    let (rt, rv, rs) = ratios;
    for (name, r) in [("train", rt), ("valid", rv), ("test", rs)] {
        if !(r > 0.0) {
            return Err(TrainError::ZeroPartition { name });
        }
    }
    let sum = rt + rv + rs;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TrainError::BadSplit { sum });
    }
    if count < 3 {
        return Err(TrainError::CorpusTooSmall { count });
    }
    let mut indices: Vec<usize> = (0..count).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_train = ((count as f64) * rt).round() as usize;
    let mut n_valid = ((count as f64) * rv).round() as usize;
    n_valid = n_valid.clamp(1, count - 2);
    n_train = n_train.clamp(1, count - n_valid - 1);
    let test = indices.split_off(n_train + n_valid);
    let valid = indices.split_off(n_train);
    Ok((indices, valid, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Arc-weighted mean BCE over the training split; epoch 0 is the
    /// untrained model.
    pub train_loss: f64,
    pub val_nce: f64,
    pub val_ap: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub selected_epoch: usize,
    pub wall_clock: Duration,
}

impl TrainReport {
    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.selected_epoch]
    }
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.epochs {
            writeln!(
                f,
                "epoch {} loss {:.6} val_nce {:.6} val_ap {:.6} lr {:.6}",
                e.epoch, e.train_loss, e.val_nce, e.val_ap, e.lr
            )?;
        }
        writeln!(
            f,
            "selected epoch {} val_nce {:.6} wall_clock {:.2}s",
            self.selected_epoch,
            self.best().val_nce,
            self.wall_clock.as_secs_f64()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub report: TrainReport,
    pub train_indices: Vec<usize>,
    pub valid_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Score several utterances; parallel when the feature is on.
pub fn score_dataset(
    dataset: &[&TaggedUtterance],
    params: &ModelParams,
    merge: MergeMethod,
) -> Result<Vec<Vec<ArcConfidence>>, TrainError> {
    par::map_slice(dataset, |u| score_lattice(&u.lattice, &u.features, params, merge))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(TrainError::from)
}

/// Always-sequential twin of [`score_dataset`], for benchmarks.
pub fn score_dataset_seq(
    dataset: &[&TaggedUtterance],
    params: &ModelParams,
    merge: MergeMethod,
) -> Result<Vec<Vec<ArcConfidence>>, TrainError> {
    par::map_slice_seq(dataset, |u| score_lattice(&u.lattice, &u.features, params, merge))
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(TrainError::from)
}

fn pool<'a>(dataset: &'a [TaggedUtterance], indices: &[usize]) -> Vec<&'a TaggedUtterance> {
    indices.iter().map(|&i| &dataset[i]).collect()
}

/// Arc-weighted mean BCE over the given utterances, forward pass only.
fn dataset_loss(
    subset: &[&TaggedUtterance],
    params: &ModelParams,
    merge: MergeMethod,
) -> Result<f64, TrainError> {
    let confs = score_dataset(subset, params, merge)?;
    let mut sum = 0.0;
    let mut arcs = 0usize;
    for (u, c) in subset.iter().zip(&confs) {
        let conf: Vec<f64> = c.iter().map(|a| a.c).collect();
        sum += crate::propagate::bce_loss(&conf, &u.targets)? * u.targets.len() as f64;
        arcs += u.targets.len();
    }
    Ok(sum / arcs as f64)
}

fn validation_metrics(
    subset: &[&TaggedUtterance],
    params: &ModelParams,
    merge: MergeMethod,
) -> Result<(f64, f64), TrainError> {
    let confs = score_dataset(subset, params, merge)?;
    let mut pooled = Vec::new();
    let mut targets = Vec::new();
    for (u, c) in subset.iter().zip(&confs) {
        pooled.extend(c.iter().map(|a| a.c));
        targets.extend(u.bool_targets());
    }
    let nce = metrics::nce(&pooled, &targets)?.nce;
    let ap = metrics::average_precision(&pooled, &targets)?;
    Ok((nce, ap))
}

/// Lock-free shared parameter store for the asynchronous mode. Reads
/// and elementwise read-modify-write updates deliberately interleave
/// without mutual exclusion; concurrent writers may overwrite each
/// other's increments. Relaxed atomics keep that contract while the
/// compiled loads and stores stay plain machine accesses.
struct SharedParams {
    bits: Vec<AtomicU64>,
}

impl SharedParams {
    fn new(params: &ModelParams) -> Self {
        SharedParams {
            bits: params.data.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    fn snapshot(&self, meta: ModelMeta) -> ModelParams {
        ModelParams {
            meta,
            data: self
                .bits
                .iter()
                .map(|b| f64::from_bits(b.load(Ordering::Relaxed)))
                .collect(),
        }
    }

    fn apply(&self, grad: &[f64], lr: f64) {
        for (slot, &g) in self.bits.iter().zip(grad) {
            if g != 0.0 {
                let cur = f64::from_bits(slot.load(Ordering::Relaxed));
                slot.store((cur - lr * g).to_bits(), Ordering::Relaxed);
            }
        }
    }
}

fn sgd_utterance(
    u: &TaggedUtterance,
    params: &ModelParams,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(f64, crate::nn::Gradient), TrainError> {
    let (loss, mut grad) =
        loss_and_gradient(&u.lattice, &u.features, &u.targets, params, config.merge)?;
    if !loss.is_finite() {
        return Err(TrainError::Divergence {
            epoch,
            utterance_id: u.utterance_id.clone(),
        });
    }
    clip_global_norm(&mut grad, config.clip);
    Ok((loss, grad))
}

fn run_epoch_sequential(
    dataset: &[TaggedUtterance],
    order: &[usize],
    params: &mut ModelParams,
    config: &TrainConfig,
    lr: f64,
    epoch: usize,
) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    let mut arcs = 0usize;
    for &i in order {
        let u = &dataset[i];
        let (loss, grad) = sgd_utterance(u, params, config, epoch)?;
        params.sgd_step(&grad, lr).expect("gradient shape matches");
        sum += loss * u.targets.len() as f64;
        arcs += u.targets.len();
    }
    Ok(sum / arcs as f64)
}

fn run_epoch_hogwild(
    dataset: &[TaggedUtterance],
    order: &[usize],
    shared: &SharedParams,
    meta: ModelMeta,
    config: &TrainConfig,
    lr: f64,
    epoch: usize,
) -> Result<f64, TrainError> {
    let shard_len = order.len().div_ceil(config.workers);
    let failure: Mutex<Option<TrainError>> = Mutex::new(None);
    let mut totals = vec![(0.0f64, 0usize); config.workers];
    std::thread::scope(|scope| {
        for (shard, total) in order.chunks(shard_len).zip(&mut totals) {
            let failure = &failure;
            scope.spawn(move || {
                for &i in shard {
                    let u = &dataset[i];
                    let snapshot = shared.snapshot(meta);
                    match sgd_utterance(u, &snapshot, config, epoch) {
                        Ok((loss, grad)) => {
                            shared.apply(&grad.data, lr);
                            total.0 += loss * u.targets.len() as f64;
                            total.1 += u.targets.len();
                        }
                        Err(e) => {
                            *failure.lock().unwrap() = Some(e);
                            return;
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let (sum, arcs) = totals
        .iter()
        .fold((0.0, 0), |(s, a), &(ls, la)| (s + ls, a + la));
    Ok(sum / arcs as f64)
}

/// Run the configured number of epochs and keep the parameters from
/// the epoch with the best validation NCE (epoch 0 is the untrained
/// model). The learning rate halves every epoch validation fails to
/// improve; three consecutive failures stop training early. With one
/// worker the result is bit-reproducible for a fixed seed.
pub fn train(
    dataset: &[TaggedUtterance],
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let d_x = dataset[0].features.first().map_or(0, Vec::len);
    for u in dataset {
        if u.features.iter().any(|x| x.len() != d_x) || u.features.len() != u.lattice.arcs.len() {
            return Err(TrainError::Config(format!(
                "inconsistent feature shapes in utterance {:?}",
                u.utterance_id
            )));
        }
    }
    if d_x == 0 {
        return Err(TrainError::Config("empty feature vectors".into()));
    }

    let started = Instant::now();
    let (train_idx, valid_idx, test_idx) = split_corpus(dataset.len(), config.split, config.seed)?;
    let meta = ModelMeta {
        cell: config.cell,
        d_x,
        d_h: config.d_h,
        d_f: config.d_f,
        attn_activation: config.attn_activation,
    };
    let mut params = ModelParams::init(meta, config.seed);
    let train_set = pool(dataset, &train_idx);
    let valid_set = pool(dataset, &valid_idx);

    let mut lr = config.lr;
    let (nce0, ap0) = validation_metrics(&valid_set, &params, config.merge)?;
    let mut epochs = vec![EpochStats {
        epoch: 0,
        train_loss: dataset_loss(&train_set, &params, config.merge)?,
        val_nce: nce0,
        val_ap: ap0,
        lr,
    }];
    let mut best_params = params.clone();
    let mut best_nce = nce0;
    let mut selected_epoch = 0;
    let mut failures = 0;

    let shared = (config.workers > 1).then(|| SharedParams::new(&params));
    let mut order = train_idx.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x0bf5)); // shuffle stream
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let train_loss = match &shared {
            Some(shared) => {
                let loss =
                    run_epoch_hogwild(dataset, &order, shared, meta, config, lr, epoch)?;
                params = shared.snapshot(meta);
                loss
            }
            None => run_epoch_sequential(dataset, &order, &mut params, config, lr, epoch)?,
        };
        let (val_nce, val_ap) = validation_metrics(&valid_set, &params, config.merge)?;
        epochs.push(EpochStats { epoch, train_loss, val_nce, val_ap, lr });
        if val_nce > best_nce {
            best_nce = val_nce;
            best_params = params.clone();
            selected_epoch = epoch;
            failures = 0;
        } else {
            failures += 1;
            lr *= 0.5;
            if failures >= 3 {
                break;
            }
        }
    }

    Ok(TrainOutput {
        params: best_params,
        report: TrainReport {
            epochs,
            selected_epoch,
            wall_clock: started.elapsed(),
        },
        train_indices: train_idx,
        valid_indices: valid_idx,
        test_indices: test_idx,
    })
}

/// The asynchronous entry point; `workers = 1` degenerates to the
/// sequential path of [`train`] exactly.
pub fn train_hogwild(
    dataset: &[TaggedUtterance],
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    train(dataset, config)
}

/// Fit the decision-tree posterior map on a pool of utterances (the
/// training split, normally).
pub fn fit_posterior_tree(
    subset: &[&TaggedUtterance],
    config: &TreeConfig,
) -> Result<CalibrationMapping, TrainError> {
    let mut posteriors = Vec::new();
    let mut targets = Vec::new();
    for u in subset {
        posteriors.extend(u.lattice.arcs.iter().map(|a| a.posterior));
        targets.extend(u.bool_targets());
    }
    Ok(calibrate::fit_tree(&posteriors, &targets, config)?)
}

pub const EVAL_THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// The three-row comparison: raw posterior, tree-mapped posterior, and
/// the recurrent model, pooled over the same arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub raw: EvalReport,
    pub tree: Option<EvalReport>,
    pub model: EvalReport,
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |r: &EvalReport| (r.nce, r.ap);
        let (nce, ap) = row(&self.raw);
        writeln!(f, "posterior  nce {nce:.6} ap {ap:.6}")?;
        if let Some(tree) = &self.tree {
            let (nce, ap) = row(tree);
            writeln!(f, "tree       nce {nce:.6} ap {ap:.6}")?;
        }
        let (nce, ap) = row(&self.model);
        writeln!(f, "model      nce {nce:.6} ap {ap:.6}")
    }
}

/// Score every arc of the subset with the model and both baselines.
pub fn evaluate(
    subset: &[&TaggedUtterance],
    params: &ModelParams,
    merge: MergeMethod,
    tree: Option<&CalibrationMapping>,
    thresholds: &[f64],
) -> Result<ConditionReport, TrainError> {
    if subset.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let confs = score_dataset(subset, params, merge)?;
    let mut model_c = Vec::new();
    let mut raw_c = Vec::new();
    let mut targets = Vec::new();
    for (u, c) in subset.iter().zip(&confs) {
        model_c.extend(c.iter().map(|a| a.c));
        raw_c.extend(u.lattice.arcs.iter().map(|a| a.posterior));
        targets.extend(u.bool_targets());
    }
    let raw = metrics::evaluate(&raw_c, &targets, thresholds)?;
    let tree = tree
        .map(|m| metrics::evaluate(&calibrate::map_all(m, &raw_c), &targets, thresholds))
        .transpose()?;
    let model = metrics::evaluate(&model_c, &targets, thresholds)?;
    Ok(ConditionReport { raw, tree, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmbeddingTable, FeatureConfig, FeatureExtractor};
    use crate::synth::{gen_corpus, SynthConfig};

    fn small_source() -> FeatureExtractor {
        FeatureExtractor {
            table: EmbeddingTable::new(4),
            mapping: None,
            config: FeatureConfig { use_scores: false },
        }
    }

    fn small_corpus(utterances: usize, seed: u64) -> Vec<TaggedUtterance> {
        let corpus = gen_corpus(&SynthConfig {
            utterances,
            len_min: 4,
            len_max: 7,
            p_sub: 0.3,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        build_dataset(
            TrainMode::Cn,
            &corpus.networks,
            &corpus.lattices,
            &corpus.references,
            DEFAULT_OVERLAP_THRESHOLD,
            &small_source(),
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            d_h: 6,
            d_f: 4,
            epochs: 5,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_examples() {
        let (t, v, s) = split_corpus(10, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((t.len(), v.len(), s.len()), (8, 1, 1));
        let again = split_corpus(10, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((t.clone(), v.clone(), s.clone()), again);
        let mut all: Vec<usize> = t.iter().chain(&v).chain(&s).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_ne!(split_corpus(10, (0.8, 0.1, 0.1), 2).unwrap().0, t);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_corpus(0, (0.8, 0.1, 0.1), 0),
            Err(TrainError::EmptyCorpus)
        ));
        assert!(matches!(
            split_corpus(10, (1.0, 0.0, 0.0), 0),
            Err(TrainError::ZeroPartition { .. })
        ));
        assert!(matches!(
            split_corpus(10, (0.5, 0.2, 0.2), 0),
            Err(TrainError::BadSplit { .. })
        ));
        assert!(matches!(
            split_corpus(2, (0.8, 0.1, 0.1), 0),
            Err(TrainError::CorpusTooSmall { count: 2 })
        ));
    }

    #[test]
    fn tagging_dispatch_per_mode() {
        let corpus = gen_corpus(&SynthConfig {
            utterances: 3,
            seed: 21,
            ..SynthConfig::default()
        })
        .unwrap();
        let cn = &corpus.networks[0];
        let lat = &corpus.lattices[0];
        let rf = &corpus.references[0];
        let seq = tag_utterance(TrainMode::Sequence, &UtteranceInput::Cn(cn), rf, 0.5).unwrap();
        assert!(seq.iter().all(|t| t.method == TagMethod::Levenshtein1Best));
        assert_eq!(seq.len(), cn.bins.len());
        let cnt = tag_utterance(TrainMode::Cn, &UtteranceInput::Cn(cn), rf, 0.5).unwrap();
        assert!(cnt.iter().all(|t| t.method == TagMethod::ReducedCnc));
        let lt = tag_utterance(TrainMode::Lattice, &UtteranceInput::Lattice(lat), rf, 0.5).unwrap();
        assert!(lt.iter().all(|t| t.method == TagMethod::Overlap));
        assert_eq!(lt.len(), lat.arcs.len());
        assert!(matches!(
            tag_utterance(TrainMode::Lattice, &UtteranceInput::Cn(cn), rf, 0.5),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn dataset_shapes_align() {
        let dataset = small_corpus(10, 22);
        for u in &dataset {
            assert_eq!(u.features.len(), u.lattice.arcs.len());
            assert_eq!(u.targets.len(), u.lattice.arcs.len());
            assert!(u.features.iter().all(|x| x.len() == 6));
            assert!(u.targets.iter().all(|&t| t == 0.0 || t == 1.0));
        }
    }

    #[test]
    fn missing_reference_is_reported() {
        let corpus = gen_corpus(&SynthConfig { utterances: 2, seed: 23, ..SynthConfig::default() })
            .unwrap();
        let err = build_dataset(
            TrainMode::Cn,
            &corpus.networks,
            &corpus.lattices,
            &corpus.references[..1],
            0.5,
            &small_source(),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::MissingReference { utterance_id } if utterance_id == "u0001"));
    }

    #[test]
    fn loss_decreases_on_tiny_corpus() {
        let dataset = small_corpus(50, 24);
        let out = train(&dataset, &small_config()).unwrap();
        let first = out.report.epochs.first().unwrap().train_loss;
        let last = out.report.epochs.last().unwrap().train_loss;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn same_seed_same_checkpoint() {
        let dataset = small_corpus(20, 25);
        let a = train(&dataset, &small_config()).unwrap();
        let b = train(&dataset, &small_config()).unwrap();
        assert_eq!(a.params, b.params);
        for (x, y) in a.params.data.iter().zip(&b.params.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.report.epochs, b.report.epochs);
    }

    #[test]
    fn zero_lr_keeps_initial_params() {
        let dataset = small_corpus(12, 26);
        let config = TrainConfig { lr: 0.0, epochs: 3, ..small_config() };
        let out = train(&dataset, &config).unwrap();
        let d_x = dataset[0].features[0].len();
        let meta = ModelMeta {
            cell: config.cell,
            d_x,
            d_h: config.d_h,
            d_f: config.d_f,
            attn_activation: config.attn_activation,
        };
        assert_eq!(out.params, ModelParams::init(meta, config.seed));
        let nces: Vec<f64> = out.report.epochs.iter().map(|e| e.val_nce).collect();
        assert!(nces.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.report.selected_epoch, 0);
    }

    #[test]
    fn selection_is_argmax_of_validation_nce() {
        let dataset = small_corpus(30, 27);
        let out = train(&dataset, &small_config()).unwrap();
        let best = out
            .report
            .epochs
            .iter()
            .max_by(|a, b| a.val_nce.total_cmp(&b.val_nce))
            .unwrap();
        assert_eq!(out.report.selected_epoch, best.epoch);
        assert!(out.report.best().val_nce >= out.report.epochs[0].val_nce);
    }

    #[test]
    fn divergence_is_reported_with_location() {
        let mut dataset = small_corpus(10, 28);
        dataset[3].features[0][0] = f64::NAN;
        let err = train(&dataset, &small_config()).unwrap_err();
        match err {
            TrainError::Divergence { epoch, utterance_id } => {
                assert_eq!(epoch, 1);
                assert_eq!(utterance_id, "u0003");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn hogwild_single_worker_equals_sequential() {
        let dataset = small_corpus(15, 29);
        let config = TrainConfig { workers: 1, ..small_config() };
        let a = train(&dataset, &config).unwrap();
        let b = train_hogwild(&dataset, &config).unwrap();
        for (x, y) in a.params.data.iter().zip(&b.params.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn hogwild_two_workers_stays_sane() {
        let dataset = small_corpus(30, 30);
        let base = small_config();
        let w1 = train(&dataset, &base).unwrap();
        let w2 = train(&dataset, &TrainConfig { workers: 2, ..base }).unwrap();
        assert!(w2.params.data.iter().all(|v| v.is_finite()));
        let diff = (w1.report.best().val_nce - w2.report.best().val_nce).abs();
        assert!(diff < 0.3, "val nce drifted by {diff}");
        assert_eq!(w2.report.selected_epoch, {
            let best = w2
                .report
                .epochs
                .iter()
                .max_by(|a, b| a.val_nce.total_cmp(&b.val_nce))
                .unwrap();
            best.epoch
        });
    }

    #[test]
    fn gradient_clip_bounds_global_norm() {
        let dataset = small_corpus(5, 31);
        let u = &dataset[0];
        let meta = ModelMeta {
            cell: CellKind::Gated,
            d_x: u.features[0].len(),
            d_h: 6,
            d_f: 4,
            attn_activation: AttnActivation::Logistic,
        };
        let params = ModelParams::init(meta, 1);
        let (_, mut grad) =
            loss_and_gradient(&u.lattice, &u.features, &u.targets, &params, MergeMethod::Mean)
                .unwrap();
        let pre = clip_global_norm(&mut grad, 0.001);
        assert!(pre > 0.001);
        assert!(grad.global_norm() <= 0.001 + 1e-12);
    }

    #[test]
    fn evaluate_reports_three_rows() {
        let dataset = small_corpus(40, 32);
        let out = train(&dataset, &small_config()).unwrap();
        let train_set = pool(&dataset, &out.train_indices);
        let test_set = pool(&dataset, &out.test_indices);
        let tree = fit_posterior_tree(&train_set, &TreeConfig {
            min_leaf: 20,
            ..TreeConfig::default()
        })
        .unwrap();
        let report = evaluate(
            &test_set,
            &out.params,
            small_config().merge,
            Some(&tree),
            &EVAL_THRESHOLDS,
        )
        .unwrap();
        let tree_row = report.tree.as_ref().unwrap();
        assert!((report.raw.ap - tree_row.ap).abs() < 1e-12);
        let again = evaluate(
            &test_set,
            &out.params,
            small_config().merge,
            Some(&tree),
            &EVAL_THRESHOLDS,
        )
        .unwrap();
        assert_eq!(report, again);
        let text = report.to_string();
        assert!(text.contains("posterior") && text.contains("tree") && text.contains("model"));
    }

    #[test]
    fn sequential_and_parallel_scoring_agree() {
        let dataset = small_corpus(8, 33);
        let refs = pool(&dataset, &(0..dataset.len()).collect::<Vec<_>>());
        let meta = ModelMeta {
            cell: CellKind::Simple,
            d_x: dataset[0].features[0].len(),
            d_h: 5,
            d_f: 0,
            attn_activation: AttnActivation::Logistic,
        };
        let params = ModelParams::init(meta, 2);
        let par = score_dataset(&refs, &params, MergeMethod::Posterior).unwrap();
        let seq = score_dataset_seq(&refs, &params, MergeMethod::Posterior).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn report_log_lines() {
        let dataset = small_corpus(12, 34);
        let out = train(&dataset, &TrainConfig { epochs: 2, ..small_config() }).unwrap();
        let log = out.report.to_string();
        assert!(log.lines().next().unwrap().starts_with("epoch 0 loss "));
        assert!(log.contains("val_nce"));
        assert!(log.contains("lr"));
        assert!(log.contains("selected epoch"));
    }
}
