//! Corpus file formats and per-arc feature extraction.
//!
//! Everything is line-oriented UTF-8 text: HTK-style SLF lattices, CN
//! files, CTM references, plain-text references, embedding tables,
//! score/target files and model checkpoints. Writers emit a canonical
//! form that reparses to a structurally identical value.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calibrate::{apply_mapping, CalibrationMapping, Interpolation};
use crate::graph::{Arc, Bin, ConfusionNetwork, Lattice, Node, BIN_SUM_TOLERANCE};
use crate::nn::{AttnActivation, CellKind, ModelMeta, ModelParams};
use crate::propagate::{FeatureSource, MergeMethod};
use crate::tagging::{TagMethod, TargetTag};
use crate::train::TrainMode;
use crate::{ArcId, NULL_WORD};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: link references undefined node {node}")]
    ReferenceToUndefinedNode { line: usize, node: usize },
    #[error("{kind} count mismatch: declared {declared}, found {actual}")]
    CountMismatch {
        kind: &'static str,
        declared: usize,
        actual: usize,
    },
    #[error("line {line}: negative duration")]
    NegativeDuration { line: usize },
    #[error("line {line}: embedding dimension mismatch")]
    DimensionMismatch { line: usize },
    #[error("unsupported checkpoint version {found:?}")]
    VersionMismatch { found: String },
    #[error("checkpoint shape mismatch: {context}")]
    ShapeMismatch { context: String },
}

/// Recoverable oddities parsers report without failing.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusWarning {
    /// A CN bin's posteriors sum outside the tolerance around one.
    BinPosteriorSum { line: usize, sum: f64 },
    /// CTM words of one utterance overlap in time.
    OverlappingReference { utterance_id: String },
}

impl fmt::Display for CorpusWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusWarning::BinPosteriorSum { line, sum } => {
                write!(f, "line {line}: bin posteriors sum to {sum}")
            }
            CorpusWarning::OverlappingReference { utterance_id } => {
                write!(f, "reference words of {utterance_id} overlap in time")
            }
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, CorpusError> {
    tok.parse()
        .map_err(|_| syntax(line, format!("bad {what} {tok:?}")))
}

/// Reference transcript for one utterance, optionally time-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTranscript {
    pub utterance_id: String,
    pub words: Vec<String>,
    /// Per-word `(start, end)` in seconds, parallel to `words`; ordered
    /// and non-overlapping when present.
    pub timings: Option<Vec<(f64, f64)>>,
}

/// Strip `#` comments, yielding `(1-based line number, content)` for
/// non-blank lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

// ---------------------------------------------------------------- SLF

fn kv_fields<'a>(
    line_no: usize,
    line: &'a str,
) -> Result<Vec<(&'a str, &'a str)>, CorpusError> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| syntax(line_no, format!("expected key=value, got {tok:?}")))
        })
        .collect()
}

pub fn parse_slf(text: &str) -> Result<Lattice, CorpusError> {
    parse_slf_full(text).map(|(lattice, _)| lattice)
}

/// Parse the supported SLF subset; unknown header keys are preserved
/// in the returned map.
pub fn parse_slf_full(
    text: &str,
) -> Result<(Lattice, BTreeMap<String, String>), CorpusError> {
    let mut headers = BTreeMap::new();
    let mut counts: Option<(usize, usize, usize)> = None; // (line, N, L)
    let mut node_times: Vec<Option<f64>> = Vec::new();
    let mut links: Vec<Option<(usize, usize, String, f64, f64, f64)>> = Vec::new();
    let mut nodes_seen = 0usize;
    let mut links_seen = 0usize;

    for (line_no, line) in content_lines(text) {
        let fields = kv_fields(line_no, line)?;
        let lookup = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        if counts.is_none() {
            if lookup("N").is_some() && lookup("L").is_some() {
                let n: usize = parse_num(lookup("N").unwrap(), line_no, "node count")?;
                let l: usize = parse_num(lookup("L").unwrap(), line_no, "link count")?;
                counts = Some((line_no, n, l));
                node_times = vec![None; n];
                links = vec![None; l];
            } else {
                let [(key, value)] = fields[..] else {
                    return Err(syntax(line_no, "expected a single KEY=VALUE header"));
                };
                headers.insert(key.to_string(), value.to_string());
            }
            continue;
        }
        let (_, n_decl, l_decl) = counts.unwrap();
        if let Some(id_tok) = lookup("I") {
            let id: usize = parse_num(id_tok, line_no, "node id")?;
            if id >= n_decl {
                return Err(syntax(line_no, format!("node id {id} out of range")));
            }
            if node_times[id].is_some() {
                return Err(syntax(line_no, format!("duplicate node {id}")));
            }
            let t_tok = lookup("t").ok_or_else(|| syntax(line_no, "node missing t="))?;
            node_times[id] = Some(parse_num(t_tok, line_no, "node time")?);
            nodes_seen += 1;
        } else if let Some(id_tok) = lookup("J") {
            let id: usize = parse_num(id_tok, line_no, "link id")?;
            if id >= l_decl {
                return Err(syntax(line_no, format!("link id {id} out of range")));
            }
            if links[id].is_some() {
                return Err(syntax(line_no, format!("duplicate link {id}")));
            }
            let need = |key: &str| {
                lookup(key).ok_or_else(|| syntax(line_no, format!("link missing {key}=")))
            };
            let s: usize = parse_num(need("S")?, line_no, "start node")?;
            let e: usize = parse_num(need("E")?, line_no, "end node")?;
            for node in [s, e] {
                if node >= n_decl {
                    return Err(CorpusError::ReferenceToUndefinedNode { line: line_no, node });
                }
            }
            let word = need("W")?.to_string();
            let opt = |key: &str| -> Result<f64, CorpusError> {
                lookup(key).map_or(Ok(0.0), |tok| parse_num(tok, line_no, key))
            };
            links[id] = Some((s, e, word, opt("a")?, opt("l")?, opt("p")?));
            links_seen += 1;
        } else {
            return Err(syntax(line_no, "expected node (I=) or link (J=) line"));
        }
    }

    let Some((decl_line, n_decl, l_decl)) = counts else {
        return Err(syntax(0, "missing N=/L= declaration"));
    };
    if nodes_seen != n_decl {
        return Err(CorpusError::CountMismatch {
            kind: "node",
            declared: n_decl,
            actual: nodes_seen,
        });
    }
    if links_seen != l_decl {
        return Err(CorpusError::CountMismatch {
            kind: "link",
            declared: l_decl,
            actual: links_seen,
        });
    }
    if n_decl == 0 {
        return Err(syntax(decl_line, "lattice has no nodes"));
    }

    let nodes: Vec<Node> = node_times
        .iter()
        .enumerate()
        .map(|(id, t)| Node { id, time: t.unwrap() })
        .collect();
    let arcs: Vec<Arc> = links
        .into_iter()
        .enumerate()
        .map(|(id, link)| {
            let (s, e, word, am, lm, p) = link.unwrap();
            Arc {
                id,
                start_node: s,
                end_node: e,
                word,
                start_time: nodes[s].time,
                end_time: nodes[e].time,
                posterior: p,
                am_score: am,
                lm_score: lm,
            }
        })
        .collect();

    // Initial/final: the lowest-id source/sink; structural problems
    // (none or several) are graph::validate's department.
    let mut has_in = vec![false; nodes.len()];
    let mut has_out = vec![false; nodes.len()];
    for arc in &arcs {
        has_out[arc.start_node] = true;
        has_in[arc.end_node] = true;
    }
    let initial = has_in.iter().position(|x| !x).unwrap_or(0);
    let final_node = has_out.iter().position(|x| !x).unwrap_or(nodes.len() - 1);

    let utterance_id = headers.remove("UTTERANCE").unwrap_or_default();
    Ok((
        Lattice {
            utterance_id,
            nodes,
            arcs,
            initial,
            final_node,
        },
        headers,
    ))
}

/// Canonical SLF text: node times with 2 decimals, scores with 6; arc
/// times are carried by the endpoint nodes. Empty words become the
/// null token.
pub fn write_slf(lattice: &Lattice) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "UTTERANCE={}", lattice.utterance_id);
    let _ = writeln!(out, "N={} L={}", lattice.nodes.len(), lattice.arcs.len());
    for node in &lattice.nodes {
        let _ = writeln!(out, "I={} t={:.2}", node.id, node.time);
    }
    for arc in &lattice.arcs {
        let word = if arc.word.is_empty() { NULL_WORD } else { &arc.word };
        let _ = writeln!(
            out,
            "J={} S={} E={} W={} a={:.6} l={:.6} p={:.6}",
            arc.id, arc.start_node, arc.end_node, word, arc.am_score, arc.lm_score, arc.posterior
        );
    }
    out
}

// ----------------------------------------------------------------- CN

pub fn parse_cn(text: &str) -> Result<(ConfusionNetwork, Vec<CorpusWarning>), CorpusError> {
    let mut utterance_id: Option<String> = None;
    let mut bins: Vec<Bin> = Vec::new();
    let mut bin_lines: Vec<usize> = Vec::new();
    for (line_no, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match (utterance_id.is_some(), tokens.as_slice()) {
            (false, ["UTT", id]) => utterance_id = Some(id.to_string()),
            (false, _) => return Err(syntax(line_no, "expected UTT <id>")),
            (true, ["BIN", s, e]) => {
                bins.push(Bin {
                    start_time: parse_num(s, line_no, "bin start")?,
                    end_time: parse_num(e, line_no, "bin end")?,
                    entries: Vec::new(),
                });
                bin_lines.push(line_no);
            }
            (true, ["ARC", word, p]) => {
                let bin = bins
                    .last_mut()
                    .ok_or_else(|| syntax(line_no, "ARC before any BIN"))?;
                bin.entries
                    .push((word.to_string(), parse_num(p, line_no, "posterior")?));
            }
            (true, _) => return Err(syntax(line_no, "expected BIN or ARC line")),
        }
    }
    let utterance_id = utterance_id.ok_or_else(|| syntax(0, "missing UTT line"))?;
    if bins.is_empty() {
        return Err(syntax(0, "confusion network has no bins"));
    }
    let mut warnings = Vec::new();
    for (bin, &line) in bins.iter().zip(&bin_lines) {
        if bin.entries.is_empty() {
            return Err(syntax(line, "bin has no arcs"));
        }
        let sum: f64 = bin.entries.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > BIN_SUM_TOLERANCE {
            warnings.push(CorpusWarning::BinPosteriorSum { line, sum });
        }
    }
    Ok((ConfusionNetwork { utterance_id, bins }, warnings))
}

pub fn write_cn(cn: &ConfusionNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "UTT {}", cn.utterance_id);
    for bin in &cn.bins {
        let _ = writeln!(out, "BIN {:.2} {:.2}", bin.start_time, bin.end_time);
        for (word, p) in &bin.entries {
            let _ = writeln!(out, "ARC {word} {p:.6}");
        }
    }
    out
}

// ---------------------------------------------------------------- CTM

/// `<utt> <channel> <start> <duration> <word>` lines, grouped by
/// utterance (first-appearance order) and time-sorted within each.
pub fn parse_ctm(
    text: &str,
) -> Result<(Vec<ReferenceTranscript>, Vec<CorpusWarning>), CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(f64, f64, String)>> = HashMap::new();
    for (line_no, line) in content_lines(text) {
        let [utt, _channel, start, duration, word] = line
            .split_whitespace()
            .collect::<Vec<_>>()[..]
        else {
            return Err(syntax(line_no, "expected <utt> <ch> <start> <dur> <word>"));
        };
        let start: f64 = parse_num(start, line_no, "start time")?;
        let duration: f64 = parse_num(duration, line_no, "duration")?;
        if duration < 0.0 {
            return Err(CorpusError::NegativeDuration { line: line_no });
        }
        if !groups.contains_key(utt) {
            order.push(utt.to_string());
        }
        groups
            .entry(utt.to_string())
            .or_default()
            .push((start, start + duration, word.to_string()));
    }
    let mut warnings = Vec::new();
    let transcripts = order
        .into_iter()
        .map(|utterance_id| {
            let mut words = groups.remove(&utterance_id).unwrap();
            words.sort_by(|a, b| a.0.total_cmp(&b.0));
            // Tolerance absorbs the representation error of start+duration
            // sums over parsed decimals (0.33 + 0.28 > 0.61 in f64).
            if words.windows(2).any(|w| w[0].1 > w[1].0 + 1e-9) {
                warnings.push(CorpusWarning::OverlappingReference {
                    utterance_id: utterance_id.clone(),
                });
            }
            ReferenceTranscript {
                utterance_id,
                timings: Some(words.iter().map(|&(s, e, _)| (s, e)).collect()),
                words: words.into_iter().map(|(_, _, w)| w).collect(),
            }
        })
        .collect();
    Ok((transcripts, warnings))
}

pub fn write_ctm(transcripts: &[ReferenceTranscript]) -> String {
    let mut out = String::new();
    for t in transcripts {
        let timings = t.timings.as_ref().expect("CTM requires timings");
        for (word, &(s, e)) in t.words.iter().zip(timings) {
            let _ = writeln!(out, "{} 1 {:.2} {:.2} {}", t.utterance_id, s, e - s, word);
        }
    }
    out
}

/// `<utt> <word>...` lines, one utterance per line, no timings.
pub fn parse_text_refs(text: &str) -> Result<Vec<ReferenceTranscript>, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut tokens = line.split_whitespace();
        let utt = tokens.next().unwrap().to_string();
        if seen.insert(utt.clone(), line_no).is_some() {
            return Err(syntax(line_no, format!("duplicate utterance {utt:?}")));
        }
        out.push(ReferenceTranscript {
            utterance_id: utt,
            words: tokens.map(str::to_string).collect(),
            timings: None,
        });
    }
    Ok(out)
}

pub fn write_text_refs(transcripts: &[ReferenceTranscript]) -> String {
    let mut out = String::new();
    for t in transcripts {
        let _ = writeln!(out, "{} {}", t.utterance_id, t.words.join(" "));
    }
    out
}

// --------------------------------------------------------- embeddings

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "embedding dimension");
        self.vectors.insert(token.into(), vector);
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Tokens in sorted order (the map itself is unordered).
    pub fn tokens(&self) -> Vec<&str> {
        let mut tokens: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        tokens.sort_unstable();
        tokens
    }
}

/// Optional `<count> <dim>` first line, then `<token> <f1> ... <fD>`.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, CorpusError> {
    let mut table: Option<EmbeddingTable> = None;
    for (line_no, line) in content_lines(text) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if table.is_none() && tokens.len() == 2 {
            if let (Ok(_count), Ok(dim)) =
                (tokens[0].parse::<usize>(), tokens[1].parse::<usize>())
            {
                table = Some(EmbeddingTable::new(dim));
                continue;
            }
        }
        let (token, rest) = tokens
            .split_first()
            .ok_or_else(|| syntax(line_no, "empty embedding line"))?;
        let vector: Vec<f64> = rest
            .iter()
            .map(|t| parse_num(t, line_no, "embedding value"))
            .collect::<Result<_, _>>()?;
        if vector.is_empty() {
            return Err(CorpusError::DimensionMismatch { line: line_no });
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != table.dim {
            return Err(CorpusError::DimensionMismatch { line: line_no });
        }
        table.insert(token.to_string(), vector);
    }
    Ok(table.unwrap_or_else(|| EmbeddingTable::new(0)))
}

pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", table.len(), table.dim);
    for token in table.tokens() {
        let _ = write!(out, "{token}");
        for v in table.get(token).unwrap() {
            let _ = write!(out, " {v:.6}");
        }
        out.push('\n');
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stored vector, or a hash-seeded pseudo-random one in [-0.1, 0.1]
/// for out-of-vocabulary tokens — stable across runs. The null token
/// embeds as zeros.
pub fn embed(table: &EmbeddingTable, token: &str) -> Vec<f64> {
    if token == NULL_WORD {
        return vec![0.0; table.dim];
    }
    if let Some(v) = table.get(token) {
        return v.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
    (0..table.dim).map(|_| rng.gen_range(-0.1..0.1)).collect()
}

// ----------------------------------------------------------- features

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Append acoustic and language-model scores to the layout.
    pub use_scores: bool,
}

/// Fixed layout: [mapped_posterior, duration, embedding(D), am?, lm?].
pub fn extract_features(
    arc: &Arc,
    mapping: Option<&CalibrationMapping>,
    table: &EmbeddingTable,
    config: FeatureConfig,
) -> Vec<f64> {
    let mapped = mapping.map_or(arc.posterior, |m| apply_mapping(m, arc.posterior));
    let mut x = Vec::with_capacity(2 + table.dim + 2);
    x.push(mapped);
    x.push(arc.duration());
    x.extend(embed(table, &arc.word));
    if config.use_scores {
        x.push(arc.am_score);
        x.push(arc.lm_score);
    }
    x
}

/// The production feature source: an embedding table plus an optional
/// calibration mapping for the posterior slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    pub table: EmbeddingTable,
    pub mapping: Option<CalibrationMapping>,
    pub config: FeatureConfig,
}

impl FeatureExtractor {
    pub fn d_x(&self) -> usize {
        2 + self.table.dim + if self.config.use_scores { 2 } else { 0 }
    }
}

impl FeatureSource for FeatureExtractor {
    fn arc_features(&self, _lattice: &Lattice, arc: &Arc) -> Vec<f64> {
        extract_features(arc, self.mapping.as_ref(), &self.table, self.config)
    }
}

// ------------------------------------------------------ score / tags

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub utterance_id: String,
    pub arc_id: ArcId,
    pub confidence: f64,
}

pub fn write_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{} {} {:.6}", r.utterance_id, r.arc_id, r.confidence);
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>, CorpusError> {
    content_lines(text)
        .map(|(line_no, line)| {
            let [utt, arc, conf] = line.split_whitespace().collect::<Vec<_>>()[..] else {
                return Err(syntax(line_no, "expected <utt> <arc_id> <confidence>"));
            };
            Ok(ScoreRecord {
                utterance_id: utt.to_string(),
                arc_id: parse_num(arc, line_no, "arc id")?,
                confidence: parse_num(conf, line_no, "confidence")?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagRecord {
    pub utterance_id: String,
    pub tag: TargetTag,
}

pub fn write_tags(records: &[TagRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            r.utterance_id,
            r.tag.arc_id,
            u8::from(r.tag.target),
            r.tag.method
        );
    }
    out
}

pub fn parse_tags(text: &str) -> Result<Vec<TagRecord>, CorpusError> {
    content_lines(text)
        .map(|(line_no, line)| {
            let [utt, arc, target, method] = line.split_whitespace().collect::<Vec<_>>()[..]
            else {
                return Err(syntax(line_no, "expected <utt> <arc_id> <0|1> <method>"));
            };
            let target = match target {
                "0" => false,
                "1" => true,
                other => return Err(syntax(line_no, format!("bad target {other:?}"))),
            };
            let method: TagMethod = method
                .parse()
                .map_err(|e: String| syntax(line_no, e))?;
            Ok(TagRecord {
                utterance_id: utt.to_string(),
                tag: TargetTag {
                    arc_id: parse_num(arc, line_no, "arc id")?,
                    target,
                    method,
                },
            })
        })
        .collect()
}

// ---------------------------------------------------------- checkpoint

pub const CHECKPOINT_VERSION: &str = "v1";

/// Model weights plus everything needed to score new inputs the same
/// way they were scored in training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    /// Input shape the model was trained on (and scores at predict time).
    pub mode: TrainMode,
    pub merge: MergeMethod,
    pub embedding_dim: usize,
    pub use_scores: bool,
    pub mapping: Option<CalibrationMapping>,
}

impl ModelCheckpoint {
    /// The feature length the stored layout implies; always equals
    /// `params.meta.d_x` for a checkpoint this module wrote.
    pub fn feature_len(&self) -> usize {
        2 + self.embedding_dim + if self.use_scores { 2 } else { 0 }
    }
}

pub fn write_model(ckpt: &ModelCheckpoint) -> String {
    let meta = ckpt.params.meta;
    let mut out = String::new();
    let _ = writeln!(out, "LATCONF_MODEL {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "cell {}", meta.cell);
    let _ = writeln!(out, "d_x {}", meta.d_x);
    let _ = writeln!(out, "d_h {}", meta.d_h);
    let _ = writeln!(out, "d_f {}", meta.d_f);
    let _ = writeln!(out, "attn_activation {}", meta.attn_activation);
    let _ = writeln!(out, "mode {}", ckpt.mode);
    let _ = writeln!(out, "merge {}", ckpt.merge);
    let _ = writeln!(out, "embedding_dim {}", ckpt.embedding_dim);
    let _ = writeln!(out, "use_scores {}", ckpt.use_scores);
    match &ckpt.mapping {
        None => {
            let _ = writeln!(out, "mapping none");
        }
        Some(m) => {
            let mode = match m.interpolation {
                Interpolation::Step => "step",
                Interpolation::Linear => "linear",
            };
            let _ = writeln!(out, "mapping {mode} {}", m.values.len());
            for (k, &v) in m.values.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:.16e} {:.16e} {:.16e}",
                    m.breakpoints[k],
                    m.breakpoints[k + 1],
                    v
                );
            }
        }
    }
    for block in meta.layout() {
        let range = meta.range(block);
        let _ = writeln!(out, "block {} {}", block.name(), range.len());
        for &v in &ckpt.params.data[range] {
            let _ = writeln!(out, "{v:.16e}");
        }
    }
    out.push_str("end\n");
    out
}

pub fn parse_model(text: &str) -> Result<ModelCheckpoint, CorpusError> {
    let mut lines = content_lines(text);
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| syntax(0, format!("truncated checkpoint: expected {what}")))
    };

    let (line_no, header) = next("version header")?;
    let (magic, version) = header
        .split_once(' ')
        .ok_or_else(|| syntax(line_no, "bad version header"))?;
    if magic != "LATCONF_MODEL" {
        return Err(syntax(line_no, "not a model checkpoint"));
    }
    if version != CHECKPOINT_VERSION {
        return Err(CorpusError::VersionMismatch {
            found: version.to_string(),
        });
    }

    let mut field = |name: &'static str| -> Result<(usize, String), CorpusError> {
        let (line_no, line) = next(name)?;
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| syntax(line_no, format!("expected `{name} <value>`")))?;
        if key != name {
            return Err(syntax(line_no, format!("expected field {name}, got {key}")));
        }
        Ok((line_no, value.to_string()))
    };

    let (line_no, cell) = field("cell")?;
    let cell: CellKind = cell.parse().map_err(|e: String| syntax(line_no, e))?;
    let (line_no, d_x) = field("d_x")?;
    let d_x: usize = parse_num(&d_x, line_no, "d_x")?;
    let (line_no, d_h) = field("d_h")?;
    let d_h: usize = parse_num(&d_h, line_no, "d_h")?;
    let (line_no, d_f) = field("d_f")?;
    let d_f: usize = parse_num(&d_f, line_no, "d_f")?;
    let (line_no, act) = field("attn_activation")?;
    let attn_activation: AttnActivation =
        act.parse().map_err(|e: String| syntax(line_no, e))?;
    let (line_no, mode) = field("mode")?;
    let mode: TrainMode = mode.parse().map_err(|e: String| syntax(line_no, e))?;
    let (line_no, merge) = field("merge")?;
    let merge: MergeMethod = merge.parse().map_err(|e: String| syntax(line_no, e))?;
    let (line_no, dim) = field("embedding_dim")?;
    let embedding_dim: usize = parse_num(&dim, line_no, "embedding_dim")?;
    let (line_no, scores) = field("use_scores")?;
    let use_scores: bool = parse_num(&scores, line_no, "use_scores")?;

    let (line_no, mapping_decl) = field("mapping")?;
    let mapping = match mapping_decl
        .split_whitespace()
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["none"] => None,
        [mode, k] => {
            let interpolation = match *mode {
                "step" => Interpolation::Step,
                "linear" => Interpolation::Linear,
                other => return Err(syntax(line_no, format!("bad interpolation {other:?}"))),
            };
            let k: usize = parse_num(k, line_no, "interval count")?;
            let mut breakpoints = Vec::with_capacity(k + 1);
            let mut values = Vec::with_capacity(k);
            for row in 0..k {
                let (line_no, line) = next("mapping row")?;
                let [b0, b1, v] = line.split_whitespace().collect::<Vec<_>>()[..] else {
                    return Err(syntax(line_no, "expected <b_k> <b_k+1> <v_k>"));
                };
                let b0: f64 = parse_num(b0, line_no, "breakpoint")?;
                let b1: f64 = parse_num(b1, line_no, "breakpoint")?;
                if row == 0 {
                    breakpoints.push(b0);
                } else if breakpoints.last() != Some(&b0) {
                    return Err(syntax(line_no, "mapping breakpoints not contiguous"));
                }
                breakpoints.push(b1);
                values.push(parse_num(v, line_no, "mapping value")?);
            }
            Some(CalibrationMapping {
                breakpoints,
                values,
                interpolation,
            })
        }
        _ => return Err(syntax(line_no, "bad mapping declaration")),
    };

    let meta = ModelMeta {
        cell,
        d_x,
        d_h,
        d_f,
        attn_activation,
    };
    let expected_d_x = 2 + embedding_dim + if use_scores { 2 } else { 0 };
    if d_x != expected_d_x {
        return Err(CorpusError::ShapeMismatch {
            context: format!("d_x {d_x} does not match feature layout length {expected_d_x}"),
        });
    }

    let mut params = ModelParams::zeros(meta);
    for block in meta.layout() {
        let range = meta.range(block);
        let (line_no, decl) = next("block header")?;
        let [kw, name, len] = decl.split_whitespace().collect::<Vec<_>>()[..] else {
            return Err(syntax(line_no, "expected `block <name> <len>`"));
        };
        if kw != "block" {
            return Err(syntax(line_no, format!("expected block header, got {kw:?}")));
        }
        if name != block.name() {
            return Err(CorpusError::ShapeMismatch {
                context: format!("expected block {}, found {name}", block.name()),
            });
        }
        let len: usize = parse_num(len, line_no, "block length")?;
        if len != range.len() {
            return Err(CorpusError::ShapeMismatch {
                context: format!("block {name}: expected {} values, found {len}", range.len()),
            });
        }
        for slot in params.data[range].iter_mut() {
            let (line_no, line) = next("block value")?;
            *slot = parse_num(line, line_no, "parameter")?;
        }
    }
    let (line_no, tail) = next("end marker")?;
    if tail != "end" {
        return Err(syntax(line_no, "expected end marker"));
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(syntax(line_no, "trailing content after end marker"));
    }
    Ok(ModelCheckpoint {
        params,
        mode,
        merge,
        embedding_dim,
        use_scores,
        mapping,
    })
}

pub fn save_model(path: &Path, ckpt: &ModelCheckpoint) -> Result<(), CorpusError> {
    Ok(fs::write(path, write_model(ckpt))?)
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint, CorpusError> {
    parse_model(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------- corpora

fn dir_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(extension))
        .collect();
    paths.sort();
    Ok(paths)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

/// All `.slf` files of a directory, sorted by name; a missing
/// UTTERANCE header falls back to the file stem.
pub fn load_lattice_dir(dir: &Path) -> Result<Vec<Lattice>, CorpusError> {
    dir_files(dir, "slf")?
        .into_iter()
        .map(|path| {
            let mut lattice = parse_slf(&fs::read_to_string(&path)?)?;
            if lattice.utterance_id.is_empty() {
                lattice.utterance_id = file_stem(&path);
            }
            Ok(lattice)
        })
        .collect()
}

pub fn load_cn_dir(
    dir: &Path,
) -> Result<(Vec<ConfusionNetwork>, Vec<CorpusWarning>), CorpusError> {
    let mut networks = Vec::new();
    let mut warnings = Vec::new();
    for path in dir_files(dir, "cn")? {
        let (cn, mut w) = parse_cn(&fs::read_to_string(&path)?)?;
        networks.push(cn);
        warnings.append(&mut w);
    }
    Ok((networks, warnings))
}

pub fn save_lattice_dir(dir: &Path, lattices: &[Lattice]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    for lattice in lattices {
        fs::write(
            dir.join(format!("{}.slf", lattice.utterance_id)),
            write_slf(lattice),
        )?;
    }
    Ok(())
}

pub fn save_cn_dir(dir: &Path, networks: &[ConfusionNetwork]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    for cn in networks {
        fs::write(dir.join(format!("{}.cn", cn.utterance_id)), write_cn(cn))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::TreeConfig;
    use crate::graph;
    use crate::nn::Block;
    use rand::Rng;

    const SLF_EXAMPLE: &str =
        "N=2 L=1\nI=0 t=0.0\nI=1 t=0.4\nJ=0 S=0 E=1 W=cat a=-12.5 l=-1.2 p=0.8\n";

    #[test]
    fn slf_minimal_example() {
        let lat = parse_slf(SLF_EXAMPLE).unwrap();
        assert_eq!(lat.nodes.len(), 2);
        assert_eq!(lat.arcs.len(), 1);
        let arc = &lat.arcs[0];
        assert_eq!(arc.word, "cat");
        assert_eq!(arc.posterior, 0.8);
        assert_eq!(arc.am_score, -12.5);
        assert_eq!(arc.lm_score, -1.2);
        // Arc times come from the endpoint nodes.
        assert_eq!((arc.start_time, arc.end_time), (0.0, 0.4));
        assert_eq!((lat.initial, lat.final_node), (0, 1));
        assert_eq!(lat.utterance_id, "");
    }

    #[test]
    fn slf_headers_and_comments() {
        let text = format!("VERSION=1.1\nUTTERANCE=u42 # trailing comment\n# full line\n{SLF_EXAMPLE}");
        let (lat, headers) = parse_slf_full(&text).unwrap();
        assert_eq!(lat.utterance_id, "u42");
        assert_eq!(headers.get("VERSION").map(String::as_str), Some("1.1"));
    }

    #[test]
    fn slf_missing_posterior_defaults_to_zero() {
        let lat = parse_slf("N=2 L=1\nI=0 t=0.0\nI=1 t=0.4\nJ=0 S=0 E=1 W=dog\n").unwrap();
        assert_eq!(lat.arcs[0].posterior, 0.0);
        assert_eq!(lat.arcs[0].am_score, 0.0);
    }

    #[test]
    fn slf_undefined_node_reference() {
        let text = "N=2 L=1\nI=0 t=0.0\nI=1 t=0.4\nJ=0 S=0 E=7 W=cat\n";
        assert!(matches!(
            parse_slf(text),
            Err(CorpusError::ReferenceToUndefinedNode { node: 7, .. })
        ));
    }

    #[test]
    fn slf_count_mismatch() {
        let text = "N=3 L=1\nI=0 t=0.0\nI=1 t=0.4\nJ=0 S=0 E=1 W=cat\n";
        assert!(matches!(
            parse_slf(text),
            Err(CorpusError::CountMismatch { kind: "node", declared: 3, actual: 2 })
        ));
    }

    #[test]
    fn slf_syntax_errors_carry_line_numbers() {
        let text = "N=2 L=1\nI=0 t=0.0\nI=1 t=oops\nJ=0 S=0 E=1 W=cat\n";
        assert!(matches!(
            parse_slf(text),
            Err(CorpusError::Syntax { line: 3, .. })
        ));
    }

    #[test]
    fn slf_write_canonical_forms() {
        let mut lat = parse_slf(SLF_EXAMPLE).unwrap();
        lat.arcs[0].word = String::new();
        lat.arcs[0].posterior = 1.0;
        let text = write_slf(&lat);
        assert!(text.contains("W=!NULL"));
        assert!(text.contains("p=1.000000"));
        assert!(text.contains("t=0.40"));
    }

    fn random_lattice(rng: &mut ChaCha8Rng, id: usize) -> Lattice {
        // Layered DAG with 2-decimal times and 6-decimal scores, the
        // precision the writer preserves.
        let layers = rng.gen_range(2..5);
        let nodes: Vec<Node> = (0..layers)
            .map(|i| Node { id: i, time: i as f64 * 0.25 })
            .collect();
        let mut arcs = Vec::new();
        for i in 0..layers - 1 {
            for _ in 0..rng.gen_range(1..=2) {
                let id = arcs.len();
                arcs.push(Arc {
                    id,
                    start_node: i,
                    end_node: i + 1,
                    word: ["cat", "dog", NULL_WORD][rng.gen_range(0..3)].to_string(),
                    start_time: nodes[i].time,
                    end_time: nodes[i + 1].time,
                    posterior: (rng.gen_range(0.0..1.0f64) * 1e6).round() / 1e6,
                    am_score: (rng.gen_range(-20.0..0.0f64) * 1e6).round() / 1e6,
                    lm_score: (rng.gen_range(-5.0..0.0f64) * 1e6).round() / 1e6,
                });
            }
        }
        Lattice {
            utterance_id: format!("utt{id}"),
            nodes,
            arcs,
            initial: 0,
            final_node: layers - 1,
        }
    }

    #[test]
    fn slf_round_trip_random_lattices() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for i in 0..30 {
            let lat = random_lattice(&mut rng, i);
            let reparsed = parse_slf(&write_slf(&lat)).unwrap();
            assert_eq!(reparsed, lat);
        }
    }

    #[test]
    fn cn_round_trip_and_sum_warning() {
        let text = "UTT u3\nBIN 0.00 0.30\nARC cat 0.500000\nARC !NULL 0.300000\n";
        let (cn, warnings) = parse_cn(text).unwrap();
        assert_eq!(cn.utterance_id, "u3");
        assert_eq!(cn.bins.len(), 1);
        assert_eq!(
            warnings,
            vec![CorpusWarning::BinPosteriorSum { line: 2, sum: 0.8 }]
        );
        let (again, _) = parse_cn(&write_cn(&cn)).unwrap();
        assert_eq!(again, cn);
    }

    #[test]
    fn cn_parse_errors() {
        assert!(matches!(parse_cn("BIN 0 1\n"), Err(CorpusError::Syntax { line: 1, .. })));
        assert!(matches!(
            parse_cn("UTT u\nARC cat 0.5\n"),
            Err(CorpusError::Syntax { line: 2, .. })
        ));
        assert!(matches!(parse_cn("UTT u\n"), Err(CorpusError::Syntax { .. })));
        assert!(matches!(
            parse_cn("UTT u\nBIN 0 1\n"),
            Err(CorpusError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn ctm_grouping_and_sorting() {
        let text = "u1 1 0.00 0.40 cat\nu2 1 0.00 0.30 dog\nu1 1 0.40 0.20 sat\n";
        let (refs, warnings) = parse_ctm(text).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(refs.len(), 2);
        assert_eq!(refs[0].utterance_id, "u1");
        assert_eq!(refs[0].words, ["cat", "sat"]);
        assert_eq!(refs[0].timings.as_deref(), Some(&[(0.0, 0.4), (0.4, 0.6000000000000001)][..]));
        assert_eq!(refs[1].words, ["dog"]);
    }

    #[test]
    fn ctm_unsorted_input_is_sorted_and_overlap_warns() {
        let text = "u1 1 0.50 0.40 sat\nu1 1 0.00 0.60 cat\n";
        let (refs, warnings) = parse_ctm(text).unwrap();
        assert_eq!(refs[0].words, ["cat", "sat"]);
        assert_eq!(
            warnings,
            vec![CorpusWarning::OverlappingReference { utterance_id: "u1".into() }]
        );
    }

    #[test]
    fn ctm_errors() {
        assert!(matches!(
            parse_ctm("u1 1 0.0 -0.1 cat\n"),
            Err(CorpusError::NegativeDuration { line: 1 })
        ));
        assert!(matches!(
            parse_ctm("u1 1 0.0 cat\n"),
            Err(CorpusError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn ctm_write_round_trips() {
        let refs = vec![ReferenceTranscript {
            utterance_id: "u9".into(),
            words: vec!["a".into(), "b".into()],
            timings: Some(vec![(0.0, 0.3), (0.3, 0.65)]),
        }];
        let (again, warnings) = parse_ctm(&write_ctm(&refs)).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(again[0].words, ["a", "b"]);
        let t = again[0].timings.as_ref().unwrap();
        assert!((t[0].1 - 0.3).abs() < 1e-9 && (t[1].1 - 0.65).abs() < 1e-9);
    }

    #[test]
    fn text_refs_round_trip_and_duplicates() {
        let refs = parse_text_refs("u1 the cat\nu2 a dog barks\n").unwrap();
        assert_eq!(refs.len(), 2);
        assert_eq!(refs[0].words, ["the", "cat"]);
        assert_eq!(refs[1].timings, None);
        let again = parse_text_refs(&write_text_refs(&refs)).unwrap();
        assert_eq!(again, refs);
        assert!(matches!(
            parse_text_refs("u1 a\nu1 b\n"),
            Err(CorpusError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn embeddings_parse_with_and_without_header() {
        let table = parse_embeddings("2 3\ncat 0.1 0.2 0.3\ndog -0.1 0.0 0.5\n").unwrap();
        assert_eq!((table.len(), table.dim), (2, 3));
        assert_eq!(table.get("cat"), Some(&[0.1, 0.2, 0.3][..]));
        let bare = parse_embeddings("cat 0.1 0.2 0.3\n").unwrap();
        assert_eq!(bare.dim, 3);
    }

    #[test]
    fn embeddings_ragged_line_rejected() {
        assert!(matches!(
            parse_embeddings("cat 0.1 0.2 0.3\ndog 0.1\n"),
            Err(CorpusError::DimensionMismatch { line: 2 })
        ));
    }

    #[test]
    fn embeddings_round_trip() {
        let mut table = EmbeddingTable::new(2);
        table.insert("cat", vec![0.125, -0.5]);
        table.insert("dog", vec![0.25, 0.75]);
        assert_eq!(parse_embeddings(&write_embeddings(&table)).unwrap(), table);
    }

    #[test]
    fn embed_policies() {
        let mut table = EmbeddingTable::new(3);
        table.insert("cat", vec![0.1, 0.2, 0.3]);
        assert_eq!(embed(&table, "cat"), vec![0.1, 0.2, 0.3]);
        assert_eq!(embed(&table, NULL_WORD), vec![0.0; 3]);
        let oov1 = embed(&table, "zebra");
        let oov2 = embed(&table, "zebra");
        assert_eq!(oov1, oov2);
        assert!(oov1.iter().all(|v| (-0.1..0.1).contains(v)));
        assert_ne!(oov1, embed(&table, "yak"));
    }

    fn arc_fixture() -> Arc {
        Arc {
            id: 0,
            start_node: 0,
            end_node: 1,
            word: "cat".into(),
            start_time: 0.0,
            end_time: 0.4,
            posterior: 0.8,
            am_score: -12.5,
            lm_score: -1.2,
        }
    }

    #[test]
    fn feature_layout_examples() {
        let mut table = EmbeddingTable::new(2);
        table.insert("cat", vec![0.1, 0.2]);
        let arc = arc_fixture();
        let plain = extract_features(&arc, None, &table, FeatureConfig { use_scores: false });
        assert_eq!(plain, vec![0.8, 0.4, 0.1, 0.2]);
        let scored = extract_features(&arc, None, &table, FeatureConfig { use_scores: true });
        assert_eq!(scored[4..], [-12.5, -1.2]);
        let mut null_arc = arc_fixture();
        null_arc.word = NULL_WORD.into();
        let nulled = extract_features(&null_arc, None, &table, FeatureConfig { use_scores: false });
        assert_eq!(&nulled[2..], &[0.0, 0.0]);
    }

    #[test]
    fn feature_extraction_applies_mapping() {
        let mut table = EmbeddingTable::new(1);
        table.insert("cat", vec![0.5]);
        let mapping = fit_tree_fixture();
        let arc = arc_fixture();
        let x = extract_features(&arc, Some(&mapping), &table, FeatureConfig { use_scores: false });
        assert_eq!(x[0], apply_mapping(&mapping, 0.8));
        assert_ne!(x[0], 0.8);
    }

    fn fit_tree_fixture() -> CalibrationMapping {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let p: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t: Vec<bool> = p.iter().map(|&x| rng.gen_bool(x * 0.8)).collect();
        crate::calibrate::fit_tree(&p, &t, &TreeConfig { max_leaves: 4, min_leaf: 20, ..TreeConfig::default() })
            .unwrap()
    }

    #[test]
    fn feature_extractor_matches_free_function() {
        let mut table = EmbeddingTable::new(2);
        table.insert("cat", vec![0.1, 0.2]);
        let extractor = FeatureExtractor {
            table: table.clone(),
            mapping: None,
            config: FeatureConfig { use_scores: true },
        };
        assert_eq!(extractor.d_x(), 6);
        let net = ConfusionNetwork {
            utterance_id: "u".into(),
            bins: vec![Bin {
                start_time: 0.0,
                end_time: 0.4,
                entries: vec![("cat".into(), 1.0)],
            }],
        };
        let lat = graph::cn_to_lattice(&net).unwrap();
        assert_eq!(
            extractor.arc_features(&lat, &lat.arcs[0]),
            extract_features(&lat.arcs[0], None, &table, FeatureConfig { use_scores: true })
        );
    }

    #[test]
    fn score_and_tag_files_round_trip() {
        let scores = vec![
            ScoreRecord { utterance_id: "u1".into(), arc_id: 0, confidence: 0.912345 },
            ScoreRecord { utterance_id: "u1".into(), arc_id: 1, confidence: 0.05 },
        ];
        assert_eq!(parse_scores(&write_scores(&scores)).unwrap(), scores);
        let tags = vec![
            TagRecord {
                utterance_id: "u1".into(),
                tag: TargetTag { arc_id: 0, target: true, method: TagMethod::ReducedCnc },
            },
            TagRecord {
                utterance_id: "u2".into(),
                tag: TargetTag { arc_id: 3, target: false, method: TagMethod::Overlap },
            },
        ];
        assert_eq!(parse_tags(&write_tags(&tags)).unwrap(), tags);
        assert!(matches!(
            parse_tags("u1 0 2 overlap\n"),
            Err(CorpusError::Syntax { line: 1, .. })
        ));
    }

    fn checkpoint_fixture(seed: u64) -> ModelCheckpoint {
        let meta = ModelMeta {
            cell: CellKind::Gated,
            d_x: 5,
            d_h: 3,
            d_f: 2,
            attn_activation: AttnActivation::Logistic,
        };
        ModelCheckpoint {
            params: ModelParams::init(meta, seed),
            mode: TrainMode::Cn,
            merge: MergeMethod::Attention,
            embedding_dim: 1,
            use_scores: true,
            mapping: Some(fit_tree_fixture()),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for seed in 0..20 {
            let mut ckpt = checkpoint_fixture(seed);
            // Scatter awkward values: subnormals, negatives, exact ints.
            for _ in 0..10 {
                let i = rng.gen_range(0..ckpt.params.data.len());
                ckpt.params.data[i] = rng.gen_range(-1e3..1e3) * 10f64.powi(rng.gen_range(-12..3));
            }
            let text = write_model(&ckpt);
            let loaded = parse_model(&text).unwrap();
            assert_eq!(loaded.params.meta, ckpt.params.meta);
            assert_eq!(loaded.mode, ckpt.mode);
            assert_eq!(loaded.merge, ckpt.merge);
            assert_eq!(loaded.mapping, ckpt.mapping);
            for (a, b) in loaded.params.data.iter().zip(&ckpt.params.data) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_errors() {
        let ckpt = checkpoint_fixture(1);
        let text = write_model(&ckpt);

        let wrong_version = text.replace("LATCONF_MODEL v1", "LATCONF_MODEL v9");
        assert!(matches!(
            parse_model(&wrong_version),
            Err(CorpusError::VersionMismatch { found }) if found == "v9"
        ));

        let truncated: String = text.lines().take(30).map(|l| format!("{l}\n")).collect();
        assert!(matches!(truncated_err(&truncated), CorpusError::Syntax { .. }));

        let tampered = text.replace("block gate_input_w.input 15", "block gate_input_w.input 14");
        assert!(matches!(
            parse_model(&tampered),
            Err(CorpusError::ShapeMismatch { .. })
        ));
    }

    fn truncated_err(text: &str) -> CorpusError {
        parse_model(text).unwrap_err()
    }

    #[test]
    fn checkpoint_block_order_is_the_layout() {
        let ckpt = checkpoint_fixture(2);
        let text = write_model(&ckpt);
        let names: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_prefix("block "))
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        let expected: Vec<String> = ckpt
            .params
            .meta
            .layout()
            .into_iter()
            .map(Block::name)
            .collect();
        assert_eq!(names, expected);
    }

    #[test]
    fn directory_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let lattices: Vec<Lattice> = (0..4).map(|i| random_lattice(&mut rng, i)).collect();
        save_lattice_dir(dir.path(), &lattices).unwrap();
        assert_eq!(load_lattice_dir(dir.path()).unwrap(), lattices);

        let networks = vec![ConfusionNetwork {
            utterance_id: "utt0".into(),
            bins: vec![Bin {
                start_time: 0.0,
                end_time: 0.3,
                entries: vec![("cat".into(), 0.7), (NULL_WORD.into(), 0.3)],
            }],
        }];
        save_cn_dir(dir.path(), &networks).unwrap();
        let (loaded, warnings) = load_cn_dir(dir.path()).unwrap();
        assert_eq!(loaded, networks);
        assert!(warnings.is_empty());
    }
}
