//! Deterministic synthetic corpus generator: reference transcripts,
//! simulated confusion networks and lattices with controllable error
//! rate and posterior sharpness.
//!
//! Corruption is bursty: a hidden two-state reliability chain scales
//! the substitution rate down (reliable) or up (noisy) around the
//! configured mean, and noisy regions also get more competitive
//! distractor scores. Correctness of neighbouring arcs is therefore
//! correlated with observable neighbourhood posteriors — signal a
//! per-arc posterior map cannot represent but a recurrent scorer can.
//!
//! All emitted times are quantized to 2 decimals and all posteriors
//! and scores to 6, matching the writers' precision, so files are a
//! lossless serialization of the in-memory corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{self, CorpusError, ReferenceTranscript};
use crate::graph::{self, Bin, ConfusionNetwork, Lattice};
use crate::NULL_WORD;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Vocabulary size.
    pub vocab: usize,
    /// Utterance count.
    pub utterances: usize,
    /// Inclusive reference-length range in words.
    pub len_min: usize,
    pub len_max: usize,
    /// Mean substitution probability (burst states scale it locally).
    pub p_sub: f64,
    pub p_ins: f64,
    pub p_del: f64,
    /// Maximum arcs per confusion bin.
    pub depth: usize,
    /// Softmax temperature for bin posteriors; lower is sharper (and
    /// more overconfident).
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab: 50,
            utterances: 500,
            len_min: 8,
            len_max: 16,
            p_sub: 0.25,
            p_ins: 0.0,
            p_del: 0.0,
            depth: 3,
            temperature: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    ProbabilityOutOfRange { name: &'static str, value: String },
    #[error("error probabilities sum to {sum}, must stay below 1")]
    ErrorMassTooLarge { sum: String },
    #[error("confusion depth {depth} exceeds vocabulary size {vocab}")]
    DepthExceedsVocab { depth: usize, vocab: usize },
    #[error("length range [{len_min}, {len_max}] is empty or zero")]
    EmptyLengthRange { len_min: usize, len_max: usize },
    #[error("{name} must be positive")]
    NotPositive { name: &'static str },
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("p_sub", self.p_sub),
            ("p_ins", self.p_ins),
            ("p_del", self.p_del),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(ConfigError::ProbabilityOutOfRange {
                    name,
                    value: value.to_string(),
                });
            }
        }
        let sum = self.p_sub + self.p_ins + self.p_del;
        if sum >= 1.0 {
            return Err(ConfigError::ErrorMassTooLarge { sum: sum.to_string() });
        }
        if self.depth > self.vocab {
            return Err(ConfigError::DepthExceedsVocab {
                depth: self.depth,
                vocab: self.vocab,
            });
        }
        if self.len_min == 0 || self.len_min > self.len_max {
            return Err(ConfigError::EmptyLengthRange {
                len_min: self.len_min,
                len_max: self.len_max,
            });
        }
        for (name, ok) in [
            ("vocab", self.vocab > 0),
            ("utterances", self.utterances > 0),
            ("depth", self.depth > 0),
            ("temperature", self.temperature > 0.0 && self.temperature.is_finite()),
        ] {
            if !ok {
                return Err(ConfigError::NotPositive { name });
            }
        }
        Ok(())
    }
}

/// Everything one generation run produces. The one-best networks keep
/// only each bin's winning entry, for sequence-mode consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub references: Vec<ReferenceTranscript>,
    pub networks: Vec<ConfusionNetwork>,
    pub lattices: Vec<Lattice>,
    pub one_best: Vec<ConfusionNetwork>,
}

// Burst model: a two-state reliability chain; the local substitution
// rate is the configured mean scaled by the state factor, and noisy
// states produce denser bins with more competitive distractor scores
// — the decoder-confusion signature of burst noise. Factors average
// to one, preserving the configured mean rate. Because the state runs
// over several consecutive bins, an arc's neighbourhood carries
// correctness evidence its own posterior does not.
// Score ranges are tuned so the single clean-state distractor carries
// the same typical posterior load as the full noisy-state slate: a
// winner's own posterior then tells little about the state, while the
// bin structure next door tells a lot.
const STATE_STAY_PROB: f64 = 0.9;
const SUB_FACTOR: [f64; 2] = [0.2, 1.8];
const DISTRACTOR_SCORE_FLOOR: [f64; 2] = [0.7, 0.0];
const DISTRACTOR_SCORE_CEIL: [f64; 2] = [1.95, 1.95];
/// Intended-top scores start above every possible distractor score,
/// so corruption alone decides the one-best word.
const TOP_SCORE_BASE: f64 = 2.0;
/// Probability that one alternative slot carries the null word.
const NULL_ALT_PROB: [f64; 2] = [0.15, 0.45];
/// Per-boundary probability of a lattice skip arc over two bins.
const SKIP_ARC_PROB: f64 = 0.2;
/// Fraction of distractors drawn from the confusable vocabulary half.
const CONFUSABLE_BIAS: f64 = 0.8;

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn word(index: usize) -> String {
    format!("w{index:03}")
}

/// Distractor words skew toward the upper half of the vocabulary, so
/// word identity carries correctness signal that posteriors do not.
fn sample_distractor(rng: &mut ChaCha8Rng, vocab: usize, exclude: &[usize]) -> usize {
    let half = (vocab / 2).max(1);
    loop {
        let candidate = if vocab > half && rng.gen_bool(CONFUSABLE_BIAS) {
            rng.gen_range(half..vocab)
        } else {
            rng.gen_range(0..vocab)
        };
        if !exclude.contains(&candidate) {
            return candidate;
        }
    }
}

enum TopEntry {
    Word(usize),
    Null,
}

/// Build one bin: an intended winner plus up to `depth - 1`
/// alternatives, posteriors a temperature softmax of the raw scores.
fn make_bin(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    state: usize,
    span: (f64, f64),
    top: TopEntry,
    true_word: Option<usize>,
) -> Bin {
    let mut words: Vec<String> = Vec::with_capacity(config.depth);
    let mut scores: Vec<f64> = Vec::with_capacity(config.depth);
    let mut used: Vec<usize> = true_word.into_iter().collect();
    match top {
        TopEntry::Word(w) => {
            used.push(w);
            words.push(word(w));
        }
        TopEntry::Null => words.push(NULL_WORD.to_string()),
    }
    scores.push(TOP_SCORE_BASE + rng.gen_range(0.0..0.5));

    let null_slot = config.depth > 1 && rng.gen_bool(NULL_ALT_PROB[state]);
    // Every bin carries at least one alternative when the budget
    // allows, so a winner's posterior alone does not give the state
    // away; noisy-state bins fill the whole budget.
    let hi = config.depth - 1;
    let n_alts = if hi == 0 {
        0
    } else if state == 0 {
        1
    } else {
        hi
    };
    for k in 0..n_alts {
        let floor = DISTRACTOR_SCORE_FLOOR[state];
        let ceil = DISTRACTOR_SCORE_CEIL[state];
        if null_slot && k == 0 && !matches!(top, TopEntry::Null) {
            words.push(NULL_WORD.to_string());
            scores.push(rng.gen_range(floor..ceil));
            continue;
        }
        if used.len() >= config.vocab {
            break;
        }
        let w = sample_distractor(rng, config.vocab, &used);
        used.push(w);
        words.push(word(w));
        scores.push(rng.gen_range(floor..ceil));
    }

    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / config.temperature).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    let entries = words
        .into_iter()
        .zip(&exps)
        .map(|(w, e)| (w, round6(e / z)))
        .collect();
    Bin {
        start_time: span.0,
        end_time: span.1,
        entries,
    }
}

/// Plausible per-arc acoustic/language scores derived from the
/// posterior; plumbing only, nothing downstream learns from them by
/// construction.
fn decorate_scores(rng: &mut ChaCha8Rng, lattice: &mut Lattice) {
    for arc in &mut lattice.arcs {
        arc.am_score = round6(10.0 * arc.posterior.max(1e-3).ln() + rng.gen_range(-1.0..0.0));
        arc.lm_score = round6(-rng.gen_range(0.0..5.0));
    }
}

/// Insert skip arcs spanning two consecutive bins; each borrows a
/// proportional share of the posterior mass of the arcs it bypasses.
fn add_skip_arcs(rng: &mut ChaCha8Rng, config: &SynthConfig, lattice: &mut Lattice) {
    let n_nodes = lattice.nodes.len();
    if n_nodes < 4 {
        return; // need an interior two-bin window: 3 bins or more
    }
    for start in 0..n_nodes - 3 {
        if !rng.gen_bool(SKIP_ARC_PROB) {
            continue;
        }
        let q = round6(rng.gen_range(0.05..0.2));
        for arc in &mut lattice.arcs {
            if arc.start_node == start || arc.start_node == start + 1 {
                arc.posterior = round6(arc.posterior * (1.0 - q));
            }
        }
        let id = lattice.arcs.len();
        lattice.arcs.push(graph::Arc {
            id,
            start_node: start,
            end_node: start + 2,
            word: word(rng.gen_range(0..config.vocab)),
            start_time: lattice.nodes[start].time,
            end_time: lattice.nodes[start + 2].time,
            posterior: q,
            am_score: 0.0,
            lm_score: 0.0,
        });
    }
}

pub fn gen_corpus(config: &SynthConfig) -> Result<SynthCorpus, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut references = Vec::with_capacity(config.utterances);
    let mut networks = Vec::with_capacity(config.utterances);
    let mut lattices = Vec::with_capacity(config.utterances);
    let mut one_best = Vec::with_capacity(config.utterances);

    for utt in 0..config.utterances {
        let utterance_id = format!("u{utt:04}");
        let len = rng.gen_range(config.len_min..=config.len_max);
        let truth: Vec<usize> = (0..len).map(|_| rng.gen_range(0..config.vocab)).collect();

        let mut timings = Vec::with_capacity(len);
        let mut t = 0.0;
        for _ in 0..len {
            let end = round2(t + round2(0.3 + rng.gen_range(-0.05..0.05)));
            timings.push((t, end));
            t = end;
        }

        let mut state = usize::from(rng.gen_bool(0.5));
        let mut bins = Vec::new();
        for (i, &w) in truth.iter().enumerate() {
            let span = timings[i];
            let p_sub_local = (config.p_sub * SUB_FACTOR[state]).min(0.95);
            let draw: f64 = rng.gen_range(0.0..1.0);
            let top = if draw < p_sub_local {
                TopEntry::Word(sample_distractor(&mut rng, config.vocab, &[w]))
            } else if draw < p_sub_local + config.p_del {
                TopEntry::Null
            } else {
                TopEntry::Word(w)
            };
            // The true word never rides along as an alternative: it is
            // in the bin exactly when it is the intended winner.
            bins.push(make_bin(&mut rng, config, state, span, top, Some(w)));
            if rng.gen_bool(config.p_ins) {
                let boundary = span.1;
                let w_ins = sample_distractor(&mut rng, config.vocab, &[]);
                bins.push(make_bin(
                    &mut rng,
                    config,
                    state,
                    (boundary, boundary),
                    TopEntry::Word(w_ins),
                    None,
                ));
            }
            if !rng.gen_bool(STATE_STAY_PROB) {
                state = 1 - state;
            }
        }

        let cn = ConfusionNetwork {
            utterance_id: utterance_id.clone(),
            bins,
        };
        let mut lattice = graph::cn_to_lattice(&cn).expect("generated CN has bins");
        decorate_scores(&mut rng, &mut lattice);
        add_skip_arcs(&mut rng, config, &mut lattice);

        one_best.push(graph::one_best_cn(&cn));
        networks.push(cn);
        lattices.push(lattice);
        references.push(ReferenceTranscript {
            utterance_id,
            words: truth.iter().map(|&w| word(w)).collect(),
            timings: Some(timings),
        });
    }
    Ok(SynthCorpus {
        references,
        networks,
        lattices,
        one_best,
    })
}

/// Write the standard directory layout: `refs.ctm`, `refs.txt`,
/// `cn/*.cn`, `lat/*.slf`.
pub fn write_corpus(dir: &std::path::Path, corpus: &SynthCorpus) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("refs.ctm"), corpus::write_ctm(&corpus.references))?;
    std::fs::write(dir.join("refs.txt"), corpus::write_text_refs(&corpus.references))?;
    corpus::save_cn_dir(&dir.join("cn"), &corpus.networks)?;
    corpus::save_lattice_dir(&dir.join("lat"), &corpus.lattices)?;
    Ok(())
}
