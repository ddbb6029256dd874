//! Binary reference targets for hypothesis units.
//!
//! One tagger per input mode: Levenshtein alignment for 1-best
//! sequences, a monotone soft-cost alignment for confusion networks,
//! and time-overlap thresholding for lattice arcs.

use crate::corpus::ReferenceTranscript;
use crate::graph::{Bin, ConfusionNetwork, Lattice};
use crate::{ArcId, NULL_WORD};
use thiserror::Error;

/// Overlap ratio at or above which a lattice arc counts as matching a
/// reference word.
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum TagError {
    #[error("invalid interval: end {end} precedes start {start}")]
    InvalidInterval { start: f64, end: f64 },
    #[error("reference transcript {utterance_id:?} has no word timings")]
    MissingTimings { utterance_id: String },
}

/// How a target was assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagMethod {
    Levenshtein1Best,
    ReducedCnc,
    Overlap,
}

impl TagMethod {
    pub fn name(self) -> &'static str {
        match self {
            TagMethod::Levenshtein1Best => "levenshtein_1best",
            TagMethod::ReducedCnc => "reduced_cnc",
            TagMethod::Overlap => "overlap",
        }
    }
}

impl std::fmt::Display for TagMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TagMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "levenshtein_1best" => Ok(TagMethod::Levenshtein1Best),
            "reduced_cnc" => Ok(TagMethod::ReducedCnc),
            "overlap" => Ok(TagMethod::Overlap),
            other => Err(format!("unknown tag method {other:?}")),
        }
    }
}

/// Binary reference target for one arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetTag {
    pub arc_id: ArcId,
    pub target: bool,
    pub method: TagMethod,
}

impl TargetTag {
    /// The target as a loss-side value.
    pub fn value(&self) -> f64 {
        if self.target {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EditOp {
    Match,
    Substitute,
    /// Hypothesis word with no reference counterpart.
    Insert,
    /// Reference word with no hypothesis counterpart.
    Delete,
}

/// `b[i][j]` = minimal unit-cost edit distance between `hyp[i..]` and
/// `rf[j..]`.
fn edit_suffix_costs(hyp: &[&str], rf: &[&str]) -> Vec<Vec<u32>> {
    let (n, m) = (hyp.len(), rf.len());
    let mut b = vec![vec![0u32; m + 1]; n + 1];
    for j in (0..m).rev() {
        b[n][j] = b[n][j + 1] + 1;
    }
    for i in (0..n).rev() {
        b[i][m] = b[i + 1][m] + 1;
        for j in (0..m).rev() {
            let diag = b[i + 1][j + 1] + u32::from(hyp[i] != rf[j]);
            let ins = b[i + 1][j] + 1;
            let del = b[i][j + 1] + 1;
            b[i][j] = diag.min(ins).min(del);
        }
    }
    b
}

/// Walk a minimal-cost path from the front, so ties resolve left to
/// right with the preference match > substitution > insertion >
/// deletion.
fn align_sequence(hyp: &[&str], rf: &[&str]) -> Vec<EditOp> {
    let b = edit_suffix_costs(hyp, rf);
    let (n, m) = (hyp.len(), rf.len());
    let (mut i, mut j) = (0, 0);
    let mut ops = Vec::new();
    while i < n || j < m {
        let cur = b[i][j];
        if i < n && j < m && hyp[i] == rf[j] && cur == b[i + 1][j + 1] {
            ops.push(EditOp::Match);
            i += 1;
            j += 1;
        } else if i < n && j < m && hyp[i] != rf[j] && cur == b[i + 1][j + 1] + 1 {
            ops.push(EditOp::Substitute);
            i += 1;
            j += 1;
        } else if i < n && cur == b[i + 1][j] + 1 {
            ops.push(EditOp::Insert);
            i += 1;
        } else {
            debug_assert!(j < m && cur == b[i][j + 1] + 1);
            ops.push(EditOp::Delete);
            j += 1;
        }
    }
    ops
}

/// Minimal unit-cost edit distance between two word sequences.
pub fn edit_distance<H: AsRef<str>, R: AsRef<str>>(hyp: &[H], rf: &[R]) -> u32 {
    let h: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = rf.iter().map(AsRef::as_ref).collect();
    edit_suffix_costs(&h, &r)[0][0]
}

/// Tag each 1-best hypothesis token: 1 iff a minimal-edit-distance
/// alignment matches it to an equal reference word. Callers strip null
/// tokens first. Reference words with no hypothesis counterpart
/// produce no output position, so the result always has `hyp`'s
/// length.
pub fn tag_sequence<H: AsRef<str>, R: AsRef<str>>(hyp: &[H], rf: &[R]) -> Vec<bool> {
    let h: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = rf.iter().map(AsRef::as_ref).collect();
    align_sequence(&h, &r)
        .into_iter()
        .filter_map(|op| match op {
            EditOp::Match => Some(true),
            EditOp::Substitute | EditOp::Insert => Some(false),
            EditOp::Delete => None,
        })
        .collect()
}

/// Total posterior the bin assigns to `word` (0 when absent).
fn bin_posterior(bin: &Bin, word: &str) -> f64 {
    bin.entries
        .iter()
        .filter(|(w, _)| w == word)
        .map(|(_, p)| p)
        .sum()
}

/// Outcome of the monotone reference alignment for one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinAssign {
    /// Matched to the reference word at this position.
    Aligned(usize),
    /// Consumed with no reference counterpart.
    Skipped,
}

/// `b[t][j]` = minimal alignment cost between `bins[t..]` and
/// `rf[j..]`. Aligning a bin to a word costs one minus the word's
/// posterior, skipping a bin costs one minus its null posterior, and
/// skipping a reference word costs one.
fn cn_suffix_costs(cn: &ConfusionNetwork, rf: &[&str]) -> Vec<Vec<f64>> {
    let (t_n, r_n) = (cn.bins.len(), rf.len());
    let mut b = vec![vec![0.0f64; r_n + 1]; t_n + 1];
    for j in (0..r_n).rev() {
        b[t_n][j] = b[t_n][j + 1] + 1.0;
    }
    for t in (0..t_n).rev() {
        let skip_bin = 1.0 - bin_posterior(&cn.bins[t], NULL_WORD);
        b[t][r_n] = b[t + 1][r_n] + skip_bin;
        for j in (0..r_n).rev() {
            let align = b[t + 1][j + 1] + (1.0 - bin_posterior(&cn.bins[t], rf[j]));
            b[t][j] = align
                .min(b[t + 1][j] + skip_bin)
                .min(b[t][j + 1] + 1.0);
        }
    }
    b
}

/// Front-to-back walk of a minimal-cost path; ties prefer aligning
/// over either skip, then skip-bin over skip-reference, so the
/// leftmost such alignment wins. Exact float equality is sound here:
/// the walk re-evaluates the very expressions the DP minimised over.
fn align_cn(cn: &ConfusionNetwork, rf: &[&str]) -> (Vec<BinAssign>, f64) {
    let b = cn_suffix_costs(cn, rf);
    let (t_n, r_n) = (cn.bins.len(), rf.len());
    let mut assigns = Vec::with_capacity(t_n);
    let (mut t, mut j) = (0, 0);
    while t < t_n || j < r_n {
        let cur = b[t][j];
        if t < t_n
            && j < r_n
            && cur == b[t + 1][j + 1] + (1.0 - bin_posterior(&cn.bins[t], rf[j]))
        {
            assigns.push(BinAssign::Aligned(j));
            t += 1;
            j += 1;
        } else if t < t_n && cur == b[t + 1][j] + (1.0 - bin_posterior(&cn.bins[t], NULL_WORD)) {
            assigns.push(BinAssign::Skipped);
            t += 1;
        } else {
            debug_assert!(j < r_n && cur == b[t][j + 1] + 1.0);
            j += 1;
        }
    }
    (assigns, b[0][0])
}

/// Tag every CN arc against a reference word sequence. A bin aligned
/// to reference word ω tags its ω-arcs 1; a skipped bin tags its null
/// arcs 1; everything else gets 0. Arc ids run bin-major in entry
/// order, matching `graph::cn_to_lattice`.
pub fn tag_cn<R: AsRef<str>>(cn: &ConfusionNetwork, rf: &[R]) -> Vec<TargetTag> {
    let r: Vec<&str> = rf.iter().map(AsRef::as_ref).collect();
    let (assigns, _) = align_cn(cn, &r);
    let mut tags = Vec::new();
    let mut arc_id: ArcId = 0;
    for (t, bin) in cn.bins.iter().enumerate() {
        for (word, _) in &bin.entries {
            let target = match assigns[t] {
                BinAssign::Aligned(j) => word == r[j],
                BinAssign::Skipped => word == NULL_WORD,
            };
            tags.push(TargetTag {
                arc_id,
                target,
                method: TagMethod::ReducedCnc,
            });
            arc_id += 1;
        }
    }
    tags
}

/// Intersection-over-union of two time intervals. Two identical
/// zero-length intervals count as fully overlapping.
pub fn overlap(arc: (f64, f64), reference: (f64, f64)) -> Result<f64, TagError> {
    for (s, e) in [arc, reference] {
        if e < s {
            return Err(TagError::InvalidInterval { start: s, end: e });
        }
    }
    let inter = f64::min(arc.1, reference.1) - f64::max(arc.0, reference.0);
    let union = f64::max(arc.1, reference.1) - f64::min(arc.0, reference.0);
    if union == 0.0 {
        return Ok(1.0);
    }
    Ok(f64::max(0.0, inter / union))
}

/// Tag every lattice arc against a time-aligned reference. A worded
/// arc gets 1 iff some reference word has the same token and overlap
/// at least `threshold`; a null arc gets 1 iff no reference word
/// reaches `threshold` overlap at all.
pub fn tag_lattice(
    lattice: &Lattice,
    reference: &ReferenceTranscript,
    threshold: f64,
) -> Result<Vec<TargetTag>, TagError> {
    let timings = reference
        .timings
        .as_ref()
        .ok_or_else(|| TagError::MissingTimings {
            utterance_id: reference.utterance_id.clone(),
        })?;
    debug_assert_eq!(timings.len(), reference.words.len());
    let mut tags = Vec::with_capacity(lattice.arcs.len());
    for arc in &lattice.arcs {
        let span = (arc.start_time, arc.end_time);
        let mut any_overlap = false;
        let mut word_match = false;
        for (word, &interval) in reference.words.iter().zip(timings) {
            if overlap(span, interval)? >= threshold {
                any_overlap = true;
                word_match |= *word == arc.word;
            }
        }
        let target = if arc.is_null() { !any_overlap } else { word_match };
        tags.push(TargetTag {
            arc_id: arc.id,
            target,
            method: TagMethod::Overlap,
        });
    }
    Ok(tags)
}
