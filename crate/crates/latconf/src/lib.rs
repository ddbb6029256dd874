//! Confidence estimation for speech-recognition hypotheses.
//!
//! ASR decoders emit 1-best word sequences, confusion networks (CNs) and
//! word lattices. Each hypothesised word carries a posterior probability,
//! which is known to over-estimate how likely the word is to be correct.
//! This crate estimates better per-word confidence scores by running
//! bi-directional recurrent models directly over the graph structures:
//! plain sequences, CN bins with competing arcs, and general lattices
//! traversed in topological order. Incoming arc states at a node are
//! merged by max, mean, normalised-posterior or attention weighting.
//!
//! The crate also covers the supporting pipeline:
//!
//! - [`graph`] — in-memory lattice / confusion-network model with
//!   validation, topological ordering, reversal and 1-best extraction;
//! - [`corpus`] — file formats (SLF lattices, CN files, CTM references,
//!   embedding tables, score/target files, model checkpoints) and per-arc
//!   feature extraction;
//! - [`tagging`] — reference confidence targets via Levenshtein alignment,
//!   soft CN alignment and time-overlap thresholding;
//! - [`nn`] — the minimal numeric core (dense ops, recurrent cells, flat
//!   parameter view, finite-difference gradient checking);
//! - [`propagate`] — forward/backward state propagation over graphs, arc
//!   state merging and the confidence head with exact gradients;
//! - [`calibrate`] — decision-tree posterior mapping baseline;
//! - [`metrics`] — NCE, precision-recall and average precision;
//! - [`train`] — per-utterance SGD, Hogwild-style multi-worker training,
//!   corpus splits and condition evaluation;
//! - [`synth`] — deterministic synthetic corpus generation for desk-scale
//!   experiments.
//!
//! Batch scoring and evaluation are data-parallel over utterances via
//! rayon when the `parallel` feature (default) is enabled; every entry
//! point has a sequential fallback.

pub mod calibrate;
pub mod corpus;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod propagate;
pub mod synth;
pub mod tagging;
pub mod train;

mod par;

pub use corpus::ReferenceTranscript;
pub use graph::{Arc, ArcId, Bin, ConfusionNetwork, Lattice, Node, NodeId};
pub use nn::{AttnActivation, CellKind, Gradient, ModelMeta, ModelParams};
pub use propagate::MergeMethod;
pub use tagging::{TagMethod, TargetTag};
pub use train::{TrainConfig, TrainMode};

/// Confidences are clamped to `[EPS_CONFIDENCE, 1 - EPS_CONFIDENCE]`
/// wherever a logarithm is taken, so cross-entropies stay finite.
pub const EPS_CONFIDENCE: f64 = 1e-6;

/// Reserved token for the empty/null hypothesis in CNs and lattices.
pub const NULL_WORD: &str = "!NULL";
