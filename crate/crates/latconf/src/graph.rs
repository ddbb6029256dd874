//! In-memory lattice and confusion-network model.
//!
//! A [`Lattice`] is a DAG of timed nodes connected by word-bearing arcs.
//! A [`ConfusionNetwork`] is the linear special case: an ordered list of
//! bins, each holding competing word hypotheses whose posteriors sum to
//! roughly one. CNs are stored natively and converted to linear-chain
//! lattices with [`cn_to_lattice`], so a single propagation engine
//! serves both.

use std::collections::VecDeque;

use thiserror::Error;

use crate::NULL_WORD;

/// Dense node identifier, contiguous in `[0, node_count)`.
pub type NodeId = usize;
/// Dense arc identifier, contiguous in `[0, arc_count)`.
pub type ArcId = usize;

/// Graph node marking a timestamp (seconds) in the utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub time: f64,
}

/// Hypothesised word spanning two nodes.
///
/// `word == "!NULL"` denotes the empty hypothesis. `am_score` and
/// `lm_score` are log-domain acoustic/language-model scores, zero when
/// the source format did not carry them.
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub id: ArcId,
    pub start_node: NodeId,
    pub end_node: NodeId,
    pub word: String,
    pub start_time: f64,
    pub end_time: f64,
    pub posterior: f64,
    pub am_score: f64,
    pub lm_score: f64,
}

impl Arc {
    pub fn is_null(&self) -> bool {
        self.word == NULL_WORD
    }

    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

/// Directed acyclic word graph with a unique initial and final node.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub utterance_id: String,
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
    pub initial: NodeId,
    pub final_node: NodeId,
}

/// One CN slot: competing word hypotheses with posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub start_time: f64,
    pub end_time: f64,
    /// `(word, posterior)` in source order; order is preserved through
    /// conversion and used to break argmax ties.
    pub entries: Vec<(String, f64)>,
}

/// Linear chain of bins; the posteriors of each bin sum to one within
/// a small tolerance (consensus output is not exactly normalised).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionNetwork {
    pub utterance_id: String,
    pub bins: Vec<Bin>,
}

/// Default tolerance on per-bin posterior sums.
pub const BIN_SUM_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("lattice contains a cycle")]
    Cycle,
    #[error("confusion network has no bins")]
    EmptyCn,
}

/// One violated lattice invariant; `validate` reports these as data
/// rather than failing.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Arc start/end node id out of range.
    BadNodeRef { arc: ArcId },
    /// `time(start) > time(end)` for this arc.
    TimeOrder { arc: ArcId },
    /// Arc start/end times disagree with its nodes' times.
    ArcTimeMismatch { arc: ArcId },
    /// Posterior outside `[0, 1]`, or a non-finite time/score.
    BadValue { arc: ArcId },
    NegativeNodeTime { node: NodeId },
    CycleDetected,
    NoInitial,
    MultipleInitial { nodes: Vec<NodeId> },
    NoFinal,
    MultipleFinal { nodes: Vec<NodeId> },
    /// Declared `initial`/`final_node` field does not match the graph.
    WrongEndpoints,
    /// Node not on any initial -> final path.
    OffPath { node: NodeId },
}

impl Lattice {
    /// Incoming arc ids per node, each list ascending by arc id.
    pub fn incoming(&self) -> Vec<Vec<ArcId>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for arc in &self.arcs {
            if arc.end_node < self.nodes.len() {
                inc[arc.end_node].push(arc.id);
            }
        }
        inc
    }

    /// Outgoing arc ids per node, each list ascending by arc id.
    pub fn outgoing(&self) -> Vec<Vec<ArcId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for arc in &self.arcs {
            if arc.start_node < self.nodes.len() {
                out[arc.start_node].push(arc.id);
            }
        }
        out
    }
}

/// Check every lattice invariant; empty result means the lattice is valid.
pub fn validate(lattice: &Lattice) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = lattice.nodes.len();

    if n == 0 {
        violations.push(Violation::NoInitial);
        return violations;
    }

    for node in &lattice.nodes {
        if !node.time.is_finite() || node.time < 0.0 {
            violations.push(Violation::NegativeNodeTime { node: node.id });
        }
    }

    let mut structurally_ok = true;
    for arc in &lattice.arcs {
        if arc.start_node >= n || arc.end_node >= n {
            violations.push(Violation::BadNodeRef { arc: arc.id });
            structurally_ok = false;
            continue;
        }
        let (ts, te) = (
            lattice.nodes[arc.start_node].time,
            lattice.nodes[arc.end_node].time,
        );
        if ts > te {
            violations.push(Violation::TimeOrder { arc: arc.id });
        }
        if (arc.start_time - ts).abs() > 1e-9 || (arc.end_time - te).abs() > 1e-9 {
            violations.push(Violation::ArcTimeMismatch { arc: arc.id });
        }
        if !(0.0..=1.0).contains(&arc.posterior)
            || !arc.posterior.is_finite()
            || !arc.am_score.is_finite()
            || !arc.lm_score.is_finite()
        {
            violations.push(Violation::BadValue { arc: arc.id });
        }
    }
    if !structurally_ok {
        return violations;
    }

    let incoming = lattice.incoming();
    let outgoing = lattice.outgoing();

    let sources: Vec<NodeId> = (0..n).filter(|&v| incoming[v].is_empty()).collect();
    let sinks: Vec<NodeId> = (0..n).filter(|&v| outgoing[v].is_empty()).collect();
    match sources.as_slice() {
        [] => violations.push(Violation::NoInitial),
        [s] => {
            if *s != lattice.initial {
                violations.push(Violation::WrongEndpoints);
            }
        }
        _ => violations.push(Violation::MultipleInitial { nodes: sources.clone() }),
    }
    match sinks.as_slice() {
        [] => violations.push(Violation::NoFinal),
        [s] => {
            if *s != lattice.final_node {
                violations.push(Violation::WrongEndpoints);
            }
        }
        _ => violations.push(Violation::MultipleFinal { nodes: sinks.clone() }),
    }

    if topological_order(lattice).is_err() {
        violations.push(Violation::CycleDetected);
        return violations;
    }

    // Every node must be reachable from the initial node and reach the
    // final node.
    if sources.len() == 1 && sinks.len() == 1 {
        let from_initial = reachable(lattice.initial, &outgoing, &lattice.arcs, true);
        let to_final = reachable(lattice.final_node, &incoming, &lattice.arcs, false);
        for v in 0..n {
            if !(from_initial[v] && to_final[v]) {
                violations.push(Violation::OffPath { node: v });
            }
        }
    }

    violations
}

fn reachable(start: NodeId, adj: &[Vec<ArcId>], arcs: &[Arc], forward: bool) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for &a in &adj[v] {
            let next = if forward { arcs[a].end_node } else { arcs[a].start_node };
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    seen
}

/// Topological node order; deterministic, ties broken by ascending
/// `(time, NodeId)`.
pub fn topological_order(lattice: &Lattice) -> Result<Vec<NodeId>, GraphError> {
    let n = lattice.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut outgoing = vec![Vec::new(); n];
    for arc in &lattice.arcs {
        indegree[arc.end_node] += 1;
        outgoing[arc.start_node].push(arc.end_node);
    }

    // Kahn's algorithm with an ordered frontier.
    let mut frontier: Vec<NodeId> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while !frontier.is_empty() {
        let (pos, _) = frontier
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| {
                lattice.nodes[a]
                    .time
                    .total_cmp(&lattice.nodes[b].time)
                    .then(a.cmp(&b))
            })
            .expect("frontier non-empty");
        let v = frontier.swap_remove(pos);
        order.push(v);
        for &w in &outgoing[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                frontier.push(w);
            }
        }
    }
    if order.len() != n {
        return Err(GraphError::Cycle);
    }
    Ok(order)
}

/// Flip every arc and swap initial/final. Node times and arc payloads
/// are preserved, so the result is a traversal device for backward
/// recursions rather than a valid lattice (times decrease along arcs).
/// Reversing twice restores the original lattice exactly.
pub fn reverse(lattice: &Lattice) -> Lattice {
    let arcs = lattice
        .arcs
        .iter()
        .map(|a| Arc {
            id: a.id,
            start_node: a.end_node,
            end_node: a.start_node,
            word: a.word.clone(),
            start_time: a.end_time,
            end_time: a.start_time,
            posterior: a.posterior,
            am_score: a.am_score,
            lm_score: a.lm_score,
        })
        .collect();
    Lattice {
        utterance_id: lattice.utterance_id.clone(),
        nodes: lattice.nodes.clone(),
        arcs,
        initial: lattice.final_node,
        final_node: lattice.initial,
    }
}

/// Convert a CN into a linear-chain lattice: `bins.len() + 1` nodes,
/// with bin `t`'s entries becoming parallel arcs `node_t -> node_{t+1}`.
/// Arc ids enumerate entries bin-major, preserving entry order; target
/// tags computed on the CN line up with these ids.
pub fn cn_to_lattice(cn: &ConfusionNetwork) -> Result<Lattice, GraphError> {
    if cn.bins.is_empty() {
        return Err(GraphError::EmptyCn);
    }
    let mut nodes = Vec::with_capacity(cn.bins.len() + 1);
    nodes.push(Node { id: 0, time: cn.bins[0].start_time });
    for (t, bin) in cn.bins.iter().enumerate() {
        nodes.push(Node { id: t + 1, time: bin.end_time });
    }

    let mut arcs = Vec::new();
    for (t, bin) in cn.bins.iter().enumerate() {
        let (ts, te) = (nodes[t].time, nodes[t + 1].time);
        for (word, posterior) in &bin.entries {
            arcs.push(Arc {
                id: arcs.len(),
                start_node: t,
                end_node: t + 1,
                word: word.clone(),
                start_time: ts,
                end_time: te,
                posterior: *posterior,
                am_score: 0.0,
                lm_score: 0.0,
            });
        }
    }
    Ok(Lattice {
        utterance_id: cn.utterance_id.clone(),
        nodes,
        arcs,
        initial: 0,
        final_node: cn.bins.len(),
    })
}

/// Highest-posterior entry of one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct OneBestEntry {
    pub bin: usize,
    pub word: String,
    pub posterior: f64,
}

impl OneBestEntry {
    pub fn is_null(&self) -> bool {
        self.word == NULL_WORD
    }
}

/// Reduce a CN to its 1-best as a singleton-bin CN (times preserved,
/// `!NULL` selections kept). This is the canonical sequence-mode input:
/// scoring it exercises exactly the plain left-to-right recurrence.
pub fn one_best_cn(cn: &ConfusionNetwork) -> ConfusionNetwork {
    let bins = one_best(cn)
        .into_iter()
        .map(|e| Bin {
            start_time: cn.bins[e.bin].start_time,
            end_time: cn.bins[e.bin].end_time,
            entries: vec![(e.word, e.posterior)],
        })
        .collect();
    ConfusionNetwork { utterance_id: cn.utterance_id.clone(), bins }
}

/// Per bin, the maximal-posterior entry (ties: first in entry order).
/// `!NULL` selections are kept so callers may drop them for
/// word-sequence views.
pub fn one_best(cn: &ConfusionNetwork) -> Vec<OneBestEntry> {
    cn.bins
        .iter()
        .enumerate()
        .filter_map(|(t, bin)| {
            let mut best: Option<&(String, f64)> = None;
            for entry in &bin.entries {
                if best.map_or(true, |b| entry.1 > b.1) {
                    best = Some(entry);
                }
            }
            best.map(|(word, posterior)| OneBestEntry {
                bin: t,
                word: word.clone(),
                posterior: *posterior,
            })
        })
        .collect()
}
