//! Bi-directional recurrence over word graphs.
//!
//! One engine covers all three input shapes: sequences and CNs are
//! converted to linear-chain lattices, general lattices are traversed
//! directly. In each direction, nodes are visited in topological order
//! of the traversal orientation; a node's state is a weighted merge of
//! the states of its incoming arcs, and every arc leaving the node runs
//! the recurrent cell on that merged state and the arc's features. The
//! scalar head reads the concatenated forward/backward arc states. The
//! backward direction is exactly the forward computation applied to the
//! reversed graph, with its own recurrence, initial-state and attention
//! parameters (input weights, gate biases and the head are shared).
//!
//! Gradients are hand-propagated in reverse: head, merges (attention
//! weights are the only parameter-dependent merge; the posterior
//! statistics in its keys are treated as constants), cells, and both
//! directions back to the learned initial states.

use std::str::FromStr;

use thiserror::Error;

use crate::graph::{self, ConfusionNetwork, GraphError, Lattice};
use crate::graph::{Arc, ArcId, NodeId};
use crate::nn::{
    axpy, cell_backward, cell_forward, dot, matvec_accum, matvec_t_accum, outer_accum, sigmoid,
    softmax, softmax_backward, softplus, Block, CellCache, CellKind, Dir, Gradient, ModelParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMethod {
    /// One-hot at the highest-posterior arc (ties: lowest arc id).
    Max,
    /// Uniform 1/n.
    Mean,
    /// Weights proportional to raw posteriors; all-zero sets fall back
    /// to mean.
    Posterior,
    /// Softmax over attention logits scored from per-arc keys.
    Attention,
}

impl MergeMethod {
    pub const ALL: [MergeMethod; 4] =
        [MergeMethod::Max, MergeMethod::Mean, MergeMethod::Posterior, MergeMethod::Attention];

    pub fn name(self) -> &'static str {
        match self {
            MergeMethod::Max => "max",
            MergeMethod::Mean => "mean",
            MergeMethod::Posterior => "posterior",
            MergeMethod::Attention => "attention",
        }
    }
}

impl std::fmt::Display for MergeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MergeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MergeMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown merge method `{s}`"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PropagateError {
    #[error("graph error: {0}")]
    Graph(#[from] GraphError),
    #[error("merge set is empty")]
    EmptyMergeSet,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("feature layout mismatch: model expects {expected}, got {got}")]
    FeatureLayoutMismatch { expected: usize, got: usize },
    #[error("nothing to score")]
    Empty,
}

/// Per-arc confidence, indexed by the graph's arc ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcConfidence {
    pub arc_id: ArcId,
    pub c: f64,
}

/// Everything one direction's sweep computes, retained for the backward
/// pass: merged node states, per-arc cell outputs, merge weights, and
/// attention intermediates.
#[derive(Debug, Clone)]
pub struct PropagationState {
    pub dir: Dir,
    pub method: MergeMethod,
    /// Node visit order (topological in the traversal orientation).
    pub order: Vec<NodeId>,
    /// Per node, the arcs merged into its state (ascending arc id).
    pub merge_sets: Vec<Vec<ArcId>>,
    /// Per node, the arcs whose cells consume its state.
    pub leaving: Vec<Vec<ArcId>>,
    pub node_h: Vec<Vec<f64>>,
    /// Merged cell states; empty vectors for the simple cell.
    pub node_c: Vec<Vec<f64>>,
    pub arc_h: Vec<Vec<f64>>,
    pub arc_c: Vec<Vec<f64>>,
    /// Merge weights per node, aligned with `merge_sets`.
    pub alphas: Vec<Vec<f64>>,
    attn_z: Vec<Vec<f64>>,
    attn_stats: Vec<(f64, f64)>,
    caches: Vec<CellCache>,
}

/// Population mean and standard deviation of a merge set's posteriors;
/// singleton sets get sigma = 0.
fn posterior_stats(posteriors: &[f64]) -> (f64, f64) {
    let n = posteriors.len() as f64;
    let mu = posteriors.iter().sum::<f64>() / n;
    let var = posteriors.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Merge weights for the posterior-independent methods.
fn fixed_weights(method: MergeMethod, posteriors: &[f64]) -> Vec<f64> {
    let n = posteriors.len();
    match method {
        MergeMethod::Max => {
            let mut best = 0;
            for (i, &p) in posteriors.iter().enumerate() {
                if p > posteriors[best] {
                    best = i;
                }
            }
            let mut alpha = vec![0.0; n];
            alpha[best] = 1.0;
            alpha
        }
        MergeMethod::Mean => vec![1.0 / n as f64; n],
        MergeMethod::Posterior => {
            let sum: f64 = posteriors.iter().sum();
            if sum == 0.0 {
                vec![1.0 / n as f64; n]
            } else {
                posteriors.iter().map(|p| p / sum).collect()
            }
        }
        MergeMethod::Attention => unreachable!("attention weights depend on states"),
    }
}

/// Attention logits for one merge set: `z_i = act(w_a . k_i + b_a)`
/// with key `k_i = [h_i; p_i; mu; sigma]`.
fn attention_logits(
    params: &ModelParams,
    dir: Dir,
    states: &[&[f64]],
    posteriors: &[f64],
    mu: f64,
    sigma: f64,
) -> Vec<f64> {
    let d_h = params.meta.d_h;
    let w_a = params.block(Block::AttnW(dir));
    let b_a = params.block(Block::AttnB(dir))[0];
    states
        .iter()
        .zip(posteriors)
        .map(|(h, &p)| {
            let pre =
                dot(&w_a[..d_h], h) + w_a[d_h] * p + w_a[d_h + 1] * mu + w_a[d_h + 2] * sigma + b_a;
            params.meta.attn_activation.apply(pre)
        })
        .collect()
}

/// Merge a set of incoming arc states into one node state. Returns the
/// merged hidden state, the merged cell state (gated cells), and the
/// weights used. Standalone entry point; the propagation engine inlines
/// the same computation to keep its caches.
pub fn merge_states(
    method: MergeMethod,
    arc_states: &[Vec<f64>],
    cell_states: Option<&[Vec<f64>]>,
    posteriors: &[f64],
    params: &ModelParams,
    dir: Dir,
) -> Result<(Vec<f64>, Option<Vec<f64>>, Vec<f64>), PropagateError> {
    if arc_states.is_empty() {
        return Err(PropagateError::EmptyMergeSet);
    }
    if posteriors.len() != arc_states.len() {
        return Err(PropagateError::LengthMismatch {
            expected: arc_states.len(),
            got: posteriors.len(),
        });
    }
    let alpha = match method {
        MergeMethod::Attention => {
            let (mu, sigma) = posterior_stats(posteriors);
            let refs: Vec<&[f64]> = arc_states.iter().map(|v| v.as_slice()).collect();
            softmax(&attention_logits(params, dir, &refs, posteriors, mu, sigma))
        }
        _ => fixed_weights(method, posteriors),
    };
    let d = arc_states[0].len();
    let mut h = vec![0.0; d];
    for (a, st) in alpha.iter().zip(arc_states) {
        axpy(&mut h, *a, st);
    }
    let c = cell_states.map(|cs| {
        let mut c = vec![0.0; cs[0].len()];
        for (a, st) in alpha.iter().zip(cs) {
            axpy(&mut c, *a, st);
        }
        c
    });
    Ok((h, c, alpha))
}

fn check_features(
    lattice: &Lattice,
    features: &[Vec<f64>],
    params: &ModelParams,
) -> Result<(), PropagateError> {
    if features.len() != lattice.arcs.len() {
        return Err(PropagateError::LengthMismatch {
            expected: lattice.arcs.len(),
            got: features.len(),
        });
    }
    for f in features {
        if f.len() != params.meta.d_x {
            return Err(PropagateError::FeatureLayoutMismatch {
                expected: params.meta.d_x,
                got: f.len(),
            });
        }
    }
    Ok(())
}

fn propagate_direction(
    lattice: &Lattice,
    features: &[Vec<f64>],
    params: &ModelParams,
    method: MergeMethod,
    dir: Dir,
) -> Result<PropagationState, PropagateError> {
    check_features(lattice, features, params)?;
    let meta = params.meta;
    let gated = meta.cell == CellKind::Gated;
    let n_nodes = lattice.nodes.len();
    let n_arcs = lattice.arcs.len();

    let topo = graph::topological_order(lattice)?;
    // The traversal orientation flips the roles of incoming/outgoing;
    // a reversed topological order is topological for the reversed graph.
    let (order, merge_sets, leaving) = match dir {
        Dir::Fwd => (topo, lattice.incoming(), lattice.outgoing()),
        Dir::Bwd => {
            (topo.into_iter().rev().collect(), lattice.outgoing(), lattice.incoming())
        }
    };

    let mut st = PropagationState {
        dir,
        method,
        order,
        merge_sets,
        leaving,
        node_h: vec![Vec::new(); n_nodes],
        node_c: vec![Vec::new(); n_nodes],
        arc_h: vec![Vec::new(); n_arcs],
        arc_c: vec![Vec::new(); n_arcs],
        alphas: vec![Vec::new(); n_nodes],
        attn_z: vec![Vec::new(); n_nodes],
        attn_stats: vec![(0.0, 0.0); n_nodes],
        caches: vec![CellCache::Simple; n_arcs],
    };

    for idx in 0..st.order.len() {
        let v = st.order[idx];
        let set = &st.merge_sets[v];
        if set.is_empty() {
            // The traversal's initial node (or an off-path source in a
            // degenerate graph) starts from the learned initial state.
            st.node_h[v] = params.block(Block::H0(dir)).to_vec();
            if gated {
                st.node_c[v] = vec![0.0; meta.d_h];
            }
        } else {
            let posteriors: Vec<f64> =
                set.iter().map(|&a| lattice.arcs[a].posterior).collect();
            let alpha = match method {
                MergeMethod::Attention => {
                    let (mu, sigma) = posterior_stats(&posteriors);
                    let states: Vec<&[f64]> =
                        set.iter().map(|&a| st.arc_h[a].as_slice()).collect();
                    let z = attention_logits(params, dir, &states, &posteriors, mu, sigma);
                    let alpha = softmax(&z);
                    st.attn_z[v] = z;
                    st.attn_stats[v] = (mu, sigma);
                    alpha
                }
                _ => fixed_weights(method, &posteriors),
            };
            let mut h = vec![0.0; meta.d_h];
            for (w, &a) in alpha.iter().zip(set.iter()) {
                axpy(&mut h, *w, &st.arc_h[a]);
            }
            if gated {
                let mut c = vec![0.0; meta.d_h];
                for (w, &a) in alpha.iter().zip(set.iter()) {
                    axpy(&mut c, *w, &st.arc_c[a]);
                }
                st.node_c[v] = c;
            }
            st.node_h[v] = h;
            st.alphas[v] = alpha;
        }

        for i in 0..st.leaving[v].len() {
            let a = st.leaving[v][i];
            let c_prev = if gated { Some(st.node_c[v].as_slice()) } else { None };
            let (h, c, cache) = cell_forward(params, dir, &st.node_h[v], c_prev, &features[a]);
            st.arc_h[a] = h;
            if let Some(c) = c {
                st.arc_c[a] = c;
            }
            st.caches[a] = cache;
        }
    }
    Ok(st)
}

/// Forward-direction sweep: states in original arc orientation.
pub fn forward_graph(
    lattice: &Lattice,
    features: &[Vec<f64>],
    params: &ModelParams,
    method: MergeMethod,
) -> Result<PropagationState, PropagateError> {
    propagate_direction(lattice, features, params, method, Dir::Fwd)
}

/// Backward-direction sweep: the forward computation on the reversed
/// graph with the backward parameter set.
pub fn backward_graph(
    lattice: &Lattice,
    features: &[Vec<f64>],
    params: &ModelParams,
    method: MergeMethod,
) -> Result<PropagationState, PropagateError> {
    propagate_direction(lattice, features, params, method, Dir::Bwd)
}

struct HeadTrace {
    concat: Vec<f64>,
    /// FF activations; equals `concat` when the FF layer is disabled.
    u: Vec<f64>,
    pre: f64,
}

fn head_forward(params: &ModelParams, h_fwd: &[f64], h_bwd: &[f64]) -> HeadTrace {
    let meta = params.meta;
    let mut concat = Vec::with_capacity(2 * meta.d_h);
    concat.extend_from_slice(h_fwd);
    concat.extend_from_slice(h_bwd);
    let w_c = params.block(Block::HeadW);
    let b_c = params.block(Block::HeadB)[0];
    let u = if meta.d_f > 0 {
        let mut pre_ff = params.block(Block::FfB).to_vec();
        matvec_accum(params.block(Block::FfW), meta.d_f, 2 * meta.d_h, &concat, &mut pre_ff);
        pre_ff.iter_mut().for_each(|v| *v = v.tanh());
        pre_ff
    } else {
        concat.clone()
    };
    let pre = dot(w_c, &u) + b_c;
    HeadTrace { concat, u, pre }
}

/// Confidence for every arc from completed forward/backward states.
pub fn arc_confidences(
    fwd: &PropagationState,
    bwd: &PropagationState,
    params: &ModelParams,
) -> Vec<ArcConfidence> {
    fwd.arc_h
        .iter()
        .zip(&bwd.arc_h)
        .enumerate()
        .map(|(arc_id, (hf, hb))| ArcConfidence {
            arc_id,
            c: sigmoid(head_forward(params, hf, hb).pre),
        })
        .collect()
}

/// Mean binary cross-entropy `-(1/T) sum [c* ln c + (1-c*) ln(1-c)]`.
/// Confidences must already lie strictly inside (0,1).
pub fn bce_loss(confidences: &[f64], targets: &[f64]) -> Result<f64, PropagateError> {
    if confidences.len() != targets.len() {
        return Err(PropagateError::LengthMismatch {
            expected: confidences.len(),
            got: targets.len(),
        });
    }
    if confidences.is_empty() {
        return Err(PropagateError::Empty);
    }
    let sum: f64 = confidences
        .iter()
        .zip(targets)
        .map(|(&c, &t)| -(t * c.ln() + (1.0 - t) * (1.0 - c).ln()))
        .sum();
    Ok(sum / confidences.len() as f64)
}

fn backprop_direction(
    lattice: &Lattice,
    features: &[Vec<f64>],
    params: &ModelParams,
    st: &PropagationState,
    d_arc_h: &mut [Vec<f64>],
    d_arc_c: &mut [Vec<f64>],
    grad: &mut Gradient,
) {
    let meta = params.meta;
    let gated = meta.cell == CellKind::Gated;
    let d_h = meta.d_h;
    let dir = st.dir;
    let mut d_node_h = vec![vec![0.0; d_h]; lattice.nodes.len()];
    let mut d_node_c = if gated {
        vec![vec![0.0; d_h]; lattice.nodes.len()]
    } else {
        Vec::new()
    };

    for &v in st.order.iter().rev() {
        // Cells of arcs leaving v consumed its merged state; collect
        // their adjoints first.
        for &a in &st.leaving[v] {
            let c_prev = if gated { Some(st.node_c[v].as_slice()) } else { None };
            let dc = if gated { Some(d_arc_c[a].as_slice()) } else { None };
            let (dh_prev, dc_prev) = cell_backward(
                params,
                dir,
                &st.node_h[v],
                c_prev,
                &features[a],
                &st.arc_h[a],
                &st.caches[a],
                &d_arc_h[a],
                dc,
                grad,
            );
            axpy(&mut d_node_h[v], 1.0, &dh_prev);
            if let Some(dc_prev) = dc_prev {
                axpy(&mut d_node_c[v], 1.0, &dc_prev);
            }
        }

        let set = &st.merge_sets[v];
        if set.is_empty() {
            // Initial state is learned; its cell-state twin is a constant
            // zero vector and receives no gradient.
            axpy(grad.block_mut(Block::H0(dir)), 1.0, &d_node_h[v]);
            continue;
        }

        let alpha = &st.alphas[v];
        for (i, &a) in set.iter().enumerate() {
            axpy(&mut d_arc_h[a], alpha[i], &d_node_h[v]);
            if gated {
                axpy(&mut d_arc_c[a], alpha[i], &d_node_c[v]);
            }
        }

        if st.method == MergeMethod::Attention {
            // d alpha_i = h_i . d_node_h (+ c_i . d_node_c), then softmax
            // and the activation back to the keys. Posterior statistics
            // are constants, so only the key's state part propagates.
            let dalpha: Vec<f64> = set
                .iter()
                .map(|&a| {
                    let mut s = dot(&st.arc_h[a], &d_node_h[v]);
                    if gated {
                        s += dot(&st.arc_c[a], &d_node_c[v]);
                    }
                    s
                })
                .collect();
            let dz = softmax_backward(alpha, &dalpha);
            let (mu, sigma) = st.attn_stats[v];
            for (i, &a) in set.iter().enumerate() {
                let dpre =
                    dz[i] * meta.attn_activation.grad_from_value(st.attn_z[v][i]);
                {
                    let gw = grad.block_mut(Block::AttnW(dir));
                    axpy(&mut gw[..d_h], dpre, &st.arc_h[a]);
                    gw[d_h] += dpre * lattice.arcs[a].posterior;
                    gw[d_h + 1] += dpre * mu;
                    gw[d_h + 2] += dpre * sigma;
                }
                grad.block_mut(Block::AttnB(dir))[0] += dpre;
                let w_a = params.block(Block::AttnW(dir));
                axpy(&mut d_arc_h[a], dpre, &w_a[..d_h]);
            }
        }
    }
}

/// Mean BCE over all arcs and its exact gradient.
pub fn loss_and_gradient(
    lattice: &Lattice,
    features: &[Vec<f64>],
    targets: &[f64],
    params: &ModelParams,
    method: MergeMethod,
) -> Result<(f64, Gradient), PropagateError> {
    let n_arcs = lattice.arcs.len();
    if n_arcs == 0 {
        return Err(PropagateError::Empty);
    }
    if targets.len() != n_arcs {
        return Err(PropagateError::LengthMismatch { expected: n_arcs, got: targets.len() });
    }
    let fwd = propagate_direction(lattice, features, params, method, Dir::Fwd)?;
    let bwd = propagate_direction(lattice, features, params, method, Dir::Bwd)?;

    let meta = params.meta;
    let gated = meta.cell == CellKind::Gated;
    let d_h = meta.d_h;
    let inv_t = 1.0 / n_arcs as f64;
    let mut grad = Gradient::zeros(meta);
    let mut d_arc_h_f = vec![vec![0.0; d_h]; n_arcs];
    let mut d_arc_h_b = vec![vec![0.0; d_h]; n_arcs];
    let empty = || if gated { vec![vec![0.0; d_h]; n_arcs] } else { Vec::new() };
    let mut d_arc_c_f = empty();
    let mut d_arc_c_b = empty();

    let mut loss = 0.0;
    for a in 0..n_arcs {
        let trace = head_forward(params, &fwd.arc_h[a], &bwd.arc_h[a]);
        // Stable BCE straight from the logit:
        // softplus(-pre) + (1 - c*) pre.
        loss += softplus(-trace.pre) + (1.0 - targets[a]) * trace.pre;
        let dpre = (sigmoid(trace.pre) - targets[a]) * inv_t;

        let d_concat = if meta.d_f > 0 {
            let w_c = params.block(Block::HeadW).to_vec();
            axpy(grad.block_mut(Block::HeadW), dpre, &trace.u);
            grad.block_mut(Block::HeadB)[0] += dpre;
            let d_pre_ff: Vec<f64> = trace
                .u
                .iter()
                .zip(&w_c)
                .map(|(&u, &w)| dpre * w * (1.0 - u * u))
                .collect();
            outer_accum(grad.block_mut(Block::FfW), &d_pre_ff, &trace.concat);
            axpy(grad.block_mut(Block::FfB), 1.0, &d_pre_ff);
            let mut d_concat = vec![0.0; 2 * d_h];
            matvec_t_accum(
                params.block(Block::FfW),
                meta.d_f,
                2 * d_h,
                &d_pre_ff,
                &mut d_concat,
            );
            d_concat
        } else {
            let w_c = params.block(Block::HeadW).to_vec();
            axpy(grad.block_mut(Block::HeadW), dpre, &trace.concat);
            grad.block_mut(Block::HeadB)[0] += dpre;
            w_c.iter().map(|&w| dpre * w).collect()
        };
        axpy(&mut d_arc_h_f[a], 1.0, &d_concat[..d_h]);
        axpy(&mut d_arc_h_b[a], 1.0, &d_concat[d_h..]);
    }
    loss *= inv_t;

    backprop_direction(lattice, features, params, &fwd, &mut d_arc_h_f, &mut d_arc_c_f, &mut grad);
    backprop_direction(lattice, features, params, &bwd, &mut d_arc_h_b, &mut d_arc_c_b, &mut grad);
    Ok((loss, grad))
}

/// Run both directions and the head; confidences per arc id.
pub fn score_lattice(
    lattice: &Lattice,
    features: &[Vec<f64>],
    params: &ModelParams,
    method: MergeMethod,
) -> Result<Vec<ArcConfidence>, PropagateError> {
    let fwd = propagate_direction(lattice, features, params, method, Dir::Fwd)?;
    let bwd = propagate_direction(lattice, features, params, method, Dir::Bwd)?;
    Ok(arc_confidences(&fwd, &bwd, params))
}

/// Supplies the per-arc feature vector; implemented by the corpus
/// feature extractor and by test fixtures.
pub trait FeatureSource {
    fn arc_features(&self, lattice: &Lattice, arc: &Arc) -> Vec<f64>;
}

/// An utterance in any of the three scorable shapes. `OneBest` reduces
/// the CN to its max-posterior entry per bin before scoring, i.e. the
/// plain sequence model.
pub enum ScoreInput<'a> {
    OneBest(&'a ConfusionNetwork),
    Cn(&'a ConfusionNetwork),
    Lattice(&'a Lattice),
}

/// Score one utterance: convert to a lattice, extract features, run the
/// model. Deterministic for fixed inputs.
pub fn predict(
    input: ScoreInput<'_>,
    params: &ModelParams,
    method: MergeMethod,
    source: &impl FeatureSource,
) -> Result<Vec<ArcConfidence>, PropagateError> {
    let owned;
    let lattice: &Lattice = match input {
        ScoreInput::OneBest(cn) => {
            owned = graph::cn_to_lattice(&graph::one_best_cn(cn))?;
            &owned
        }
        ScoreInput::Cn(cn) => {
            owned = graph::cn_to_lattice(cn)?;
            &owned
        }
        ScoreInput::Lattice(lat) => lat,
    };
    let features: Vec<Vec<f64>> =
        lattice.arcs.iter().map(|arc| source.arc_features(lattice, arc)).collect();
    score_lattice(lattice, &features, params, method)
}
