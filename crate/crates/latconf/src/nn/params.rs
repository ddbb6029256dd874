//! Model parameters as one flat `Vec<f64>` plus a deterministic block
//! layout derived from the model dimensions.
//!
//! The flat storage is the optimizer's view: SGD and Hogwild updates are
//! elementwise over `data`, checkpoints dump it in layout order, and the
//! gradient checker perturbs single coordinates. Block accessors give
//! the propagation code shaped slices without any copying.

use std::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Simple,
    Gated,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Simple => "simple",
            CellKind::Gated => "gated",
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(CellKind::Simple),
            "gated" => Ok(CellKind::Gated),
            other => Err(format!("unknown cell kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnActivation {
    Logistic,
    Tanh,
    Identity,
}

impl std::fmt::Display for AttnActivation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttnActivation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(AttnActivation::Logistic),
            "tanh" => Ok(AttnActivation::Tanh),
            "identity" => Ok(AttnActivation::Identity),
            other => Err(format!("unknown attention activation `{other}`")),
        }
    }
}

impl AttnActivation {
    pub fn name(self) -> &'static str {
        match self {
            AttnActivation::Logistic => "logistic",
            AttnActivation::Tanh => "tanh",
            AttnActivation::Identity => "identity",
        }
    }

    pub fn apply(self, pre: f64) -> f64 {
        match self {
            AttnActivation::Logistic => super::sigmoid(pre),
            AttnActivation::Tanh => pre.tanh(),
            AttnActivation::Identity => pre,
        }
    }

    /// d(apply)/d(pre) expressed through the activation value `z`.
    pub fn grad_from_value(self, z: f64) -> f64 {
        match self {
            AttnActivation::Logistic => z * (1.0 - z),
            AttnActivation::Tanh => 1.0 - z * z,
            AttnActivation::Identity => 1.0,
        }
    }
}

/// Propagation direction. Backward runs on the reversed graph with its
/// own recurrence/initial-state/attention parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Fwd,
    Bwd,
}

impl Dir {
    pub const BOTH: [Dir; 2] = [Dir::Fwd, Dir::Bwd];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

/// Dimensions and structural choices that fix the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelMeta {
    pub cell: CellKind,
    /// Arc feature vector length.
    pub d_x: usize,
    pub d_h: usize,
    /// Feed-forward width before the scalar head; 0 disables the layer
    /// and the head reads the concatenated states directly.
    pub d_f: usize,
    pub attn_activation: AttnActivation,
}

/// One shaped parameter block. Input-side weights and gate biases are
/// shared across directions; recurrences, initial states, and attention
/// parameters are per-direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    InputW,
    RecurW(Dir),
    GateInputW(Gate),
    GateRecurW(Gate, Dir),
    GateBias(Gate),
    H0(Dir),
    AttnW(Dir),
    AttnB(Dir),
    FfW,
    FfB,
    HeadW,
    HeadB,
}

impl Block {
    pub fn name(self) -> String {
        fn dir(d: Dir) -> &'static str {
            match d {
                Dir::Fwd => "fwd",
                Dir::Bwd => "bwd",
            }
        }
        match self {
            Block::InputW => "input_w".into(),
            Block::RecurW(d) => format!("recur_w.{}", dir(d)),
            Block::GateInputW(g) => format!("gate_input_w.{}", g.name()),
            Block::GateRecurW(g, d) => format!("gate_recur_w.{}.{}", g.name(), dir(d)),
            Block::GateBias(g) => format!("gate_bias.{}", g.name()),
            Block::H0(d) => format!("h0.{}", dir(d)),
            Block::AttnW(d) => format!("attn_w.{}", dir(d)),
            Block::AttnB(d) => format!("attn_b.{}", dir(d)),
            Block::FfW => "ff_w".into(),
            Block::FfB => "ff_b".into(),
            Block::HeadW => "head_w".into(),
            Block::HeadB => "head_b".into(),
        }
    }

    /// Matrix-like blocks get uniform initialization; the rest start at
    /// zero (forget bias at one).
    fn is_matrix(self) -> bool {
        matches!(
            self,
            Block::InputW
                | Block::RecurW(_)
                | Block::GateInputW(_)
                | Block::GateRecurW(_, _)
                | Block::AttnW(_)
                | Block::FfW
                | Block::HeadW
        )
    }
}

impl ModelMeta {
    /// Attention key length: hidden state, posterior, merge-set mean and
    /// standard deviation of posteriors.
    pub fn key_len(&self) -> usize {
        self.d_h + 3
    }

    /// Width of the vector the scalar head reads.
    pub fn head_in(&self) -> usize {
        if self.d_f == 0 {
            2 * self.d_h
        } else {
            self.d_f
        }
    }

    pub fn block_shape(&self, b: Block) -> (usize, usize) {
        match b {
            Block::InputW | Block::GateInputW(_) => (self.d_h, self.d_x),
            Block::RecurW(_) | Block::GateRecurW(_, _) => (self.d_h, self.d_h),
            Block::GateBias(_) | Block::H0(_) => (self.d_h, 1),
            Block::AttnW(_) => (self.key_len(), 1),
            Block::AttnB(_) | Block::HeadB => (1, 1),
            Block::FfW => (self.d_f, 2 * self.d_h),
            Block::FfB => (self.d_f, 1),
            Block::HeadW => (self.head_in(), 1),
        }
    }

    pub fn block_len(&self, b: Block) -> usize {
        let (r, c) = self.block_shape(b);
        r * c
    }

    /// Blocks in flat-storage order. The order is part of the
    /// checkpoint contract and must never change.
    pub fn layout(&self) -> Vec<Block> {
        let mut v = Vec::new();
        match self.cell {
            CellKind::Simple => {
                v.push(Block::InputW);
                v.push(Block::RecurW(Dir::Fwd));
                v.push(Block::RecurW(Dir::Bwd));
            }
            CellKind::Gated => {
                for g in Gate::ALL {
                    v.push(Block::GateInputW(g));
                    v.push(Block::GateRecurW(g, Dir::Fwd));
                    v.push(Block::GateRecurW(g, Dir::Bwd));
                    v.push(Block::GateBias(g));
                }
            }
        }
        for d in Dir::BOTH {
            v.push(Block::H0(d));
        }
        for d in Dir::BOTH {
            v.push(Block::AttnW(d));
            v.push(Block::AttnB(d));
        }
        if self.d_f > 0 {
            v.push(Block::FfW);
            v.push(Block::FfB);
        }
        v.push(Block::HeadW);
        v.push(Block::HeadB);
        v
    }

    pub fn total_len(&self) -> usize {
        self.layout().iter().map(|&b| self.block_len(b)).sum()
    }

    pub fn try_range(&self, block: Block) -> Option<Range<usize>> {
        let mut offset = 0;
        for b in self.layout() {
            let len = self.block_len(b);
            if b == block {
                return Some(offset..offset + len);
            }
            offset += len;
        }
        None
    }

    pub fn range(&self, block: Block) -> Range<usize> {
        self.try_range(block)
            .unwrap_or_else(|| panic!("block {} absent from this layout", block.name()))
    }
}

/// All trainable parameters in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub meta: ModelMeta,
    pub data: Vec<f64>,
}

impl ModelParams {
    /// Seeded initialization: uniform(-1/sqrt(d_h), 1/sqrt(d_h)) for
    /// matrix blocks, zeros elsewhere, forget-gate bias 1.0.
    pub fn init(meta: ModelMeta, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (meta.d_h as f64).sqrt();
        let uniform = Uniform::new_inclusive(-bound, bound);
        let mut data = vec![0.0; meta.total_len()];
        let mut offset = 0;
        for b in meta.layout() {
            let len = meta.block_len(b);
            if b.is_matrix() {
                for v in &mut data[offset..offset + len] {
                    *v = uniform.sample(&mut rng);
                }
            } else if b == Block::GateBias(Gate::Forget) {
                data[offset..offset + len].fill(1.0);
            }
            offset += len;
        }
        ModelParams { meta, data }
    }

    pub fn zeros(meta: ModelMeta) -> Self {
        ModelParams { meta, data: vec![0.0; meta.total_len()] }
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[self.meta.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.meta.range(b);
        &mut self.data[r]
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn set_flat(&mut self, vals: &[f64]) -> Result<(), NnError> {
        if vals.len() != self.data.len() {
            return Err(NnError::ShapeMismatch {
                op: "set_flat",
                expected: self.data.len(),
                got: vals.len(),
            });
        }
        self.data.copy_from_slice(vals);
        Ok(())
    }

    /// `p <- p - lr * g`
    pub fn sgd_step(&mut self, grad: &Gradient, lr: f64) -> Result<(), NnError> {
        if grad.meta != self.meta || grad.data.len() != self.data.len() {
            return Err(NnError::ShapeMismatch {
                op: "sgd_step",
                expected: self.data.len(),
                got: grad.data.len(),
            });
        }
        sgd_step_flat(&mut self.data, &grad.data, lr);
        Ok(())
    }
}

/// Elementwise SGD on raw flat storage; the Hogwild path applies this
/// through an unsynchronized shared view.
pub fn sgd_step_flat(params: &mut [f64], grad: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grad.len());
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Shape-congruent gradient accumulator for one [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub meta: ModelMeta,
    pub data: Vec<f64>,
}

impl Gradient {
    pub fn zeros(meta: ModelMeta) -> Self {
        Gradient { meta, data: vec![0.0; meta.total_len()] }
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[self.meta.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.meta.range(b);
        &mut self.data[r]
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        super::axpy(&mut self.data, scale, &other.data);
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Rescale so the global L2 norm is at most `max_norm`; returns the
/// pre-clip norm.
pub fn clip_global_norm(grad: &mut Gradient, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in &mut grad.data {
            *g *= scale;
        }
    }
    norm
}
