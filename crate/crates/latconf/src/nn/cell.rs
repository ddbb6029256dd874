//! Recurrent cells: the bias-free logistic cell and the standard gated
//! (LSTM) cell, each with an exact backward pass.
//!
//! Cells are evaluated per arc during propagation: `h_prev` is the
//! merged state of the arc's start node, `x` the arc's feature vector.
//! The backward pass accumulates weight gradients into a [`Gradient`]
//! and returns the adjoints of `h_prev` (and `c_prev`) so the caller
//! can continue down the graph.

use super::linalg::{axpy, matvec_accum, matvec_t_accum, outer_accum, sigmoid};
use super::params::{Block, CellKind, Dir, Gate, Gradient, ModelParams};
use super::NnError;

/// Borrowed weight slices for one direction.
pub enum CellView<'a> {
    Simple {
        w_x: &'a [f64],
        w_h: &'a [f64],
    },
    Gated {
        // Gate order: input, forget, output, candidate.
        w_x: [&'a [f64]; 4],
        w_h: [&'a [f64]; 4],
        b: [&'a [f64]; 4],
    },
}

impl ModelParams {
    pub fn cell_view(&self, dir: Dir) -> CellView<'_> {
        match self.meta.cell {
            CellKind::Simple => CellView::Simple {
                w_x: self.block(Block::InputW),
                w_h: self.block(Block::RecurW(dir)),
            },
            CellKind::Gated => CellView::Gated {
                w_x: [0, 1, 2, 3].map(|k| self.block(Block::GateInputW(Gate::ALL[k]))),
                w_h: [0, 1, 2, 3].map(|k| self.block(Block::GateRecurW(Gate::ALL[k], dir))),
                b: [0, 1, 2, 3].map(|k| self.block(Block::GateBias(Gate::ALL[k]))),
            },
        }
    }
}

/// Intermediate activations needed by the backward pass. The simple
/// cell needs none beyond its output.
#[derive(Debug, Clone)]
pub enum CellCache {
    Simple,
    Gated {
        i: Vec<f64>,
        f: Vec<f64>,
        o: Vec<f64>,
        g: Vec<f64>,
        tanh_c: Vec<f64>,
    },
}

/// Evaluate the configured cell for one arc. `c_prev` must be `Some`
/// exactly for gated cells; the returned cell state mirrors that.
pub fn cell_forward(
    params: &ModelParams,
    dir: Dir,
    h_prev: &[f64],
    c_prev: Option<&[f64]>,
    x: &[f64],
) -> (Vec<f64>, Option<Vec<f64>>, CellCache) {
    let (d_h, d_x) = (params.meta.d_h, params.meta.d_x);
    match params.cell_view(dir) {
        CellView::Simple { w_x, w_h } => {
            let mut pre = vec![0.0; d_h];
            matvec_accum(w_h, d_h, d_h, h_prev, &mut pre);
            matvec_accum(w_x, d_h, d_x, x, &mut pre);
            let h: Vec<f64> = pre.iter().map(|&v| sigmoid(v)).collect();
            (h, None, CellCache::Simple)
        }
        CellView::Gated { w_x, w_h, b } => {
            let c_prev = c_prev.expect("gated cell requires a cell state");
            let mut act = [const { Vec::new() }; 4];
            for k in 0..4 {
                let mut a = b[k].to_vec();
                matvec_accum(w_x[k], d_h, d_x, x, &mut a);
                matvec_accum(w_h[k], d_h, d_h, h_prev, &mut a);
                act[k] = a;
            }
            let i: Vec<f64> = act[0].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = act[1].iter().map(|&v| sigmoid(v)).collect();
            let o: Vec<f64> = act[2].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = act[3].iter().map(|&v| v.tanh()).collect();
            let c: Vec<f64> = (0..d_h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
            let h: Vec<f64> = (0..d_h).map(|j| o[j] * tanh_c[j]).collect();
            (h, Some(c), CellCache::Gated { i, f, o, g, tanh_c })
        }
    }
}

/// Backward pass for one cell evaluation. `dh`/`dc` are the adjoints of
/// this arc's output state; the return value is `(dh_prev, dc_prev)`.
/// Feature vectors are constants, so no `dx` is produced.
#[allow(clippy::too_many_arguments)]
pub fn cell_backward(
    params: &ModelParams,
    dir: Dir,
    h_prev: &[f64],
    c_prev: Option<&[f64]>,
    x: &[f64],
    h: &[f64],
    cache: &CellCache,
    dh: &[f64],
    dc: Option<&[f64]>,
    grad: &mut Gradient,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let d_h = params.meta.d_h;
    match cache {
        CellCache::Simple => {
            let dpre: Vec<f64> = (0..d_h).map(|j| dh[j] * h[j] * (1.0 - h[j])).collect();
            outer_accum(grad.block_mut(Block::InputW), &dpre, x);
            outer_accum(grad.block_mut(Block::RecurW(dir)), &dpre, h_prev);
            let mut dh_prev = vec![0.0; d_h];
            matvec_t_accum(params.block(Block::RecurW(dir)), d_h, d_h, &dpre, &mut dh_prev);
            (dh_prev, None)
        }
        CellCache::Gated { i, f, o, g, tanh_c } => {
            let c_prev = c_prev.expect("gated cell requires a cell state");
            // Adjoint of c combines the h path (through tanh) and any
            // incoming cell-state adjoint from merges downstream.
            let mut dct: Vec<f64> =
                (0..d_h).map(|j| dh[j] * o[j] * (1.0 - tanh_c[j] * tanh_c[j])).collect();
            if let Some(dc) = dc {
                axpy(&mut dct, 1.0, dc);
            }
            let da_o: Vec<f64> =
                (0..d_h).map(|j| dh[j] * tanh_c[j] * o[j] * (1.0 - o[j])).collect();
            let da_i: Vec<f64> = (0..d_h).map(|j| dct[j] * g[j] * i[j] * (1.0 - i[j])).collect();
            let da_f: Vec<f64> =
                (0..d_h).map(|j| dct[j] * c_prev[j] * f[j] * (1.0 - f[j])).collect();
            let da_g: Vec<f64> = (0..d_h).map(|j| dct[j] * i[j] * (1.0 - g[j] * g[j])).collect();
            let dc_prev: Vec<f64> = (0..d_h).map(|j| dct[j] * f[j]).collect();

            let mut dh_prev = vec![0.0; d_h];
            for (gate, da) in Gate::ALL.iter().zip([&da_i, &da_f, &da_o, &da_g]) {
                outer_accum(grad.block_mut(Block::GateInputW(*gate)), da, x);
                outer_accum(grad.block_mut(Block::GateRecurW(*gate, dir)), da, h_prev);
                axpy(grad.block_mut(Block::GateBias(*gate)), 1.0, da);
                matvec_t_accum(
                    params.block(Block::GateRecurW(*gate, dir)),
                    d_h,
                    d_h,
                    da,
                    &mut dh_prev,
                );
            }
            (dh_prev, Some(dc_prev))
        }
    }
}

/// `h = sigma(W_h h_prev + W_x x)` — forward direction, shape-checked.
pub fn simple_cell(h_prev: &[f64], x: &[f64], params: &ModelParams) -> Result<Vec<f64>, NnError> {
    check_dims(params, CellKind::Simple, h_prev, x)?;
    let (h, _, _) = cell_forward(params, Dir::Fwd, h_prev, None, x);
    Ok(h)
}

/// Standard gated recurrence — forward direction, shape-checked.
pub fn gated_cell(
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
    params: &ModelParams,
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    check_dims(params, CellKind::Gated, h_prev, x)?;
    if c_prev.len() != params.meta.d_h {
        return Err(NnError::ShapeMismatch {
            op: "cell state",
            expected: params.meta.d_h,
            got: c_prev.len(),
        });
    }
    let (h, c, _) = cell_forward(params, Dir::Fwd, h_prev, Some(c_prev), x);
    Ok((h, c.expect("gated cell returns a cell state")))
}

fn check_dims(
    params: &ModelParams,
    want: CellKind,
    h_prev: &[f64],
    x: &[f64],
) -> Result<(), NnError> {
    if params.meta.cell != want {
        return Err(NnError::WrongCell { op: "cell dispatch" });
    }
    if h_prev.len() != params.meta.d_h {
        return Err(NnError::ShapeMismatch {
            op: "hidden state",
            expected: params.meta.d_h,
            got: h_prev.len(),
        });
    }
    if x.len() != params.meta.d_x {
        return Err(NnError::ShapeMismatch {
            op: "feature vector",
            expected: params.meta.d_x,
            got: x.len(),
        });
    }
    Ok(())
}
