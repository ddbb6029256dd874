//! Minimal numeric core: dense kernels, recurrent cells, a flat
//! parameter view for optimizers, and finite-difference gradient
//! checking.
//!
//! Everything runs in double precision, and every primitive ships with
//! a hand-derived backward pass — there is no tape or general autodiff.
//! The propagation engine composes these pieces and accumulates into
//! one [`Gradient`] per utterance.

mod cell;
mod gradcheck;
mod linalg;
mod params;

pub use cell::{cell_backward, cell_forward, gated_cell, simple_cell, CellCache, CellView};
pub use gradcheck::{grad_check, grad_check_default};
pub use linalg::{
    affine, affine_backward, axpy, dot, matvec, matvec_accum, matvec_t_accum, outer_accum,
    sigmoid, softmax, softmax_backward, softplus,
};
pub use params::{
    clip_global_norm, sgd_step_flat, AttnActivation, Block, CellKind, Dir, Gate, Gradient,
    ModelMeta, ModelParams,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{op}: expected length {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: parameters were built for the other cell kind")]
    WrongCell { op: &'static str },
}

/// Attention score for one merge-set key: `act(w_a . k + b_a)`.
pub fn attention_logit(
    key: &[f64],
    w_a: &[f64],
    b_a: f64,
    act: AttnActivation,
) -> Result<f64, NnError> {
    if key.len() != w_a.len() {
        return Err(NnError::ShapeMismatch {
            op: "attention_logit",
            expected: w_a.len(),
            got: key.len(),
        });
    }
    Ok(act.apply(dot(w_a, key) + b_a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_logit_zero_params_is_half() {
        let key = [0.3, -0.7, 2.0];
        let z = attention_logit(&key, &[0.0; 3], 0.0, AttnActivation::Logistic).unwrap();
        assert_eq!(z, 0.5);
    }

    #[test]
    fn attention_logit_equal_keys_equal_logits() {
        let w = [0.4, -0.2, 0.9];
        let k = [1.0, 2.0, -1.5];
        let a = attention_logit(&k, &w, 0.3, AttnActivation::Logistic).unwrap();
        let b = attention_logit(&k, &w, 0.3, AttnActivation::Logistic).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attention_logit_scalar_oracle() {
        // Hand evaluation: pre = 0.5*0.2 + (-1.0)*0.4 + 0.25, z = sigma(-0.05).
        let z = attention_logit(&[0.2, 0.4], &[0.5, -1.0], 0.25, AttnActivation::Logistic)
            .unwrap();
        let expected = 1.0 / (1.0 + f64::exp(0.05));
        assert!((z - expected).abs() < 1e-15);
    }

    #[test]
    fn attention_logit_activations() {
        let pre: f64 = 0.5 * 0.2 - 1.0 * 0.4 + 0.25;
        let k = [0.2, 0.4];
        let w = [0.5, -1.0];
        let t = attention_logit(&k, &w, 0.25, AttnActivation::Tanh).unwrap();
        assert!((t - pre.tanh()).abs() < 1e-15);
        let i = attention_logit(&k, &w, 0.25, AttnActivation::Identity).unwrap();
        assert!((i - pre).abs() < 1e-15);
    }

    #[test]
    fn attention_logit_shape_error() {
        let err = attention_logit(&[1.0, 2.0], &[1.0], 0.0, AttnActivation::Logistic);
        assert!(matches!(err, Err(NnError::ShapeMismatch { .. })));
    }
}
