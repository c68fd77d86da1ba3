//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Tape`] records tensor operations on `f64` matrices. Its recording
//! sweep ([`Tape::grad`]) writes the adjoint computation back onto the
//! tape, so a gradient such as `∇ₓu` can itself be differentiated with
//! respect to network parameters. One extra level is all the training
//! losses ever need.
//!
//! Operations on values that do not depend on any leaf are folded into
//! constants at construction time and skipped by both sweeps.

mod matrix;
mod ops;
mod tape;

pub use matrix::Matrix;
pub use ops::{Eager, Ops};
pub use tape::{Primitive, Tape, Var};

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("differentiated expression must be 1x1, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("node {0} is not a leaf")]
    NotLeaf(usize),
    #[error("non-finite function value at coordinate {0}")]
    NonFinite(usize),
}

/// `∂expr/∂inputs`, recorded on the tape so it stays differentiable with
/// respect to every other leaf.
pub fn grad_wrt_inputs(tape: &Tape, expr: Var, inputs: Var) -> Result<Var, AdError> {
    if !tape.is_leaf(inputs) {
        return Err(if tape.owns(inputs) {
            AdError::NotLeaf(inputs.index())
        } else {
            AdError::ForeignVar
        });
    }
    Ok(tape.grad(expr, &[inputs])?[0])
}

/// Plain gradient tensors of `expr` for each leaf; unused leaves give zeros.
pub fn grad_wrt_leaves(tape: &Tape, expr: Var, leaves: &[Var]) -> Result<Vec<Matrix>, AdError> {
    for &l in leaves {
        if !tape.owns(l) {
            return Err(AdError::ForeignVar);
        }
        if !tape.is_leaf(l) {
            return Err(AdError::NotLeaf(l.index()));
        }
    }
    tape.gradients(expr, leaves)
}

/// Compares reverse-mode gradients of `f` at `point` against central
/// differences with step `h`.
///
/// Returns `max_i |ad_i - fd_i| / (|ad_i| + |fd_i| + 1e-12)`.
pub fn finite_diff_check<F>(f: F, point: &Matrix, h: f64) -> Result<f64, AdError>
where
    F: Fn(&Tape, Var) -> Var,
{
    const FLOOR: f64 = 1e-12;
    let eval = |p: Matrix| -> Result<f64, AdError> {
        let tape = Tape::new();
        let x = tape.leaf(p);
        let y = f(&tape, x);
        tape.scalar(y).ok_or(AdError::NotScalar(tape.shape_of(y)))
    };

    let tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&tape, x);
    let value = tape.scalar(y).ok_or(AdError::NotScalar(tape.shape_of(y)))?;
    if !value.is_finite() {
        return Err(AdError::NonFinite(0));
    }
    let ad = tape.gradients(y, &[x])?.remove(0);

    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        let (fp, fm) = (eval(plus)?, eval(minus)?);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(AdError::NonFinite(i));
        }
        let fd = (fp - fm) / (2.0 * h);
        let a = ad.data()[i];
        worst = worst.max((a - fd).abs() / (a.abs() + fd.abs() + FLOOR));
    }
    Ok(worst)
}
