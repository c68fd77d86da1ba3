//! Neural-network solvers for high-dimensional quasilinear parabolic PDEs
//! through their forward–backward SDE representation.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. File formats, plotting and the command line live in the
//! companion `fbsde-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod evaluation;
pub mod networks;
pub mod problems;
pub mod schemes;
pub mod simulate;
pub mod training;
mod math;

pub use autodiff::{Eager, Matrix, Ops, Tape, Var};
