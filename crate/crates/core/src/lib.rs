//! Randomized robust anti-windup design kernels.
//!
//! This crate is `no_std` (with `alloc`) and contains everything that does not
//! touch the filesystem or a concrete numerical solver:
//!
//! - [`lmi`]: a small modeling layer for semidefinite programs (affine matrix
//!   expressions, symmetric/rectangular matrix variables, LMI constraints) and
//!   its lowering to a standard conic form consumed by an [`lmi::SdpBackend`].
//! - [`scenario`]: sample-complexity bounds and the scenario-with-certificates
//!   engine, including the sequential design/validation algorithm.
//! - [`antiwindup`]: closed-loop assembly for saturated plant/controller pairs
//!   and the regional analysis and synthesis constraint systems.
//! - [`sim`]: deadzone algebraic-loop solver, fixed-step RK4 simulation and
//!   signal norms.
//! - [`expr`]: arithmetic expressions used for parameter-dependent matrix
//!   entries.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod antiwindup;
pub mod expr;
pub mod linalg;
pub mod lmi;
pub mod scenario;
pub mod sim;

pub use nalgebra;

/// Dense real matrix used throughout the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
