//! Impulse response of a bounded annular 2-D diffusion channel.
//!
//! A point transmitter releases a molecule at radius `r0` inside the annulus
//! `d0 <= r <= D0`. The inner circle is a perfectly absorbing receiver and the
//! outer circle reflects. The crate evaluates the hitting-rate distribution
//! from its Bessel eigenfunction expansion, simulates the same channel with
//! Brownian dynamics, and derives the peak, average and half times.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod characteristics;
pub mod eigen;
pub mod error;
pub mod io;
pub mod mcsim;
pub mod specfun;

pub use error::{Error, Result};

#[cfg(test)]
#[path = "../tests/common/quadrature.rs"]
pub(crate) mod quadrature;
