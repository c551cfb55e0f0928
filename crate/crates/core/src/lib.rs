//! Survival probabilities, exit times and eigenfunctions for Brownian motion in
//! alcoves of affine Weyl groups.
//!
//! Closed-form survival probabilities and expected exit times for the
//! affine types Ã, B̃, C̃, D̃ and G̃₂, built from one-dimensional strip
//! kernels combined through Pfaffians over pair partitions. Two independent
//! oracles back them up: reflection image sums in rank two and Monte Carlo
//! simulation in any rank.

pub mod combinat;
pub mod debruijn;
pub mod eigen;
pub mod error;
pub mod exitprob;
pub mod expected;
pub mod imagesum;
pub mod kernels1d;
pub mod montecarlo;
pub mod numeric;
pub mod rootsys;
pub mod validation;

pub use error::{Error, Result};
