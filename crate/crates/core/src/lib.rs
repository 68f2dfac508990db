//! Energy allocation between uplink pilots and data in multicell massive MIMO.
//!
//! The crate evaluates the closed-form MRC achievable rate with MMSE channel
//! estimates under pilot contamination, splits a per-coherence-interval
//! energy budget optimally between training and payload (the optimal
//! training length is always the number of terminals, which reduces the
//! problem to a concave search over the data power), and checks the closed
//! form against a link-level Monte Carlo simulation.
//!
//! Modules, bottom-up:
//! - [`geometry`]: hexagonal layout, terminal drops, large-scale fading.
//! - [`spectral`]: rate coefficients, per-terminal rate, sum spectral
//!   efficiency, low-SNR asymptotics, bit energy.
//! - [`optimizer`]: the reduced one-dimensional program and its oracles.
//! - [`montecarlo`]: channel draws, MMSE estimation, MRC detection,
//!   empirical ergodic rates.
//! - [`harness`]: figure reproductions written as CSV.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod montecarlo;
pub mod optimizer;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use geometry::{FadingSnapshot, Point, SystemConfig, TerminalPlacement};
pub use montecarlo::MonteCarloEstimate;
pub use optimizer::AllocationSolution;
pub use spectral::{EnergyBudget, PowerAllocation, RateCoefficients, TerminalCoefficients};
