//! Numerical core for the one-dimensional stochastic heat equation driven by
//! Gaussian noise that is white in time and fractional in space with Hurst
//! index `H` in `(1/4, 1/2)`.
//!
//! The crate is `no_std` with `alloc`. The `std` feature (default) adds
//! `std::error::Error` impls; `parallel` fans Monte Carlo batches out over
//! rayon.
//!
//! Layout follows the data flow of a run:
//!
//! * [`discretization`]: periodic space grid, time grid, fields, FFT plumbing.
//! * [`heat_kernel`]: `p_t`, its increments, the semigroup, kernel identities.
//! * [`rough_space`]: the Cameron–Martin space `H` and its mollifications.
//! * [`noise`]: seeded synthesis of the rough noise.
//! * [`norms`]: weighted norms, fractional seminorms, path metric.
//! * [`coefficients`]: diffusion coefficients and their hypothesis checks.
//! * [`skeleton`]: controls, the skeleton equation and its Picard solver.
//! * [`she`]: the stochastic and the controlled stochastic heat equation.
//! * [`rate`]: action minimization for terminal-value targets.
//! * [`experiments`]: LDP scans, importance sampling, convergence experiments.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod coefficients;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod heat_kernel;
pub mod noise;
pub mod norms;
pub mod optim;
pub mod quadrature;
pub mod rate;
pub mod rough_space;
pub mod she;
pub mod skeleton;
pub mod special;
pub mod stats;

pub use coefficients::SigmaSpec;
pub use discretization::{build_grid, Field, SpaceGrid, SpaceTimeGrid, TimeGrid};
pub use error::{Error, Result};
pub use rough_space::{HParams, MollifiedSpace};
pub use skeleton::{ControlPath, SkeletonSolution};
