//! Exact infinite-width kernels of scaled residual ReLU networks.
//!
//! A network with blocks `y_l = y_{l-1} + λ_l (W_l φ(y_{l-1}) + B_l)` converges, as its
//! width grows, to a Gaussian process whose covariance `Q_l` and neural tangent kernel
//! `Θ_l` obey closed recursions in depth. This crate evaluates those recursions and the
//! objects built on them:
//!
//! - [`dual`]: ReLU dual functions and the Taylor expansion of `f̂`.
//! - [`scaling`]: the block scalings `λ_l` and the square-sum stability test.
//! - [`kernels`]: discrete NNGP, correlation and NTK recursions.
//! - [`limits`]: the uniform-scaling ODE and the decreasing-scaling limit kernel.
//! - [`gram`]: datasets, Gram matrices, eigenspectra and zonal spectra.
//! - [`gp`]: posterior-mean classification with validation-tuned noise.
//! - [`pacbayes`]: Bernoulli KL, its inverse and the GP posterior KL.
//! - [`grad_moments`]: exact gradient second-moment profiles.
//! - [`mc`]: finite-width Monte Carlo sampling of random networks.

// NaN must fail these guards, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dual;
pub mod error;
pub mod gp;
pub mod grad_moments;
pub mod gram;
pub mod kernels;
pub mod limits;
pub mod mc;
pub mod pacbayes;
pub mod scaling;

pub use error::{Error, Result};
pub use kernels::{KernelHyper, PairState};
pub use scaling::ScalingScheme;
