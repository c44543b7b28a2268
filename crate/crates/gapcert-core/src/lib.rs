//! Generalization-gap certificates for Markov-process-based training.
//!
//! The crate is organized around the pipeline it certifies:
//!
//! - [`divergence`]: exact KL / Rényi-infinity divergences and Gibbs
//!   distributions on finite state spaces.
//! - [`markov`]: finite-chain evolution, stationary solving, divergence
//!   traces, and numerical checks of the generalized second law and the
//!   divergence-budget corollary.
//! - [`bounds`]: PAC-Bayes gap-bound calculators, including binary-kl
//!   inversion for fast rates.
//! - [`langevin`]: Euler-Maruyama simulation of (reflected / regularized)
//!   Langevin dynamics with state-dependent diffusion.
//! - [`stationary`]: analytic stationary potentials and densities for the
//!   supported noise scales, plus partition-function quadrature.
//! - [`linreg`]: ridge regression under Langevin training with closed-form
//!   expected losses and Monte-Carlo / SDE oracles.
//! - [`mlp`] and [`sgld`]: a small MLP, the parity task, SGLD training, and
//!   end-to-end certification.
//! - [`constructions`]: executable counterexample and shattering-network
//!   constructions.
//! - [`cli`]: the configuration, manifest, and artifact layer behind the
//!   `gapcert` binary.

pub mod bounds;
pub mod cli;
pub mod constructions;
pub mod divergence;
pub mod error;
pub mod langevin;
pub mod linreg;
pub mod markov;
pub mod mlp;
pub mod sgld;
pub mod stationary;

pub use error::{Error, Result};
