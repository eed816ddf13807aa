//! Energy-based contrastive learning for graph structure refinement.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`]: dense row-major `f64` matrices and the handful of kernels
//!   everything else is built on.
//! - [`seeds`]: deterministic seed derivation so that every stochastic
//!   component owns an independent, reproducible stream.
//! - [`graph`]: graph representation, symmetric normalization, edge
//!   perturbation, stochastic block model generation, and split construction.
//! - [`embed`]: random-walk corpora, skip-gram structural embeddings, and the
//!   dual attribute matrix `[X | X_s]`.
//! - [`sampler`]: edge-seeded subgraph batches and two-view augmentation.
//! - [`diff`]: a tape-based reverse-mode autodiff engine with the op set the
//!   model needs, Adam, and finite-difference gradient checking.
//! - [`ecl`]: the energy model itself — encoder, projector, pair energies,
//!   discriminative / generative / regularization losses, and SGLD sampling.
//! - [`refine`]: full-graph embeddings, cosine edge probabilities, and
//!   relaxed-Bernoulli / hard binarization of the refined adjacency.
//! - [`classifier`]: a GCN node classifier trained on the refined graph.
//!
//! Everything here is `no_std + alloc` compatible; IO, configuration, and the
//! experiment pipeline live in the companion `ecl-gsr` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifier;
pub mod diff;
pub mod ecl;
pub mod embed;
pub mod graph;
pub mod math;
pub mod matrix;
pub mod refine;
pub mod sampler;
pub mod seeds;

pub use matrix::Matrix;
