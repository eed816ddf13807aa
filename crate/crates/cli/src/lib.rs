//! Experiment pipeline and file formats for energy-based contrastive graph
//! structure refinement.
//!
//! The numerical substance — autodiff, the energy model, Langevin sampling,
//! edge refinement, the GCN classifier — lives in `ecl-gsr-core`. This crate
//! adds everything an experiment needs around it:
//!
//! - [`config`]: JSON-loadable hyperparameter configuration with defaults;
//! - [`dataset`]: the on-disk dataset format (`edges.tsv`, `features.csv`,
//!   `labels.tsv`, `split.json`), embedding caches, and result exports;
//! - [`checkpoint`]: bit-exact parameter serialization;
//! - [`pipeline`]: the joint training loop, evaluation, a paired plain-GCN
//!   control, and the robustness / Langevin-depth / label-ratio sweeps;
//! - [`heatmap`]: class-grouped adjacency visualization as PGM + CSV.
//!
//! The `ecl-gsr` binary exposes all of it as subcommands.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod heatmap;
pub mod pipeline;
