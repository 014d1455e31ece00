//! Evolutionary model merging for tensor checkpoints.
//!
//! The crate wires together four layers:
//!
//! 1. [`checkpoint`] — safetensors-format tensor I/O with strict validation.
//! 2. [`merge`] — parameter-space merge strategies (linear, slerp, task
//!    arithmetic, TIES, DARE) driven by flat genotype vectors.
//! 3. [`evo`] — evolutionary optimizers (GA, differential evolution,
//!    NSGA-II) over bounded real genotypes.
//! 4. [`eval`] / [`irt`] — fitness evaluation with subsampled benchmarks,
//!    answer graders, and IRT-based accuracy estimators that squeeze more
//!    signal out of few evaluated items.
//!
//! [`search`] orchestrates a full run: decode genotype → merge → evaluate →
//! estimate → log, with deterministic seeding throughout. [`config`] and
//! the `evomerge` binary expose the same pipeline via YAML configs.
//!
//! See the crate examples for runnable walkthroughs of each layer.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod evo;
pub mod fixture;
pub mod irt;
pub mod merge;
pub mod rng;
pub mod search;
pub mod wizard;

pub use checkpoint::{read_checkpoint, validate_compat, write_checkpoint, Dtype, Tensor, TensorMap};
