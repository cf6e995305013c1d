//! Pass-ordering search and evaluation primitives.
//!
//! Everything in this crate is pure computation over IR text: normalization
//! and instruction counting, a hermetic mini-IR compiler with six passes,
//! the random-search autotuner, prompt/answer dataset rendering, baseline
//! predictors and the evaluation metrics. Process spawning, files and the
//! command line live in the `passorder` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autotune;
pub mod backend;
pub mod dataset;
pub mod eval;
pub mod ir;
pub mod mini;
pub mod predict;
mod seed;

pub use autotune::{CorpusStats, SearchBudget, SearchConfig, TuneError, TuneResult};
pub use backend::{
    Backend, BackendError, CompileOutcome, ErrorCategory, ErrorPatternTable, PassList,
    PassVocabulary, Verdict,
};
pub use ir::{IrFunction, NormalizedIr};
pub use mini::MiniBackend;
pub use seed::derive_seed;

/// The compiler's built-in size pipeline; every improvement is measured
/// against it.
pub const OZ: &str = "-Oz";
