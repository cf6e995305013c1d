//! Files, processes and the command line around `passorder_core`: the LLVM
//! `opt` driver, JSON Lines formats, run manifests, external predictors,
//! `.ll` ingestion and report writers.

pub mod cli;
pub mod config;
pub mod external;
pub mod ingest;
pub mod io;
pub mod llvm;
pub mod manifest;
pub mod parallel;
pub mod report;
