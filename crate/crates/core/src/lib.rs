//! Prover/corrector orchestration for Lean4 whole-proof generation.
//!
//! A prover model writes complete proofs, the Lean checker judges them, and
//! a corrector model repairs failures from the checker's error messages over
//! a fixed number of rounds. Runs are fully logged so that accuracy tables
//! and training datasets can be rebuilt from the log alone.

pub mod cli;
pub mod dataset;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod orchestrator;
pub mod parse;
pub mod prompt;
pub mod verifier;
