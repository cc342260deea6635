//! Procedural benchmark for in-context learning of regular languages.
//!
//! Random 3-state DFAs over `{a, b, c}` define two tasks: sequence completion
//! and transducer next-bit prediction. This crate samples the DFAs and task
//! sets, implements the non-LLM baselines (including brute-force oracles over
//! the whole 3-state DFA space), renders and parses model prompts, talks to
//! text-completion endpoints, and scores and aggregates the results.

pub mod answer;
pub mod baselines;
pub mod dfa;
pub mod error;
pub mod evaluation;
pub mod languages;
pub mod model_client;
pub mod persistence;
pub mod prompts;
pub mod rng;
pub mod taskgen;

pub use dfa::{enumerate_all, sample_dfa, Dfa, DfaSpace, OutputBit, Symbol, TransducerTrace, Word};
pub use error::*;
pub use rng::SeedTree;
