//! Token-based architecture transformer.
//!
//! Neural architectures are handled as computational graphs, turned into
//! token matrices with Laplacian eigenvector node identifiers, and fed to a
//! transformer encoder that regresses their performance. Predictors are
//! scored by Kendall's tau-b rank correlation against measured performance.

pub mod graph;
pub mod linalg;
pub mod spectral;
pub mod tokenizer;
pub mod nnet;
pub mod harness;
pub mod config;
pub mod cli;
