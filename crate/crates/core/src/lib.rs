//! Batch alignment engine for temporal knowledge graphs.
//!
//! The pipeline encodes entities from a source and a target graph into
//! multi-view embeddings (name, multi-granular temporal, structural), matches
//! them with CSLS similarity, expands candidates through time/relation masked
//! projections organized as a multi-scale hypergraph with vector retrieval,
//! and fuses per-scale selections from a reasoner into a final alignment that
//! feeds back into the encoders over several rounds.

pub mod cli;
pub mod config;
pub mod csls;
pub mod error;
pub mod fuse;
pub mod fusion;
pub mod kg;
pub mod metrics;
pub mod names;
pub mod pipeline;
pub mod projection;
pub mod reasoner;
pub mod retrieval;
pub mod skipgram;
pub mod synth;
pub mod temporal;
pub mod trainer;
pub mod walks;

pub use error::{Result, TkgaError};
