//! Explainable news-credibility scoring.
//!
//! Three self-explaining models look at a news item from different angles:
//!
//! * [`mimic`]: attributes (subject, context, speaker, targeting, statement)
//!   through a neural teacher distilled into an 80-tree regression forest,
//!   explained by node importance and activated paths;
//! * [`attn`]: the statement's wording through multi-kernel convolutions and
//!   self-attention, explained by token and n-gram attribution;
//! * [`pert`]: eight linguistic features through gradient-boosted trees,
//!   explained by perturbation importance and signed contributions.
//!
//! [`ensemble`] combines their fake probabilities with accuracy-derived
//! weights and assembles the explanation bundle served to clients.

pub mod attn;
pub mod bundle;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod mimic;
pub mod nn;
pub mod pert;
pub mod pipeline;
pub mod text;
pub mod tree;

pub use error::{Error, Result};
