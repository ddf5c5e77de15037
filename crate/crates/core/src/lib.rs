//! Entity-graph story tracking over mixed news and tweet streams.

pub mod baselines;
pub mod corpus;
pub mod entitylink;
pub mod error;
pub mod eval;
pub mod features;
pub mod relevance;
pub mod storygraph;
pub mod text;
pub mod tracker;

pub use error::{Error, Result};
