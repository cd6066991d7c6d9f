//! Blocking for entity resolution with approximate nearest neighbours.
//!
//! Records are reduced to a single key string, shingled into character
//! n-gram count vectors (or supplied as dense embeddings), searched with an
//! exact, LSH or HNSW backend, and grouped into blocks as the connected
//! components of the resulting neighbour graph. Block quality is scored
//! pairwise against ground truth.

pub mod ann;
pub mod blocker;
pub mod blocks;
pub mod cli;
pub mod corpus;
pub mod encode;
pub mod error;
pub mod eval;
pub mod synth;

pub use ann::{AnnControls, AnnIndex, Algorithm, Metric, Neighbor};
pub use blocker::{BlockInput, Blocker, BlockerConfig};
pub use blocks::{BlockingResult, Mode};
pub use corpus::{Corpus, Record, TextControls};
pub use encode::{DenseMatrix, ShingleMatrix};
pub use error::{Error, Result};
pub use eval::{ConfusionCounts, EvalReport, MetricReport, TrueBlocks};
