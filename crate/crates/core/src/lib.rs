//! Causal decomposition of legal-case embeddings for case matching.
//!
//! A case embedding is regressed on the embeddings of its cited law
//! articles (used as instruments), splitting it into a fitted,
//! law-related part and a residual, law-unrelated part. The two parts
//! are recombined with a learned weight and fed to a pluggable matching
//! head. Training alternates between the instrument-regression stage and
//! the matching stage over disjoint parameter sets.
//!
//! Modules:
//! - [`numcore`]: dense matrices, small MLPs, a recording tape for
//!   reverse-mode gradients, Adam, gradient checking, checkpoints.
//! - [`data`]: embedding stores, labelled case pairs, line-record file
//!   formats, and a seeded synthetic corpus generator.
//! - [`reconstruct`]: instrument attention, treatment fitting, residual
//!   extraction, and weighted recombination per case side.
//! - [`head`]: matching predictors over reconstructed embedding pairs,
//!   including a paragraph-pair mode.
//! - [`trainer`]: the two-stage alternating optimizer with strict
//!   parameter partitioning.
//! - [`discover`]: bipartite article/sentence-cluster graphs for
//!   inferring citations of uncited cases.
//! - [`evalkit`]: matching metrics, distance correlation, distance
//!   reports, and the experiment sweep driver.
//!
//! The `parallel` feature (on by default) runs data-parallel inner
//! loops on rayon; disabling it yields a sequential build with
//! identical results.

pub mod data;
pub mod discover;
pub mod error;
pub mod evalkit;
pub mod head;
pub mod numcore;
pub mod par;
pub mod reconstruct;
pub mod trainer;

pub use error::{Error, Result};
