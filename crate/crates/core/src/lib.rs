//! Core machinery for studying graph transformers through the lens of
//! Weisfeiler-Leman refinement.
//!
//! * [`graph`]: graphs, constructive families (CSL, stitched Erdos-Renyi),
//!   the edge-level token transform, brute-force isomorphism and
//!   enumeration of small graphs.
//! * [`linalg`]: exact rational random-walk algebra and a Jacobi
//!   eigensolver for the normalized Laplacian.
//! * [`wl`]: 1-WL and generalized-distance WL refinement.
//! * [`pe`]: raw RWSE, RRWP, LPE and SPE features.
//! * [`tasks`]: synthetic algorithmic-reasoning datasets with classical
//!   oracles, metrics and k-NN few-shot classification.

pub mod error;
pub mod graph;
pub mod linalg;
pub mod pe;
pub mod tasks;
pub mod wl;

pub use error::{Error, Result};
pub use graph::Graph;
pub use linalg::Rational;
