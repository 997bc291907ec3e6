//! Robust multiple rotation averaging on camera view-graphs.
//!
//! Estimates absolute camera orientations from noisy pairwise relative
//! rotations. The toolkit bundles:
//!
//! - [`so3`]: unit-quaternion arithmetic and the geodesic, chordal and
//!   quaternion distance measures;
//! - [`graph`]: the view-graph model, its text format, shortest-path-tree
//!   initialization, and per-edge discrepancy features;
//! - [`synth`]: a seeded synthetic benchmark generator with outlier labels;
//! - [`autodiff`] / [`nn`]: a minimal reverse-mode engine and the small
//!   dense nets it trains;
//! - [`mpnn`] / [`train`]: the attention-weighted message-passing solver and
//!   its training loop;
//! - [`baselines`]: Weiszfeld l1 averaging and two-stage IRLS;
//! - [`eval`]: gauge alignment, the metric suite, and runtime helpers.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod mpnn;
pub mod nn;
pub mod so3;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use graph::ViewGraph;
pub use mpnn::{infer, MraModel};
pub use so3::UnitQuaternion;
