//! Sparse single- and multi-index regression with pruned two-layer ReLU networks.
//!
//! Modules, in pipeline order:
//!
//! - [`hermite`]: Hermite polynomials, ReLU coefficients, link functions.
//! - [`model`]: sparse index models, sampling and augmentation.
//! - [`network`]: the symmetric two-layer network and its gradients.
//! - [`oracle`]: exact and Monte-Carlo population gradients, fixtures.
//! - [`pruning`]: support recovery from shifted-basis gradient probes.
//! - [`training`]: one large first-layer step plus a ridge second layer.
//! - [`csq`]: sparse near-orthogonal frame packings and the query-accuracy bound.
//! - [`harness`]: sweeps, comparisons, CSV and SVG output.

pub mod csq;
pub mod error;
pub mod harness;
pub mod hermite;
pub mod model;
pub mod network;
pub mod numeric;
pub mod oracle;
pub mod pruning;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use hermite::LinkSpec;
pub use model::{Dataset, IndexModel};
pub use network::NetParams;
pub use pruning::{PruneConfig, SupportSet};
pub use training::{Mode, Predictor, TrainConfig};
