//! Feedforward ReLU networks with bilinear pooling layers, built so that their
//! support is controlled bit-exactly: the constructed nets evaluate to exact
//! floating-point zero outside a certified box while matching a target inside.
//!
//! The crate provides the network representation and evaluator, exact mask
//! builders, a support-adjustment transform with machine-checkable
//! certificates, tensor-grid tent interpolation of Lipschitz targets,
//! quadrature for L1 / sup / locally-integrable metrics, geometric
//! instrumentation (cubic annuli, metric capacity, Lipschitz estimation), and
//! an analytic-activation baseline showing that sigmoid/tanh/polynomial fits
//! cannot reproduce exact support.

pub mod activation;
pub mod adjust;
pub mod compose;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod hexfloat;
pub mod interp;
pub mod linalg;
pub mod mask;
pub mod network;
pub mod pipeline;
pub mod quad;
pub mod serialize;
pub mod targets;

pub use error::{Error, Result};
pub use network::{ArchitectureStats, Layer, Network};
