//! Learning dynamics of backpropagation (BP) and predictive coding (PC) in
//! deep linear networks.
//!
//! - [`network`]: weight stacks, forward maps, partial products, initialisers
//!   and condition-number control
//! - [`rules`]: BP and PC updates, the analytic PC equilibrium, predicted
//!   prediction changes, adaptive learning rates and decorrelation factors
//! - [`resnet`]: the same dynamics for linear residual networks
//! - [`nonlinear`]: ReLU/sigmoid MLPs with iterative PC inference
//! - [`metrics`]: target alignment, condition numbers, weight distance
//! - [`data`], [`mnist`]: synthetic regression tasks, batch streams, IDX files
//! - [`checkpoint`]: JSON weight checkpoints

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod mnist;
pub mod network;
pub mod nonlinear;
pub mod resnet;
pub mod rules;
pub mod seeding;

pub use data::{Batch, BatchStream, SyntheticTask};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use network::{BaseInit, InitKind, InitScheme, NetworkSpec, WeightStack};
pub use rules::{
    EquilibriumState, InversePolicy, Rescaling, RescalingConfig, Rule, UpdateReport,
};
