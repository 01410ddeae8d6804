//! Distributed sparse system identification by variable-metric adaptive
//! projected subgradient diffusion.
//!
//! Each node keeps a sliding window of hyperslabs built from its noisy
//! measurements, fuses its neighbours' estimates with a combination matrix,
//! takes an extrapolated parallel projection step in a diagonal variable
//! metric and finally projects onto a weighted ℓ1 ball.

pub mod diagnostics;
mod error;
pub mod harness;
pub mod learner;
pub mod metric;
pub mod network;
pub mod projections;

pub use error::{Error, Result};
pub use learner::{
    ChangeRule, DiffusionLearner, ExtrapolationNorm, KoptStrategy, LearnerConfig, Measurement, MetricMode, NodeParams,
    NodeState, SharedParams,
};
pub use metric::{DiagonalMetric, SparsityWeights};
pub use network::{CombinationMatrix, CombinationRule, NetworkState, Topology};
pub use projections::{
    hyperslab_distance, hyperslab_project, l1ball_project, l1ball_project_vm, Hyperslab, WeightedL1Ball,
};
