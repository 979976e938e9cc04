//! Decentralized stochastic composite optimization by proximal averaged
//! stochastic approximation.
//!
//! `n` agents jointly minimize `(1/n) Σ_i F_i(x) + Ψ(x)` where each agent can
//! only sample stochastic gradients of its own smooth `F_i`, `Ψ` is convex with
//! a cheap proximal map, and agents exchange iterates over a gossip network.
//!
//! * [`topology`]: gossip matrices, plain and Chebyshev mixing.
//! * [`proximal`]: regularizers and their proximal maps.
//! * [`oracles`]: synthetic problem instances and gradient oracles.
//! * [`solvers`]: the round machines with and without gradient tracking.
//! * [`metrics`]: stationarity, consensus and merit measurements.
//! * [`harness`]: run configuration, single runs, and agent-count sweeps.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod proximal;
pub mod rng;
pub mod solvers;
pub mod topology;

pub use error::{Error, Result};
pub use linalg::AgentMatrix;
pub use metrics::{MetricsRecord, MetricsSink};
pub use oracles::{ProblemInstance, ProblemSpec};
pub use proximal::ProxOperator;
pub use rng::RngStream;
pub use solvers::{Algorithm, InitPoint, SolverConfig, SolverState, StepSchedule};
pub use topology::{MixingMatrix, TopologySpec};
