//! Simulator for compressed decentralized saddle-point optimization.
//!
//! Nodes of an undirected graph each own a convex cost and are coupled through
//! pairwise constraints. They exchange error-compensated compressed updates
//! with their neighbors and run primal descent / dual ascent on a regularized
//! Lagrangian, using either sampled gradients or two-point function queries.
//!
//! * [`topology`]: graphs and the dual-slot index
//! * [`compression`]: contraction operators and bit accounting
//! * [`problem`]: the QCQP benchmark and its reference solution
//! * [`engine`]: the synchronous primal-dual simulation
//! * [`metrics`]: per-run records, rate fits and CSV output
//! * [`config`]: flat key/value experiment configuration
//! * [`suite`]: batch execution of experiment grids

pub mod compression;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod problem;
pub mod suite;
pub mod topology;

pub use compression::CompressorSpec;
pub use engine::{run, Feedback, HyperParams, RunOptions, StepSize};
pub use error::{Error, Result};
pub use metrics::RunRecord;
pub use problem::{QcqpInstance, QcqpParams, ReferenceSolution};
pub use topology::{ConstraintIndex, Graph};
