//! Distributed Newton-like methods for consensus optimization over networks.
//!
//! Networked nodes cooperatively minimize a sum of locally-known strongly
//! convex costs, `f(y) = sum_i f_i(y)`. This crate implements, at desk scale:
//!
//! * the penalty reformulation `Phi(x) = alpha * sum_i f_i(x_i) + 1/2 x'(I-Z)x`
//!   and its block-sparse Hessian splitting ([`penalty`]),
//! * the DGD baseline, the DQN family (DQN-0/1/2, diagonal Hessian-inverse
//!   correction) and the NN-0/1/2 baselines ([`dqn`]),
//! * the PMM-DQN-0/1/2 extensions which converge to the exact consensus
//!   solution ([`pmm`]),
//! * synthetic problem and network generators ([`problems`], [`graph`]),
//! * reference oracles, convergence traces and an experiment harness
//!   with a CLI ([`harness`]).
//!
//! Solver state is one block vector per network (one `p`-vector per node);
//! no `np x np` matrix is ever materialized outside of test oracles.

pub mod dqn;
pub mod error;
pub mod graph;
pub mod harness;
pub mod penalty;
pub mod pmm;
pub mod problems;
pub mod trace;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
