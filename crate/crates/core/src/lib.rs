//! Discrete-event simulation of the Tangle, a DAG ledger in which each new
//! transaction approves two earlier ones chosen by a biased random walk, plus
//! a harness that measures the cost of the default and greedy attachment
//! strategies and locates the equilibrium fraction of greedy transactions.

pub mod config;
pub mod driver;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod metrics;
pub mod sim;
pub mod strategy;
pub mod tangle;
pub mod walk;

pub use error::{Error, Result};
pub use sim::{run, SimConfig, SimOutput, TxRecord};
pub use strategy::{StrategyLabel, TipPair};
pub use tangle::{snapshot, LogicalId, Tangle, VertexId, View, ViewTracker};
pub use walk::{ExitDistribution, WalkParams};
