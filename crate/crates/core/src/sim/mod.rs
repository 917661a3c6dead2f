//! Scenario configuration, closed-loop simulation, traces, metrics and
//! observer-gain tuning.

pub mod config;
pub mod engine;
pub mod metrics;
pub mod trace;
pub mod tune;

use crate::error::DriveError;
use thiserror::Error;

pub use config::SimConfig;
pub use engine::{run_simulation, Engine};
pub use metrics::{compute_metrics, Metrics};
pub use trace::TraceRecord;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("numerical abort: {0}")]
    Numeric(#[from] DriveError),

    #[error("no feasible observer gains within the budget; closest candidate {0:?}")]
    NoFeasible(Box<crate::smo::SmoGains>),
}

impl SimError {
    /// Process exit code: 1 for input problems, 2 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Numeric(_) => 2,
            _ => 1,
        }
    }
}
