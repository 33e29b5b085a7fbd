//! Event-driven simulation of the `n`-th `G/GI/N_n+GI` system.

mod config;
mod engine;
mod record;
mod wait;

pub use config::{InitialCount, InitialService, QueueModel, SystemConfig, XiSpec};
pub use engine::{simulate, simulate_config};
pub use record::{CustomerRecord, Event, EventKind, Outcome, RecordMeta, SimRecord};
pub use wait::{offered_waits, virtual_wait, virtual_waits, OfferedWait, Wait};

use crate::inputs::InputError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("event queue corrupted at t={time} for customer {customer}: {detail}\n{dump}")]
    Corrupt {
        time: f64,
        customer: i64,
        detail: String,
        dump: String,
    },
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
}

impl SimError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
}
