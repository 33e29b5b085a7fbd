//! Distribution families, random streams and the patience scaling
//! framework.

mod arrival;
mod distribution;
mod func;
mod patience;
mod stream;

pub use arrival::ArrivalSpec;
pub use distribution::{normal_cdf, Distribution, RawDistribution};
pub use func::ScalarFn;
pub use patience::{PatienceLaw, PatienceSpec};
pub use stream::{Purpose, RandomStream, StreamId, StreamSet};

pub(crate) use func::bisect;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InputError {
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl InputError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        InputError::Invalid(msg.into())
    }
}
