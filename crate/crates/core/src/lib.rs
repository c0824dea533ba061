//! Exact quenched computations for one-dimensional random walks in an
//! i.i.d. random environment: bridge probabilities, confinement and
//! hitting-time laws by log-domain dynamic programming, exact bridge
//! sampling through the Doob transform, the change of measure between
//! non-nestling and marginally nestling environments, and the reference
//! asymptotics used to check finite-`n` scaling.

pub mod asymptotics;
pub mod bridge_sampler;
pub mod com;
pub mod env_model;
pub mod error;
pub mod exact_kernel;
pub mod format;
pub mod par;

pub use env_model::{Environment, RegimeClass, RegimeTag, SiteDistribution};
pub use error::{Error, Result};
pub use par::Execution;
