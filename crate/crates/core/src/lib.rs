//! Linear transports along paths and first-order deviation equations for
//! pairs of point particles, with numerical convergence checks.
//!
//! Modules, bottom up: [`geometry`] (charts, tensors, connections),
//! [`transport`] (transport laws and matrices), [`kinematics`] (relative
//! quantities of two worldlines), [`deviation`] (residuals and order fits)
//! and [`scenarios`] (built-in families and configuration).

pub mod deviation;
pub mod error;
pub mod geometry;
pub mod jet;
pub mod kinematics;
pub mod ode;
pub mod quadrature;
pub mod scenarios;
pub mod transport;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
