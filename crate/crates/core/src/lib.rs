//! Runge-Kutta method design over the variety of order conditions.
//!
//! * [`trees`]: rooted trees and their invariants.
//! * [`tableau`]: Butcher tableaux and flat parameter vectors.
//! * [`conditions`]: order-condition residuals, metrics and fitness.
//! * [`es`]: covariance-adapting evolution strategy.
//! * [`solver`]: staged search over a chain of varieties, specialized to
//!   Runge-Kutta order conditions.
//! * [`ode`]: empirical order estimation by integrating test problems.
//! * [`cli`]: the `rkdesign` command-line front end.

pub mod cli;
pub mod conditions;
pub mod es;
pub mod ode;
pub mod error;
pub mod solver;
pub mod tableau;
pub mod trees;

pub use error::{Error, Result};
