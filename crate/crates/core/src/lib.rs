//! Data-driven adaptive shape control for continuum robots: shape features, a
//! piecewise-constant-curvature plant, an RBF Jacobian learner, a saturated
//! pseudo-inverse controller, Lyapunov diagnostics and a closed-loop harness.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod diagnostics;
pub mod error;
pub mod features;
pub mod harness;
pub mod learner;
pub mod plant;
pub mod sat;

pub use error::{Error, Result};
