//! Stationary bump solutions of the Amari neural field equation
//!
//! ```text
//! ∂t u(x,t) = -u(x,t) + ∫ ω(x - y) f(u(y,t) - h) dy
//! ```
//!
//! The crate builds the comparison profiles `u±` that sandwich a bump,
//! verifies the order-interval hypotheses that force a third fixed point of
//! the Hammerstein operator between them, computes that fixed point by
//! Newton's method, and certifies its instability through the spectral radius
//! of the Nyström-discretized linearization and a direct time integration.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod fixedpoint;
pub mod model;
pub mod pipeline;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
