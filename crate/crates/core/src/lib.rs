//! Second-order differentiation by complex-step perturbation of a reverse-mode
//! tape, and a muscle-driven soft-body locomotion controller built on it.

pub mod contact;
pub mod elasticity;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod meshgen;
pub mod muscle;
pub mod opt;
pub mod oracle;
pub mod real;
pub mod scenario;
pub mod scalar;
pub mod sim;
pub mod tape;

pub use error::{Error, Result};
pub use real::Real;
pub use scalar::{CScalar, PerturbStep};
pub use tape::{Tape, Var};
