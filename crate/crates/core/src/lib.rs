//! Homogeneous Hörmander vector fields: exact symbolic machinery (brackets,
//! volume polynomials, Carnot-group lifting) and a numerical engine for the
//! fundamental solution of the Grushin operator.

pub mod cli;
pub mod distance;
pub mod dsl;
pub mod error;
pub mod estimates;
pub mod field;
pub mod gamma;
pub mod lie;
pub mod lift;
pub mod linalg;
pub mod numeric;
pub mod poly;
pub mod potential;
pub mod volume;

pub use dsl::{parse_system, SystemSpec};
pub use error::{Error, Result};
pub use field::VectorField;
pub use poly::{Polynomial, Rational};
