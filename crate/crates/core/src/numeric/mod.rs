//! Floating-point building blocks: quadrature, elliptic integrals,
//! second-order jets, contouring and least squares.

pub mod contour;
pub mod elliptic;
pub mod jet;
pub mod optimize;
pub mod quad;

pub use elliptic::{agm, elliptic_k, elliptic_k_complement};
pub use jet::{Jet, Scalar};
pub use quad::{gauss_kronrod, integrate_real_line, QuadResult, QuadratureSpec};
