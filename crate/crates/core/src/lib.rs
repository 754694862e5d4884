//! Numerical kernels for basic hypergeometric series, Wall-function Haar
//! weights, closed-form spectral decompositions of doubly infinite Jacobi
//! matrices, Askey-Wilson type measures with infinite discrete support, and a
//! verification harness for the summation identities tying them together.
//!
//! Layout:
//! - [`num`]: `f64` / double-double scalars and complex arithmetic
//! - [`qseries`]: q-shifted factorials, theta products, `r phi s` series,
//!   very-well-poised series, analytic continuation of `2phi1`
//! - [`wallhaar`]: Wall functions, the star product of matrix-element
//!   functionals and the invariant weight built from them
//! - [`algebra`]: banded matrix realisations of the quantised algebra
//!   generators and residual checks of their relations
//! - [`spectral`]: eigenpackets, squared-position matrix elements, shift
//!   operators and trace formulas for the three- and five-term operators
//! - [`measures`]: Askey-Wilson measure and its extensions with infinite
//!   discrete parts, Jackson integrals, weighted inner products
//! - [`transforms`]: the second-order q-difference operator on the line,
//!   its Green kernel and spectral theorem, and the spherical transform
//!   with inversion
//! - [`identities`]: catalog of summation identities verified by
//!   independent evaluation of both sides

pub mod algebra;
pub mod identities;
pub mod json;
pub mod linalg;
pub mod measures;
pub mod num;
pub mod qseries;
pub mod report;
pub mod spectral;
pub mod transforms;
pub mod wallhaar;

pub use num::{C64, CDd, Cplx, Dd, Real};
pub use report::IdentityReport;

/// Errors shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("guard violated: {0}")]
    Guard(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

pub type Result<T> = std::result::Result<T, Error>;
