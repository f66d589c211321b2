//! Multiple orthogonal polynomials, correlation kernels and Riemann-Hilbert
//! matrices for Hermitian random matrices with an external source,
//! `Z^{-1} exp(-Tr(V(M) - A M)) dM`.

pub mod checks;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod moments;
pub mod mops;
pub mod poly;
pub mod quadrature;
pub mod rhp;
pub mod validation;

pub use error::{Error, Result};
