//! Monte Carlo Feynman-Kac engine for Schrodinger semigroups `e^{-tH_V}`,
//! `H_V = nabla^dagger nabla / 2 + V`, acting on sections of Hermitian vector
//! bundles over model Riemannian manifolds, together with the verification
//! machinery the estimates rest on: Kato-class diagnostics, exponential
//! moments, Gaussian heat-kernel bound fits, Davies-Gaffney and finite
//! propagation speed checks on grid oracles, and mollifier graph-norm tables.

pub mod bundle;
pub mod error;
pub mod feynman_kac;
pub mod geometry;
pub mod holonomy;
pub mod kato;
pub mod linalg;
pub mod oracle;
pub mod paths;

pub use error::{Error, Result};
