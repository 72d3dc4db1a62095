//! Hybrid high-order discretisation of the Poisson model problem on triangles
//! with guaranteed upper error bounds and an adaptive refinement loop.
//!
//! The discrete problem seeks `u_h` in `P_k(T) x P_k(F)` with vanishing
//! boundary facet values. Three a posteriori bounds for the energy error of the
//! potential reconstruction `R u_h` are provided: a residual-type estimator, an
//! estimator built from the averaging of `R u_h` and the stabilisation, and an
//! estimator based on patchwise flux equilibration in Raviart-Thomas spaces.

pub mod afem;
pub mod basis;
pub mod bench;
pub mod cli;
pub mod equilibration;
pub mod error;
pub mod estimators;
pub mod hho;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod rt;
pub mod source;

pub use error::{Error, Result};
pub use mesh::{Domain, Mesh};
