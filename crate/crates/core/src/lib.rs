//! Diffeomorphic image registration with PDE-constrained LDDMM posed in the
//! space of band-limited vector fields.
//!
//! Velocity fields are parameterized by truncated Fourier coefficients
//! ([`spectral`]). Maps and adjoints are transported in that space
//! ([`transport`]); two objective variants ([`objective`]) provide energies,
//! gradients and Newton / Gauss-Newton Hessian-vector products that drive an
//! inexact Newton-Krylov loop ([`optimizer`]). The [`harness`] module holds
//! metrics, synthetic problems, volume and config I/O and the registration
//! driver used by the command-line tool.

pub mod error;
pub mod grid;
pub mod harness;
pub mod objective;
pub mod optimizer;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{GridMap, Interpolation, SpatialField};
pub use spectral::{BlDomain, BlField, RegularizerSymbol, Spectral};
pub use transport::{FlowMode, TimeFlow};
