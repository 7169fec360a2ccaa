//! Fourier pseudospectral toolkit for the two-component Camassa-Holm system
//! in nonlocal form,
//!
//! ```text
//! u_t + ∂ₓΛ⁻²ϱ + u u_x = -∂ₓΛ⁻²(u² + ½u_x² + ½ϱ²)
//! ϱ_t + u_x + u ϱ_x + ϱ u_x = 0
//! ```
//!
//! on a periodic truncation `[-L, L)` of the line, together with Sobolev and
//! Besov norms, the high/low frequency data families used to probe
//! non-uniform dependence on initial data, linear approximate solutions and
//! a rate-fitting experiment harness.

pub mod approximants;
pub mod construction;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod field;
pub mod fit;
pub mod grid;
pub mod littlewood_paley;
pub mod multiplier;
pub mod norms;

pub use error::{Error, Result};
pub use field::SpectralField;
pub use grid::{make_grid, PeriodicGrid};
pub use littlewood_paley::{make_partition, BesovIndex, Integrability, LittlewoodPaleyPartition, Summability};
pub use multiplier::{apply_multiplier, MultiplierSymbol};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
