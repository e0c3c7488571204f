//! Spectral laboratory for multi-speed solitary waves of the coupled cubic
//! nonlinear Schrödinger system
//!
//! ```text
//! i∂ₜu₁ + Δu₁ + μ₁|u₁|²u₁ + β|u₂|²u₁ = 0
//! i∂ₜu₂ + Δu₂ + μ₂|u₂|²u₂ + β|u₁|²u₂ = 0
//! ```
//!
//! on a periodic box. The crate builds the boosted solitary waves, integrates
//! the system backward from exact two-soliton final data, and monitors every
//! quantity that controls the distance between the resulting solution and the
//! pair of solitary waves.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod linops;
pub mod profiles;
pub mod solitons;

pub use error::{Error, Result};
pub use field::{pair_norm, ComplexField, FieldPair, PairNorm};
pub use grid::{Grid, C64};
