//! Pseudo-spectral simulator and verification workbench for the 1-D
//! infinite-depth gravity water-wave system
//!
//! ```text
//! ∂_t h = G(h)ψ
//! ∂_t ψ = −h − ½|∂_xψ|² + (G(h)ψ + ∂_x h ∂_xψ)² / (2(1 + |∂_x h|²))
//! ```
//!
//! on a centered periodic box standing in for the real line.

pub mod spectral_core;
pub mod dirichlet_neumann;
pub mod elliptic_oracle;
pub mod evolution;
pub mod transforms;
pub mod diagnostics;
pub mod suite;
pub mod cli;
