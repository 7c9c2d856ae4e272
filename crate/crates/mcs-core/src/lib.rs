//! Spectral numerics for the chiral limit of twisted multilayer graphene.
//!
//! The model couples `n` twisted graphene layers through a periodic moiré
//! potential. In the chiral limit its Hamiltonian is off-diagonal,
//!
//! ```text
//!         ⎛ 0      D(α)* ⎞
//!  H(α) = ⎜              ⎟ ,
//!         ⎝ D(α)   0     ⎠
//! ```
//!
//! where `D(α)` is a block-tridiagonal operator: a twisted-bilayer block
//! `[[2D_z̄, αU(z)], [αU(-z), 2D_z̄]]` in the first layer slot, free Dirac
//! blocks elsewhere, and constant tunneling couplings between consecutive
//! layers. The coupling `α` is inversely proportional to the twist angle.
//!
//! This crate computes, at finite plane-wave truncation:
//!
//! * the set of *magic* couplings where a flat band appears (Bloch-momentum
//!   independent spectrum), as eigenvalues of a compact operator;
//! * the complementary discrete set where the central band crossing drops
//!   its order by one and splits into Dirac cones;
//! * Bloch band structures and the protected zero modes;
//! * Jordan chains of the non-normal operator `D(α)` at the central crossing
//!   and the effective (Schur-complement) 2×2 Hamiltonians whose entries
//!   give the cone/band-touching coefficients.
//!
//! Modules build on each other in order: [`lattice`] (momentum bookkeeping
//! and threefold symmetry), [`operators`] (matrix assembly), [`spectra`]
//! (singular couplings, spectral projectors), [`bands`] (band tables and
//! crossing classification), [`jordan`] (chains and effective Hamiltonians).

pub mod bands;
pub mod error;
pub mod jordan;
pub mod lattice;
pub mod linalg;
pub mod operators;
pub mod spectra;

pub use error::{McsError, Result};
