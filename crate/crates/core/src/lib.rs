//! Pseudospectral workbench for a coupled Dirac / Klein-Gordon / classical
//! nucleus system on a periodic box.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] - centered Fourier grids, unitary transforms, spectral
//!   multipliers and field serialization.
//! * [`dirac`] - Dirac matrices, the free propagator `exp(it(alpha.xi + beta m))`
//!   applied as an exact spectral multiplier, and the covariant power
//!   nonlinearity.
//! * [`bessel`] - the modified Bessel function `K1` used by the closed-form
//!   field kernels.
//! * [`kleingordon`] - charge densities, nucleus paths, Lorentz maps, Yukawa
//!   kernels, the free Klein-Gordon flow and the moving-source field split
//!   `W = W1 + W2 + W3`.
//! * [`norms`] - Sobolev / weighted / space-time norms, the virial multiplier
//!   and related diagnostics.
//! * [`solver`] - Duhamel fixed-point sweeps for the spinor, the
//!   Hellmann-Feynman force, the nucleus Picard map, and the two coupled-system
//!   drivers with their hypothesis gates.

pub mod bessel;
pub mod dirac;
pub mod grid;
pub mod kleingordon;
pub mod norms;
pub mod solver;

pub use grid::{Grid3, Repr, ScalarField, SpinorField};
