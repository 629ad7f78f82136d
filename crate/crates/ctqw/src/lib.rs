//! Continuous-time quantum walks on one-dimensional regular networks (ring
//! lattices where every node couples to its `2l` nearest neighbours) under
//! continuous position measurement, which dephases the walker at a rate `Γ`.
//!
//! The crate is organised around four stages of the analysis:
//!
//! - [`network`] builds the circulant adjacency, Laplacian, and Hamiltonian
//!   matrices for a given `(N, l)` ring.
//! - [`spectral`] diagonalises the coherent part in momentum space: Bloch
//!   energies, the momentum-pair eigenvalues of the density-matrix generator,
//!   the first-order dephasing corrections, and the degeneracy bookkeeping
//!   those corrections rest on.
//! - [`evolve`] propagates states: spectral formulas for the closed walk and
//!   the classical diffusion it generalises, an adaptive Runge–Kutta
//!   integrator for the dephasing master equation, and the first-order
//!   closed-form solution valid for small `ΓN`.
//! - [`mixing`] measures convergence to uniform: total-variation distance,
//!   instantaneous and time-averaged mixing times, and the analytic bounds
//!   they are compared against.
//!
//! With the default `parallel` feature the batch-style inner loops (degeneracy
//! scans, trajectory sampling, master-equation rows at large `N`) run on
//! rayon; disabling the feature falls back to identical sequential loops, so
//! results are bit-for-bit the same either way.

pub mod evolve;
pub mod linalg;
pub mod mixing;
pub mod network;
mod par;
pub mod spectral;

pub use evolve::{DensityMatrix, DenseDistribution, Source, Trajectory};
pub use network::{HermitianMatrix, NetworkSpec, Preset};
pub use spectral::LiouvilleSpectrum;
