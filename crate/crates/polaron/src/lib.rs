//! Numerically exact simulation of small-polaron formation after an
//! interaction quench in a one-dimensional lattice model with nonlocal
//! excitation-phonon coupling (Peierls plus breathing-mode terms).
//!
//! The crate exposes:
//! - device-to-model parameter mapping ([`model`]),
//! - a symmetry-adapted momentum-sector basis over permutation-symmetric
//!   phonon configurations ([`fock`]),
//! - sparse sector Hamiltonians ([`hamiltonian`]),
//! - Lanczos ground-state solvers with thick restarts ([`eigen`]),
//! - a Chebyshev time propagator ([`chebyshev`]),
//! - observables: phonon number, survival probability, squeezing
//!   quadratures, and entanglement entropy ([`observables`]),
//! - a dense brute-force reference implementation ([`oracle`]),
//! - run orchestration and output serialization ([`run`]).

pub mod bessel;
pub mod chebyshev;
pub mod eigen;
pub mod fock;
pub mod hamiltonian;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod run;
