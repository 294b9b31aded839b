//! Simulation of a charged particle coupled to a truncated set of transverse
//! field modes through a nonlocal Hamiltonian.
//!
//! * [`model`]: units, mode lattice, couplings and the Hamiltonian.
//! * [`dipole`]: position-independent coupling; memoryless particle motion.
//! * [`quadrupole`]: position-dependent coupling, integrated either with
//!   the modes as explicit variables or as a generalized Langevin equation
//!   with sine-kernel memory integrals and initial-condition forces.
//! * [`stochastic`]: seeded streams, initial amplitudes, colored noise.
//! * [`observables`]: VACF, MSD, photon number and memory kernels.
//! * [`ensemble`]: reproducible batches and their statistics.
//! * [`bench`]: timing of the history-convolution strategies.

pub mod bench;
pub mod dipole;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod observables;
pub mod quadrupole;
pub mod stochastic;

pub use error::{Error, Result};
