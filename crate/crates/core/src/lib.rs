//! Simulation and pulse engineering for small systems of coupled spin-1/2
//! nuclei: Hamiltonians, propagation with relaxation, shaped and composite
//! pulses, gate compilation, refocusing, average Hamiltonian theory,
//! tomography, fidelity metrics, pulse optimization and standard experiments.
//!
//! Conventions used everywhere:
//! * hbar = 1, Hamiltonians in rad/s, user-facing frequencies in Hz.
//! * Spin 1 is the most significant tensor factor, so two-spin basis order is
//!   |00>, |01>, |10>, |11>.
//! * Spins are numbered from 1 in files and on the command line, from 0 in the
//!   Rust API.
//! * A pulse of phase pi about the transmitter rotates about +x, so `X` is a
//!   pi/2 pulse with phase pi.

pub mod avgham;
pub mod cli;
pub mod compile;
pub mod composite;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod shapes;
pub mod spinsys;
pub mod tomo;

pub use error::{Error, Result};
pub use linalg::{Operator, C64};
