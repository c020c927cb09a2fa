//! Simulation and characterization of quantum non-demolition (QND)
//! measurements on qubits.
//!
//! * [`hilbert`]: dense pure states, density matrices, partial traces and
//!   projective measurement.
//! * [`metrics`]: classical-fidelity figures of merit, distinguishability and
//!   correlation functions.
//! * [`cnot_qnd`]: variable-strength QND measurement built from a CNOT gate.
//! * [`photonics`]: the heralded linear-optical QND gate in the two-photon
//!   Fock space.
//! * [`weakval`]: post-selected weak and strong values, analytic and sampled.
//! * [`cli`]: the `qnd` command-line front end.

pub mod cli;
pub mod cnot_qnd;
pub mod error;
pub mod hilbert;
pub mod metrics;
pub mod photonics;
pub mod report;
pub mod weakval;

pub use error::{QndError, Result};
