//! Variational quantum algorithms for small travelling-salesman instances.
//!
//! Three encodings (one-hot QUBO, binary HOBO and a permutation index) are
//! lowered to diagonal cost functions and optimised with VQE or QAOA on an
//! exact state-vector simulator.

// index loops mirror the summation indices of the formulas
#![allow(clippy::needless_range_loop)]

pub mod encodings;
pub mod error;
pub mod hamiltonian;
pub mod metrics;
pub mod optimize;
mod par;
pub mod runner;
pub mod simulator;
pub mod tsp;

pub use encodings::{DecodeResult, EncodingScheme, Scheme};
pub use error::{Error, Result};
pub use hamiltonian::{ClassicalObjective, CostFunction, DiagonalHamiltonian};
pub use metrics::MetricReport;
pub use optimize::{OptTrace, OptimizerConfig};
pub use simulator::{StateVector, Variational};
pub use tsp::{Route, TourStats, TspInstance};

/// Whether this build evaluates data-parallel kernels on the rayon pool.
pub fn parallel_enabled() -> bool {
    par::is_parallel()
}
