//! The three TSP encodings and their decoders.
//!
//! Bit conventions, shared with the Hamiltonian lowering and the simulator:
//! basis state `s` assigns bit `k` of `s` (least significant first) to
//! variable / qubit `k`. QUBO and HOBO variables are laid out timestep-major
//! (see [`qubo::var_index`] and [`hobo::var_index`]); the permutation encoding
//! reads `s` itself as the route index. Node 0 is always the fixed first city.

pub mod hobo;
pub mod permutation;
pub mod polynomial;
pub mod qubo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsp::{Route, TspInstance};
pub use polynomial::BinaryPolynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Qubo,
    Hobo,
    #[serde(alias = "perm")]
    Permutation,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Qubo, Scheme::Hobo, Scheme::Permutation];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Qubo => "qubo",
            Scheme::Hobo => "hobo",
            Scheme::Permutation => "permutation",
        }
    }

    /// Penalty weights used for the reference experiments.
    pub fn default_penalty(self) -> f64 {
        match self {
            Scheme::Qubo => 100.0,
            Scheme::Hobo => 200.0,
            Scheme::Permutation => 0.0,
        }
    }

    /// Qubits needed for `n` nodes with the first city fixed.
    pub fn num_qubits(self, n: usize) -> usize {
        match self {
            Scheme::Qubo => qubo::num_qubits(n),
            Scheme::Hobo => hobo::num_qubits(n),
            Scheme::Permutation => permutation::num_qubits(n),
        }
    }

    pub fn has_hamiltonian(self) -> bool {
        !matches!(self, Scheme::Permutation)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qubo" => Ok(Scheme::Qubo),
            "hobo" => Ok(Scheme::Hobo),
            "perm" | "permutation" => Ok(Scheme::Permutation),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InfeasibleReason {
    MultipleNodesPerStep,
    NodeRepeated,
    StepEmpty,
    IndexOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeResult {
    Feasible(Route),
    Infeasible(InfeasibleReason),
}

impl DecodeResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, DecodeResult::Feasible(_))
    }

    pub fn route(&self) -> Option<&Route> {
        match self {
            DecodeResult::Feasible(r) => Some(r),
            DecodeResult::Infeasible(_) => None,
        }
    }
}

/// A scheme bound to a node count and penalty weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingScheme {
    pub scheme: Scheme,
    pub n: usize,
    pub penalty: f64,
}

impl EncodingScheme {
    pub fn new(scheme: Scheme, n: usize, penalty: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("need at least 3 nodes, got {n}")));
        }
        if scheme.has_hamiltonian() && (penalty.is_nan() || penalty <= 0.0) {
            return Err(Error::invalid(format!(
                "penalty must be positive, got {penalty}"
            )));
        }
        Ok(Self { scheme, n, penalty })
    }

    pub fn with_default_penalty(scheme: Scheme, n: usize) -> Result<Self> {
        Self::new(scheme, n, scheme.default_penalty())
    }

    pub fn num_qubits(&self) -> usize {
        self.scheme.num_qubits(self.n)
    }

    /// Cost polynomial, or `None` for the permutation encoding.
    pub fn polynomial(&self, inst: &TspInstance) -> Result<Option<BinaryPolynomial>> {
        if inst.n() != self.n {
            return Err(Error::invalid(format!(
                "encoding is for n = {}, instance has n = {}",
                self.n,
                inst.n()
            )));
        }
        match self.scheme {
            Scheme::Qubo => qubo::qubo_polynomial(inst, self.penalty).map(Some),
            Scheme::Hobo => hobo::hobo_polynomial(inst, self.penalty).map(Some),
            Scheme::Permutation => Ok(None),
        }
    }

    /// Decodes computational basis state `state`.
    pub fn decode_state(&self, state: usize) -> DecodeResult {
        match self.scheme {
            Scheme::Qubo => qubo::decode_state(state, self.n),
            Scheme::Hobo => hobo::decode_state(state, self.n),
            Scheme::Permutation => {
                DecodeResult::Feasible(permutation::decode_permutation(state as u64, self.n))
            }
        }
    }

    /// Bits of a basis state as a variable assignment.
    pub fn state_bits(&self, state: usize) -> Vec<bool> {
        (0..self.num_qubits())
            .map(|k| state >> k & 1 == 1)
            .collect()
    }
}

/// Fraction of feasible bitstrings without fixing a city: `n!/2^(n^2)` for
/// QUBO, `n!/2^(n ceil(log2 n))` for HOBO and `1` for the permutation encoding.
pub fn feasible_ratio_theoretical(scheme: Scheme, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 nodes, got {n}")));
    }
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let bits = match scheme {
        Scheme::Qubo => n * n,
        Scheme::Hobo => n * hobo::ceil_log2(n),
        Scheme::Permutation => return Ok(1.0),
    };
    Ok(n_fact * (-(bits as f64)).exp2())
}
