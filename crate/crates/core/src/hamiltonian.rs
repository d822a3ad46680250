//! Diagonal cost functions over computational basis states.
//!
//! Combinatorial Hamiltonians here are diagonal, so everything downstream
//! (phase evolution, expectation values, bounds) only needs `E_s`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use crate::encodings::permutation::decode_permutation;
use crate::encodings::{permutation, BinaryPolynomial};
use crate::error::{Error, Result};
use crate::par;
use crate::tsp::{closed_length, TspInstance};

/// Largest qubit count whose energy table is stored densely by default.
pub const DEFAULT_DENSE_MAX_QUBITS: usize = 26;

/// Largest qubit count accepted by the binary energy-table dump.
pub const DUMP_MAX_QUBITS: usize = 16;

/// Probability vectors must sum to one within this tolerance.
pub const NORM_TOL: f64 = 1e-9;

/// A real cost attached to every basis state of `num_qubits` qubits.
pub trait CostFunction: Send + Sync {
    fn num_qubits(&self) -> usize;

    fn energy(&self, state: usize) -> f64;

    /// Dense energy table, when materialised.
    fn table(&self) -> Option<&[f64]> {
        None
    }

    /// Exact `(min, max)` over all basis states.
    fn energy_bounds(&self) -> (f64, f64);

    fn dimension(&self) -> usize {
        1 << self.num_qubits()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lowering {
    pub dense_max_qubits: usize,
    /// Fall back to evaluating the polynomial per state above the threshold.
    pub on_demand: bool,
}

impl Default for Lowering {
    fn default() -> Self {
        Self {
            dense_max_qubits: DEFAULT_DENSE_MAX_QUBITS,
            on_demand: false,
        }
    }
}

#[derive(Debug)]
enum Storage {
    Dense(Vec<f64>),
    OnDemand(Vec<(u64, f64)>),
}

#[derive(Debug)]
pub struct DiagonalHamiltonian {
    num_qubits: usize,
    storage: Storage,
    bounds: OnceLock<(f64, f64)>,
}

/// Lowers `poly` onto `q` qubits with the default dense-only policy.
pub fn lower(poly: &BinaryPolynomial, q: usize) -> Result<DiagonalHamiltonian> {
    lower_with(poly, q, Lowering::default())
}

pub fn lower_with(
    poly: &BinaryPolynomial,
    q: usize,
    policy: Lowering,
) -> Result<DiagonalHamiltonian> {
    if poly.num_vars() > q {
        return Err(Error::invalid(format!(
            "polynomial has {} variables but only {q} qubits",
            poly.num_vars()
        )));
    }
    if q > 63 {
        return Err(Error::ResourceLimit(format!(
            "{q} qubits cannot be indexed"
        )));
    }
    let masks = poly.term_masks()?;
    let storage = if q <= policy.dense_max_qubits {
        Storage::Dense(subset_sums(&masks, q))
    } else if policy.on_demand {
        Storage::OnDemand(masks)
    } else {
        return Err(Error::ResourceLimit(format!(
            "{q} qubits exceed the dense table limit of {} and on-demand mode is off",
            policy.dense_max_qubits
        )));
    };
    Ok(DiagonalHamiltonian {
        num_qubits: q,
        storage,
        bounds: OnceLock::new(),
    })
}

/// `E_s = sum over terms T with T ⊆ s of c_T`, via the subset-sum transform:
/// scatter coefficients by mask, then for each bit fold the bit-clear half
/// into the bit-set half.
fn subset_sums(masks: &[(u64, f64)], q: usize) -> Vec<f64> {
    let mut table = vec![0.0; 1 << q];
    for &(mask, c) in masks {
        table[mask as usize] += c;
    }
    for bit in 0..q {
        par::for_each_pair(&mut table, bit, |_, lo, hi| *hi += *lo);
    }
    table
}

fn masked_energy(masks: &[(u64, f64)], state: usize) -> f64 {
    let s = state as u64;
    masks
        .iter()
        .filter(|(m, _)| s & m == *m)
        .map(|(_, c)| c)
        .sum()
}

fn exhaustive_bounds(cost: &(impl CostFunction + ?Sized)) -> (f64, f64) {
    let dim = cost.dimension();
    let chunks = dim.div_ceil(par::CHUNK);
    let partial = par::map_indices(chunks, |c| {
        let start = c * par::CHUNK;
        let end = (start + par::CHUNK).min(dim);
        (start..end).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let e = cost.energy(s);
            (lo.min(e), hi.max(e))
        })
    });
    partial
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        })
}

impl DiagonalHamiltonian {
    pub fn from_table(energies: Vec<f64>) -> Result<Self> {
        if !energies.len().is_power_of_two() {
            return Err(Error::invalid("energy table length must be a power of two"));
        }
        Ok(Self {
            num_qubits: energies.len().trailing_zeros() as usize,
            storage: Storage::Dense(energies),
            bounds: OnceLock::new(),
        })
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }
}

impl CostFunction for DiagonalHamiltonian {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn energy(&self, state: usize) -> f64 {
        match &self.storage {
            Storage::Dense(t) => t[state],
            Storage::OnDemand(m) => masked_energy(m, state),
        }
    }

    fn table(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(t) => Some(t),
            Storage::OnDemand(_) => None,
        }
    }

    fn energy_bounds(&self) -> (f64, f64) {
        *self.bounds.get_or_init(|| exhaustive_bounds(self))
    }
}

/// Cost evaluated classically per basis state, with no Hamiltonian behind it.
pub struct ClassicalObjective {
    num_qubits: usize,
    table: Vec<f64>,
    bounds: (f64, f64),
}

impl ClassicalObjective {
    pub fn new<F>(num_qubits: usize, evaluator: F) -> Result<Self>
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        if num_qubits > DEFAULT_DENSE_MAX_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "classical objective over {num_qubits} qubits is too large to tabulate"
            )));
        }
        let table = par::map_indices(1 << num_qubits, evaluator);
        let mut obj = Self {
            num_qubits,
            table,
            bounds: (0.0, 0.0),
        };
        obj.bounds = exhaustive_bounds(&obj);
        Ok(obj)
    }

    /// Tour length of the route each basis state decodes to.
    pub fn permutation(inst: &TspInstance) -> Result<Self> {
        let n = inst.n();
        Self::new(permutation::num_qubits(n), |s| {
            closed_length(inst, decode_permutation(s as u64, n).order())
        })
    }
}

impl CostFunction for ClassicalObjective {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    fn energy(&self, state: usize) -> f64 {
        self.table[state]
    }

    fn table(&self) -> Option<&[f64]> {
        Some(&self.table)
    }

    fn energy_bounds(&self) -> (f64, f64) {
        self.bounds
    }
}

pub(crate) fn check_distribution(probs: &[f64], dim: usize) -> Result<()> {
    if probs.len() != dim {
        return Err(Error::invalid(format!(
            "distribution has {} entries, expected {dim}",
            probs.len()
        )));
    }
    let total = par::ordered_sum(dim, |s| probs[s]);
    if (total - 1.0).abs() > NORM_TOL || probs.iter().any(|p| *p < -NORM_TOL) {
        return Err(Error::invalid(format!(
            "distribution is not normalised (sum = {total})"
        )));
    }
    Ok(())
}

/// `sum_s p_s E_s`.
pub fn expectation(cost: &(impl CostFunction + ?Sized), probs: &[f64]) -> Result<f64> {
    check_distribution(probs, cost.dimension())?;
    Ok(expectation_unchecked(cost, probs))
}

pub(crate) fn expectation_unchecked(cost: &(impl CostFunction + ?Sized), probs: &[f64]) -> f64 {
    match cost.table() {
        Some(t) => par::ordered_sum(probs.len(), |s| probs[s] * t[s]),
        None => par::ordered_sum(probs.len(), |s| probs[s] * cost.energy(s)),
    }
}

pub fn energy_bounds(cost: &(impl CostFunction + ?Sized)) -> (f64, f64) {
    cost.energy_bounds()
}

/// Writes the dense energy table as little-endian `f64`s.
pub fn write_energy_table(cost: &(impl CostFunction + ?Sized), path: &Path) -> Result<()> {
    let q = cost.num_qubits();
    if q > DUMP_MAX_QUBITS {
        return Err(Error::ResourceLimit(format!(
            "energy dump limited to {DUMP_MAX_QUBITS} qubits, got {q}"
        )));
    }
    let mut bytes = Vec::with_capacity(8 << q);
    for s in 0..cost.dimension() {
        bytes.extend_from_slice(&cost.energy(s).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_energy_table(path: &Path) -> Result<DiagonalHamiltonian> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid("energy dump length is not a multiple of 8"));
    }
    let table = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DiagonalHamiltonian::from_table(table)
}
