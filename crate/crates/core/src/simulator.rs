//! Exact statevector simulation of the two ansatz families.
//!
//! Qubit `k` is bit `k` of the basis-state index (little-endian), matching
//! the variable layout of the encodings. Kernels act in place with
//! stride-based pair updates; there is no general gate engine.

use std::sync::Arc;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hamiltonian::{expectation_unchecked, CostFunction};
use crate::par;

pub const DEFAULT_MAX_QUBITS: usize = 25;

/// Environment variable overriding [`DEFAULT_MAX_QUBITS`].
pub const MAX_QUBITS_ENV: &str = "TSPVQA_MAX_QUBITS";

/// Simulator qubit cap, honouring `TSPVQA_MAX_QUBITS`.
pub fn max_qubits() -> usize {
    std::env::var(MAX_QUBITS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_QUBITS)
}

fn check_qubits(q: usize) -> Result<()> {
    if q == 0 {
        return Err(Error::invalid("need at least one qubit"));
    }
    let cap = max_qubits();
    if q > cap {
        return Err(Error::ResourceLimit(format!(
            "{q} qubits exceed the simulator cap of {cap} (set {MAX_QUBITS_ENV} to raise it)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`
    pub fn zero(q: usize) -> Result<Self> {
        check_qubits(q)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << q];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits: q,
            amps,
        })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() < 2 || !amps.len().is_power_of_two() {
            return Err(Error::invalid(
                "amplitude count must be a power of two >= 2",
            ));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("state is not normalised ({norm})")));
        }
        Ok(Self {
            num_qubits: amps.len().trailing_zeros() as usize,
            amps,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        par::ordered_sum(self.amps.len(), |s| self.amps[s].norm_sqr())
    }

    fn check_qubit(&self, k: usize) {
        assert!(k < self.num_qubits, "qubit {k} out of range");
    }

    /// `RY(theta) = exp(-i theta Y / 2)` on qubit `k`.
    pub fn apply_ry(&mut self, k: usize, theta: f64) {
        self.check_qubit(k);
        let (s, c) = (theta / 2.0).sin_cos();
        par::for_each_pair(&mut self.amps, k, |_, a0, a1| {
            let (x, y) = (*a0, *a1);
            *a0 = x * c - y * s;
            *a1 = x * s + y * c;
        });
    }

    /// `exp(-i beta X)` on qubit `k`.
    pub fn apply_x_evolution(&mut self, k: usize, beta: f64) {
        self.check_qubit(k);
        let (s, c) = beta.sin_cos();
        // [[c, -i s], [-i s, c]] written out on real and imaginary parts
        par::for_each_pair(&mut self.amps, k, |_, a0, a1| {
            let (x, y) = (*a0, *a1);
            *a0 = Complex64::new(c * x.re + s * y.im, c * x.im - s * y.re);
            *a1 = Complex64::new(c * y.re + s * x.im, c * y.im - s * x.re);
        });
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) {
        self.check_qubit(control);
        self.check_qubit(target);
        assert_ne!(control, target);
        par::for_each_pair(&mut self.amps, target, |i, a0, a1| {
            if i >> control & 1 == 1 {
                std::mem::swap(a0, a1);
            }
        });
    }

    /// Multiplies each amplitude by `exp(-i gamma E_s)`.
    pub fn apply_phase(&mut self, cost: &(impl CostFunction + ?Sized), gamma: f64) {
        assert_eq!(cost.num_qubits(), self.num_qubits);
        let table = cost.table();
        par::for_each_chunk_mut(&mut self.amps, par::CHUNK, |start, c| {
            for (i, a) in c.iter_mut().enumerate() {
                let e = match table {
                    Some(t) => t[start + i],
                    None => cost.energy(start + i),
                };
                let (sn, cs) = (gamma * e).sin_cos();
                *a *= Complex64::new(cs, -sn);
            }
        });
    }
}

/// `|+>^q`, every amplitude `2^(-q/2)`.
pub fn prepare_uniform(q: usize) -> Result<StateVector> {
    check_qubits(q)?;
    let a = Complex64::new((-(q as f64) / 2.0).exp2(), 0.0);
    Ok(StateVector {
        num_qubits: q,
        amps: vec![a; 1 << q],
    })
}

pub fn probabilities(state: &StateVector) -> Vec<f64> {
    par::map_indices(state.amps.len(), |s| state.amps[s].norm_sqr())
}

/// `shots` i.i.d. measurement outcomes, reproducible for a fixed seed.
pub fn sample(state: &StateVector, shots: usize, seed: u64) -> Result<Vec<usize>> {
    sample_probabilities(&probabilities(state), shots, seed)
}

pub fn sample_probabilities(probs: &[f64], shots: usize, seed: u64) -> Result<Vec<usize>> {
    if shots == 0 {
        return Err(Error::invalid("need at least one shot"));
    }
    let dist = WeightedIndex::new(probs).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..shots).map(|_| dist.sample(&mut rng)).collect())
}

/// CX pairs of one circular entanglement layer, in application order:
/// the wrap-around pair `(q-1, 0)` first, then `(0, 1), ..., (q-2, q-1)`.
pub fn circular_pairs(q: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    if q > 2 {
        pairs.push((q - 1, 0));
    }
    pairs.extend((0..q.saturating_sub(1)).map(|k| (k, k + 1)));
    pairs
}

/// RY layer, circular CX layer, repeated twice, then a final RY layer.
///
/// Starting from `|0...0>` every gate is real, so [`TwoLocalAnsatz::prepare`]
/// simulates real amplitudes and applies each entangling layer as a single
/// precomputed basis permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoLocalAnsatz {
    num_qubits: usize,
    reps: usize,
    /// `layer_source[i]`: basis state that one CX layer moves onto `i`.
    layer_source: Arc<Vec<usize>>,
}

impl TwoLocalAnsatz {
    pub fn new(num_qubits: usize) -> Self {
        let pairs = circular_pairs(num_qubits);
        // over the cap the table stays empty and `prepare` reports the limit
        let dim = if check_qubits(num_qubits).is_ok() {
            1usize << num_qubits
        } else {
            0
        };
        let mut layer_source = vec![0; dim];
        for i in 0..dim {
            let mut j = i;
            for &(c, t) in &pairs {
                j ^= (j >> c & 1) << t;
            }
            layer_source[j] = i;
        }
        Self {
            num_qubits,
            reps: 2,
            layer_source: Arc::new(layer_source),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn num_params(&self) -> usize {
        (self.reps + 1) * self.num_qubits
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        check_qubits(self.num_qubits)?;
        if params.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "two-local ansatz on {} qubits takes {} parameters, got {}",
                self.num_qubits,
                self.num_params(),
                params.len()
            )));
        }
        Ok(())
    }

    fn real_amplitudes(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let q = self.num_qubits;
        let mut amps = vec![0.0; 1 << q];
        amps[0] = 1.0;
        for (r, layer) in params.chunks(q).enumerate() {
            for (k, &theta) in layer.iter().enumerate() {
                let (s, c) = (theta / 2.0).sin_cos();
                par::for_each_pair(&mut amps, k, |_, a0, a1| {
                    let (x, y) = (*a0, *a1);
                    *a0 = x * c - y * s;
                    *a1 = x * s + y * c;
                });
            }
            if r < self.reps {
                let src = &self.layer_source;
                amps = par::map_indices(amps.len(), |i| amps[src[i]]);
            }
        }
        Ok(amps)
    }

    /// Runs the circuit on `|0...0>`.
    pub fn prepare(&self, params: &[f64]) -> Result<StateVector> {
        let amps = self.real_amplitudes(params)?;
        Ok(StateVector {
            num_qubits: self.num_qubits,
            amps: amps.into_iter().map(|a| Complex64::new(a, 0.0)).collect(),
        })
    }

    pub fn probabilities(&self, params: &[f64]) -> Result<Vec<f64>> {
        let amps = self.real_amplitudes(params)?;
        Ok(par::map_indices(amps.len(), |i| amps[i] * amps[i]))
    }
}

/// Parameter `r * q + k` drives the RY on qubit `k` in rotation layer `r`.
pub fn apply_two_local(state: &mut StateVector, params: &[f64], reps: usize) -> Result<()> {
    let q = state.num_qubits;
    if params.len() != (reps + 1) * q {
        return Err(Error::invalid(format!(
            "two-local ansatz on {q} qubits takes {} parameters, got {}",
            (reps + 1) * q,
            params.len()
        )));
    }
    let pairs = circular_pairs(q);
    for (r, layer) in params.chunks(q).enumerate() {
        for (k, &theta) in layer.iter().enumerate() {
            state.apply_ry(k, theta);
        }
        if r < reps {
            for &(c, t) in &pairs {
                state.apply_cx(c, t);
            }
        }
    }
    Ok(())
}

/// Depth-`p` QAOA with the transverse-field mixer.
#[derive(Clone)]
pub struct QaoaAnsatz {
    pub cost: Arc<dyn CostFunction>,
    pub p: usize,
}

impl QaoaAnsatz {
    pub fn new(cost: Arc<dyn CostFunction>, p: usize) -> Self {
        Self { cost, p }
    }

    pub fn num_params(&self) -> usize {
        2 * self.p
    }

    /// Flat parameters are `(gamma_1..gamma_p, beta_1..beta_p)`.
    pub fn prepare(&self, params: &[f64]) -> Result<StateVector> {
        if params.len() != 2 * self.p {
            return Err(Error::invalid(format!(
                "QAOA depth {} takes {} parameters, got {}",
                self.p,
                2 * self.p,
                params.len()
            )));
        }
        let (gammas, betas) = params.split_at(self.p);
        apply_qaoa(self.cost.as_ref(), self.p, gammas, betas)
    }
}

/// Uniform superposition evolved by `exp(-i beta_j H_M) exp(-i gamma_j H_P)`
/// for `j = 1..p`, with `H_M = sum_k X_k`.
pub fn apply_qaoa(
    cost: &(impl CostFunction + ?Sized),
    p: usize,
    gammas: &[f64],
    betas: &[f64],
) -> Result<StateVector> {
    if gammas.len() != p || betas.len() != p {
        return Err(Error::invalid(format!(
            "QAOA depth {p} needs {p} gammas and betas, got {} and {}",
            gammas.len(),
            betas.len()
        )));
    }
    let q = cost.num_qubits();
    let mut state = prepare_uniform(q)?;
    for (&gamma, &beta) in gammas.iter().zip(betas) {
        state.apply_phase(cost, gamma);
        for k in 0..q {
            state.apply_x_evolution(k, beta);
        }
    }
    Ok(state)
}

#[derive(Clone)]
pub enum Ansatz {
    TwoLocal(TwoLocalAnsatz),
    Qaoa(QaoaAnsatz),
}

impl Ansatz {
    pub fn num_params(&self) -> usize {
        match self {
            Ansatz::TwoLocal(a) => a.num_params(),
            Ansatz::Qaoa(a) => a.num_params(),
        }
    }

    pub fn prepare(&self, params: &[f64]) -> Result<StateVector> {
        match self {
            Ansatz::TwoLocal(a) => a.prepare(params),
            Ansatz::Qaoa(a) => a.prepare(params),
        }
    }
}

/// An ansatz paired with the diagonal cost it is scored against.
#[derive(Clone)]
pub struct Variational {
    pub ansatz: Ansatz,
    pub cost: Arc<dyn CostFunction>,
}

impl Variational {
    pub fn vqe(cost: Arc<dyn CostFunction>) -> Self {
        let ansatz = Ansatz::TwoLocal(TwoLocalAnsatz::new(cost.num_qubits()));
        Self { ansatz, cost }
    }

    pub fn qaoa(cost: Arc<dyn CostFunction>, p: usize) -> Self {
        let ansatz = Ansatz::Qaoa(QaoaAnsatz::new(cost.clone(), p));
        Self { ansatz, cost }
    }

    pub fn num_params(&self) -> usize {
        self.ansatz.num_params()
    }

    pub fn probabilities(&self, params: &[f64]) -> Result<Vec<f64>> {
        match &self.ansatz {
            Ansatz::TwoLocal(a) => a.probabilities(params),
            Ansatz::Qaoa(a) => Ok(probabilities(&a.prepare(params)?)),
        }
    }

    /// Exact expectation of the cost in the prepared state.
    pub fn energy(&self, params: &[f64]) -> Result<f64> {
        let probs = self.probabilities(params)?;
        Ok(expectation_unchecked(self.cost.as_ref(), &probs))
    }

    /// Mean cost over `shots` sampled outcomes.
    pub fn sampled_energy(&self, params: &[f64], shots: usize, seed: u64) -> Result<f64> {
        let probs = self.probabilities(params)?;
        let outcomes = sample_probabilities(&probs, shots, seed)?;
        Ok(outcomes.iter().map(|&s| self.cost.energy(s)).sum::<f64>() / shots as f64)
    }
}
