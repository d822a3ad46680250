//! One-hot (QUBO) encoding with the first city eliminated.
//!
//! Variable `x(node, t)` for movable node `1..n` and movable timestep `1..n`
//! (0-based; node 0 sits at timestep 0) has flat index
//! `(t - 1) * (n - 1) + (node - 1)`.

use super::polynomial::BinaryPolynomial;
use super::{DecodeResult, InfeasibleReason};
use crate::error::{Error, Result};
use crate::tsp::{Route, TspInstance};

pub fn num_qubits(n: usize) -> usize {
    (n - 1) * (n - 1)
}

#[inline]
pub fn var_index(n: usize, node: usize, t: usize) -> usize {
    debug_assert!((1..n).contains(&node) && (1..n).contains(&t));
    (t - 1) * (n - 1) + (node - 1)
}

/// `P * (1 - sum(vars))^2`, expanded.
fn one_hot_penalty(num_vars: usize, vars: &[usize], penalty: f64) -> BinaryPolynomial {
    let mut residual = BinaryPolynomial::constant(num_vars, 1.0);
    for &v in vars {
        residual.add_term(&[v], -1.0);
    }
    (&residual * &residual).scaled(penalty)
}

/// Distance cost plus row and column one-hot penalties.
pub fn qubo_polynomial(inst: &TspInstance, penalty: f64) -> Result<BinaryPolynomial> {
    if penalty.is_nan() || penalty <= 0.0 {
        return Err(Error::invalid(format!(
            "penalty must be positive, got {penalty}"
        )));
    }
    let n = inst.n();
    let q = num_qubits(n);
    let mut poly = BinaryPolynomial::zero(q);

    // leaving and re-entering the fixed city become linear terms
    for j in 1..n {
        poly.add_term(&[var_index(n, j, 1)], inst.w(0, j));
        poly.add_term(&[var_index(n, j, n - 1)], inst.w(j, 0));
    }
    for t in 1..n - 1 {
        for i in 1..n {
            for j in 1..n {
                if i != j {
                    poly.add_term(&[var_index(n, i, t), var_index(n, j, t + 1)], inst.w(i, j));
                }
            }
        }
    }

    for node in 1..n {
        let row: Vec<usize> = (1..n).map(|t| var_index(n, node, t)).collect();
        poly += one_hot_penalty(q, &row, penalty);
    }
    for t in 1..n {
        let col: Vec<usize> = (1..n).map(|node| var_index(n, node, t)).collect();
        poly += one_hot_penalty(q, &col, penalty);
    }
    Ok(poly)
}

pub fn decode_qubo(bits: &[bool], n: usize) -> Result<DecodeResult> {
    if n < 3 || bits.len() != num_qubits(n) {
        return Err(Error::invalid(format!(
            "QUBO decode for n = {n} needs {} bits, got {}",
            num_qubits(n.max(1)),
            bits.len()
        )));
    }
    Ok(decode_with(n, |v| bits[v]))
}

pub(crate) fn decode_state(state: usize, n: usize) -> DecodeResult {
    decode_with(n, |v| state >> v & 1 == 1)
}

fn decode_with(n: usize, bit: impl Fn(usize) -> bool) -> DecodeResult {
    let mut order = Vec::with_capacity(n);
    order.push(0);
    let mut visited = vec![false; n];
    for t in 1..n {
        let mut chosen = None;
        for node in 1..n {
            if bit(var_index(n, node, t)) {
                if chosen.is_some() {
                    return DecodeResult::Infeasible(InfeasibleReason::MultipleNodesPerStep);
                }
                chosen = Some(node);
            }
        }
        let Some(node) = chosen else {
            return DecodeResult::Infeasible(InfeasibleReason::StepEmpty);
        };
        if std::mem::replace(&mut visited[node], true) {
            return DecodeResult::Infeasible(InfeasibleReason::NodeRepeated);
        }
        order.push(node);
    }
    DecodeResult::Feasible(Route::new_unchecked(order))
}

/// Bit assignment encoding `route`.
pub fn encode_route(route: &Route) -> Vec<bool> {
    let n = route.len();
    let mut bits = vec![false; num_qubits(n)];
    for (t, &node) in route.order().iter().enumerate().skip(1) {
        bits[var_index(n, node, t)] = true;
    }
    bits
}
