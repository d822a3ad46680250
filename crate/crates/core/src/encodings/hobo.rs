//! Binary-label (HOBO) encoding with the first city eliminated.
//!
//! Each movable timestep `t = 1..n` carries a `K = ceil(log2(n - 1))` bit
//! label over the movable nodes: label `l` means node `l + 1` (0-based).
//! Bit `k` (least significant first) of timestep `t` has flat index
//! `(t - 1) * K + k`.

use super::polynomial::BinaryPolynomial;
use super::{DecodeResult, InfeasibleReason};
use crate::error::{Error, Result};
use crate::tsp::{Route, TspInstance};

/// One operand bit of [`h_delta`]: a polynomial variable or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bit {
    Var(usize),
    Const(bool),
}

pub fn label_bits(n: usize) -> usize {
    ceil_log2(n - 1)
}

pub fn num_qubits(n: usize) -> usize {
    (n - 1) * label_bits(n)
}

pub(crate) fn ceil_log2(x: usize) -> usize {
    assert!(x >= 1);
    (usize::BITS - (x - 1).leading_zeros()) as usize
}

#[inline]
pub fn var_index(n: usize, t: usize, k: usize) -> usize {
    (t - 1) * label_bits(n) + k
}

fn timestep_bits(n: usize, t: usize) -> Vec<Bit> {
    (0..label_bits(n))
        .map(|k| Bit::Var(var_index(n, t, k)))
        .collect()
}

fn const_bits(value: usize, width: usize) -> Vec<Bit> {
    (0..width)
        .map(|k| Bit::Const(value >> k & 1 == 1))
        .collect()
}

/// `1 - (a - b)^2` for one bit pair.
fn bit_equal(num_vars: usize, a: Bit, b: Bit) -> BinaryPolynomial {
    match (a, b) {
        (Bit::Const(x), Bit::Const(y)) => {
            BinaryPolynomial::constant(num_vars, if x == y { 1.0 } else { 0.0 })
        }
        (Bit::Var(v), Bit::Const(c)) | (Bit::Const(c), Bit::Var(v)) => {
            if c {
                BinaryPolynomial::variable(num_vars, v)
            } else {
                BinaryPolynomial::complement(num_vars, v)
            }
        }
        (Bit::Var(u), Bit::Var(v)) => {
            let mut p = BinaryPolynomial::constant(num_vars, 1.0);
            p.add_term(&[u], -1.0);
            p.add_term(&[v], -1.0);
            p.add_term(&[u, v], 2.0);
            p
        }
    }
}

/// Equality indicator of two bit vectors: `prod_k (1 - (a_k - b_k)^2)`.
pub fn h_delta(num_vars: usize, a: &[Bit], b: &[Bit]) -> Result<BinaryPolynomial> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "h_delta operands differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut out = BinaryPolynomial::constant(num_vars, 1.0);
    for (&x, &y) in a.iter().zip(b) {
        out = &out * &bit_equal(num_vars, x, y);
        if out.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// [`h_delta`] on concrete bits.
pub fn h_delta_value(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("h_delta operands differ in length"));
    }
    Ok(if a == b { 1.0 } else { 0.0 })
}

/// Penalises labels above `max_label`: one term per zero bit of `max_label`,
/// firing when the label has a one there and agrees above it.
fn h_valid(num_vars: usize, bits: &[Bit], max_label: usize) -> BinaryPolynomial {
    let width = bits.len();
    let mut out = BinaryPolynomial::zero(num_vars);
    for k0 in (0..width).filter(|&k| max_label >> k & 1 == 0) {
        let Bit::Var(v) = bits[k0] else {
            unreachable!("h_valid is only applied to symbolic labels")
        };
        let mut term = BinaryPolynomial::variable(num_vars, v);
        for k in k0 + 1..width {
            term = &term * &bit_equal(num_vars, bits[k], Bit::Const(max_label >> k & 1 == 1));
        }
        out += term;
    }
    out
}

/// Validity and collision penalties plus the label-matched distance cost.
pub fn hobo_polynomial(inst: &TspInstance, penalty: f64) -> Result<BinaryPolynomial> {
    if penalty.is_nan() || penalty <= 0.0 {
        return Err(Error::invalid(format!(
            "penalty must be positive, got {penalty}"
        )));
    }
    let n = inst.n();
    let m = n - 1;
    let width = label_bits(n);
    let q = num_qubits(n);
    let steps: Vec<Vec<Bit>> = (1..n).map(|t| timestep_bits(n, t)).collect();
    // matches[t][l] = H_delta(b_t, l)
    let matches: Vec<Vec<BinaryPolynomial>> = steps
        .iter()
        .map(|b| {
            (0..m)
                .map(|l| h_delta(q, b, &const_bits(l, width)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut poly = BinaryPolynomial::zero(q);
    for b in &steps {
        poly += h_valid(q, b, m - 1).scaled(penalty);
    }
    for t in 0..m {
        for u in t + 1..m {
            poly += h_delta(q, &steps[t], &steps[u])?.scaled(penalty);
        }
    }
    for l in 0..m {
        let node = l + 1;
        poly += matches[0][l].clone().scaled(inst.w(0, node));
        poly += matches[m - 1][l].clone().scaled(inst.w(node, 0));
    }
    for t in 0..m - 1 {
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    poly += (&matches[t][a] * &matches[t + 1][b]).scaled(inst.w(a + 1, b + 1));
                }
            }
        }
    }
    Ok(poly)
}

pub fn decode_hobo(bits: &[bool], n: usize) -> Result<DecodeResult> {
    if n < 3 || bits.len() != num_qubits(n) {
        return Err(Error::invalid(format!(
            "HOBO decode for n = {n} needs {} bits, got {}",
            if n >= 3 { num_qubits(n) } else { 0 },
            bits.len()
        )));
    }
    Ok(decode_with(n, |v| bits[v]))
}

pub(crate) fn decode_state(state: usize, n: usize) -> DecodeResult {
    decode_with(n, |v| state >> v & 1 == 1)
}

fn decode_with(n: usize, bit: impl Fn(usize) -> bool) -> DecodeResult {
    let m = n - 1;
    let width = label_bits(n);
    let mut order = Vec::with_capacity(n);
    order.push(0);
    let mut visited = vec![false; n];
    let mut repeated = false;
    for t in 1..n {
        let label = (0..width).fold(0, |acc, k| acc | (bit(var_index(n, t, k)) as usize) << k);
        if label >= m {
            return DecodeResult::Infeasible(InfeasibleReason::IndexOutOfRange);
        }
        repeated |= std::mem::replace(&mut visited[label + 1], true);
        order.push(label + 1);
    }
    if repeated {
        DecodeResult::Infeasible(InfeasibleReason::NodeRepeated)
    } else {
        DecodeResult::Feasible(Route::new_unchecked(order))
    }
}

pub fn encode_route(route: &Route) -> Vec<bool> {
    let n = route.len();
    let width = label_bits(n);
    let mut bits = vec![false; num_qubits(n)];
    for (t, &node) in route.order().iter().enumerate().skip(1) {
        for k in 0..width {
            bits[var_index(n, t, k)] = (node - 1) >> k & 1 == 1;
        }
    }
    bits
}
