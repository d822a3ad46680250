//! Index-to-route decoding for the permutation encoding.
//!
//! Every unsigned integer maps to a route: the index is reduced modulo
//! `(n - 1)!` and then read in the factorial number system, picking the
//! next movable node from the shrinking candidate list at each step.

use crate::tsp::Route;

pub fn num_routes(n: usize) -> u64 {
    (1..n as u64).product()
}

/// `ceil(log2((n - 1)!))`, at least one qubit.
pub fn num_qubits(n: usize) -> usize {
    let routes = num_routes(n);
    ((u64::BITS - (routes - 1).leading_zeros()) as usize).max(1)
}

pub fn decode_permutation(index: u64, n: usize) -> Route {
    let m = n - 1;
    let mut f = num_routes(n);
    let mut x = index % f;
    let mut candidates: Vec<usize> = (1..n).collect();
    let mut order = Vec::with_capacity(n);
    order.push(0);
    for i in 0..m {
        f /= (m - i) as u64;
        let k = (x / f) as usize;
        order.push(candidates.remove(k));
        x -= k as u64 * f;
    }
    Route::new_unchecked(order)
}
