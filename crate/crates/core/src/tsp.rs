//! TSP instances, closed-tour evaluation and the exhaustive reference solver.
//!
//! Nodes are 0-based in code (`0..n`); node `0` is the fixed first city. Human
//! facing output (route strings) uses 1-based labels.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the square that random coordinates are drawn from.
pub const BOX_SIZE: f64 = 100.0;

/// Largest node count `brute_force_stats` will enumerate ((n-1)! routes).
pub const MAX_ENUMERATION_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TspInstance {
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    seed: Option<u64>,
}

/// On-disk form of an instance. Only coordinates are stored.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceFile {
    pub n: usize,
    pub coords: Vec<[f64; 2]>,
    pub seed: Option<u64>,
}

impl TspInstance {
    /// Builds an instance from coordinates, rejecting coincident nodes.
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Result<Self> {
        let n = coords.len();
        if n < 3 {
            return Err(Error::invalid(format!("need at least 3 nodes, got {n}")));
        }
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclid(coords[i], coords[j]);
                if d == 0.0 {
                    return Err(Error::DegenerateInstance(format!(
                        "nodes {} and {} coincide",
                        i + 1,
                        j + 1
                    )));
                }
                weights[i * n + j] = d;
                weights[j * n + i] = d;
            }
        }
        Ok(Self {
            coords,
            weights,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Distance between nodes `i` and `j` (0-based).
    #[inline]
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n() + j]
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            n: self.n(),
            coords: self.coords.clone(),
            seed: self.seed,
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        if file.n != file.coords.len() {
            return Err(Error::invalid(format!(
                "instance declares n = {} but lists {} coordinates",
                file.n,
                file.coords.len()
            )));
        }
        let mut inst = Self::from_coords(file.coords)?;
        inst.seed = file.seed;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws `n` i.i.d. uniform points in the 100x100 box.
pub fn generate_instance(n: usize, seed: u64) -> Result<TspInstance> {
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 nodes, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| {
            [
                rng.random_range(0.0..BOX_SIZE),
                rng.random_range(0.0..BOX_SIZE),
            ]
        })
        .collect();
    let mut inst = TspInstance::from_coords(coords)?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// A closed tour, stored as 0-based node indices starting at node 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route(Vec<usize>);

impl Route {
    /// Validates that `order` is a permutation of `0..order.len()` with 0 first.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::invalid(format!("{order:?} is not a permutation")));
            }
        }
        if order.first() != Some(&0) {
            return Err(Error::invalid(format!(
                "route {order:?} must start at the first city"
            )));
        }
        Ok(Route(order))
    }

    /// Builds a route from 1-based node labels.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::invalid("node labels are 1-based"));
        }
        Self::new(labels.iter().map(|l| l - 1).collect())
    }

    pub(crate) fn new_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Route::new(order.clone()).is_ok());
        Route(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same tour walked backwards, still starting at node 0.
    pub fn reversed(&self) -> Route {
        let mut order = Vec::with_capacity(self.0.len());
        order.push(self.0[0]);
        order.extend(self.0[1..].iter().rev());
        Route(order)
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", v + 1)?;
        }
        Ok(())
    }
}

/// Length of the closed tour including the edge back to the start.
pub fn tour_length(inst: &TspInstance, route: &Route) -> Result<f64> {
    if route.len() != inst.n() {
        return Err(Error::invalid(format!(
            "route visits {} nodes, instance has {}",
            route.len(),
            inst.n()
        )));
    }
    Ok(closed_length(inst, route.order()))
}

/// Closed-tour length of any node sequence (no validation).
pub(crate) fn closed_length(inst: &TspInstance, order: &[usize]) -> f64 {
    let n = order.len();
    (0..n).map(|t| inst.w(order[t], order[(t + 1) % n])).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourStats {
    pub l_min: f64,
    pub l_max: f64,
    pub optimal_routes: Vec<Route>,
    pub routes_evaluated: usize,
}

impl TourStats {
    pub fn is_optimal(&self, route: &Route) -> bool {
        self.optimal_routes.binary_search(route).is_ok()
    }
}

/// Relative tolerance used to group routes of equal length as co-optimal.
const TIE_TOL: f64 = 1e-9;

/// Exhaustive enumeration of all (n-1)! routes with the first city fixed.
pub fn brute_force_stats(inst: &TspInstance) -> Result<TourStats> {
    let n = inst.n();
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::ResourceLimit(format!(
            "brute force limited to {MAX_ENUMERATION_NODES} nodes, got {n}"
        )));
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut l_min = f64::INFINITY;
    let mut l_max = f64::NEG_INFINITY;
    let mut best: Vec<Vec<usize>> = Vec::new();
    let mut count = 0usize;
    let mut order = vec![0usize; n];
    // lexicographic next-permutation over the movable nodes
    loop {
        order[1..].copy_from_slice(&rest);
        let len = closed_length(inst, &order);
        count += 1;
        l_max = l_max.max(len);
        if len < l_min * (1.0 - TIE_TOL) {
            l_min = len;
            best.clear();
            best.push(order.clone());
        } else if len <= l_min * (1.0 + TIE_TOL) {
            l_min = l_min.min(len);
            best.push(order.clone());
        }
        if !next_permutation(&mut rest) {
            break;
        }
    }
    let mut optimal_routes: Vec<Route> = best.into_iter().map(Route::new_unchecked).collect();
    optimal_routes.sort();
    Ok(TourStats {
        l_min,
        l_max,
        optimal_routes,
        routes_evaluated: count,
    })
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).unwrap();
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[cfg(test)]
pub(crate) fn square_instance() -> TspInstance {
    TspInstance::from_coords(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factorial(k: usize) -> usize {
        (1..=k).product()
    }

    /// Heap's algorithm; a different iteration order than the solver uses.
    fn heap_permutations(k: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            heap_permutations(k - 1, items, out);
            if k.is_multiple_of(2) {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            generate_instance(4, 9).unwrap(),
            generate_instance(4, 9).unwrap()
        );
        assert_ne!(
            generate_instance(4, 9).unwrap(),
            generate_instance(4, 10).unwrap()
        );
    }

    #[test]
    fn generated_weights_respect_box_geometry() {
        for seed in 0..20 {
            let inst = generate_instance(4, seed).unwrap();
            for i in 0..4 {
                assert_eq!(inst.w(i, i), 0.0);
                for j in 0..4 {
                    assert!((0.0..=BOX_SIZE * 2f64.sqrt()).contains(&inst.w(i, j)));
                }
            }
            assert!(inst
                .coords()
                .iter()
                .flatten()
                .all(|c| (0.0..=100.0).contains(c)));
        }
    }

    #[test]
    fn generated_weights_match_recomputed_distances() {
        let inst = generate_instance(6, 3).unwrap();
        let c = inst.coords();
        for i in 0..6 {
            for j in 0..6 {
                let dx = c[i][0] - c[j][0];
                let dy = c[i][1] - c[j][1];
                let d = (dx * dx + dy * dy).sqrt();
                assert!((inst.w(i, j) - d).abs() < 1e-12);
                assert_eq!(inst.w(i, j), inst.w(j, i));
            }
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(matches!(
            generate_instance(2, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn coincident_nodes_rejected() {
        let r = TspInstance::from_coords(vec![[1.0, 1.0], [2.0, 2.0], [1.0, 1.0]]);
        assert!(matches!(r, Err(Error::DegenerateInstance(_))));
    }

    #[test]
    fn square_tour_lengths() {
        let sq = square_instance();
        let perimeter = Route::from_labels(&[1, 2, 3, 4]).unwrap();
        assert!((tour_length(&sq, &perimeter).unwrap() - 40.0).abs() < 1e-12);
        let crossing = Route::from_labels(&[1, 3, 2, 4]).unwrap();
        let expected = 20.0 + 2.0 * 10.0 * 2f64.sqrt();
        assert!((tour_length(&sq, &crossing).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_routes_rejected() {
        assert!(Route::new(vec![0, 1, 1]).is_err());
        assert!(Route::new(vec![1, 0, 2]).is_err());
        assert!(Route::new(vec![0, 3, 1]).is_err());
        let sq = square_instance();
        let short = Route::new(vec![0, 1, 2]).unwrap();
        assert!(tour_length(&sq, &short).is_err());
    }

    #[test]
    fn square_brute_force() {
        let stats = brute_force_stats(&square_instance()).unwrap();
        assert_eq!(stats.routes_evaluated, 6);
        assert!((stats.l_min - 40.0).abs() < 1e-12);
        assert!((stats.l_max - (20.0 + 20.0 * 2f64.sqrt())).abs() < 1e-12);
        let expected: Vec<Route> = vec![
            Route::from_labels(&[1, 2, 3, 4]).unwrap(),
            Route::from_labels(&[1, 4, 3, 2]).unwrap(),
        ];
        assert_eq!(stats.optimal_routes, expected);
    }

    #[test]
    fn six_nodes_enumerates_120_routes() {
        let stats = brute_force_stats(&generate_instance(6, 1).unwrap()).unwrap();
        assert_eq!(stats.routes_evaluated, 120);
        // a route and its reverse always tie
        assert!(stats.optimal_routes.len() >= 2);
    }

    #[test]
    fn enumeration_guard() {
        let inst = generate_instance(MAX_ENUMERATION_NODES + 1, 0).unwrap();
        assert!(matches!(
            brute_force_stats(&inst),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn brute_force_agrees_with_heap_enumeration() {
        for n in 3..=7 {
            let inst = generate_instance(n, 100 + n as u64).unwrap();
            let stats = brute_force_stats(&inst).unwrap();
            let mut perms = Vec::new();
            heap_permutations(n - 1, &mut (1..n).collect(), &mut perms);
            assert_eq!(perms.len(), factorial(n - 1));
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &perms {
                let mut order = vec![0];
                order.extend(p);
                let len = tour_length(&inst, &Route::new(order).unwrap()).unwrap();
                lo = lo.min(len);
                hi = hi.max(len);
                assert!(len >= stats.l_min - 1e-9 && len <= stats.l_max + 1e-9);
            }
            assert_eq!(lo, stats.l_min);
            assert_eq!(hi, stats.l_max);
        }
    }

    #[test]
    fn instance_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = generate_instance(5, 77).unwrap();
        inst.save(&path).unwrap();
        let back = TspInstance::load(&path).unwrap();
        assert_eq!(back, inst);
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["n"], 5);
        assert_eq!(raw["seed"], 77);
        assert!(raw.get("w").is_none());
    }

    proptest! {
        #[test]
        fn reversal_preserves_length(seed in 0u64..1000, n in 3usize..8) {
            let inst = generate_instance(n, seed).unwrap();
            let stats = brute_force_stats(&inst).unwrap();
            let mut rest: Vec<usize> = (1..n).collect();
            loop {
                let mut order = vec![0];
                order.extend(&rest);
                let r = Route::new(order).unwrap();
                let a = tour_length(&inst, &r).unwrap();
                let b = tour_length(&inst, &r.reversed()).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(a >= stats.l_min && a <= stats.l_max);
                if !next_permutation(&mut rest) { break; }
            }
        }

        #[test]
        fn rotation_preserves_closed_length(seed in 0u64..1000, shift in 0usize..6) {
            let inst = generate_instance(6, seed).unwrap();
            let order: Vec<usize> = vec![0, 3, 1, 5, 2, 4];
            let mut rotated = order.clone();
            rotated.rotate_left(shift);
            let a = closed_length(&inst, &order);
            let b = closed_length(&inst, &rotated);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
