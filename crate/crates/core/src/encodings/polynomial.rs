use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, MulAssign};

use crate::error::{Error, Result};

/// Coefficients smaller than this in magnitude are dropped after arithmetic.
pub const PRUNE_TOL: f64 = 1e-12;

/// Multilinear polynomial over binary variables.
///
/// Each term is a sorted, duplicate-free set of variable indices; `x * x`
/// collapses to `x`. The empty set is the constant term.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinaryPolynomial {
    num_vars: usize,
    terms: BTreeMap<Vec<usize>, f64>,
}

impl BinaryPolynomial {
    pub fn zero(num_vars: usize) -> Self {
        Self {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(&[], c);
        p
    }

    pub fn variable(num_vars: usize, var: usize) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(&[var], 1.0);
        p
    }

    /// `1 - x`
    pub fn complement(num_vars: usize, var: usize) -> Self {
        let mut p = Self::constant(num_vars, 1.0);
        p.add_term(&[var], -1.0);
        p
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.terms.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn coefficient(&self, vars: &[usize]) -> f64 {
        let key = canonical(vars);
        self.terms.get(&key).copied().unwrap_or(0.0)
    }

    /// Adds `coeff * prod(vars)`. Panics if a variable is out of range.
    pub fn add_term(&mut self, vars: &[usize], coeff: f64) {
        let key = canonical(vars);
        if let Some(&v) = key.last() {
            assert!(v < self.num_vars, "variable {v} out of range");
        }
        let slot = self.terms.entry(key).or_insert(0.0);
        *slot += coeff;
        if slot.abs() < PRUNE_TOL {
            let key = canonical(vars);
            self.terms.remove(&key);
        }
    }

    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.abs() >= tol);
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self *= factor;
        self
    }

    /// Value at an assignment; `bits[i]` is variable `i`.
    pub fn evaluate(&self, bits: &[bool]) -> Result<f64> {
        if bits.len() < self.num_vars {
            return Err(Error::invalid(format!(
                "assignment has {} bits, polynomial needs {}",
                bits.len(),
                self.num_vars
            )));
        }
        Ok(self
            .terms
            .iter()
            .filter(|(vars, _)| vars.iter().all(|&v| bits[v]))
            .map(|(_, c)| c)
            .sum())
    }

    /// Terms as `(bitmask, coefficient)`; variable `i` is bit `i`.
    pub fn term_masks(&self) -> Result<Vec<(u64, f64)>> {
        if self.num_vars > 64 {
            return Err(Error::ResourceLimit(format!(
                "bitmask form needs <= 64 variables, have {}",
                self.num_vars
            )));
        }
        Ok(self
            .terms
            .iter()
            .map(|(vars, &c)| (vars.iter().fold(0u64, |m, &v| m | (1 << v)), c))
            .collect())
    }

    /// Text dump, one `coeff: i1,i2,...` line per term in canonical order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (vars, c) in &self.terms {
            let idx: Vec<String> = vars.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{c}: {}", idx.join(","));
        }
        out
    }

    /// Inverse of [`dump`](Self::dump).
    pub fn parse_dump(num_vars: usize, text: &str) -> Result<Self> {
        let mut p = Self::zero(num_vars);
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::invalid(format!("line {}: malformed term `{line}`", lineno + 1));
            let (coeff, vars) = line.split_once(':').ok_or_else(bad)?;
            let coeff: f64 = coeff.trim().parse().map_err(|_| bad())?;
            let vars = vars.trim();
            let vars: Vec<usize> = if vars.is_empty() {
                Vec::new()
            } else {
                vars.split(',')
                    .map(|v| v.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            };
            if vars.iter().any(|&v| v >= num_vars) {
                return Err(bad());
            }
            p.add_term(&vars, coeff);
        }
        Ok(p)
    }
}

fn canonical(vars: &[usize]) -> Vec<usize> {
    let mut key = vars.to_vec();
    key.sort_unstable();
    key.dedup();
    key
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl AddAssign<&BinaryPolynomial> for BinaryPolynomial {
    fn add_assign(&mut self, rhs: &BinaryPolynomial) {
        self.num_vars = self.num_vars.max(rhs.num_vars);
        for (vars, &c) in &rhs.terms {
            *self.terms.entry(vars.clone()).or_insert(0.0) += c;
        }
        self.prune(PRUNE_TOL);
    }
}

impl AddAssign for BinaryPolynomial {
    fn add_assign(&mut self, rhs: BinaryPolynomial) {
        *self += &rhs;
    }
}

impl Add for BinaryPolynomial {
    type Output = BinaryPolynomial;
    fn add(mut self, rhs: BinaryPolynomial) -> BinaryPolynomial {
        self += &rhs;
        self
    }
}

impl Mul for &BinaryPolynomial {
    type Output = BinaryPolynomial;
    fn mul(self, rhs: &BinaryPolynomial) -> BinaryPolynomial {
        let mut out = BinaryPolynomial::zero(self.num_vars.max(rhs.num_vars));
        for (a, &ca) in &self.terms {
            for (b, &cb) in &rhs.terms {
                *out.terms.entry(union(a, b)).or_insert(0.0) += ca * cb;
            }
        }
        out.prune(PRUNE_TOL);
        out
    }
}

impl Mul for BinaryPolynomial {
    type Output = BinaryPolynomial;
    fn mul(self, rhs: BinaryPolynomial) -> BinaryPolynomial {
        &self * &rhs
    }
}

impl MulAssign<f64> for BinaryPolynomial {
    fn mul_assign(&mut self, rhs: f64) {
        for c in self.terms.values_mut() {
            *c *= rhs;
        }
        self.prune(PRUNE_TOL);
    }
}
