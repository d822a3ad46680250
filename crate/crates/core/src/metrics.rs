//! Evaluation quantities: feasibility ratio, rescaled length ratio, trace
//! post-processing and two-parameter energy landscapes.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encodings::EncodingScheme;
use crate::error::{Error, Result};
use crate::hamiltonian::check_distribution;
use crate::par;
use crate::simulator::Variational;
use crate::tsp::{closed_length, TourStats, TspInstance};

/// Tour length of every basis state's decoded route (`None` if infeasible).
#[derive(Debug, Clone)]
pub struct StateRoutes {
    lengths: Vec<Option<f64>>,
}

impl StateRoutes {
    pub fn new(enc: &EncodingScheme, inst: &TspInstance) -> Result<Self> {
        if enc.n != inst.n() {
            return Err(Error::invalid("encoding and instance disagree on n"));
        }
        let dim = 1usize << enc.num_qubits();
        let lengths = par::map_indices(dim, |s| {
            enc.decode_state(s)
                .route()
                .map(|r| closed_length(inst, r.order()))
        });
        Ok(Self { lengths })
    }

    pub fn from_lengths(lengths: Vec<Option<f64>>) -> Self {
        Self { lengths }
    }

    pub fn dimension(&self) -> usize {
        self.lengths.len()
    }

    pub fn length(&self, state: usize) -> Option<f64> {
        self.lengths[state]
    }

    pub fn feasible_count(&self) -> usize {
        self.lengths.iter().filter(|l| l.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r_f: f64,
    pub r_ell: f64,
    /// Length ratio before linear rescaling.
    pub raw_r_ell: f64,
    pub e_min: f64,
    pub e_max: f64,
}

/// Turns measured outcomes into an empirical distribution over `dim` states.
pub fn empirical_distribution(shots: &[usize], dim: usize) -> Result<Vec<f64>> {
    if shots.is_empty() {
        return Err(Error::invalid("no shots"));
    }
    let mut probs = vec![0.0; dim];
    for &s in shots {
        *probs
            .get_mut(s)
            .ok_or_else(|| Error::invalid(format!("outcome {s} out of range")))? += 1.0;
    }
    let total = shots.len() as f64;
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Probability mass on feasible states.
pub fn feasibility_ratio(probs: &[f64], routes: &StateRoutes) -> Result<f64> {
    check_distribution(probs, routes.dimension())?;
    let (feasible, total) = masses(probs, routes);
    Ok(feasible / total)
}

/// Fraction of feasible shots.
pub fn feasibility_ratio_shots(shots: &[usize], routes: &StateRoutes) -> Result<f64> {
    if shots.is_empty() {
        return Err(Error::invalid("no shots"));
    }
    let mut feasible = 0usize;
    for &s in shots {
        if s >= routes.dimension() {
            return Err(Error::invalid(format!("outcome {s} out of range")));
        }
        feasible += routes.length(s).is_some() as usize;
    }
    Ok(feasible as f64 / shots.len() as f64)
}

/// Feasible and total probability. Both sums run the same reduction, so an
/// encoding without infeasible states gets a ratio of exactly 1.
fn masses(probs: &[f64], routes: &StateRoutes) -> (f64, f64) {
    let feasible = par::ordered_sum(probs.len(), |s| {
        if routes.length(s).is_some() {
            probs[s]
        } else {
            0.0
        }
    });
    (feasible, par::ordered_sum(probs.len(), |s| probs[s]))
}

fn check_stats(stats: &TourStats) -> Result<()> {
    if stats.l_min.is_nan()
        || stats.l_min <= 0.0
        || stats.l_max - stats.l_min <= 1e-12 * stats.l_max
    {
        return Err(Error::DegenerateInstance(format!(
            "length ratio undefined for l_min = {}, l_max = {}",
            stats.l_min, stats.l_max
        )));
    }
    Ok(())
}

/// Returns `(r_f, raw length ratio, rescaled length ratio)`.
fn ratios(probs: &[f64], routes: &StateRoutes, stats: &TourStats) -> Result<(f64, f64, f64)> {
    check_stats(stats)?;
    let (feasible, total) = masses(probs, routes);
    if feasible <= 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let r_f = feasible / total;
    let weighted = par::ordered_sum(probs.len(), |s| match routes.length(s) {
        Some(len) => probs[s] * stats.l_min / len,
        None => 0.0,
    });
    let raw = weighted / feasible;
    let floor = stats.l_min / stats.l_max;
    let rescaled = ((raw - floor) / (1.0 - floor)).clamp(0.0, 1.0);
    Ok((r_f, raw, rescaled))
}

/// Rescaled length ratio: 1 when all feasible mass sits on optimal routes,
/// 0 when it sits on the longest ones or when nothing is feasible.
pub fn length_ratio(probs: &[f64], routes: &StateRoutes, stats: &TourStats) -> Result<f64> {
    check_distribution(probs, routes.dimension())?;
    Ok(ratios(probs, routes, stats)?.2)
}

pub fn metric_report(
    probs: &[f64],
    routes: &StateRoutes,
    stats: &TourStats,
    energy_bounds: (f64, f64),
) -> Result<MetricReport> {
    check_distribution(probs, routes.dimension())?;
    let (r_f, raw_r_ell, r_ell) = ratios(probs, routes, stats)?;
    Ok(MetricReport {
        r_f,
        r_ell,
        raw_r_ell,
        e_min: energy_bounds.0,
        e_max: energy_bounds.1,
    })
}

/// Maps `e_min` to 0 and `e_max` to 1.
pub fn rescale_energy(energies: &[f64], e_min: f64, e_max: f64) -> Result<Vec<f64>> {
    if e_min.is_nan() || e_max.is_nan() || e_min >= e_max {
        return Err(Error::invalid(format!(
            "rescaling needs e_min < e_max, got {e_min} and {e_max}"
        )));
    }
    let span = e_max - e_min;
    Ok(energies.iter().map(|e| (e - e_min) / span).collect())
}

/// Prefix minimum.
pub fn moving_minimum(energies: &[f64]) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    let mut best = f64::INFINITY;
    Ok(energies
        .iter()
        .map(|&e| {
            best = best.min(e);
            best
        })
        .collect())
}

/// Sample mean and standard deviation (`n - 1` denominator, 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const DEFAULT_LANDSCAPE_RESOLUTION: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub axes: (usize, usize),
    /// Grid values shared by both axes: `2 pi i / resolution`.
    pub grid: Vec<f64>,
    /// `energies[a][b]` has `params[k1] = grid[a]`, `params[k2] = grid[b]`.
    pub energies: Vec<Vec<f64>>,
}

impl Landscape {
    pub fn resolution(&self) -> usize {
        self.grid.len()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "theta_k1,theta_k2,energy")?;
        for (a, row) in self.energies.iter().enumerate() {
            for (b, e) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", self.grid[a], self.grid[b], e)?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Energy over a `resolution x resolution` grid on `[0, 2 pi)^2` in two
/// parameters, the rest held at `base`.
pub fn landscape_scan(
    problem: &Variational,
    base: &[f64],
    axes: (usize, usize),
    resolution: usize,
) -> Result<Landscape> {
    let arity = problem.num_params();
    let (k1, k2) = axes;
    if base.len() != arity {
        return Err(Error::invalid(format!(
            "base point has {} parameters, ansatz takes {arity}",
            base.len()
        )));
    }
    if k1 == k2 || k1 >= arity || k2 >= arity {
        return Err(Error::invalid(format!(
            "axes ({k1}, {k2}) must be distinct indices below {arity}"
        )));
    }
    if resolution < 2 {
        return Err(Error::invalid("resolution must be at least 2"));
    }
    let grid: Vec<f64> = (0..resolution)
        .map(|i| TAU * i as f64 / resolution as f64)
        .collect();
    let cells = par::map_tasks(resolution * resolution, |cell| {
        let mut params = base.to_vec();
        params[k1] = grid[cell / resolution];
        params[k2] = grid[cell % resolution];
        problem.energy(&params)
    });
    let energies = cells
        .into_iter()
        .collect::<Result<Vec<f64>>>()?
        .chunks(resolution)
        .map(<[f64]>::to_vec)
        .collect();
    Ok(Landscape {
        axes,
        grid,
        energies,
    })
}
