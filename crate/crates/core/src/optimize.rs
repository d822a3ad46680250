//! Derivative-free optimizers for the variational loop.
//!
//! Every optimizer records each objective evaluation in an [`OptTrace`] and
//! never exceeds its evaluation budget.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptTrace {
    pub evaluations: Vec<Evaluation>,
    pub best_params: Vec<f64>,
    pub best_energy: f64,
}

impl OptTrace {
    fn new() -> Self {
        Self {
            evaluations: Vec::new(),
            best_params: Vec::new(),
            best_energy: f64::INFINITY,
        }
    }

    fn record(&mut self, params: &[f64], energy: f64) {
        if energy < self.best_energy || self.best_params.is_empty() {
            self.best_energy = energy;
            self.best_params = params.to_vec();
        }
        self.evaluations.push(Evaluation {
            params: params.to_vec(),
            energy,
        });
    }

    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.evaluations.iter().map(|e| e.energy).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.evaluations.iter().all(|e| e.energy.is_finite())
    }
}

/// Objective wrapper enforcing the evaluation budget.
struct Budgeted<F> {
    f: F,
    budget: usize,
    trace: OptTrace,
}

impl<F: FnMut(&[f64]) -> f64> Budgeted<F> {
    fn new(f: F, budget: usize) -> Self {
        Self {
            f,
            budget,
            trace: OptTrace::new(),
        }
    }

    fn remaining(&self) -> usize {
        self.budget - self.trace.len()
    }

    fn eval(&mut self, params: &[f64]) -> Option<f64> {
        if self.remaining() == 0 {
            return None;
        }
        let e = (self.f)(params);
        self.trace.record(params, e);
        Some(e)
    }
}

fn check_arity(init: &[f64]) -> Result<()> {
    if init.is_empty() {
        return Err(Error::invalid("objective must have at least one parameter"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NftOptions {
    pub max_sweeps: usize,
    pub budget: usize,
    /// Re-measure the current point after this many coordinate updates
    /// instead of trusting the fitted minimum.
    pub reset_interval: usize,
}

impl Default for NftOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 1000,
            budget: 1024,
            reset_interval: 32,
        }
    }
}

/// Amplitudes below this are treated as a flat direction.
const FLAT_TOL: f64 = 1e-12;

/// Sequential single-parameter minimisation exploiting `a + b cos(theta - c)`
/// dependence on each rotation angle.
///
/// Per coordinate the objective is measured at `theta +- pi/2`; together with
/// the current value this fixes the sinusoid, and the coordinate jumps to its
/// minimum. The fitted minimum stands in for the current value until the next
/// reset. The final point is evaluated if budget remains.
pub fn nft_minimize<F>(f: F, init: &[f64], opts: NftOptions) -> Result<OptTrace>
where
    F: FnMut(&[f64]) -> f64,
{
    check_arity(init)?;
    let arity = init.len();
    let sweep_cost = 2 * arity + 1;
    if opts.budget < sweep_cost {
        return Err(Error::invalid(format!(
            "NFT budget {} is smaller than one sweep ({sweep_cost} evaluations)",
            opts.budget
        )));
    }
    let reset_interval = opts.reset_interval.max(1);
    let mut obj = Budgeted::new(f, opts.budget);
    let mut params = init.to_vec();
    let mut current = obj.eval(&params).unwrap();
    let mut since_reset = 0;

    'sweeps: for _ in 0..opts.max_sweeps {
        for k in 0..arity {
            let needs_reset = since_reset >= reset_interval;
            if obj.remaining() < 2 + needs_reset as usize {
                break 'sweeps;
            }
            if needs_reset {
                current = obj.eval(&params).unwrap();
                since_reset = 0;
            }
            let theta = params[k];
            params[k] = theta + FRAC_PI_2;
            let plus = obj.eval(&params).unwrap();
            params[k] = theta - FRAC_PI_2;
            let minus = obj.eval(&params).unwrap();

            let offset = (plus + minus) / 2.0;
            let cos_part = current - offset;
            let sin_part = (plus - minus) / 2.0;
            let amplitude = cos_part.hypot(sin_part);
            if amplitude > FLAT_TOL {
                // nearest minimiser, so a converged coordinate stays put
                let mut step = sin_part.atan2(cos_part) + PI;
                if step > PI {
                    step -= TAU;
                }
                params[k] = theta + step;
                current = offset - amplitude;
            } else {
                params[k] = theta;
            }
            since_reset += 1;
        }
    }
    obj.eval(&params);
    Ok(obj.trace)
}

/// Gain sequences `a_k = a / (k + 1 + A)^alpha`, `c_k = c / (k + 1)^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaGains {
    pub a: f64,
    pub c: f64,
    pub stability: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for SpsaGains {
    fn default() -> Self {
        Self {
            a: 0.2,
            c: 0.1,
            stability: 50.0,
            alpha: 0.602,
            gamma: 0.101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaOptions {
    pub iterations: usize,
    pub gains: SpsaGains,
    /// Rescale `a` so the first step moves about `2 pi / 10`, estimated
    /// from this many gradient samples at the start point (0 = off).
    pub calibration_steps: usize,
}

impl Default for SpsaOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            gains: SpsaGains::default(),
            calibration_steps: 0,
        }
    }
}

const CALIBRATION_TARGET: f64 = TAU / 10.0;

fn rademacher(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

fn perturbed(params: &[f64], delta: &[f64], scale: f64) -> Vec<f64> {
    params
        .iter()
        .zip(delta)
        .map(|(p, d)| p + scale * d)
        .collect()
}

/// Simultaneous-perturbation stochastic approximation.
pub fn spsa_minimize<F>(f: F, init: &[f64], opts: SpsaOptions, seed: u64) -> Result<OptTrace>
where
    F: FnMut(&[f64]) -> f64,
{
    check_arity(init)?;
    let budget = 2 * (opts.iterations + opts.calibration_steps) + 1;
    let mut obj = Budgeted::new(f, budget);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gains = opts.gains;
    let mut params = init.to_vec();

    if opts.calibration_steps > 0 {
        let mut magnitude = 0.0;
        for _ in 0..opts.calibration_steps {
            let delta = rademacher(&mut rng, params.len());
            let up = obj.eval(&perturbed(&params, &delta, gains.c)).unwrap();
            let down = obj.eval(&perturbed(&params, &delta, -gains.c)).unwrap();
            magnitude += (up - down).abs() / (2.0 * gains.c);
        }
        magnitude /= opts.calibration_steps as f64;
        if magnitude > FLAT_TOL {
            gains.a = CALIBRATION_TARGET / magnitude * (gains.stability + 1.0).powf(gains.alpha);
        }
    }

    for k in 0..opts.iterations {
        let ak = gains.a / (k as f64 + 1.0 + gains.stability).powf(gains.alpha);
        let ck = gains.c / (k as f64 + 1.0).powf(gains.gamma);
        let delta = rademacher(&mut rng, params.len());
        let up = obj.eval(&perturbed(&params, &delta, ck)).unwrap();
        let down = obj.eval(&perturbed(&params, &delta, -ck)).unwrap();
        let slope = (up - down) / (2.0 * ck);
        for (p, d) in params.iter_mut().zip(&delta) {
            *p -= ak * slope * d;
        }
    }
    obj.eval(&params);
    Ok(obj.trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    pub budget: usize,
    pub initial_step: f64,
    pub diameter_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            budget: 1000,
            initial_step: 0.5,
            diameter_tol: 1e-6,
        }
    }
}

/// Downhill simplex with reflection 1, expansion 2, contraction 1/2 and
/// shrink 1/2. A reflected point no worse than the second-worst vertex is
/// accepted, so flat regions are traversed rather than collapsed.
pub fn nelder_mead_minimize<F>(f: F, init: &[f64], opts: NelderMeadOptions) -> Result<OptTrace>
where
    F: FnMut(&[f64]) -> f64,
{
    check_arity(init)?;
    let dim = init.len();
    let mut obj = Budgeted::new(f, opts.budget);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    for i in 0..=dim {
        let mut x = init.to_vec();
        if i > 0 {
            x[i - 1] += opts.initial_step;
        }
        let Some(e) = obj.eval(&x) else {
            return Ok(obj.trace);
        };
        simplex.push((x, e));
    }

    let axpy = |a: &[f64], t: f64, b: &[f64]| -> Vec<f64> {
        // a + t (b - a)
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol {
            break;
        }
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let (worst, f_worst) = simplex[dim].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[dim - 1].1;

        let reflected = axpy(&centroid, -1.0, &worst);
        let Some(f_ref) = obj.eval(&reflected) else {
            break;
        };
        if f_ref < f_best {
            let expanded = axpy(&centroid, -2.0, &worst);
            let Some(f_exp) = obj.eval(&expanded) else {
                break;
            };
            simplex[dim] = if f_exp < f_ref {
                (expanded, f_exp)
            } else {
                (reflected, f_ref)
            };
            continue;
        }
        if f_ref <= f_second {
            simplex[dim] = (reflected, f_ref);
            continue;
        }
        let outside = f_ref < f_worst;
        let candidate = if outside {
            axpy(&centroid, 0.5, &reflected)
        } else {
            axpy(&centroid, 0.5, &worst)
        };
        let Some(f_con) = obj.eval(&candidate) else {
            break;
        };
        let accept = if outside {
            f_con <= f_ref
        } else {
            f_con < f_worst
        };
        if accept {
            simplex[dim] = (candidate, f_con);
            continue;
        }
        let mut exhausted = false;
        for vertex in simplex.iter_mut().skip(1) {
            let x = axpy(&best, 0.5, &vertex.0);
            match obj.eval(&x) {
                Some(e) => *vertex = (x, e),
                None => {
                    exhausted = true;
                    break;
                }
            }
        }
        if exhausted {
            break;
        }
    }
    Ok(obj.trace)
}

/// I.i.d. uniform angles in `[0, 2 pi)`.
pub fn random_initial_params(arity: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..arity).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// Optimizer selection as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Nft(#[serde(default)] NftOptions),
    Spsa(#[serde(default)] SpsaOptions),
    NelderMead(#[serde(default)] NelderMeadOptions),
    /// Scores the initial point only.
    None,
    Slsqp,
    Cg,
    Cobyla,
    Powell,
    Umda,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Nft(NftOptions::default())
    }
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Nft(_) => "nft",
            OptimizerConfig::Spsa(_) => "spsa",
            OptimizerConfig::NelderMead(_) => "nelder_mead",
            OptimizerConfig::None => "none",
            OptimizerConfig::Slsqp => "slsqp",
            OptimizerConfig::Cg => "cg",
            OptimizerConfig::Cobyla => "cobyla",
            OptimizerConfig::Powell => "powell",
            OptimizerConfig::Umda => "umda",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Nft(_)
            | OptimizerConfig::Spsa(_)
            | OptimizerConfig::NelderMead(_)
            | OptimizerConfig::None => Ok(()),
            other => Err(Error::Config(format!(
                "optimizer `{}` is not implemented",
                other.name()
            ))),
        }
    }

    /// Runs the optimizer; `seed` feeds the stochastic ones.
    pub fn minimize<F>(&self, f: F, init: &[f64], seed: u64) -> Result<OptTrace>
    where
        F: FnMut(&[f64]) -> f64,
    {
        match self {
            OptimizerConfig::Nft(o) => nft_minimize(f, init, *o),
            OptimizerConfig::Spsa(o) => spsa_minimize(f, init, *o, seed),
            OptimizerConfig::NelderMead(o) => nelder_mead_minimize(f, init, *o),
            OptimizerConfig::None => {
                check_arity(init)?;
                let mut obj = Budgeted::new(f, 1);
                obj.eval(init);
                Ok(obj.trace)
            }
            other => Err(Error::Config(format!(
                "optimizer `{}` is not implemented",
                other.name()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nft_cosine_in_one_update() {
        let opts = NftOptions {
            max_sweeps: 5,
            ..Default::default()
        };
        let trace = nft_minimize(|t| t[0].cos(), &[0.0], opts).unwrap();
        // initial, +pi/2, -pi/2, then probes around the new point
        assert_abs_diff_eq!(
            trace.evaluations[3].params[0],
            PI + FRAC_PI_2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(trace.best_energy, -1.0, epsilon = 1e-12);
        let last = trace.evaluations.last().unwrap();
        assert_abs_diff_eq!(last.params[0], PI, epsilon = 1e-12);
    }

    #[test]
    fn nft_fits_shifted_sinusoid() {
        for init in [-2.0, 0.0, 0.4, 3.0, 5.5] {
            let opts = NftOptions {
                max_sweeps: 1,
                ..Default::default()
            };
            let trace = nft_minimize(|t| 2.0 + 0.5 * (t[0] - 1.0).cos(), &[init], opts).unwrap();
            let fin = trace.evaluations.last().unwrap();
            let wrapped = (fin.params[0] - (1.0 + PI)).rem_euclid(TAU);
            assert!(
                wrapped.min(TAU - wrapped) < 1e-8,
                "init {init}: {}",
                fin.params[0]
            );
            assert_abs_diff_eq!(fin.energy, 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn nft_monotone_on_coupled_sinusoids() {
        // sinusoidal in each coordinate separately, but coupled
        let f = |t: &[f64]| {
            t[0].cos() + 0.7 * (t[1] - 0.3).sin() + 0.4 * t[0].sin() * t[2].cos()
                - 0.9 * (t[1] + t[2]).cos()
        };
        let opts = NftOptions {
            max_sweeps: 5,
            budget: 1000,
            reset_interval: 1,
        };
        let trace = nft_minimize(f, &[0.1, 2.0, -1.0], opts).unwrap();
        // with resets every update the evaluated points are [z0, +, -] triples
        let measured: Vec<f64> = trace
            .evaluations
            .iter()
            .step_by(3)
            .map(|e| e.energy)
            .collect();
        for w in measured.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{measured:?}");
        }
    }

    #[test]
    fn nft_rejects_tiny_budget() {
        let opts = NftOptions {
            budget: 6,
            ..Default::default()
        };
        assert!(nft_minimize(|t| t[0] + t[1] + t[2], &[0.0; 3], opts).is_err());
        assert!(nft_minimize(|_| 0.0, &[], NftOptions::default()).is_err());
    }

    #[test]
    fn nft_respects_budget() {
        let opts = NftOptions {
            max_sweeps: 100,
            budget: 37,
            reset_interval: 4,
        };
        let trace = nft_minimize(|t| t.iter().map(|x| x.cos()).sum(), &[0.3; 5], opts).unwrap();
        assert!(trace.len() <= 37);
    }

    #[test]
    fn nft_flat_direction_stays_put() {
        let opts = NftOptions {
            max_sweeps: 5,
            ..Default::default()
        };
        let trace = nft_minimize(|t| t[0].cos(), &[0.2, 1.3], opts).unwrap();
        assert_eq!(trace.evaluations.last().unwrap().params[1], 1.3);
    }

    fn quadratic(target: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
        move |t| t.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn spsa_converges_on_quadratic() {
        let target = [1.0, -0.5, 2.0, 0.3];
        let trace =
            spsa_minimize(quadratic(&target), &[0.0; 4], SpsaOptions::default(), 7).unwrap();
        let fin = &trace.evaluations.last().unwrap().params;
        let dist: f64 = fin
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 0.1, "distance {dist}");
        assert_eq!(trace.len(), 2 * 500 + 1);
    }

    #[test]
    fn spsa_is_seeded() {
        let target = [1.0, 2.0];
        let a = spsa_minimize(quadratic(&target), &[0.0; 2], SpsaOptions::default(), 3).unwrap();
        let b = spsa_minimize(quadratic(&target), &[0.0; 2], SpsaOptions::default(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spsa_zero_gain_never_moves() {
        let opts = SpsaOptions {
            iterations: 20,
            gains: SpsaGains {
                a: 0.0,
                ..Default::default()
            },
            calibration_steps: 0,
        };
        let trace = spsa_minimize(quadratic(&[1.0, 1.0]), &[0.5, -0.5], opts, 1).unwrap();
        assert_eq!(trace.evaluations.last().unwrap().params, vec![0.5, -0.5]);
    }

    #[test]
    fn spsa_calibration_sets_step() {
        let opts = SpsaOptions {
            iterations: 200,
            calibration_steps: 10,
            ..Default::default()
        };
        let f = |t: &[f64]| 300.0 * (t[0].cos() + t[1].cos());
        let trace = spsa_minimize(f, &[0.5, 0.5], opts, 5).unwrap();
        assert!(trace.best_energy < -590.0, "{}", trace.best_energy);
    }

    #[test]
    fn nelder_mead_convex() {
        let f = |t: &[f64]| (t[0] - 1.0).powi(2) + (t[1] + 2.0).powi(2);
        let trace = nelder_mead_minimize(f, &[0.0, 0.0], NelderMeadOptions::default()).unwrap();
        assert!((trace.best_params[0] - 1.0).abs() < 1e-3);
        assert!((trace.best_params[1] + 2.0).abs() < 1e-3);
        assert!(trace.len() < 1000);
    }

    #[test]
    fn nelder_mead_constant_runs_to_budget() {
        let trace =
            nelder_mead_minimize(|_| 4.2, &[0.0, 1.0, 2.0], NelderMeadOptions::default()).unwrap();
        assert_eq!(trace.len(), 1000);
        assert_eq!(trace.best_energy, 4.2);
    }

    #[test]
    fn nelder_mead_budget_bookkeeping() {
        for budget in [1, 2, 5, 17, 50] {
            let opts = NelderMeadOptions {
                budget,
                ..Default::default()
            };
            let trace =
                nelder_mead_minimize(|t| t[0].sin() + t[1].powi(2), &[1.0, 1.0], opts).unwrap();
            assert!(trace.len() <= budget);
        }
    }

    #[test]
    fn initial_params_uniform() {
        let p = random_initial_params(10_000, 42);
        assert!(p.iter().all(|x| (0.0..=TAU).contains(x)));
        assert_eq!(p, random_initial_params(10_000, 42));
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        let sigma = TAU / 12f64.sqrt() / (p.len() as f64).sqrt();
        assert!((mean - PI).abs() < 5.0 * sigma);
    }

    #[test]
    fn trace_best_is_minimum() {
        let trace = nft_minimize(
            |t| (t[0] * 3.0).sin() + t[1].cos(),
            &[0.1, 0.2],
            NftOptions::default(),
        )
        .unwrap();
        let min = trace.energies().into_iter().fold(f64::INFINITY, f64::min);
        assert_eq!(trace.best_energy, min);
    }

    #[test]
    fn reserved_optimizers_unimplemented() {
        for cfg in [
            OptimizerConfig::Slsqp,
            OptimizerConfig::Cobyla,
            OptimizerConfig::Umda,
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
            assert!(cfg.minimize(|_| 0.0, &[0.0], 0).is_err());
        }
        let parsed: OptimizerConfig =
            serde_json::from_str(r#"{"kind":"nft","budget":50}"#).unwrap();
        assert_eq!(
            parsed,
            OptimizerConfig::Nft(NftOptions {
                budget: 50,
                ..Default::default()
            })
        );
    }

    #[test]
    fn none_scores_initial_point_once() {
        let cfg: OptimizerConfig = serde_json::from_str(r#"{"kind":"none"}"#).unwrap();
        let trace = cfg.minimize(|t| t[0] + t[1], &[1.0, 2.0], 0).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.best_params, vec![1.0, 2.0]);
        assert_eq!(trace.best_energy, 3.0);
    }
}
