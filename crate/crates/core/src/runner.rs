//! Experiment orchestration: run configurations, restarts, persistence and
//! summary tables.
//!
//! A run builds one encoding of one instance, draws a seed per restart from
//! the master seed, optimises every restart independently and reports the
//! metrics of each final state. Exact-mode runs are bit-for-bit reproducible.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::encodings::{EncodingScheme, Scheme};
use crate::error::{Error, Result};
use crate::hamiltonian::{energy_bounds, lower, ClassicalObjective, CostFunction};
use crate::metrics::{self, Landscape, MetricReport, StateRoutes};
use crate::optimize::{random_initial_params, OptimizerConfig};
use crate::par;
use crate::simulator::{max_qubits, sample_probabilities, Variational, MAX_QUBITS_ENV};
use crate::tsp::{brute_force_stats, generate_instance, InstanceFile, TourStats, TspInstance};

/// Runs above this many qubits need `allow_large`.
pub const LARGE_QUBITS: usize = 20;

pub const DEFAULT_RESTARTS: usize = 40;
pub const DEFAULT_QAOA_DEPTH: usize = 2;
pub const SUMMARY_FILE: &str = "summary.csv";

/// Number of most likely states listed in a distribution digest.
const TOP_STATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Path(PathBuf),
    Generate { n: usize, seed: u64 },
}

impl InstanceSource {
    pub fn resolve(&self) -> Result<TspInstance> {
        match self {
            InstanceSource::Path(p) => TspInstance::load(p),
            InstanceSource::Generate { n, seed } => generate_instance(*n, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    Vqe,
    Qaoa {
        #[serde(default = "default_depth")]
        p: usize,
    },
}

fn default_depth() -> usize {
    DEFAULT_QAOA_DEPTH
}

impl Algorithm {
    pub fn qaoa() -> Self {
        Algorithm::Qaoa {
            p: DEFAULT_QAOA_DEPTH,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Vqe => "vqe",
            Algorithm::Qaoa { .. } => "qaoa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Exact,
    /// Energies and metrics estimated from `count` measured shots.
    Shots { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: InstanceSource,
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    /// Falls back to the scheme default when absent.
    #[serde(default)]
    pub penalty: Option<f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub allow_large: bool,
}

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

impl RunConfig {
    pub fn new(instance: InstanceSource, scheme: Scheme, algorithm: Algorithm) -> Self {
        Self {
            instance,
            scheme,
            algorithm,
            penalty: None,
            optimizer: OptimizerConfig::default(),
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            mode: Mode::Exact,
            output_dir: None,
            workers: None,
            allow_large: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn penalty(&self) -> f64 {
        self.penalty.unwrap_or(self.scheme.default_penalty())
    }

    pub fn validate(&self) -> Result<()> {
        check_combination(self.scheme, self.algorithm)?;
        self.optimizer.validate()?;
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be positive".into()));
        }
        if let Mode::Shots { count: 0 } = self.mode {
            return Err(Error::Config("shot count must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }
}

fn check_combination(scheme: Scheme, algorithm: Algorithm) -> Result<()> {
    if let Algorithm::Qaoa { p } = algorithm {
        if !scheme.has_hamiltonian() {
            return Err(Error::Config(
                "QAOA needs a cost Hamiltonian, which the permutation encoding does not provide"
                    .into(),
            ));
        }
        if p == 0 {
            return Err(Error::Config("QAOA depth must be positive".into()));
        }
    }
    Ok(())
}

/// Everything needed to evaluate one encoding of one instance.
pub struct Problem {
    pub instance: TspInstance,
    pub encoding: EncodingScheme,
    pub variational: Variational,
    pub stats: TourStats,
    pub routes: StateRoutes,
    pub energy_bounds: (f64, f64),
}

impl Problem {
    pub fn build(
        instance: TspInstance,
        scheme: Scheme,
        algorithm: Algorithm,
        penalty: f64,
        allow_large: bool,
    ) -> Result<Self> {
        check_combination(scheme, algorithm)?;
        let encoding = EncodingScheme::new(scheme, instance.n(), penalty)?;
        let q = encoding.num_qubits();
        let cap = max_qubits();
        if q > cap {
            return Err(Error::ResourceLimit(format!(
                "{q} qubits exceed the simulator cap of {cap} (set {MAX_QUBITS_ENV} to raise it)"
            )));
        }
        if q > LARGE_QUBITS && !allow_large {
            return Err(Error::ResourceLimit(format!(
                "{q} qubits need allow_large (--allow-large on the command line)"
            )));
        }
        let cost: Arc<dyn CostFunction> = match encoding.polynomial(&instance)? {
            Some(poly) => Arc::new(lower(&poly, q)?),
            None => Arc::new(ClassicalObjective::permutation(&instance)?),
        };
        let energy_bounds = energy_bounds(cost.as_ref());
        let variational = match algorithm {
            Algorithm::Vqe => Variational::vqe(cost),
            Algorithm::Qaoa { p } => Variational::qaoa(cost, p),
        };
        let stats = brute_force_stats(&instance)?;
        let routes = StateRoutes::new(&encoding, &instance)?;
        Ok(Self {
            instance,
            encoding,
            variational,
            stats,
            routes,
            energy_bounds,
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::build(
            cfg.instance.resolve()?,
            cfg.scheme,
            cfg.algorithm,
            cfg.penalty(),
            cfg.allow_large,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopState {
    pub state: usize,
    pub probability: f64,
    /// Decoded route, absent for infeasible states.
    pub route: Option<String>,
}

/// Compact fingerprint of a final distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDigest {
    /// SHA-256 of the probabilities as little-endian `f64`s.
    pub sha256: String,
    pub top_states: Vec<TopState>,
}

impl DistributionDigest {
    fn new(probs: &[f64], enc: &EncodingScheme) -> Self {
        let mut hasher = Sha256::new();
        for p in probs {
            hasher.update(p.to_le_bytes());
        }
        let sha256 = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let top_states = order
            .into_iter()
            .take(TOP_STATES)
            .map(|state| TopState {
                state,
                probability: probs[state],
                route: enc.decode_state(state).route().map(ToString::to_string),
            })
            .collect();
        Self { sha256, top_states }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub seed: u64,
    pub initial_params: Vec<f64>,
    pub best_params: Vec<f64>,
    #[serde(deserialize_with = "nullable_f64")]
    pub best_energy: f64,
    /// Every objective value in evaluation order.
    #[serde(deserialize_with = "nullable_vec")]
    pub energies: Vec<f64>,
    pub digest: Option<DistributionDigest>,
    pub metrics: Option<MetricReport>,
    /// Set when the optimizer produced a non-finite energy.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub r_f_mean: Option<f64>,
    pub r_f_std: Option<f64>,
    pub r_ell_mean: Option<f64>,
    pub r_ell_std: Option<f64>,
    pub restarts: usize,
    pub failures: usize,
}

impl Aggregate {
    /// Mean and sample standard deviation over the restarts that did not fail.
    pub fn from_restarts(restarts: &[RestartRecord]) -> Self {
        let ok: Vec<&MetricReport> = restarts
            .iter()
            .filter(|r| !r.failed)
            .filter_map(|r| r.metrics.as_ref())
            .collect();
        let stat = |f: fn(&MetricReport) -> f64| {
            if ok.is_empty() {
                return (None, None);
            }
            let values: Vec<f64> = ok.iter().map(|m| f(m)).collect();
            let (mean, std) = metrics::mean_std(&values);
            (Some(mean), Some(std))
        };
        let (r_f_mean, r_f_std) = stat(|m| m.r_f);
        let (r_ell_mean, r_ell_std) = stat(|m| m.r_ell);
        Self {
            r_f_mean,
            r_f_std,
            r_ell_mean,
            r_ell_std,
            restarts: restarts.len(),
            failures: restarts.len() - ok.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub penalty: f64,
    pub instance: InstanceFile,
    pub num_qubits: usize,
    pub num_params: usize,
    pub tour_stats: TourStats,
    #[serde(deserialize_with = "nullable_f64")]
    pub e_min: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub e_max: f64,
    pub restarts: Vec<RestartRecord>,
    pub aggregate: Aggregate,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// JSON with the wall-clock time zeroed, for comparing reruns.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_clock_seconds = 0.0;
        Ok(serde_json::to_string(&copy)?)
    }

    pub fn n(&self) -> usize {
        self.instance.n
    }

    /// `i<seed>` for generated instances, else a short coordinate hash.
    pub fn instance_tag(&self) -> String {
        if let Some(seed) = self.instance.seed {
            return format!("i{seed}");
        }
        let mut hasher = Sha256::new();
        for c in self.instance.coords.iter().flatten() {
            hasher.update(c.to_le_bytes());
        }
        let hex: String = hasher.finalize()[..4]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        format!("h{hex}")
    }

    pub fn file_name(&self) -> String {
        format!(
            "run_n{}_{}_{}_{}_seed{}.json",
            self.n(),
            self.instance_tag(),
            self.config.scheme,
            self.config.algorithm.label(),
            self.config.seed
        )
    }
}

// serde_json writes non-finite floats as null
fn nullable_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn nullable_vec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let raw = Vec::<Option<f64>>::deserialize(d)?;
    Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

/// Seeds for restarts `0..count`, drawn in order from the master seed.
pub fn restart_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Runs a single restart; `seed` fixes initial parameters and all sampling.
pub fn run_restart(
    problem: &Problem,
    optimizer: &OptimizerConfig,
    mode: Mode,
    index: usize,
    seed: u64,
) -> Result<RestartRecord> {
    let v = &problem.variational;
    let initial_params = random_initial_params(v.num_params(), seed);
    let mut shot_rng = ChaCha8Rng::seed_from_u64(seed);
    shot_rng.set_stream(1);
    let objective = |p: &[f64]| {
        let e = match mode {
            Mode::Exact => v.energy(p),
            Mode::Shots { count } => v.sampled_energy(p, count, shot_rng.next_u64()),
        };
        e.unwrap_or(f64::NAN)
    };
    let trace = optimizer.minimize(objective, &initial_params, seed)?;
    let failed = !trace.all_finite() || !trace.best_energy.is_finite();
    let (digest, metrics) = if failed {
        (None, None)
    } else {
        let probs = v.probabilities(&trace.best_params)?;
        let dist = match mode {
            Mode::Exact => probs,
            Mode::Shots { count } => {
                let shots = sample_probabilities(&probs, count, shot_rng.next_u64())?;
                metrics::empirical_distribution(&shots, probs.len())?
            }
        };
        let report = metrics::metric_report(
            &dist,
            &problem.routes,
            &problem.stats,
            problem.energy_bounds,
        )?;
        (
            Some(DistributionDigest::new(&dist, &problem.encoding)),
            Some(report),
        )
    };
    Ok(RestartRecord {
        index,
        seed,
        initial_params,
        energies: trace.energies(),
        best_params: trace.best_params,
        best_energy: trace.best_energy,
        digest,
        metrics,
        failed,
    })
}

/// Runs every restart of `cfg` without touching the filesystem.
pub fn execute_run(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = Problem::from_config(cfg)?;
    let seeds = restart_seeds(cfg.seed, cfg.restarts);
    let restarts = par::with_workers(cfg.workers, || {
        par::map_tasks(seeds.len(), |i| {
            run_restart(&problem, &cfg.optimizer, cfg.mode, i, seeds[i])
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate::from_restarts(&restarts);
    Ok(RunRecord {
        config: cfg.clone(),
        penalty: problem.encoding.penalty,
        instance: problem.instance.to_file(),
        num_qubits: problem.encoding.num_qubits(),
        num_params: problem.variational.num_params(),
        tour_stats: problem.stats,
        e_min: problem.energy_bounds.0,
        e_max: problem.energy_bounds.1,
        restarts,
        aggregate,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `cfg`; with an output directory, writes the record JSON and appends
/// a row to the summary CSV there.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunRecord> {
    let record = execute_run(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        persist(&record, dir)?;
    }
    Ok(record)
}

fn persist(record: &RunRecord, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(record.file_name());
    record.save(&path)?;
    append_summary(&dir.join(SUMMARY_FILE), &[SummaryRow::from_record(record)])?;
    Ok(path)
}

/// One line of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub scheme: Scheme,
    pub algorithm: String,
    pub r_f_mean: Option<f64>,
    pub r_f_std: Option<f64>,
    pub r_ell_mean: Option<f64>,
    pub r_ell_std: Option<f64>,
    pub restarts: usize,
    pub failures: usize,
}

impl SummaryRow {
    pub fn from_record(record: &RunRecord) -> Self {
        let a = &record.aggregate;
        Self {
            n: record.n(),
            scheme: record.config.scheme,
            algorithm: record.config.algorithm.label().to_string(),
            r_f_mean: a.r_f_mean,
            r_f_std: a.r_f_std,
            r_ell_mean: a.r_ell_mean,
            r_ell_std: a.r_ell_std,
            restarts: a.restarts,
            failures: a.failures,
        }
    }
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let fresh = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if fresh {
        w.write_record([
            "n",
            "scheme",
            "algorithm",
            "r_f_mean",
            "r_f_std",
            "r_ell_mean",
            "r_ell_std",
            "restarts",
            "failures",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub instances: Vec<InstanceSource>,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "both_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Per-scheme penalty overrides.
    #[serde(default)]
    pub penalties: BTreeMap<Scheme, f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub allow_large: bool,
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn both_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Vqe, Algorithm::qaoa()]
}

impl MatrixConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Valid (instance, scheme, algorithm) cells in instance-major order.
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut cells = Vec::new();
        for inst in &self.instances {
            for &scheme in &self.schemes {
                for &algorithm in &self.algorithms {
                    if check_combination(scheme, algorithm).is_err() {
                        continue;
                    }
                    cells.push(RunConfig {
                        instance: inst.clone(),
                        scheme,
                        algorithm,
                        penalty: self.penalties.get(&scheme).copied(),
                        optimizer: self.optimizer.clone(),
                        restarts: self.restarts,
                        seed: self.seed,
                        mode: self.mode,
                        output_dir: None,
                        workers: None,
                        allow_large: self.allow_large,
                    });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub instance: InstanceSource,
    pub scheme: Scheme,
    pub algorithm: Algorithm,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<CellFailure>,
}

impl MatrixOutcome {
    pub fn summary(&self) -> Vec<SummaryRow> {
        self.records.iter().map(SummaryRow::from_record).collect()
    }
}

/// Runs every valid cell. A failing cell is reported and skipped; with an
/// output directory, records and the combined summary are written there.
pub fn run_matrix(cfg: &MatrixConfig) -> Result<MatrixOutcome> {
    cfg.optimizer.validate()?;
    let cells = cfg.cells();
    let results = par::with_workers(cfg.workers, || {
        par::map_tasks(cells.len(), |i| execute_run(&cells[i]))
    })?;
    let mut outcome = MatrixOutcome::default();
    for (cell, result) in cells.iter().zip(results) {
        match result {
            Ok(record) => outcome.records.push(record),
            Err(e) => outcome.failures.push(CellFailure {
                instance: cell.instance.clone(),
                scheme: cell.scheme,
                algorithm: cell.algorithm,
                error: e.to_string(),
            }),
        }
    }
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for record in &outcome.records {
            record.save(&dir.join(record.file_name()))?;
        }
        append_summary(&dir.join(SUMMARY_FILE), &outcome.summary())?;
        if !outcome.failures.is_empty() {
            let path = dir.join("failures.json");
            let text = serde_json::to_string_pretty(&outcome.failures)?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxesChoice {
    Explicit(usize, usize),
    /// Two distinct indices drawn from this seed.
    Seeded(u64),
}

/// Two distinct parameter indices below `arity` drawn from `seed`.
pub fn choose_axes(arity: usize, seed: u64) -> Result<(usize, usize)> {
    if arity < 2 {
        return Err(Error::invalid("landscape needs at least two parameters"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, arity, 2);
    Ok((picked.index(0), picked.index(1)))
}

/// Scans the energy around the optimised parameters of one restart.
pub fn scan_landscape_cmd(
    record: &RunRecord,
    restart: usize,
    axes: AxesChoice,
    resolution: usize,
) -> Result<Landscape> {
    let r = record
        .restarts
        .get(restart)
        .ok_or_else(|| Error::NotFound(format!("record has no restart {restart}")))?;
    if r.failed || r.best_params.is_empty() {
        return Err(Error::NotFound(format!(
            "restart {restart} has no stored optimal parameters"
        )));
    }
    let problem = Problem::build(
        TspInstance::from_file(record.instance.clone())?,
        record.config.scheme,
        record.config.algorithm,
        record.penalty,
        record.config.allow_large,
    )?;
    let axes = match axes {
        AxesChoice::Explicit(k1, k2) => (k1, k2),
        AxesChoice::Seeded(seed) => choose_axes(r.best_params.len(), seed)?,
    };
    metrics::landscape_scan(&problem.variational, &r.best_params, axes, resolution)
}
