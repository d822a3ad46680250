use std::sync::Arc;

use tspvqa::encodings::{EncodingScheme, Scheme};
use tspvqa::hamiltonian::{lower, CostFunction};
use tspvqa::metrics::StateRoutes;
use tspvqa::optimize::{NftOptions, OptimizerConfig};
use tspvqa::runner::{
    self, read_summary, scan_landscape_cmd, Algorithm, AxesChoice, InstanceSource, MatrixConfig,
    RunConfig, RunRecord, SUMMARY_FILE,
};
use tspvqa::simulator::Variational;
use tspvqa::tsp::generate_instance;

fn quick(n: usize, scheme: Scheme, algorithm: Algorithm) -> RunConfig {
    let mut cfg = RunConfig::new(InstanceSource::Generate { n, seed: 3 }, scheme, algorithm);
    cfg.restarts = 2;
    cfg.optimizer = OptimizerConfig::Nft(NftOptions {
        budget: 40,
        ..Default::default()
    });
    cfg
}

#[test]
fn infeasible_states_cost_more_than_the_shortest_tour() {
    for n in [4, 5] {
        for seed in 0..5 {
            let inst = generate_instance(n, seed).unwrap();
            for scheme in [Scheme::Qubo, Scheme::Hobo] {
                let enc = EncodingScheme::with_default_penalty(scheme, n).unwrap();
                let table = lower(&enc.polynomial(&inst).unwrap().unwrap(), enc.num_qubits())
                    .unwrap()
                    .table()
                    .unwrap()
                    .to_vec();
                let routes = StateRoutes::new(&enc, &inst).unwrap();
                let (mut feasible_min, mut infeasible_min) = (f64::MAX, f64::MAX);
                for (s, &e) in table.iter().enumerate() {
                    match routes.length(s) {
                        Some(len) => {
                            assert!((e - len).abs() < 1e-9);
                            feasible_min = feasible_min.min(e);
                        }
                        None => infeasible_min = infeasible_min.min(e),
                    }
                }
                assert!(infeasible_min > feasible_min, "{scheme} n={n} seed={seed}");
            }
        }
    }
}

#[test]
fn run_writes_record_and_appends_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(4, Scheme::Hobo, Algorithm::Vqe);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let first = runner::run_experiment(&cfg).unwrap();
    cfg.seed = 1;
    runner::run_experiment(&cfg).unwrap();

    let stored = RunRecord::load(&dir.path().join(first.file_name())).unwrap();
    assert_eq!(
        stored.canonical_json().unwrap(),
        first.canonical_json().unwrap()
    );
    assert_eq!(stored.restarts.len(), 2);
    assert!(stored
        .restarts
        .iter()
        .all(|r| r.best_energy >= stored.e_min - 1e-9));

    let rows = read_summary(&dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].n, 4);
    assert_eq!(rows[0].scheme, Scheme::Hobo);
    assert_eq!(rows[0].algorithm, "vqe");
    assert_eq!(rows[0].r_f_mean, first.aggregate.r_f_mean);
}

#[test]
fn restart_energies_never_increase_in_best_so_far() {
    let rec = runner::execute_run(&quick(4, Scheme::Qubo, Algorithm::qaoa())).unwrap();
    for r in &rec.restarts {
        let best = r.energies.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(best, r.best_energy);
        let m = r.metrics.unwrap();
        assert!((0.0..=1.0).contains(&m.r_f));
        assert_eq!((m.e_min, m.e_max), (rec.e_min, rec.e_max));
        assert!((0.0..=1.0).contains(&m.r_ell));
    }
}

#[test]
fn landscape_of_a_stored_restart() {
    let rec = runner::execute_run(&quick(4, Scheme::Qubo, Algorithm::qaoa())).unwrap();
    let land = scan_landscape_cmd(&rec, 1, AxesChoice::Explicit(0, 2), 16).unwrap();
    assert_eq!(land.grid.len(), 16);
    assert_eq!(land.energies.len(), 16);
    assert!(land.energies.iter().all(|row| row.len() == 16));

    // spot-check cells against a direct evaluation
    let inst = generate_instance(4, 3).unwrap();
    let enc = EncodingScheme::with_default_penalty(Scheme::Qubo, 4).unwrap();
    let cost: Arc<dyn CostFunction> =
        Arc::new(lower(&enc.polynomial(&inst).unwrap().unwrap(), enc.num_qubits()).unwrap());
    let ansatz = Variational::qaoa(cost, 2);
    for (a, b) in [(0, 0), (3, 11), (15, 7)] {
        let mut theta = rec.restarts[1].best_params.clone();
        theta[0] = land.grid[a];
        theta[2] = land.grid[b];
        let direct = ansatz.energy(&theta).unwrap();
        assert!((direct - land.energies[a][b]).abs() < 1e-9);
    }

    let mut csv = Vec::new();
    land.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("theta_k1,theta_k2,energy"));
    assert_eq!(text.lines().count(), 1 + 16 * 16);

    assert!(scan_landscape_cmd(&rec, 9, AxesChoice::Seeded(0), 16).is_err());
    assert!(scan_landscape_cmd(&rec, 0, AxesChoice::Explicit(1, 1), 16).is_err());
}

#[test]
fn matrix_over_two_instances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: MatrixConfig = serde_json::from_value(serde_json::json!({
        "instances": [
            {"generate": {"n": 4, "seed": 0}},
            {"generate": {"n": 4, "seed": 1}}
        ],
        "optimizer": {"kind": "nft", "budget": 60},
        "restarts": 2,
        "output_dir": dir.path(),
    }))
    .unwrap();
    let outcome = runner::run_matrix(&cfg).unwrap();
    assert!(outcome.failures.is_empty());
    // three schemes with VQE, two with QAOA
    assert_eq!(outcome.records.len(), 10);
    let rows = read_summary(&dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(rows, outcome.summary());
    assert!(rows
        .iter()
        .all(|r| r.scheme != Scheme::Permutation || r.algorithm == "vqe"));
    let written = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension() == Some("json".as_ref()))
        .count();
    assert_eq!(written, 10);
}

#[test]
fn matrix_without_instances_is_empty() {
    let cfg: MatrixConfig = serde_json::from_str(r#"{"instances": []}"#).unwrap();
    let outcome = runner::run_matrix(&cfg).unwrap();
    assert!(outcome.records.is_empty() && outcome.failures.is_empty());
}

#[test]
fn oversized_cell_is_reported_not_fatal() {
    let cfg: MatrixConfig = serde_json::from_value(serde_json::json!({
        "instances": [{"generate": {"n": 6, "seed": 0}}],
        "schemes": ["qubo", "permutation"],
        "algorithms": [{"kind": "vqe"}],
        "optimizer": {"kind": "nft", "budget": 60},
        "restarts": 1,
    }))
    .unwrap();
    let outcome = runner::run_matrix(&cfg).unwrap();
    assert_eq!(outcome.records.len(), 1);
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].scheme, Scheme::Qubo);
}
