use std::collections::BTreeMap;

use jumpfbsde::catalog::{self, Problem};
use jumpfbsde::io::{self, RunConfig};
use jumpfbsde::solve_final_value;

fn problem(name: &str) -> Problem<f64> {
    catalog::build(name, &BTreeMap::new()).unwrap()
}

fn gradient_monitor(p: &Problem<f64>, nodes: usize, steps: usize) -> f64 {
    let config = p.solver_config(nodes, steps, None).unwrap();
    let (field, _) = solve_final_value(&p.spec, &config, p.constants).unwrap();
    (0..=field.steps()).map(|j| field.gradient_sup_norm(j)).fold(0.0, f64::max)
}

#[test]
fn heat_sweep_error_ratio_is_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        problem: "heat".into(),
        paths: Some(20),
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let p = config.problem().unwrap();
    let rows = io::sweep(&config, &io::resolve_ladder(&config, &p)).unwrap();
    assert_eq!(rows.len(), 2);
    let ratio = rows[1].error_ratio.unwrap();
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn manufactured_error_is_non_increasing_along_ladder() {
    let p = problem("manufactured-nonlocal");
    let oracle = p.oracle.as_ref().unwrap();
    assert!(p.ladder.len() >= 3);
    let errors: Vec<f64> = p
        .ladder
        .iter()
        .map(|r| {
            let config = p.solver_config(r.nodes, r.steps, None).unwrap();
            let (field, _) = solve_final_value(&p.spec, &config, p.constants).unwrap();
            io::oracle_error(&field, oracle)
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0], "{errors:?}");
    }
}

#[test]
fn gradient_monitor_stays_bounded_under_refinement() {
    for name in catalog::names() {
        let p = problem(&name);
        let coarse = p.ladder.first().unwrap();
        let fine = p.ladder.last().unwrap();
        let g0 = gradient_monitor(&p, coarse.nodes, coarse.steps);
        let g1 = gradient_monitor(&p, fine.nodes, fine.steps);
        assert!(g1.is_finite() && g1 <= 2.0 * g0, "{name}: {g0} -> {g1}");
    }
}
