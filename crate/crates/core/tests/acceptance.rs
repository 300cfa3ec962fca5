//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use jumpfbsde::catalog::{self, Problem};
use jumpfbsde::io::{self, Report, RunConfig, Stages};
use jumpfbsde::nonlocal::{eval_nonlocal, Grid, GridFunction};
use jumpfbsde::paths::{simulate_ensemble, simulate_forward, RngStream};
use jumpfbsde::pipeline::{ito_residual, link_processes, path_residual, run_ensemble, AnalyticTestFunction};
use jumpfbsde::problem::{LevyMeasure, ProblemSpec};
use jumpfbsde::solver::{check_max_principle, solve_final_value, BoundaryMode, SolutionField, SolverConfig};
use jumpfbsde::{integrate_over_nu, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn problem(name: &str) -> Problem<f64> {
    catalog::build(name, &BTreeMap::new()).expect("catalog entry")
}

/// Heat oracle e^{−(T−t)/2} sin x on 201 nodes, 400 steps, one thread, under 10 s.
fn heat_oracle() -> Outcome {
    let p = problem("heat");
    let config = p.solver_config(201, 400, None).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let (field, _) = pool.install(|| solve_final_value(&p.spec, &config, p.constants)).unwrap();
    let elapsed = start.elapsed();
    let err = io::oracle_error(&field, p.oracle.as_ref().unwrap());
    outcome(
        err <= 5e-3 && elapsed < Duration::from_secs(10),
        format!("L∞ error {err:.3e} (≤ 5e-3), {:.2}s single-threaded (< 10s)", elapsed.as_secs_f64()),
    )
}

/// Maximum principle on every catalog problem; a 10× field is flagged wherever c₁ = 0.
fn max_principle() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for e in catalog::CATALOG {
        let p = problem(e.name);
        let config = p.default_config().unwrap();
        let (field, diag) = solve_final_value(&p.spec, &config, p.constants).unwrap();
        let ok = check_max_principle(&field, &diag, p.constants);
        let mut line = format!("{}: sup {:.4} ≤ {:.4}", e.name, ok.observed, ok.bound);
        pass &= ok.pass;
        if p.constants.c1 == 0.0 {
            let scaled = check_max_principle(&field.scaled(10.0), &diag, p.constants);
            pass &= !scaled.pass;
            line.push_str(if scaled.pass { ", 10× NOT flagged" } else { ", 10× flagged" });
        }
        parts.push(line);
    }
    outcome(pass, parts.join("; "))
}

/// Manufactured solution θ* = e^{−t} cos x over (h, Δt) → (h/2, Δt/4), three rungs.
fn manufactured() -> Outcome {
    let p = problem("manufactured-nonlocal");
    let start = Instant::now();
    let errors: Vec<f64> = p
        .ladder
        .iter()
        .map(|r| {
            let config = p.solver_config(r.nodes, r.steps, None).unwrap();
            let (field, _) = solve_final_value(&p.spec, &config, p.constants).unwrap();
            io::oracle_error(&field, p.oracle.as_ref().unwrap())
        })
        .collect();
    let elapsed = start.elapsed();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let ratio = errors[errors.len() - 1] / errors[0];
    outcome(
        p.ladder.len() >= 3 && decreasing && ratio <= 0.15 && elapsed < Duration::from_secs(120),
        format!(
            "errors {:?}, final/first {ratio:.4} (≤ 0.15), {:.1}s",
            errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Affine exactness of ϑ_u and |∫ϑ_u dν| ≤ 2ν(Z) sup|u| on 10³ random fields.
fn nonlocal_operator() -> Outcome {
    let measure = LevyMeasure::scalar(&[(0.5, 0.7), (-0.3, 1.1), (0.2, 0.4)]).unwrap();
    let total = measure.total_mass();
    let spec = ProblemSpec::<f64>::builder(1, 1, 1.0, measure.clone())
        .jump(|_, x, _, y| vec![y[0] * (1.0 + 0.1 * x[0].sin())])
        .build()
        .unwrap();
    let grid = Grid::<f64>::uniform(1, -3.0, 3.0, 121).unwrap();
    let affine = GridFunction::from_fn(grid.clone(), 1, 0.0, |x| vec![2.5 * x[0] - 0.75]);
    let nl = eval_nonlocal(&affine, &spec, 0.0).unwrap();
    let mut affine_err: f64 = 0.0;
    for node in 0..grid.len() {
        let x = grid.node(node);
        // shifts stay inside the box away from the faces
        if x[0].abs() > 2.4 {
            continue;
        }
        for k in 0..measure.len() {
            let phi = measure.mark(k)[0] * (1.0 + 0.1 * x[0].sin());
            affine_err = affine_err.max((nl.at(node)[k] - 2.5 * phi).abs());
        }
    }
    let affine_ok = affine_err <= 16.0 * f64::EPSILON * 10.0;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let values: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let u = GridFunction::new(grid.clone(), 1, values, 0.0).unwrap();
        let sup = u.sup_norm();
        let nl = eval_nonlocal(&u, &spec, 0.0).unwrap();
        for node in 0..grid.len() {
            let integral = integrate_over_nu(&nl.table(node), &measure).unwrap()[0];
            worst = worst.max(integral.abs() - 2.0 * total * sup);
        }
    }
    outcome(
        affine_ok && worst <= 0.0,
        format!("affine error {affine_err:.2e}, worst |∫ϑ dν| − 2ν(Z)sup|u| = {worst:.3e}"),
    )
}

/// Compensated pure-jump martingale and Poisson jump counts.
fn martingale() -> Outcome {
    let rate = 2.0;
    let spec = ProblemSpec::<f64>::builder(1, 1, 1.0, LevyMeasure::scalar(&[(1.0, rate)]).unwrap())
        .diffusion(|_, _, _| Matrix::zeros(1, 1))
        .jump(|_, _, _, y| vec![y[0]])
        .build()
        .unwrap();
    let config = SolverConfig::new(Grid::<f64>::uniform(1, -10.0, 10.0, 201).unwrap(), 10)
        .with_boundary(BoundaryMode::Dirichlet(Arc::new(|_, _| vec![0.0])));
    let field = SolutionField::from_fn(&spec, &config, |_, _| vec![0.0]);
    let paths = simulate_ensemble(&field, &spec, &[0.0], 1e-3, 17, 10_000).unwrap();
    let xs: Vec<f64> = paths.iter().map(|p| p.terminal()[0]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let stderr = sd / n.sqrt();
    let mean_ok = mean.abs() <= 4.0 * stderr;

    // chi-square on counts 0..=K with the upper tail pooled, all expected cells ≥ 5
    let law = Poisson::new(rate).unwrap();
    let mut k_max = 0;
    while n * law.pmf(k_max) >= 5.0 && n * (1.0 - law.cdf(k_max)) >= 5.0 {
        k_max += 1;
    }
    let mut observed = vec![0.0; k_max as usize + 1];
    for p in &paths {
        observed[p.jumps.len().min(k_max as usize)] += 1.0;
    }
    let expected: Vec<f64> = (0..=k_max)
        .map(|k| if k == k_max { n * (1.0 - law.cdf(k - 1)) } else { n * law.pmf(k) })
        .collect();
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (observed.len() - 1) as f64;
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    outcome(
        mean_ok && p_value > 0.01,
        format!(
            "|mean X_T − x| = {:.3e} ≤ 4·stderr = {:.3e}; χ² = {stat:.2} on {dof} dof, p = {p_value:.3}",
            mean.abs(),
            4.0 * stderr
        ),
    )
}

/// Pure-Brownian linear case: backward residual exactly zero on 10³ paths.
fn link_exactness() -> Outcome {
    let p = problem("brownian-linear");
    let config = p.default_config().unwrap();
    let oracle = p.oracle.clone().unwrap();
    let field = SolutionField::from_fn(&p.spec, &config, move |t, x| oracle(t, x));
    let mut nonzero = 0;
    let mut link_exact = true;
    for i in 0..1000 {
        let path = simulate_forward(&field, &p.spec, &p.x0, p.path_dt(), RngStream::new(5, i)).unwrap();
        let linked = link_processes(&path, &field, &p.spec);
        link_exact &= path
            .times
            .iter()
            .zip(&path.states)
            .zip(&linked.y)
            .all(|((&t, x), y)| field.value_at(t, x) == *y);
        if path_residual(&linked, &p.spec)[0] != 0.0 {
            nonzero += 1;
        }
    }
    outcome(
        nonzero == 0 && link_exact,
        format!("{nonzero} of 1000 paths with R ≠ 0; Y_j = θ(t_j, X_j) bit-exact: {link_exact}"),
    )
}

/// Coupled-linear backward residual under Δt = T/250, T/500, T/1000 with 10⁴ paths.
fn residual_decay() -> Outcome {
    let p = problem("coupled-linear");
    let start = Instant::now();
    let config = p.default_config().unwrap();
    let (field, _) = solve_final_value(&p.spec, &config, p.constants).unwrap();
    let mut rms = Vec::new();
    for steps in [250, 500, 1000] {
        let dt = p.spec.horizon() / steps as f64;
        let ens = run_ensemble(&field, &p.spec, &p.x0, dt, 99, 10_000, 0).unwrap();
        rms.push(ens.report.rms);
    }
    let elapsed = start.elapsed();
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[0] / w[1]).collect();
    outcome(
        ratios.iter().all(|&r| r >= 1.3) && elapsed < Duration::from_secs(180),
        format!(
            "rms {:?}, ratios {:?} (≥ 1.3), {:.1}s",
            rms.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>(),
            ratios.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Jump Itô identity: linear test function with jumps, quadratic without.
fn ito_identity() -> Outcome {
    let jumps = ProblemSpec::<f64>::builder(1, 1, 1.0, LevyMeasure::scalar(&[(0.6, 1.5), (-0.4, 1.0)]).unwrap())
        .drift(|_, x, _, _, _| vec![0.3 * x[0].cos()])
        .diffusion(|_, x, _| Matrix::from_row_slice(1, 1, &[1.0 + 0.2 * x[0].sin()]))
        .jump(|_, x, _, y| vec![y[0] * (1.0 + 0.1 * x[0] * x[0]).sqrt()])
        .build()
        .unwrap();
    let config = SolverConfig::new(Grid::<f64>::uniform(1, -10.0, 10.0, 81).unwrap(), 10)
        .with_boundary(BoundaryMode::Dirichlet(Arc::new(|_, _| vec![0.0])));
    let field = SolutionField::from_fn(&jumps, &config, |_, _| vec![0.0]);
    let linear = AnalyticTestFunction::linear(vec![1.0]);
    let mut worst_linear: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..1000 {
        let path = simulate_forward(&field, &jumps, &[0.0], 1e-3, RngStream::new(31, i)).unwrap();
        scale = scale.max(path.states.iter().map(|x| x[0].abs()).fold(0.0, f64::max));
        worst_linear = worst_linear.max(ito_residual(&path, &field, &jumps, &linear).abs());
    }
    // rounding floor: a few ulps of the path scale per step
    let linear_ok = worst_linear <= 1e-12 * scale.max(1.0) * 1000.0_f64.sqrt();

    let plain = ProblemSpec::<f64>::builder(1, 1, 1.0, LevyMeasure::scalar(&[(1.0, 1.0)]).unwrap())
        .build()
        .unwrap();
    let field = SolutionField::from_fn(&plain, &config, |_, _| vec![0.0]);
    let quad = AnalyticTestFunction::squared_norm(1);
    let paths = simulate_ensemble(&field, &plain, &[0.5], 1e-3, 37, 10_000).unwrap();
    let r: Vec<f64> = paths.iter().map(|p| ito_residual(p, &field, &plain, &quad)).collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let stderr = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    outcome(
        linear_ok && mean.abs() <= 4.0 * stderr,
        format!(
            "linear with jumps: max |R| = {worst_linear:.2e}; quadratic: |mean R| = {:.3e} ≤ 4·stderr = {:.3e}",
            mean.abs(),
            4.0 * stderr
        ),
    )
}

/// Identical seeds give byte-identical paths.csv; report.json round-trips.
fn reproducibility() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut csvs = Vec::new();
    let mut idempotent = true;
    for dir in &dirs {
        let config = RunConfig {
            problem: "coupled-linear".into(),
            grid: Some(121),
            steps: Some(100),
            paths: Some(200),
            dt: Some(0.01),
            seed: 42,
            dump: 200,
            out: dir.path().to_path_buf(),
            stages: Stages {
                solve: true,
                simulate: true,
                verify: true,
            },
            ..RunConfig::default()
        };
        io::run(&config).unwrap();
        csvs.push(std::fs::read(dir.path().join("paths.csv")).unwrap());
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let parsed = Report::from_json(&text).unwrap();
        let again = parsed.to_json().unwrap();
        idempotent &= again == text && Report::from_json(&again).unwrap() == parsed;
    }
    let identical = csvs[0] == csvs[1];
    outcome(
        identical && idempotent,
        format!(
            "paths.csv identical: {identical} ({} bytes); report.json idempotent: {idempotent}",
            csvs[0].len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("heat-equation oracle", heat_oracle),
        ("maximum-principle bound", max_principle),
        ("manufactured nonlocal convergence", manufactured),
        ("nonlocal operator exactness", nonlocal_operator),
        ("compensated martingale", martingale),
        ("link and residual exactness", link_exactness),
        ("residual decay", residual_decay),
        ("jump Itô identity", ito_identity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        println!(
            "criterion {} [{}] {}: {}",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            name,
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
