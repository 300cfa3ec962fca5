//! Run configuration, the pipeline driver and CSV/JSON artifacts.
//!
//! Config files are flat `key = value` lines; `#` starts a comment and keys use
//! dotted sections:
//!
//! ```text
//! problem = heat
//! param.horizon = 1.0
//! solver.grid = 201
//! solver.steps = 400
//! solver.cutoff_width = 1.0
//! solver.linear = splitting        # or iterative
//! paths.count = 1000
//! paths.dt = 0.0025
//! paths.seed = 7
//! paths.dump = 100
//! output.dir = out/heat
//! stages.verify = true
//! sweep.ladder = 201/400, 401/1600
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{self, Problem, Rung};
use crate::error::{Error, Result};
use crate::paths::JumpPath;
use crate::pipeline::{run_ensemble, ResidualReport};
use crate::problem::{check_ellipticity, AssumptionReport};
use crate::solver::{
    check_max_principle, solve_final_value, Diagnostics, LinearSolver, MaxPrincipleOutcome, SolutionField,
    SolverConfig,
};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "JUMPFBSDE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stages {
    pub solve: bool,
    pub simulate: bool,
    pub verify: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: String,
    pub params: BTreeMap<String, f64>,
    pub grid: Option<usize>,
    pub steps: Option<usize>,
    pub cutoff_width: Option<f64>,
    pub linear_solver: LinearSolver,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: u64,
    /// Number of paths written to `paths.csv`.
    pub dump: usize,
    pub out: PathBuf,
    pub stages: Stages,
    /// `(nodes, steps[, path steps])` rungs for `sweep`.
    pub ladder: Option<Vec<(usize, usize, Option<usize>)>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "heat".into(),
            params: BTreeMap::new(),
            grid: None,
            steps: None,
            cutoff_width: None,
            linear_solver: LinearSolver::Splitting,
            paths: None,
            dt: None,
            seed: 0,
            dump: 100,
            out: default_out_dir(),
            stages: Stages {
                solve: true,
                simulate: true,
                verify: false,
            },
            ladder: None,
        }
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_value<V: std::str::FromStr>(key: &str, raw: &str, line: Option<usize>) -> Result<V> {
    raw.parse().map_err(|_| Error::Config {
        line,
        field: key.to_string(),
        message: format!("cannot parse `{raw}`"),
    })
}

fn parse_bool(key: &str, raw: &str, line: Option<usize>) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config {
            line,
            field: key.to_string(),
            message: format!("expected a boolean, got `{raw}`"),
        }),
    }
}

/// Parses `201/400, 401/1600` or `481/1000/250, ...`.
pub fn parse_ladder(raw: &str) -> Result<Vec<(usize, usize, Option<usize>)>> {
    raw.split(',')
        .map(|rung| {
            let parts: Vec<&str> = rung.trim().split('/').map(str::trim).collect();
            let num = |s: &str| parse_value::<usize>("sweep.ladder", s, None);
            match parts.as_slice() {
                [a, b] => Ok((num(a)?, num(b)?, None)),
                [a, b, c] => Ok((num(a)?, num(b)?, Some(num(c)?))),
                _ => Err(Error::config("sweep.ladder", format!("bad rung `{}`", rung.trim()))),
            }
        })
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str, line: Option<usize>) -> Result<()> {
        let raw = raw.trim();
        match key {
            "problem" => self.problem = raw.to_string(),
            "solver.grid" => self.grid = Some(parse_value(key, raw, line)?),
            "solver.steps" => self.steps = Some(parse_value(key, raw, line)?),
            "solver.cutoff_width" => self.cutoff_width = Some(parse_value(key, raw, line)?),
            "solver.linear" => {
                self.linear_solver = match raw {
                    "splitting" => LinearSolver::Splitting,
                    "iterative" => LinearSolver::Iterative,
                    _ => {
                        return Err(Error::Config {
                            line,
                            field: key.into(),
                            message: format!("expected `splitting` or `iterative`, got `{raw}`"),
                        })
                    }
                }
            }
            "paths.count" => self.paths = Some(parse_value(key, raw, line)?),
            "paths.dt" => self.dt = Some(parse_value(key, raw, line)?),
            "paths.seed" => self.seed = parse_value(key, raw, line)?,
            "paths.dump" => self.dump = parse_value(key, raw, line)?,
            "output.dir" => self.out = PathBuf::from(raw),
            "stages.solve" => self.stages.solve = parse_bool(key, raw, line)?,
            "stages.simulate" => self.stages.simulate = parse_bool(key, raw, line)?,
            "stages.verify" => self.stages.verify = parse_bool(key, raw, line)?,
            "sweep.ladder" => {
                self.ladder = Some(parse_ladder(raw).map_err(|e| match e {
                    Error::Config { field, message, .. } => Error::Config { line, field, message },
                    other => other,
                })?)
            }
            _ => match key.strip_prefix("param.") {
                Some(name) if !name.is_empty() => {
                    self.params.insert(name.to_string(), parse_value(key, raw, line)?);
                }
                _ => {
                    return Err(Error::Config {
                        line,
                        field: key.to_string(),
                        message: "unknown key".into(),
                    })
                }
            },
        }
        Ok(())
    }

    /// Applies a config file's settings on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: Some(i + 1),
                    field: line.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            self.set(key.trim(), value, Some(i + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(&fs::read_to_string(path)?)?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        catalog::entry(&self.problem)?;
        let positive = |field: &str, v: Option<usize>| match v {
            Some(0) => Err(Error::config(field, "must be positive")),
            _ => Ok(()),
        };
        positive("paths.count", self.paths)?;
        positive("solver.steps", self.steps)?;
        if matches!(self.grid, Some(g) if g < 3) {
            return Err(Error::config("solver.grid", "needs at least 3 nodes per axis"));
        }
        if matches!(self.dt, Some(dt) if !(dt > 0.0)) {
            return Err(Error::config("paths.dt", "must be positive"));
        }
        if matches!(self.cutoff_width, Some(w) if !(w > 0.0)) {
            return Err(Error::config("solver.cutoff_width", "must be positive"));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem<f64>> {
        catalog::build(&self.problem, &self.params)
    }

    pub fn solver_config(&self, problem: &Problem<f64>) -> Result<SolverConfig<f64>> {
        let config = problem
            .solver_config(
                self.grid.unwrap_or(problem.nodes),
                self.steps.unwrap_or(problem.steps),
                self.cutoff_width,
            )?
            .with_linear_solver(self.linear_solver);
        Ok(config)
    }

    pub fn path_dt(&self, problem: &Problem<f64>) -> f64 {
        self.dt.unwrap_or_else(|| problem.path_dt())
    }

    pub fn path_count(&self, problem: &Problem<f64>) -> usize {
        self.paths.unwrap_or(problem.paths)
    }
}

/// Named pass/fail check recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    /// Paths use streams `0..count` of the base seed.
    pub streams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub problem: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub grid_nodes: usize,
    pub solver_steps: usize,
    pub path_dt: Option<f64>,
    pub diagnostics: Option<Diagnostics<f64>>,
    pub max_principle: Option<MaxPrincipleOutcome<f64>>,
    pub oracle_error: Option<f64>,
    pub assumptions: Option<AssumptionReport>,
    pub residual: Option<ResidualReport<f64>>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Everything a run produced.
pub struct RunOutcome {
    pub report: Report,
    pub field: Option<SolutionField<f64>>,
}

/// Formats a float with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sup-norm error of the field against a closed-form solution over every level and node.
pub fn oracle_error(field: &SolutionField<f64>, oracle: &catalog::Oracle<f64>) -> f64 {
    let grid = field.grid();
    let m = field.m();
    let mut err: f64 = 0.0;
    for j in 0..=field.steps() {
        let values = field.level_values(j);
        let t = field.time(j);
        for node in 0..grid.len() {
            let exact = oracle(t, &grid.node(node));
            for c in 0..m {
                err = err.max((values[node * m + c] - exact[c]).abs());
            }
        }
    }
    err
}

/// `level, t, x_1.., theta_1.., dtheta_c_d..`.
pub fn field_csv(field: &SolutionField<f64>) -> String {
    let grid = field.grid();
    let (n, m) = (field.n(), field.m());
    let mut out = String::from("level,t");
    for d in 0..n {
        write!(out, ",x{}", d + 1).unwrap();
    }
    for c in 0..m {
        write!(out, ",theta{}", c + 1).unwrap();
    }
    for c in 0..m {
        for d in 0..n {
            write!(out, ",dtheta{}_{}", c + 1, d + 1).unwrap();
        }
    }
    out.push('\n');
    for j in 0..=field.steps() {
        let values = field.level_values(j);
        let grads = field.level_gradients(j);
        let t = fmt_num(field.time(j));
        for node in 0..grid.len() {
            write!(out, "{j},{t}").unwrap();
            for x in grid.node(node) {
                write!(out, ",{}", fmt_num(x)).unwrap();
            }
            for v in &values[node * m..(node + 1) * m] {
                write!(out, ",{}", fmt_num(*v)).unwrap();
            }
            for g in &grads[node * m * n..(node + 1) * m * n] {
                write!(out, ",{}", fmt_num(*g)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// `path, level, t, x_1.., y_1.., jumps, exited`; `jumps` counts jumps in `(t_{j−1}, t_j]`.
pub fn paths_csv(paths: &[(JumpPath<f64>, Vec<Vec<f64>>)], n: usize, m: usize) -> String {
    let mut out = String::from("path,level,t");
    for d in 0..n {
        write!(out, ",x{}", d + 1).unwrap();
    }
    for c in 0..m {
        write!(out, ",y{}", c + 1).unwrap();
    }
    out.push_str(",jumps,exited\n");
    for (path, ys) in paths {
        let id = path.stream.stream;
        for (j, (t, x)) in path.times.iter().zip(&path.states).enumerate() {
            write!(out, "{id},{j},{}", fmt_num(*t)).unwrap();
            for v in x {
                write!(out, ",{}", fmt_num(*v)).unwrap();
            }
            for v in &ys[j] {
                write!(out, ",{}", fmt_num(*v)).unwrap();
            }
            let jumps = if j == 0 { 0 } else { path.jumps_in_step(j - 1) };
            writeln!(out, ",{jumps},{}", u8::from(path.exited)).unwrap();
        }
    }
    out
}

fn assumption_report(problem: &Problem<f64>) -> Result<AssumptionReport> {
    let mut report = AssumptionReport::default();
    report.push(check_ellipticity(&problem.spec, &problem.ellipticity_samples())?);
    Ok(report)
}

/// Runs the enabled stages and writes `field.csv`, `paths.csv` and `report.json` into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let problem = config.problem()?;
    let solver = config.solver_config(&problem)?;
    fs::create_dir_all(&config.out)?;
    let stages = config.stages;
    let mut checks = Vec::new();

    let assumptions = if stages.verify {
        let report = assumption_report(&problem)?;
        checks.push(Check {
            name: "assumptions".into(),
            pass: report.pass(),
            detail: format!("{} entries", report.entries.len()),
        });
        Some(report)
    } else {
        None
    };

    let need_field = stages.solve || stages.simulate || stages.verify;
    let (field, diagnostics) = if need_field {
        let (field, diag) = solve_final_value(&problem.spec, &solver, problem.constants)?;
        fs::write(config.out.join("field.csv"), field_csv(&field))?;
        (Some(field), Some(diag))
    } else {
        (None, None)
    };

    let mut max_principle = None;
    let mut error = None;
    if let (Some(field), Some(diag)) = (&field, &diagnostics) {
        error = problem.oracle.as_ref().map(|o| oracle_error(field, o));
        if stages.verify {
            let outcome = check_max_principle(field, diag, problem.constants);
            checks.push(Check {
                name: "max-principle".into(),
                pass: outcome.pass,
                detail: format!("observed {} vs bound {}", outcome.observed, outcome.bound),
            });
            max_principle = Some(outcome);
        }
    }

    let mut residual = None;
    let mut path_dt = None;
    if stages.simulate || stages.verify {
        let field = field.as_ref().expect("field solved above");
        let dt = config.path_dt(&problem);
        path_dt = Some(dt);
        let count = config.path_count(&problem);
        let ensemble = run_ensemble(field, &problem.spec, &problem.x0, dt, config.seed, count, config.dump)?;
        fs::write(
            config.out.join("paths.csv"),
            paths_csv(&ensemble.kept, problem.spec.n(), problem.spec.m()),
        )?;
        if stages.verify {
            checks.push(Check {
                name: "link-exactness".into(),
                pass: ensemble.link_exact,
                detail: "Y_j equals the interpolated field at X_j".into(),
            });
            let finite = ensemble.report.rms.is_finite();
            checks.push(Check {
                name: "residual-finite".into(),
                pass: finite,
                detail: format!("rms {} over {} paths", ensemble.report.rms, ensemble.report.included),
            });
        }
        residual = Some(ensemble.report);
    }

    let pass = checks.iter().all(|c| c.pass);
    let report = Report {
        problem: problem.name.to_string(),
        config: config.clone(),
        seeds: Seeds {
            base: config.seed,
            streams: if residual.is_some() { config.path_count(&problem) } else { 0 },
        },
        grid_nodes: solver.grid.counts()[0],
        solver_steps: solver.steps,
        path_dt,
        diagnostics,
        max_principle,
        oracle_error: error,
        assumptions,
        residual,
        checks,
        pass,
    };
    fs::write(config.out.join("report.json"), report.to_json()?)?;
    Ok(RunOutcome { report, field })
}

/// Only the assumption checks; writes `assumptions.json`.
pub fn check_assumptions(config: &RunConfig) -> Result<AssumptionReport> {
    config.validate()?;
    let problem = config.problem()?;
    let report = assumption_report(&problem)?;
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("assumptions.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rung: usize,
    pub nodes: usize,
    pub h: f64,
    pub steps: usize,
    pub dt: f64,
    pub path_dt: f64,
    pub linf_error: Option<f64>,
    pub rms_residual: f64,
    /// Previous rung's error over this rung's.
    pub error_ratio: Option<f64>,
    pub residual_ratio: Option<f64>,
}

fn ratio(prev: Option<f64>, this: Option<f64>) -> Option<f64> {
    match (prev, this) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    }
}

/// Solves (once per distinct `(nodes, steps)`) and simulates every rung.
pub fn sweep(config: &RunConfig, ladder: &[Rung]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if ladder.len() < 2 {
        return Err(Error::config("sweep.ladder", "a ladder needs at least two rungs"));
    }
    let problem = config.problem()?;
    let count = config.path_count(&problem);
    let horizon = problem.spec.horizon();
    let mut cache: Vec<((usize, usize), SolutionField<f64>)> = Vec::new();
    let mut rows: Vec<SweepRow> = Vec::with_capacity(ladder.len());
    for (i, rung) in ladder.iter().enumerate() {
        let key = (rung.nodes, rung.steps);
        if !cache.iter().any(|(k, _)| *k == key) {
            let solver = problem
                .solver_config(rung.nodes, rung.steps, config.cutoff_width)?
                .with_linear_solver(config.linear_solver);
            let (field, _) = solve_final_value(&problem.spec, &solver, problem.constants)?;
            cache.push((key, field));
        }
        let field = &cache.iter().find(|(k, _)| *k == key).expect("cached above").1;
        let path_steps = rung.path_steps.unwrap_or(rung.steps);
        let path_dt = horizon / path_steps as f64;
        let ensemble = run_ensemble(field, &problem.spec, &problem.x0, path_dt, config.seed, count, 0)?;
        let linf_error = problem.oracle.as_ref().map(|o| oracle_error(field, o));
        let rms = ensemble.report.rms;
        let prev = rows.last();
        rows.push(SweepRow {
            rung: i,
            nodes: rung.nodes,
            h: field.grid().min_spacing(),
            steps: rung.steps,
            dt: field.dt(),
            path_dt,
            linf_error,
            rms_residual: rms,
            error_ratio: ratio(prev.and_then(|p| p.linf_error), linf_error),
            residual_ratio: ratio(prev.map(|p| p.rms_residual), Some(rms)),
        });
    }
    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("sweep.csv"), sweep_csv(&rows))?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_else(|| "NA".into());
    let mut out =
        String::from("rung,nodes,h,steps,dt,path_dt,linf_error,rms_residual,error_ratio,residual_ratio\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rung,
            r.nodes,
            fmt_num(r.h),
            r.steps,
            fmt_num(r.dt),
            fmt_num(r.path_dt),
            opt(r.linf_error),
            fmt_num(r.rms_residual),
            opt(r.error_ratio),
            opt(r.residual_ratio),
        )
        .unwrap();
    }
    out
}

/// The ladder from the config, or the catalog default.
pub fn resolve_ladder(config: &RunConfig, problem: &Problem<f64>) -> Vec<Rung> {
    match &config.ladder {
        Some(l) => l
            .iter()
            .map(|&(nodes, steps, path_steps)| Rung {
                nodes,
                steps,
                path_steps,
            })
            .collect(),
        None => problem.ladder.clone(),
    }
}
