use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumpfbsde::catalog;
use jumpfbsde::io::{self, RunConfig, Stages};
use jumpfbsde::Result;

#[derive(Parser)]
#[command(name = "jumpfbsde", version, about = "Decoupling-field solver for forward-backward SDEs with jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve, simulate and (with --verify) check.
    Run(Common),
    /// Solve the PIDE only.
    Solve(Common),
    /// Solve and simulate paths.
    Simulate(Common),
    /// Solve, simulate and run every check.
    Verify(Common),
    /// Refinement ladder; writes sweep.csv.
    Sweep(Common),
    /// Sample the structural assumptions of a problem.
    CheckAssumptions(Common),
    /// List catalog problems.
    List,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    problem: Option<String>,
    /// Problem parameter, `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Grid nodes per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Solver time steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    /// Path time step.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $JUMPFBSDE_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    cutoff_width: Option<f64>,
    /// Sweep rungs, e.g. `201/400,401/1600`.
    #[arg(long)]
    ladder: Option<String>,
    /// Paths written to paths.csv.
    #[arg(long)]
    dump: Option<usize>,
}

impl Common {
    fn resolve(&self, stages: Stages) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if self.config.is_none() {
            config.stages = stages;
        } else {
            config.stages.solve |= stages.solve;
            config.stages.simulate |= stages.simulate;
            config.stages.verify |= stages.verify;
        }
        if let Some(p) = &self.problem {
            config.problem = p.clone();
        }
        for kv in &self.params {
            let (k, v) = kv.split_once('=').ok_or_else(|| jumpfbsde::Error::Config {
                line: None,
                field: "--param".into(),
                message: format!("expected NAME=VALUE, got `{kv}`"),
            })?;
            config.set(&format!("param.{}", k.trim()), v, None)?;
        }
        config.grid = self.grid.or(config.grid);
        config.steps = self.steps.or(config.steps);
        config.paths = self.paths.or(config.paths);
        config.dt = self.dt.or(config.dt);
        config.seed = self.seed.unwrap_or(config.seed);
        config.cutoff_width = self.cutoff_width.or(config.cutoff_width);
        config.dump = self.dump.unwrap_or(config.dump);
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        if self.verify {
            config.stages.verify = true;
        }
        if let Some(l) = &self.ladder {
            config.ladder = Some(io::parse_ladder(l)?);
        }
        Ok(config)
    }
}

fn stages(solve: bool, simulate: bool, verify: bool) -> Stages {
    Stages { solve, simulate, verify }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::List => {
            for e in catalog::CATALOG {
                let params: Vec<String> = e.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<24} {}  [{}]", e.name, e.summary, params.join(", "));
            }
            Ok(true)
        }
        Command::CheckAssumptions(c) => {
            let config = c.resolve(stages(false, false, true))?;
            let report = io::check_assumptions(&config)?;
            for e in &report.entries {
                println!("{:<6} {} worst margin {:+.3e}", e.name, if e.pass { "pass" } else { "FAIL" }, e.worst_margin);
            }
            Ok(report.pass())
        }
        Command::Sweep(c) => {
            let config = c.resolve(stages(true, true, false))?;
            let problem = config.problem()?;
            let ladder = io::resolve_ladder(&config, &problem);
            let rows = io::sweep(&config, &ladder)?;
            print!("{}", io::sweep_csv(&rows));
            Ok(true)
        }
        Command::Run(c) => report(io::run(&c.resolve(stages(true, true, false))?)?.report),
        Command::Solve(c) => report(io::run(&c.resolve(stages(true, false, false))?)?.report),
        Command::Simulate(c) => report(io::run(&c.resolve(stages(true, true, false))?)?.report),
        Command::Verify(c) => report(io::run(&c.resolve(stages(true, true, true))?)?.report),
    }
}

fn report(r: io::Report) -> Result<bool> {
    if let Some(e) = r.oracle_error {
        println!("oracle L∞ error      {e:.6e}");
    }
    if let Some(res) = &r.residual {
        println!("rms backward residual {:.6e} ({} paths, {} excluded)", res.rms, res.included, res.excluded);
    }
    for c in &r.checks {
        println!("{:<16} {}  {}", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
    }
    println!("report written to {}", r.config.out.join("report.json").display());
    Ok(r.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
