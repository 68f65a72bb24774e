use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use fimsel::harness::{
    default_ptot_grid, generate, ptot_grid, run_suite, run_sweep, scenario_id, solve_network, GenSpec, HarnessError,
    SolveConfig, Suite, SweepConfig, VerifyOptions,
};
use fimsel::model::{load_scenario, save_scenario, SensorParams};
use fimsel::solvers::Algorithm;

#[derive(Parser)]
#[command(name = "fimsel", version, about = "Sensor selection and power allocation by Bayesian Fisher information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Gen(GenArgs),
    /// Run one solver on a scenario.
    Solve(SolveArgs),
    /// Run solvers over a grid of total powers.
    Sweep(SweepArgs),
    /// Run the oracle checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Identical sensors instead of a random deployment.
    #[arg(long)]
    homogeneous: bool,
    /// Gain vector for --homogeneous.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.8")]
    gain: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma_n: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_nu: f64,
    #[arg(long, default_value_t = 0.7)]
    h_mag: f64,
    #[arg(long, default_value_t = 3)]
    bits: u32,
    /// Minimum sensor-to-source distance for random deployments.
    #[arg(long, default_value_t = 0.1)]
    d_min: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, default_value_t = 100)]
    grid_n: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps0: f64,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    alg: Algorithm,
    #[arg(long)]
    ptot: f64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Allocation CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, requires_all = ["ptot_max", "steps"])]
    ptot_min: Option<f64>,
    #[arg(long)]
    ptot_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "ufa,usu,greedy,mckp")]
    alg: Vec<Algorithm>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Sweep CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: Suite,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let params = SensorParams { sigma_n: a.sigma_n, sigma_nu: a.sigma_nu, h_mag: a.h_mag, bits: a.bits };
            let spec = if a.homogeneous {
                GenSpec::Homogeneous { k: a.k, gain: a.gain, params }
            } else {
                GenSpec::Deployment { k: a.k, seed: a.seed, d_min: a.d_min, params }
            };
            let network = generate(&spec)?;
            save_scenario(&network, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
            println!("K={} q={} seed={}", network.len(), network.prior.dim(), a.seed);
        }
        Command::Solve(a) => {
            let network = load_scenario(&a.scenario).map_err(HarnessError::Scenario)?;
            let cfg = SolveConfig { algorithm: a.alg, p_tot: a.ptot, grid_n: a.solver.grid_n, eps0: a.solver.eps0 };
            let alloc = solve_network(&network, &cfg)?;
            let mut out = output(&a.out)?;
            alloc.write_csv(&mut out)?;
            out.flush()?;
            let note = if alloc.fallback { " fallback=1" } else { "" };
            let summary = format!("objective={} selected={}{note}", alloc.objective, alloc.num_selected());
            if a.out.is_some() {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
        }
        Command::Sweep(a) => {
            let network = load_scenario(&a.scenario).map_err(HarnessError::Scenario)?;
            let grid = match (a.ptot_min, a.ptot_max, a.steps) {
                (Some(lo), Some(hi), Some(n)) => ptot_grid(lo, hi, n)?,
                _ => default_ptot_grid(),
            };
            let cfg = SweepConfig { ptot_grid: grid, algorithms: a.alg, grid_n: a.solver.grid_n, eps0: a.solver.eps0 };
            let result = run_sweep(&network, &scenario_id(&a.scenario), &cfg)?;
            let mut out = output(&a.out)?;
            result.write_csv(&mut out)?;
            out.flush()?;
            let failures = result.failures();
            if failures > 0 {
                eprintln!("warning: {failures} sweep cell(s) failed");
            }
        }
        Command::Verify(a) => {
            let checks = run_suite(a.suite, &VerifyOptions { trials: a.trials, seed: a.seed })?;
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            if failed > 0 {
                return Err(HarnessError::Verification { failed, total: checks.len() }.into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<HarnessError>() {
            Some(h) => {
                eprintln!("error: {h}");
                ExitCode::from(h.exit_code() as u8)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
