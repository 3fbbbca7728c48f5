//! Command-line front end for the experiment harness.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dqn::graph::{generate_connected_geometric, metropolis_weights};
use dqn::harness::{
    best_beta, derive_constants, exact_solution, half_decade_grid, log_grid, penalty_solution,
    preset, resolve_pmm_config, run_experiment, sweep_beta, ExperimentConfig, SolverSpec,
};
use dqn::penalty::PenaltyModel;

#[derive(Parser)]
#[command(name = "dqn", about = "Distributed Newton-like optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `name`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the named preset studies (fig1..fig6).
    Preset {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the reference solutions and derived constants for a config.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the PMM dual step size over a log grid and report the best.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Swept parameter; only `beta` is supported.
        #[arg(long, default_value = "beta")]
        param: String,
        /// Grid spec `log:<lo>:<hi>:<step>` in decades.
        #[arg(long, default_value = "log:-4:4:0.5")]
        grid: String,
    },
}

fn load_config(path: &PathBuf) -> dqn::Result<ExperimentConfig> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["log", lo, hi, step] => {
            let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("bad grid bound: {e}"));
            Ok(log_grid(parse(lo)?, parse(hi)?, parse(step)?))
        }
        _ => Err(format!("unsupported grid spec `{spec}` (want log:lo:hi:step)")),
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, out } => {
            let config = load_config(&config).map_err(|e| e.to_string())?;
            let out = out.unwrap_or_else(|| PathBuf::from(&config.name));
            let output = run_experiment(&config, &out).map_err(|e| e.to_string())?;
            for run in &output.runs {
                let Some(last) = run.trace.last() else { continue };
                println!(
                    "{:10} k={:6} rel_err={:.3e} comms={}",
                    run.label, last.k, last.rel_err, last.comms
                );
                for w in &run.trace.warnings {
                    eprintln!("warning [{}]: {w}", run.label);
                }
            }
            println!("wrote {} traces to {}", output.runs.len(), out.display());
            Ok(())
        }
        Command::Preset { name, out } => {
            let config = preset(&name).map_err(|e| e.to_string())?;
            let output = run_experiment(&config, &out).map_err(|e| e.to_string())?;
            println!(
                "preset {name}: {} traces in {}",
                output.runs.len(),
                out.display()
            );
            Ok(())
        }
        Command::Oracle { config } => {
            let config = load_config(&config).map_err(|e| e.to_string())?;
            config.validate().map_err(|e| e.to_string())?;
            let topo = generate_connected_geometric(config.graph.n, config.graph.seed)
                .map_err(|e| e.to_string())?;
            let weights = metropolis_weights(&topo).map_err(|e| e.to_string())?;
            let problem = config.problem.build(config.graph.n).map_err(|e| e.to_string())?;
            let y = exact_solution(problem.as_ref()).map_err(|e| e.to_string())?;
            let derived = derive_constants(&config, problem.as_ref(), &weights, &y)
                .map_err(|e| e.to_string())?;
            println!("y_star = {:?}", y.as_slice());
            let model = PenaltyModel::new(problem.as_ref(), &weights, derived.alpha, derived.theta)
                .map_err(|e| e.to_string())?;
            let xstar = penalty_solution(&model).map_err(|e| e.to_string())?;
            for (i, b) in xstar.blocks.iter().enumerate().take(5) {
                println!("x_star_alpha[{i}] = {:?}", b.as_slice());
            }
            if xstar.n() > 5 {
                println!("... ({} blocks total)", xstar.n());
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&derived).map_err(|e| e.to_string())?
            );
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            grid,
        } => {
            if param != "beta" {
                return Err(format!("unsupported sweep parameter `{param}`"));
            }
            let config = load_config(&config).map_err(|e| e.to_string())?;
            let topo = generate_connected_geometric(config.graph.n, config.graph.seed)
                .map_err(|e| e.to_string())?;
            let weights = metropolis_weights(&topo).map_err(|e| e.to_string())?;
            let problem = config.problem.build(config.graph.n).map_err(|e| e.to_string())?;
            let y = exact_solution(problem.as_ref()).map_err(|e| e.to_string())?;
            let grid = if grid == "log:-4:4:0.5" {
                half_decade_grid()
            } else {
                parse_grid(&grid)?
            };
            let base = config
                .solvers
                .iter()
                .find_map(|s| match s {
                    SolverSpec::Pmm(p) => Some(resolve_pmm_config(
                        p,
                        config.max_iter,
                        config.stop_rel_err,
                    )),
                    _ => None,
                })
                .ok_or("sweep needs at least one PMM solver in the config")?;
            let points = sweep_beta(problem.as_ref(), &weights, &base, &grid, &y);
            for pt in &points {
                println!(
                    "beta={:9.3e} rel_err={:.3e} iters={}",
                    pt.beta, pt.rel_err, pt.iterations
                );
            }
            match best_beta(&points) {
                Some(best) => println!("best: beta={:9.3e} rel_err={:.3e}", best.beta, best.rel_err),
                None => println!("best: none (all grid points diverged)"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
