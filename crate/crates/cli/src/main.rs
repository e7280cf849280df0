//! `cmpc`: scenario generation, solver runs, ablation grids and trajectory
//! export for the consensus ADMM planner.
//!
//! Exit codes: 0 success, 1 non-convergence under `--strict`, 2 usage or I/O
//! error, 3 solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consensus_mpc::model::{circle_scenario, Weights};
use consensus_mpc::record::{
    ablate, parse_trajectory_csv, trajectory_csv, AblationPlan, RunRecord, ScenarioDescriptor,
};
use consensus_mpc::{Error, Mode, Scenario, SolverConfig};

#[derive(Parser)]
#[command(name = "cmpc", version, about = "Consensus ADMM multi-agent trajectory planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a circle-swap scenario file.
    Generate {
        #[command(flatten)]
        circle: CircleArgs,
        /// Echoed in the summary; the circle layout itself is deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a scenario file and write a run record.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "turbo")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        /// Run record (JSON) destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 1 if ADMM does not converge.
        #[arg(long)]
        strict: bool,
    },
    /// Run the mode x agent-count grid and write a CSV table.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
        agents: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "base,hotstart,turbo")]
        modes: Vec<Mode>,
        /// Timed runs per cell (a discarded warmup run comes first).
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 8.0)]
        radius: f64,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        #[arg(long = "d-safe", default_value_t = 2.0)]
        d_safe: f64,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract per-agent trajectories from a run record as CSV.
    ExportTraj {
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CircleArgs {
    #[arg(long, default_value_t = 2)]
    agents: usize,
    #[arg(long, default_value_t = 8.0)]
    radius: f64,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    #[arg(long = "d-safe", default_value_t = 2.0)]
    d_safe: f64,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args)]
struct WeightArgs {
    /// Stage position weight.
    #[arg(long = "q", default_value_t = 1.0)]
    q: f64,
    /// Input weight.
    #[arg(long = "r", default_value_t = 0.1)]
    r: f64,
    /// Terminal position weight.
    #[arg(long = "q-terminal", default_value_t = 10.0)]
    q_terminal: f64,
}

impl WeightArgs {
    fn weights(&self) -> Weights {
        Weights {
            q: self.q,
            r: self.r,
            q_terminal: self.q_terminal,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 25.0)]
    rho: f64,
    /// Primal and dual residual tolerance.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long = "max-iters", default_value_t = 500)]
    max_iters: usize,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, env = "TURBOADMM_THREADS", default_value_t = 0)]
    threads: usize,
}

impl SolverArgs {
    fn config(&self, mode: Mode) -> SolverConfig {
        SolverConfig {
            rho: self.rho,
            eps_primal: self.eps,
            eps_dual: self.eps,
            max_admm_iters: self.max_iters,
            mode,
            threads: self.threads,
            ..SolverConfig::default()
        }
    }
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Solver(String),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::Schema(_)
            | Error::InvalidParameter(_)
            | Error::Dimension(_)
            | Error::InfeasibleScenario(_) => Failure::Usage(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { circle, seed, out } => generate(&circle, seed, &out),
        Command::Run {
            scenario,
            solver,
            mode,
            seed,
            out,
            strict,
        } => run(&scenario, &solver, mode, seed, out.as_deref(), strict),
        Command::Ablate {
            agents,
            modes,
            repeats,
            radius,
            horizon,
            dt,
            d_safe,
            weights,
            solver,
            out,
        } => {
            let plan = AblationPlan {
                agents,
                modes,
                repeats,
                radius,
                horizon,
                dt,
                d_safe,
                weights: weights.weights(),
                config: solver.config(Mode::Turbo),
            };
            ablate_cmd(&plan, &out)
        }
        Command::ExportTraj { report, out } => export_traj(&report, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Writes through a sibling temporary file so a failed run never leaves a
/// partial output behind.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let io = |e: std::io::Error| Failure::Usage(format!("{}: {e}", path.display()));
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io(e)
    })
}

fn generate(args: &CircleArgs, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let s = circle_scenario(args.agents, args.radius, args.horizon, args.dt, args.d_safe, args.weights.weights())?;
    write_atomic(out, &s.to_json()?)?;
    let dims = consensus_mpc::model::problem_dimensions(&s);
    let seed = seed.map(|v| format!(" seed={v}")).unwrap_or_default();
    println!(
        "wrote {} (agents={} variables={} dynamics={} pair_steps={}{seed})",
        out.display(),
        s.n_agents(),
        dims.num_variables,
        dims.num_dynamics_constraints,
        dims.num_collision_pair_times
    );
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn run(
    path: &Path,
    solver: &SolverArgs,
    mode: Mode,
    seed: Option<u64>,
    out: Option<&Path>,
    strict: bool,
) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    let cfg = solver.config(mode);
    cfg.validate()?;
    let report = match consensus_mpc::run(&s, &cfg) {
        Ok(r) => r,
        Err(Error::AgentQp {
            agent,
            iteration,
            status,
            data,
        }) => {
            let dump = dump_path(out, path, agent, iteration);
            let note = match std::fs::write(&dump, data.dump()) {
                Ok(()) => format!("diagnostic dump: {}", dump.display()),
                Err(e) => format!("could not write diagnostic dump {}: {e}", dump.display()),
            };
            return Err(Failure::Solver(format!(
                "agent {agent} QP failed at ADMM iteration {iteration} ({status:?}); {note}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let mut descriptor = ScenarioDescriptor::of(&s);
    descriptor.seed = seed;
    descriptor.source = Some(path.display().to_string());
    let record = RunRecord::new(descriptor, report);
    if let Some(out) = out {
        write_atomic(out, &record.to_json()?)?;
    }
    let r = &record.report;
    let (rp, rd) = r.final_residuals();
    println!("mode: {}", mode);
    println!("converged: {}", r.converged);
    println!("admm_iterations: {}", r.admm_iterations);
    println!("total_qp_iterations: {}", r.total_qp_iterations);
    println!("residuals: primal {rp:.3e} dual {rd:.3e}");
    match r.min_separation {
        Some(d) => println!("min_separation: {d}"),
        None => println!("min_separation: n/a"),
    }
    println!(
        "max_tracking_error: {}",
        r.tracking_errors.iter().copied().fold(0.0, f64::max)
    );
    println!("wall_ms: {:.3}", r.wall_ms);
    if let Some(out) = out {
        println!("report: {}", out.display());
    }
    if strict && !r.converged {
        return Err(Failure::NotConverged);
    }
    Ok(())
}

fn dump_path(out: Option<&Path>, scenario: &Path, agent: usize, iteration: usize) -> PathBuf {
    let base = out.unwrap_or(scenario);
    let dir = base.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    dir.join(format!("{stem}.agent{agent}.iter{iteration}.qp.txt"))
}

fn ablate_cmd(plan: &AblationPlan, out: &Path) -> Result<(), Failure> {
    plan.config.validate()?;
    let table = ablate(plan)?;
    write_atomic(out, &table.to_csv())?;
    print!("{}", table.to_csv());
    for c in table.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell N={} {} failed: {}", c.n_agents, c.mode, c.error.as_deref().unwrap_or(""));
    }
    match table.scaling_slope(Mode::Turbo) {
        Some(slope) => println!("turbo wall-time log-log slope: {slope:.3}"),
        None => println!("turbo wall-time log-log slope: n/a"),
    }
    Ok(())
}

fn export_traj(report: &Path, out: &Path) -> Result<(), Failure> {
    let record = RunRecord::load(report).map_err(|e| Failure::Usage(format!("{}: {e}", report.display())))?;
    let csv = trajectory_csv(&record.report.trajectories);
    // Guard the lossless contract before writing anything.
    if parse_trajectory_csv(&csv)? != record.report.trajectories {
        return Err(Failure::Solver("trajectory export is not lossless".into()));
    }
    write_atomic(out, &csv)?;
    println!(
        "wrote {} ({} agents, {} states each)",
        out.display(),
        record.report.trajectories.len(),
        record.report.trajectories.first().map_or(0, |t| t.states.len())
    );
    Ok(())
}
