//! Command line driver: single solves, adaptive runs and uniform refinement
//! studies from a key-value config file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
//! 1 anything else. Worker count for parallel assembly follows the rayon
//! convention (RAYON_NUM_THREADS).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wellbem::adaptive::{adaptive_loop, AdaptiveConfig, RefinementMode, RunRecord};
use wellbem::config::{parse_config, ProblemConfig, RunMode};
use wellbem::error::Error;
use wellbem::output::write_outputs;
use wellbem::solver::SolverOptions;

#[derive(Parser)]
#[command(
    name = "wellbem",
    version,
    about = "FE/BE solver for the relaxed double-well contact problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the initial mesh and write the fields
    Solve(RunArgs),
    /// Adaptive solve-estimate-mark-bisect loop
    Adapt(RunArgs),
    /// Uniform refinement study (mesh size halves per level)
    Study(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// problem description file
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// number of levels (overrides the config)
    #[arg(long)]
    levels: Option<usize>,
    /// Dörfler bulk fraction (overrides the config)
    #[arg(long)]
    theta: Option<f64>,
    /// seed for the randomized initial iterate; 0 starts from zero
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Solve(a) => (RunMode::SingleSolve, a),
        Command::Adapt(a) => (RunMode::Adaptive, a),
        Command::Study(a) => (RunMode::UniformStudy, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut cause = std::error::Error::source(&err);
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ConfigParse { .. }
        | Error::ConfigValue { .. }
        | Error::ExprParse { .. }
        | Error::InvalidWells
        | Error::Geometry(_)
        | Error::Labels(_) => 2,
        Error::NonConvergence { .. } | Error::LineSearchFailure { .. } => 3,
        Error::Adaptive { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn load_config(args: &RunArgs) -> Result<ProblemConfig, Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::ConfigParse {
        line: 0,
        msg: format!("cannot read {}: {e}", args.config.display()),
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(levels) = args.levels {
        cfg.max_levels = levels.max(1);
    }
    if let Some(theta) = args.theta {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::ConfigValue {
                field: "theta",
                msg: format!("must lie in (0, 1], got {theta}"),
            });
        }
        cfg.theta = theta;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn run(mode: RunMode, args: &RunArgs) -> Result<(), Error> {
    let cfg = load_config(args)?;
    let well = cfg.wells()?;
    let data = cfg.problem_data();
    let mesh = cfg.build_mesh()?;
    let adaptive = AdaptiveConfig {
        mode: match mode {
            RunMode::UniformStudy => RefinementMode::UniformHalving,
            _ => RefinementMode::Adaptive(cfg.theta),
        },
        max_levels: match mode {
            RunMode::SingleSolve => 1,
            _ => cfg.max_levels,
        },
        dof_budget: cfg.dof_budget,
        eta_target: cfg.eta_target,
        compute_dist_surrogate: cfg.dist_surrogate,
        solver: SolverOptions {
            tol: cfg.tol,
            max_outer: cfg.max_iter,
            mean_constraint: true,
            seed: cfg.seed,
        },
    };
    let run = adaptive_loop(mesh, &well, &data, &adaptive)?;
    report(&run);
    let out_dir = PathBuf::from(&cfg.out_dir);
    let files = write_outputs(&run, &out_dir)?;
    println!("wrote {} files to {}", files.len(), out_dir.display());
    Ok(())
}

fn report(run: &RunRecord) {
    for l in &run.levels {
        println!(
            "level {} elements {} dofs {} J_h {} eta {} (omega {} c1 {} c2 {} s {}) iterations {}",
            l.level,
            l.n_elements,
            l.n_dofs,
            l.energy,
            l.eta_total,
            l.eta_omega,
            l.eta_c1,
            l.eta_c2,
            l.eta_s,
            l.solver_iterations
        );
    }
}
