use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hints_core::fem::ProblemKind;
use hints_core::mesh::GeometryTag;
use hints_kit::bench::Method;
use hints_kit::commands::{
    bench_cmd, datagen, default_mesh_n, finetune_cmd, solve_cmd, train_cmd, BenchArgs, DatagenArgs, FineTuneArgs,
    SolveArgs, TrainArgs,
};
use hints_kit::config::Preset;
use hints_kit::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "hints-kit", version, about = "Hybrid DeepONet / Gauss-Seidel solver experiments")]
struct Cli {
    /// Seed for data draws, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sample-parallel work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// TOML preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Target {
    /// darcy or elasticity.
    #[arg(long)]
    problem: Option<ProblemKind>,
    /// lshape, lshape-circle, lshape-triangle, square or square-circle.
    #[arg(long)]
    geometry: Option<GeometryTag>,
    /// Mesh resolution (cells per unit length).
    #[arg(long)]
    mesh_n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw random instances, solve them and write a dataset file.
    Datagen {
        #[command(flatten)]
        target: Target,
        /// Number of instances to draw.
        #[arg(long)]
        n_samples: Option<usize>,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a DeepONet; writes a JSON checkpoint and a loss-history CSV.
    Train {
        /// Training dataset (overrides train.train_data).
        #[arg(long)]
        train_data: Option<PathBuf>,
        /// Test dataset for the best-on-test selection.
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Total epochs (overrides the preset).
        #[arg(long)]
        epochs: Option<u64>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// No per-epoch progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Fine-tune a source checkpoint on target-geometry data.
    Finetune {
        /// Source checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Labelled target-geometry dataset.
        #[arg(long)]
        target_data: Option<PathBuf>,
        /// Held-out target data for the error report.
        #[arg(long)]
        target_test_data: Option<PathBuf>,
        /// Optimizer iterations (overrides the preset).
        #[arg(long)]
        iterations: Option<u64>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance and export its trace and solution.
    Solve {
        #[command(flatten)]
        target: Target,
        /// gs, hints, hints-tl or direct.
        #[arg(long)]
        method: Method,
        /// Instance index within the seed's stream.
        #[arg(long, default_value_t = 0)]
        sample: u64,
        /// Source network (method hints).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Fine-tuned network (method hints-tl).
        #[arg(long)]
        tl_checkpoint: Option<PathBuf>,
        /// Record eigenmode errors (dense eigendecomposition).
        #[arg(long)]
        modes: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Iteration-count statistics of several methods on the same instances.
    Bench {
        #[command(flatten)]
        target: Target,
        /// Comma-separated: gs,hints,hints-tl,direct
        #[arg(long, value_delimiter = ',', default_value = "gs,hints")]
        methods: Vec<Method>,
        /// Instances per method.
        #[arg(long)]
        n_cases: Option<usize>,
        /// Source network (method hints).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Fine-tuned network (method hints-tl).
        #[arg(long)]
        tl_checkpoint: Option<PathBuf>,
        /// Report JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve(target: &Target, preset: &Preset, what: &str) -> Result<(ProblemKind, GeometryTag, usize)> {
    let data = preset.data.as_ref();
    let problem = target
        .problem
        .or(data.map(|d| d.problem))
        .ok_or_else(|| HarnessError::Config(format!("{what}: --problem is required")))?;
    let geometry = target
        .geometry
        .or(data.map(|d| d.geometry))
        .ok_or_else(|| HarnessError::Config(format!("{what}: --geometry is required")))?;
    let mesh_n = target.mesh_n.or(data.map(|d| d.mesh_n)).unwrap_or_else(|| default_mesh_n(problem));
    Ok((problem, geometry, mesh_n))
}

fn run(cli: Cli) -> Result<()> {
    let preset = Preset::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Datagen { target, n_samples, out } => {
            let (problem, geometry, mesh_n) = resolve(&target, &preset, "datagen")?;
            let n_samples = n_samples
                .or(preset.data.as_ref().map(|d| d.n_samples))
                .ok_or_else(|| HarnessError::Config("datagen: --n-samples is required".into()))?;
            let seed = cli.seed.or(preset.data.as_ref().map(|d| d.seed)).unwrap_or(0);
            let ds = datagen(&DatagenArgs { problem, geometry, mesh_n, n_samples, seed, jobs: cli.jobs, out: out.clone() })?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Train { train_data, test_data, resume, epochs, out, quiet } => {
            let args = TrainArgs { config: cli.config, train_data, test_data, resume, seed: cli.seed, epochs, out: out.clone(), quiet };
            let (_, info) = train_cmd(&args)?;
            match info.best_test_error {
                Some(e) => println!("wrote {} (best test error {e:.4}, {:.1}s)", out.display(), info.wall_clock_secs),
                None => println!("wrote {} ({:.1}s)", out.display(), info.wall_clock_secs),
            }
        }
        Command::Finetune { checkpoint, target_data, target_test_data, iterations, out } => {
            let args = FineTuneArgs {
                config: cli.config,
                checkpoint,
                target_data,
                target_test_data,
                seed: cli.seed,
                iterations,
                out: out.clone(),
            };
            let (_, info) = finetune_cmd(&args)?;
            println!("wrote {} ({:.1}s)", out.display(), info.wall_clock_secs);
            if let (Some(a), Some(b)) = (info.source_test_error, info.best_test_error) {
                println!("target test error: source {a:.4} -> fine-tuned {b:.4}");
            }
        }
        Command::Solve { target, method, sample, checkpoint, tl_checkpoint, modes, out } => {
            let (problem, geometry, mesh_n) = resolve(&target, &preset, "solve")?;
            let args = SolveArgs {
                config: cli.config,
                problem,
                geometry,
                method,
                mesh_n,
                seed: cli.seed.unwrap_or(0),
                sample,
                checkpoint,
                tl_checkpoint,
                modes,
                out,
            };
            let s = solve_cmd(&args)?;
            match s.converged_at {
                Some(it) => println!("{method}: converged in {it} iterations (error {:e})", s.final_error),
                None => println!("{method}: not converged (error {:e} > {:e})", s.final_error, s.threshold),
            }
            println!("trace: {}\nsolution: {}", s.trace_csv.display(), s.solution_csv.display());
        }
        Command::Bench { target, methods, n_cases, checkpoint, tl_checkpoint, out } => {
            let (problem, geometry, _) = resolve(&target, &preset, "bench")?;
            let args = BenchArgs {
                config: cli.config,
                problem,
                geometry,
                methods,
                mesh_n: target.mesh_n,
                n_cases,
                seed: cli.seed,
                checkpoint,
                tl_checkpoint,
                jobs: cli.jobs,
                out,
            };
            print!("{}", bench_cmd(&args)?.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
