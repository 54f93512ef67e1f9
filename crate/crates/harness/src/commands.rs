//! The five CLI commands as library functions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hints_core::deeponet::{evaluate, train_from, Arch, Checkpoint, DeepONetParams, Provenance, TrainState};
use hints_core::fem::ProblemKind;
use hints_core::hints::HintsConfig;
use hints_core::linalg::sym_eigen;
use hints_core::mesh::GeometryTag;
use hints_core::problem::Sampler;
use hints_core::transfer::fine_tune;
use serde::{Deserialize, Serialize};

use crate::bench::{bench, num, run_method, trace_file_name, write_trace_csv, BenchReport, BenchSpec, Method, Networks};
use crate::config::{require_file, Preset};
use crate::dataset::{generate, Dataset};
use crate::error::{HarnessError, Result};

pub fn arch_for(problem: ProblemKind) -> Arch {
    match problem {
        ProblemKind::Darcy => Arch::darcy(),
        ProblemKind::Elasticity => Arch::elasticity(),
    }
}

/// `foo/bar.json` -> `foo/bar.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn to_json(v: &impl Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Checkpoint::from_json(&text).map_err(|e| HarnessError::format(path, e.to_string()))
}

pub fn load_params(path: &Path) -> Result<DeepONetParams> {
    load_checkpoint(path)?.params().map_err(|e| HarnessError::format(path, e.to_string()))
}

#[derive(Debug, Clone)]
pub struct DatagenArgs {
    pub problem: ProblemKind,
    pub geometry: GeometryTag,
    pub mesh_n: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
}

/// Writes the dataset and `<stem>.mesh.json` next to it.
pub fn datagen(args: &DatagenArgs) -> Result<Dataset> {
    let ds = generate(args.problem, args.geometry, args.mesh_n, args.n_samples, args.seed, args.jobs)?;
    write(&args.out, ds.to_bytes())?;
    write(&sibling(&args.out, "mesh.json"), ds.mesh.to_json()?)?;
    Ok(ds)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<u64>,
    pub out: PathBuf,
    pub quiet: bool,
}

/// Wall-clock and headline numbers of a run; kept out of the checkpoint so
/// checkpoints stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub wall_clock_secs: f64,
    pub epochs_or_iterations: u64,
    pub best_test_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_test_error: Option<f64>,
    /// Fine-tuning only: whether it took less time than the source training run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faster_than_training: Option<bool>,
}

pub fn train_cmd(args: &TrainArgs) -> Result<(Checkpoint, RunInfo)> {
    let preset = Preset::load_or_default(args.config.as_deref())?;
    let section = preset.train.unwrap_or_else(|| crate::config::TrainSection {
        train_data: None,
        test_data: None,
        optimizer: Default::default(),
    });
    let train_path = require_file(args.train_data.as_ref().or(section.train_data.as_ref()), "train.train_data")?;
    let test_path = match args.test_data.as_ref().or(section.test_data.as_ref()) {
        Some(p) => Some(require_file(Some(p), "train.test_data")?),
        None => None,
    };
    let resume = match &args.resume {
        Some(p) => Some(load_checkpoint(&require_file(Some(p), "--resume")?)?),
        None => None,
    };
    let mut cfg = section.optimizer;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }

    let train_ds = Dataset::load(&train_path)?;
    cfg.validate(train_ds.len())?;
    let train_set = train_ds.to_operator_dataset()?;
    let test_ds = test_path.as_deref().map(Dataset::load).transpose()?;
    if let Some(t) = &test_ds {
        if t.header.problem != train_ds.header.problem {
            return Err(HarnessError::Config("train and test datasets are for different problems".into()));
        }
    }
    let test_set = test_ds.as_ref().map(Dataset::to_operator_dataset).transpose()?;
    let arch = arch_for(train_ds.header.problem);

    let state = match &resume {
        Some(ck) => {
            let st = ck.train_state()?;
            if st.params.arch != arch {
                return Err(HarnessError::Config("resume checkpoint architecture does not match the dataset".into()));
            }
            st
        }
        None => {
            let mut params = hints_core::deeponet::init_params(&arch, cfg.seed)?;
            if cfg.normalize_targets && train_set.target_rms() > 0.0 {
                params.output_scale = train_set.target_rms();
            }
            TrainState::from_params(params)
        }
    };
    let start = Instant::now();
    let mut history = String::from("epoch,train_loss,test_error\n");
    let quiet = args.quiet;
    let outcome = train_from(&train_set, test_set.as_ref(), &cfg, state, |r| {
        let test = r.test_error.map(num).unwrap_or_default();
        history += &format!("{},{},{}\n", r.epoch, num(r.train_loss), test);
        if !quiet {
            if let Some(e) = r.test_error {
                eprintln!("epoch {:>5}  loss {:.4e}  test error {:.4}", r.epoch, r.train_loss, e);
            }
        }
    })?;
    let wall = start.elapsed().as_secs_f64();

    let ck = Checkpoint::from_train_state(&outcome.state, cfg.seed);
    write(&args.out, ck.to_json()?)?;
    // a resumed run appends to the existing history
    let hist_path = sibling(&args.out, "history.csv");
    if resume.is_some() {
        if let Ok(old) = std::fs::read_to_string(&hist_path) {
            history = old + history.split_once('\n').map_or("", |(_, rest)| rest);
        }
    }
    write(&hist_path, history)?;
    let info = RunInfo {
        command: "train".into(),
        wall_clock_secs: wall,
        epochs_or_iterations: outcome.state.epoch,
        best_test_error: outcome.state.best_test_error.is_finite().then_some(outcome.state.best_test_error),
        source_test_error: None,
        faster_than_training: None,
    };
    write(&sibling(&args.out, "run.json"), to_json(&info)?)?;
    Ok((ck, info))
}

#[derive(Debug, Clone, Default)]
pub struct FineTuneArgs {
    pub config: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub target_data: Option<PathBuf>,
    pub target_test_data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub out: PathBuf,
}

pub fn finetune_cmd(args: &FineTuneArgs) -> Result<(Checkpoint, RunInfo)> {
    let preset = Preset::load_or_default(args.config.as_deref())?;
    let section = preset.finetune.unwrap_or_else(|| crate::config::FineTuneSection {
        source_checkpoint: None,
        target_data: None,
        target_test_data: None,
        n_target: None,
        optimizer: Default::default(),
    });
    let src_path = require_file(args.checkpoint.as_ref().or(section.source_checkpoint.as_ref()), "finetune.source_checkpoint")?;
    let target_path = require_file(args.target_data.as_ref().or(section.target_data.as_ref()), "finetune.target_data")?;
    let test_path = match args.target_test_data.as_ref().or(section.target_test_data.as_ref()) {
        Some(p) => Some(require_file(Some(p), "finetune.target_test_data")?),
        None => None,
    };
    let mut cfg = section.optimizer;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(i) = args.iterations {
        cfg.iterations = i;
    }
    cfg.validate()?;

    let source = load_params(&src_path)?;
    let target_ds = Dataset::load(&target_path)?;
    let target_ds = target_ds.head(section.n_target.unwrap_or(target_ds.len()));
    if arch_for(target_ds.header.problem) != source.arch {
        return Err(HarnessError::Config("source checkpoint and target data disagree on the problem".into()));
    }
    let target = target_ds.to_operator_dataset()?;

    let start = Instant::now();
    let outcome = fine_tune(&source, &target, &cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let mut ck = Checkpoint::new(&outcome.params, cfg.seed, cfg.iterations);
    ck.provenance = Some(Provenance {
        source_checkpoint: src_path.display().to_string(),
        target_geometry: target_ds.header.geometry.to_string(),
        config: serde_json::to_value(&cfg).map_err(|e| HarnessError::Config(e.to_string()))?,
    });
    write(&args.out, ck.to_json()?)?;
    let mut history = String::from("iteration,loss,regression,ceod,lambda2\n");
    for r in &outcome.history {
        history += &format!("{},{},{},{},{}\n", r.iteration, num(r.loss), num(r.regression), num(r.ceod), num(r.lambda2));
    }
    write(&sibling(&args.out, "history.csv"), history)?;

    let (best, src_err) = match &test_path {
        Some(p) => {
            let test = Dataset::load(p)?.to_operator_dataset()?;
            (Some(evaluate(&outcome.params, &test, 64)?), Some(evaluate(&source, &test, 64)?))
        }
        None => (None, None),
    };
    let train_wall = std::fs::read_to_string(sibling(&src_path, "run.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<RunInfo>(&t).ok())
        .map(|r| r.wall_clock_secs);
    let info = RunInfo {
        command: "finetune".into(),
        wall_clock_secs: wall,
        epochs_or_iterations: cfg.iterations,
        best_test_error: best,
        source_test_error: src_err,
        faster_than_training: train_wall.map(|t| wall < t),
    };
    if info.faster_than_training == Some(false) {
        eprintln!("note: fine-tuning took longer ({wall:.1}s) than source training ({:.1}s)", train_wall.unwrap_or(0.0));
    }
    write(&sibling(&args.out, "run.json"), to_json(&info)?)?;
    Ok((ck, info))
}

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub config: Option<PathBuf>,
    pub problem: ProblemKind,
    pub geometry: GeometryTag,
    pub method: Method,
    pub mesh_n: usize,
    pub seed: u64,
    pub sample: u64,
    pub checkpoint: Option<PathBuf>,
    pub tl_checkpoint: Option<PathBuf>,
    pub modes: bool,
    /// Output directory.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub trace_csv: PathBuf,
    pub solution_csv: PathBuf,
    pub converged_at: Option<usize>,
    pub final_error: f64,
    pub threshold: f64,
}

/// One solve with full trace and nodal dumps of the solution and its error.
pub fn solve_cmd(args: &SolveArgs) -> Result<SolveSummary> {
    let preset = Preset::load_or_default(args.config.as_deref())?;
    let hints = preset.hints.unwrap_or_default();
    hints.validate()?;
    let source = match (args.method, &args.checkpoint) {
        (Method::Hints, None) => return Err(HarnessError::Config("method hints needs --checkpoint".into())),
        (_, Some(p)) => Some(load_params(&require_file(Some(p), "--checkpoint")?)?),
        _ => None,
    };
    let tl = match (args.method, &args.tl_checkpoint) {
        (Method::HintsTl, None) => return Err(HarnessError::Config("method hints-tl needs --tl-checkpoint".into())),
        (_, Some(p)) => Some(load_params(&require_file(Some(p), "--tl-checkpoint")?)?),
        _ => None,
    };
    let sampler = Sampler::new(args.problem, args.geometry, args.mesh_n)?;
    let inst = sampler.instance(args.seed, args.sample)?;
    let sys = sampler.system(&inst)?;
    let coeff = sampler.masked_coeff(&inst);
    let basis = if args.modes { Some(sym_eigen(&sys.k.to_dense())?) } else { None };
    let nets = Networks { source: source.as_ref(), transferred: tl.as_ref() };
    let (u, trace) = run_method(args.method, &sys, &coeff, &nets, &hints, basis.as_ref())?;

    let name = trace_file_name(args.problem, args.geometry, args.method, args.sample);
    let trace_csv = args.out.join(&name);
    let mut buf = Vec::new();
    write_trace_csv(&trace, &mut buf)?;
    write(&trace_csv, buf)?;

    let u_star = sys.scatter(&sys.solve_direct()?);
    let u_full = sys.scatter(&u);
    let c = args.problem.dofs_per_node();
    let mut dump = String::from("node,x,y,component,u_star,u,error\n");
    for (i, p) in sampler.mesh.nodes.iter().enumerate() {
        for k in 0..c {
            let (a, b) = (u_star[i * c + k], u_full[i * c + k]);
            dump += &format!("{i},{},{},{k},{},{},{}\n", num(p[0]), num(p[1]), num(a), num(b), num(a - b));
        }
    }
    let solution_csv = args.out.join(name.replace(".csv", "_solution.csv"));
    write(&solution_csv, dump)?;
    Ok(SolveSummary {
        trace_csv,
        solution_csv,
        converged_at: trace.converged_at,
        final_error: trace.final_error(),
        threshold: trace.threshold,
    })
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub config: Option<PathBuf>,
    pub problem: ProblemKind,
    pub geometry: GeometryTag,
    pub methods: Vec<Method>,
    pub mesh_n: Option<usize>,
    pub n_cases: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub tl_checkpoint: Option<PathBuf>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
}

pub fn default_mesh_n(problem: ProblemKind) -> usize {
    match problem {
        ProblemKind::Darcy => 32,
        ProblemKind::Elasticity => 24,
    }
}

pub fn bench_cmd(args: &BenchArgs) -> Result<BenchReport> {
    let preset = Preset::load_or_default(args.config.as_deref())?;
    let hints: HintsConfig = preset.hints.unwrap_or_default();
    let section = preset.bench.unwrap_or_default();
    let source = args.checkpoint.as_ref().map(|p| require_file(Some(p), "--checkpoint").and_then(|p| load_params(&p))).transpose()?;
    let tl = args.tl_checkpoint.as_ref().map(|p| require_file(Some(p), "--tl-checkpoint").and_then(|p| load_params(&p))).transpose()?;
    let spec = BenchSpec {
        problem: args.problem,
        geometry: args.geometry,
        mesh_n: args.mesh_n.or(section.mesh_n).unwrap_or_else(|| default_mesh_n(args.problem)),
        methods: &args.methods,
        n_cases: args.n_cases.unwrap_or(section.n_cases),
        seed: args.seed.unwrap_or(section.seed),
        hints: &hints,
        jobs: args.jobs,
    };
    let report = bench(&spec, &Networks { source: source.as_ref(), transferred: tl.as_ref() })?;
    if let Some(out) = &args.out {
        write(out, report.to_json()?)?;
    }
    Ok(report)
}
