//! Paired iteration-count benchmarks and per-solve trace export.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use hints_core::deeponet::DeepONetParams;
use hints_core::fem::{AssembledSystem, ProblemKind};
use hints_core::field::GridField;
use hints_core::hints::{gs_solve, hints_solve, HintsConfig, HintsTrace, StepKind, TraceRecord};
use hints_core::linalg::{norm2, EigenBasis};
use hints_core::mesh::GeometryTag;
use hints_core::problem::Sampler;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::with_pool;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gs,
    Hints,
    HintsTl,
    Direct,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gs => "gs",
            Method::Hints => "hints",
            Method::HintsTl => "hints-tl",
            Method::Direct => "direct",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Gs => "GS",
            Method::Hints => "HINTS-GS",
            Method::HintsTl => "Transferred HINTS-GS",
            Method::Direct => "direct",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Method::Gs, Method::Hints, Method::HintsTl, Method::Direct]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected gs, hints, hints-tl or direct)"))
    }
}

/// Networks available to a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Networks<'a> {
    pub source: Option<&'a DeepONetParams>,
    pub transferred: Option<&'a DeepONetParams>,
}

impl<'a> Networks<'a> {
    fn for_method(&self, m: Method) -> Result<Option<&'a DeepONetParams>> {
        let missing = |what: &str| HarnessError::Config(format!("method {m} needs a {what} checkpoint"));
        match m {
            Method::Gs | Method::Direct => Ok(None),
            Method::Hints => self.source.map(Some).ok_or_else(|| missing("source")),
            Method::HintsTl => self.transferred.map(Some).ok_or_else(|| missing("fine-tuned")),
        }
    }
}

/// Solve one system with `method`.
pub fn run_method(
    method: Method,
    system: &AssembledSystem,
    coeff_grid: &GridField,
    nets: &Networks<'_>,
    config: &HintsConfig,
    basis: Option<&EigenBasis>,
) -> Result<(Vec<f64>, HintsTrace)> {
    let net = nets.for_method(method)?;
    Ok(match (method, net) {
        (Method::Direct, _) => {
            let u = system.solve_direct()?;
            let record = TraceRecord {
                iteration: 0,
                step_kind: StepKind::Init,
                error_norm: 0.0,
                residual_norm: norm2(&hints_core::linalg::residual(&system.k, &system.f, &u)),
                mode_errors: Vec::new(),
            };
            let threshold = config.tolerance * norm2(&u).max(1.0);
            (u, HintsTrace { records: vec![record], converged_at: Some(0), threshold, tracked_modes: Vec::new() })
        }
        (_, Some(params)) => hints_solve(system, params, coeff_grid, config, basis)?,
        (_, None) => gs_solve(system, config, basis)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: Method,
    pub label: String,
    /// Iterations to tolerance per case, `None` when not converged.
    pub counts: Vec<Option<usize>>,
    pub n_converged: usize,
    /// Over converged cases only; population standard deviation.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub std: Option<f64>,
}

impl MethodStats {
    pub fn from_counts(method: Method, counts: Vec<Option<usize>>) -> Self {
        let mut ok: Vec<f64> = counts.iter().flatten().map(|&c| c as f64).collect();
        let (mean, median, std) = summary(&mut ok);
        MethodStats { method, label: method.label().to_string(), n_converged: ok.len(), counts, mean, median, std }
    }
}

/// (mean, median, population std); `None` for an empty sample.
pub fn summary(values: &mut [f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    let median = if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) };
    (Some(mean), Some(median), Some(var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(with = "crate::config::named")]
    pub problem: ProblemKind,
    #[serde(with = "crate::config::named")]
    pub geometry: GeometryTag,
    pub mesh_n: usize,
    pub n_cases: usize,
    pub seed: u64,
    pub hints: HintsConfig,
    pub methods: Vec<MethodStats>,
}

impl BenchReport {
    pub fn stats(&self, m: Method) -> Option<&MethodStats> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Mean / median / std table.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        let mut s = format!(
            "{} on {} (mesh n={}, {} cases, seed {})\n{:<22} {:>8} {:>8} {:>8} {:>10}\n",
            self.problem, self.geometry, self.mesh_n, self.n_cases, self.seed, "method", "mean", "median", "std", "converged"
        );
        for m in &self.methods {
            s += &format!(
                "{:<22} {:>8} {:>8} {:>8} {:>7}/{}\n",
                m.label,
                fmt(m.mean),
                fmt(m.median),
                fmt(m.std),
                m.n_converged,
                m.counts.len()
            );
        }
        s
    }
}

pub struct BenchSpec<'a> {
    pub problem: ProblemKind,
    pub geometry: GeometryTag,
    pub mesh_n: usize,
    pub methods: &'a [Method],
    pub n_cases: usize,
    pub seed: u64,
    pub hints: &'a HintsConfig,
    pub jobs: usize,
}

/// Run every method on the same `n_cases` systems drawn from stream `seed`.
/// Cases run concurrently and are merged by index, so `jobs` does not
/// affect the report.
pub fn bench(spec: &BenchSpec<'_>, nets: &Networks<'_>) -> Result<BenchReport> {
    if spec.n_cases == 0 {
        return Err(HarnessError::Config("bench needs at least one case".into()));
    }
    if spec.methods.is_empty() {
        return Err(HarnessError::Config("bench needs at least one method".into()));
    }
    spec.hints.validate()?;
    for &m in spec.methods {
        nets.for_method(m)?;
    }
    let sampler = Sampler::new(spec.problem, spec.geometry, spec.mesh_n)?;
    let per_case: Vec<Vec<Option<usize>>> = with_pool(spec.jobs, || {
        (0..spec.n_cases as u64)
            .into_par_iter()
            .map(|i| -> Result<Vec<Option<usize>>> {
                let inst = sampler.instance(spec.seed, i)?;
                let sys = sampler.system(&inst)?;
                let coeff = sampler.masked_coeff(&inst);
                spec.methods
                    .iter()
                    .map(|&m| Ok(run_method(m, &sys, &coeff, nets, spec.hints, None)?.1.converged_at))
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(j, &m)| MethodStats::from_counts(m, per_case.iter().map(|c| c[j]).collect()))
        .collect();
    Ok(BenchReport {
        problem: spec.problem,
        geometry: spec.geometry,
        mesh_n: spec.mesh_n,
        n_cases: spec.n_cases,
        seed: spec.seed,
        hints: spec.hints.clone(),
        methods,
    })
}

/// `iteration,step_kind,error_norm,residual_norm,mode_<i>...`
pub fn write_trace_csv(trace: &HintsTrace, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    let mut header = vec!["iteration".to_string(), "step_kind".into(), "error_norm".into(), "residual_norm".into()];
    header.extend(trace.tracked_modes.iter().map(|i| format!("mode_{i}")));
    out.write_record(&header).map_err(csv_err)?;
    for r in &trace.records {
        let mut row = vec![r.iteration.to_string(), r.step_kind.as_str().to_string(), num(r.error_norm), num(r.residual_norm)];
        row.extend(r.mode_errors.iter().map(|&v| num(v)));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| HarnessError::Config(format!("csv: {e}")))?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn trace_file_name(problem: ProblemKind, geometry: GeometryTag, method: Method, sample: u64) -> String {
    format!("{problem}_{geometry}_{method}_{sample}.csv")
}
