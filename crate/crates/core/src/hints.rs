//! Hybrid iteration: Gauss-Seidel sweeps interleaved with DeepONet
//! corrections computed from the current residual.

use serde::{Deserialize, Serialize};

use crate::deeponet::{forward, DeepONetParams, SAMPLE_LEN};
use crate::error::{Error, Result};
use crate::fem::{AssembledSystem, ProblemKind};
use crate::field::{GridField, MeshToGrid, GRID_LEN};
use crate::linalg::{gauss_seidel_sweep, norm2, residual, EigenBasis};
use crate::mesh::{nodal_areas, Point};

/// How the two elasticity residual components reach the single forcing
/// channel. The y-component is fed through the x/y reflection symmetry of the
/// problem: transpose both channels, query at swapped coordinates and swap
/// the predicted components back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElasticityFeed {
    /// x-residual on odd DeepONet steps, y-residual on even ones.
    Alternate,
    /// Both components every DeepONet step, corrections summed. About 30%
    /// fewer iterations than `Alternate` with a trained network.
    #[default]
    Superpose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HintsConfig {
    /// One DeepONet step every `n_r` iterations.
    pub n_r: usize,
    pub max_iterations: usize,
    /// Converged once `||u* - u||_2 <= tolerance * max(1, ||u*||_2)`.
    pub tolerance: f64,
    /// Mode indices to track; `None` picks lowest, middle and highest.
    pub track_modes: Option<Vec<usize>>,
    /// RMS the residual grid field is rescaled to before entering the branch.
    pub residual_ref_scale: f64,
    pub elasticity_feed: ElasticityFeed,
}

impl Default for HintsConfig {
    fn default() -> Self {
        HintsConfig {
            n_r: 10,
            max_iterations: 20_000,
            tolerance: 1e-12,
            track_modes: None,
            residual_ref_scale: 0.1,
            elasticity_feed: ElasticityFeed::Superpose,
        }
    }
}

impl HintsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 {
            return Err(Error::InvalidParameter("n_r must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.residual_ref_scale > 0.0) || !self.residual_ref_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "residual_ref_scale must be positive, got {}",
                self.residual_ref_scale
            )));
        }
        Ok(())
    }

    pub fn tracked_modes(&self, n: usize) -> Vec<usize> {
        match &self.track_modes {
            Some(m) => m.clone(),
            None => default_track_modes(n),
        }
    }
}

/// Indices {0, 1, 2, n/2, n-2, n-1}, deduplicated for small n.
pub fn default_track_modes(n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut m: Vec<usize> =
        [0, 1, 2, n / 2, n.saturating_sub(2), n - 1].into_iter().filter(|&i| i < n).collect();
    m.sort_unstable();
    m.dedup();
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// The starting guess, before any iteration.
    Init,
    Gs,
    #[serde(rename = "deeponet")]
    DeepOnet,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Init => "init",
            StepKind::Gs => "gs",
            StepKind::DeepOnet => "deeponet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub step_kind: StepKind,
    pub error_norm: f64,
    pub residual_norm: f64,
    pub mode_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintsTrace {
    pub records: Vec<TraceRecord>,
    pub converged_at: Option<usize>,
    /// Absolute error threshold used for the convergence test.
    pub threshold: f64,
    pub tracked_modes: Vec<usize>,
}

impl HintsTrace {
    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.error_norm)
    }

    /// Iterations performed (the initial record does not count).
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }
}

/// `|v_i^T (u* - u)|` for each tracked index.
pub fn mode_errors(basis: &EigenBasis, u_star: &[f64], u: &[f64], tracked: &[usize]) -> Result<Vec<f64>> {
    if u_star.len() != u.len() {
        return Err(Error::DimensionMismatch { what: "mode_errors: u vs u*", expected: u_star.len(), got: u.len() });
    }
    let e: Vec<f64> = u_star.iter().zip(u).map(|(a, b)| a - b).collect();
    tracked
        .iter()
        .map(|&i| {
            let v = basis.eigenvectors.get(i).ok_or(Error::IndexOutOfRange { index: i, len: basis.len() })?;
            if v.len() != e.len() {
                return Err(Error::DimensionMismatch { what: "mode_errors: eigenvector", expected: e.len(), got: v.len() });
            }
            Ok(v.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>().abs())
        })
        .collect()
}

/// Per-solve geometry data: grid interpolation, nodal areas and the query
/// points where corrections are evaluated.
struct Workspace {
    to_grid: MeshToGrid,
    areas: Vec<f64>,
    /// Nodes carrying at least one free dof.
    query: Vec<Point>,
    /// `query` with x and y swapped.
    query_swapped: Vec<Point>,
    /// Query index of each reduced dof's node, and the dof's component.
    dof_query: Vec<(usize, usize)>,
}

impl Workspace {
    fn new(system: &AssembledSystem) -> Self {
        let mesh = &system.mesh;
        let mut node_query = vec![usize::MAX; mesh.n_nodes()];
        let mut query = Vec::new();
        let mut dof_query = Vec::with_capacity(system.n_free());
        for r in 0..system.n_free() {
            let (node, comp) = system.dof(r);
            if node_query[node] == usize::MAX {
                node_query[node] = query.len();
                query.push(mesh.nodes[node]);
            }
            dof_query.push((node_query[node], comp));
        }
        Workspace {
            to_grid: MeshToGrid::new(mesh),
            areas: nodal_areas(mesh),
            query_swapped: query.iter().map(|p| [p[1], p[0]]).collect(),
            query,
            dof_query,
        }
    }

    /// Residual component `comp` as a grid field of nodal densities.
    fn residual_grid(&self, system: &AssembledSystem, r: &[f64], comp: usize) -> Result<GridField> {
        if r.len() != system.n_free() {
            return Err(Error::DimensionMismatch { what: "residual", expected: system.n_free(), got: r.len() });
        }
        let c = system.kind.dofs_per_node();
        if comp >= c {
            return Err(Error::IndexOutOfRange { index: comp, len: c });
        }
        let full = system.scatter(r);
        let nodal: Vec<f64> = (0..self.areas.len()).map(|i| full[i * c + comp] / self.areas[i]).collect();
        self.to_grid.apply(&nodal)
    }
}

fn rescaled_input(coeff_grid: &GridField, residual_grid: &GridField, ref_scale: f64) -> (Vec<f64>, f64) {
    let s = ref_scale / (residual_grid.rms() + 1e-30);
    let mut x = Vec::with_capacity(SAMPLE_LEN);
    x.extend_from_slice(coeff_grid.values());
    x.extend(residual_grid.values().iter().map(|v| s * v));
    (x, s)
}

/// Branch input built from a reduced residual: channel 0 is `coeff_grid`,
/// channel 1 the residual component `comp` divided by nodal areas,
/// interpolated to the grid and rescaled by `s` to RMS `residual_ref_scale`.
pub fn residual_to_branch_input(
    system: &AssembledSystem,
    r: &[f64],
    coeff_grid: &GridField,
    comp: usize,
    config: &HintsConfig,
) -> Result<(Vec<f64>, f64)> {
    let ws = Workspace::new(system);
    let g = ws.residual_grid(system, r, comp)?;
    Ok(rescaled_input(coeff_grid, &g, config.residual_ref_scale))
}

/// Pure Gauss-Seidel from `u = 0`.
pub fn gs_solve(system: &AssembledSystem, config: &HintsConfig, basis: Option<&EigenBasis>) -> Result<(Vec<f64>, HintsTrace)> {
    run(system, None, vec![0.0; system.n_free()], config, basis)
}

/// Pure Gauss-Seidel from a given starting vector.
pub fn gs_solve_from(
    system: &AssembledSystem,
    u0: Vec<f64>,
    config: &HintsConfig,
    basis: Option<&EigenBasis>,
) -> Result<(Vec<f64>, HintsTrace)> {
    if u0.len() != system.n_free() {
        return Err(Error::DimensionMismatch { what: "initial guess", expected: system.n_free(), got: u0.len() });
    }
    run(system, None, u0, config, basis)
}

/// Hybrid solve from `u = 0`: every `n_r`-th iteration is a DeepONet
/// correction, the rest are Gauss-Seidel sweeps.
pub fn hints_solve(
    system: &AssembledSystem,
    params: &DeepONetParams,
    coeff_grid: &GridField,
    config: &HintsConfig,
    basis: Option<&EigenBasis>,
) -> Result<(Vec<f64>, HintsTrace)> {
    if params.arch.n_out != system.kind.dofs_per_node() {
        return Err(Error::DimensionMismatch {
            what: "network output components",
            expected: system.kind.dofs_per_node(),
            got: params.arch.n_out,
        });
    }
    if coeff_grid.values().len() != GRID_LEN {
        return Err(Error::DimensionMismatch { what: "coefficient grid", expected: GRID_LEN, got: coeff_grid.values().len() });
    }
    run(system, Some((params, coeff_grid)), vec![0.0; system.n_free()], config, basis)
}

fn run(
    system: &AssembledSystem,
    net: Option<(&DeepONetParams, &GridField)>,
    mut u: Vec<f64>,
    config: &HintsConfig,
    basis: Option<&EigenBasis>,
) -> Result<(Vec<f64>, HintsTrace)> {
    config.validate()?;
    let n = system.n_free();
    if let Some(b) = basis {
        if b.len() != n {
            return Err(Error::DimensionMismatch { what: "eigenbasis size", expected: n, got: b.len() });
        }
    }
    let tracked = match basis {
        Some(_) => config.tracked_modes(n),
        None => Vec::new(),
    };
    let u_star = system.solve_direct()?;
    let threshold = config.tolerance * norm2(&u_star).max(1.0);
    let ws = net.map(|_| Workspace::new(system));

    let mut trace = HintsTrace { records: Vec::new(), converged_at: None, threshold, tracked_modes: tracked };
    let record = |t: usize, kind: StepKind, u: &[f64], trace: &mut HintsTrace| -> Result<bool> {
        let e: Vec<f64> = u_star.iter().zip(u).map(|(a, b)| a - b).collect();
        let error_norm = norm2(&e);
        if !error_norm.is_finite() {
            return Err(Error::Divergence(format!("error norm not finite at iteration {t}")));
        }
        let mode = match basis {
            Some(b) => mode_errors(b, &u_star, u, &trace.tracked_modes)?,
            None => Vec::new(),
        };
        trace.records.push(TraceRecord {
            iteration: t,
            step_kind: kind,
            error_norm,
            residual_norm: norm2(&residual(&system.k, &system.f, u)),
            mode_errors: mode,
        });
        let done = error_norm <= threshold;
        if done {
            trace.converged_at = Some(t);
        }
        Ok(done)
    };

    if record(0, StepKind::Init, &u, &mut trace)? {
        return Ok((u, trace));
    }
    let mut deeponet_steps = 0usize;
    for t in 1..=config.max_iterations {
        let kind = match (net, &ws) {
            (Some((params, coeff)), Some(ws)) if t % config.n_r == 0 => {
                deeponet_steps += 1;
                deeponet_step(system, params, coeff, ws, config, deeponet_steps, &mut u)?;
                StepKind::DeepOnet
            }
            _ => {
                gauss_seidel_sweep(&system.k, &system.f, &mut u)?;
                StepKind::Gs
            }
        };
        if record(t, kind, &u, &mut trace)? {
            break;
        }
    }
    Ok((u, trace))
}

/// One correction `u += prediction / s` on the free dofs.
fn deeponet_step(
    system: &AssembledSystem,
    params: &DeepONetParams,
    coeff: &GridField,
    ws: &Workspace,
    config: &HintsConfig,
    step: usize,
    u: &mut [f64],
) -> Result<()> {
    let r = residual(&system.k, &system.f, u);
    let feeds: &[usize] = match (system.kind, config.elasticity_feed) {
        (ProblemKind::Darcy, _) => &[0],
        (ProblemKind::Elasticity, ElasticityFeed::Superpose) => &[0, 1],
        (ProblemKind::Elasticity, ElasticityFeed::Alternate) => {
            if step % 2 == 1 {
                &[0]
            } else {
                &[1]
            }
        }
    };
    let nq = ws.query.len();
    let n_out = system.kind.dofs_per_node();
    let mut delta = vec![0.0; n_out * nq];
    for &comp in feeds {
        let g = ws.residual_grid(system, &r, comp)?;
        let reflect = comp == 1;
        let (x, s) = if reflect {
            rescaled_input(&coeff.transposed(), &g.transposed(), config.residual_ref_scale)
        } else {
            rescaled_input(coeff, &g, config.residual_ref_scale)
        };
        let coords = if reflect { &ws.query_swapped } else { &ws.query };
        let pred = forward(params, &x, 1, coords)?;
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("DeepONet prediction not finite (step {step}, component {comp})")));
        }
        for c in 0..n_out {
            // under reflection the predicted x-displacement is the physical y one
            let dst = if reflect { 1 - c } else { c };
            for q in 0..nq {
                delta[dst * nq + q] += pred[c * nq + q] / s;
            }
        }
    }
    for (ui, &(q, c)) in u.iter_mut().zip(&ws.dof_query) {
        *ui += delta[c * nq + q];
    }
    Ok(())
}
