//! Random problem instances: GRF coefficient and forcing fields on the sensor
//! grid, the matching FE system, and the masked branch-net input.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::deeponet::{OperatorDataset, SAMPLE_LEN};
use crate::error::{Error, Result};
use crate::fem::{darcy_system, elasticity_system, AssembledSystem, MaterialParams, ProblemKind};
use crate::field::{grf_factor, mask_cutout, GridField, GridToMesh, GrfFactor, GrfSpec, MaskRegion};
use crate::mesh::{GeometryTag, Point, TriMesh};

/// Smallest admissible grid value of k or E.
pub const COEFF_FLOOR: f64 = 0.05;
pub const MAX_REDRAWS: usize = 1000;
pub const CORR_LEN: f64 = 0.1;

pub fn coeff_spec() -> GrfSpec {
    GrfSpec { mean: 1.0, std: 0.3, corr_len: CORR_LEN }
}

pub fn forcing_spec() -> GrfSpec {
    GrfSpec { mean: 0.0, std: 0.1, corr_len: CORR_LEN }
}

/// Coefficient (k or E) and forcing (f, or the x-load g) on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub coeff: GridField,
    pub forcing: GridField,
}

/// Two-channel branch input `[coeff, forcing]`, zeroed outside the geometry.
pub fn branch_input(coeff: &GridField, forcing: &GridField, regions: &[MaskRegion]) -> Vec<f64> {
    let mut x = Vec::with_capacity(SAMPLE_LEN);
    x.extend_from_slice(mask_cutout(coeff, regions).values());
    x.extend_from_slice(mask_cutout(forcing, regions).values());
    x
}

/// Draws instances for one problem on one geometry and assembles their systems.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub kind: ProblemKind,
    pub geometry: GeometryTag,
    pub mesh: Arc<TriMesh>,
    pub material: MaterialParams,
    pub regions: Vec<MaskRegion>,
    coeff: GrfFactor,
    forcing: GrfFactor,
    to_mesh: GridToMesh,
}

impl Sampler {
    pub fn new(kind: ProblemKind, geometry: GeometryTag, mesh_n: usize) -> Result<Self> {
        let mesh = Arc::new(geometry.mesh(mesh_n)?);
        Self::with_mesh(kind, geometry, mesh)
    }

    pub fn with_mesh(kind: ProblemKind, geometry: GeometryTag, mesh: Arc<TriMesh>) -> Result<Self> {
        Ok(Sampler {
            kind,
            geometry,
            material: MaterialParams::default(),
            regions: MaskRegion::for_geometry(geometry),
            coeff: grf_factor(coeff_spec())?,
            forcing: grf_factor(forcing_spec())?,
            to_mesh: GridToMesh::new(&mesh),
            mesh,
        })
    }

    /// Instance `index` of the stream identified by `seed`.
    pub fn instance(&self, seed: u64, index: u64) -> Result<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let coeff = self.coeff.sample_above(&mut rng, COEFF_FLOOR, MAX_REDRAWS)?;
        let forcing = self.forcing.sample(&mut rng);
        Ok(Instance { coeff, forcing })
    }

    pub fn branch_input(&self, inst: &Instance) -> Vec<f64> {
        branch_input(&inst.coeff, &inst.forcing, &self.regions)
    }

    /// Coefficient grid as the network sees it (masked).
    pub fn masked_coeff(&self, inst: &Instance) -> GridField {
        mask_cutout(&inst.coeff, &self.regions)
    }

    pub fn system(&self, inst: &Instance) -> Result<AssembledSystem> {
        let c = self.to_mesh.apply(&inst.coeff);
        let f = self.to_mesh.apply(&inst.forcing);
        match self.kind {
            ProblemKind::Darcy => darcy_system(self.mesh.clone(), &c, &f),
            ProblemKind::Elasticity => {
                let load: Vec<f64> = f.iter().flat_map(|&g| [g, 0.0]).collect();
                elasticity_system(self.mesh.clone(), &c, &load, self.material)
            }
        }
    }

    /// Full nodal solution (node-major, components interleaved).
    pub fn solve(&self, inst: &Instance) -> Result<Vec<f64>> {
        let sys = self.system(inst)?;
        Ok(sys.scatter(&sys.solve_direct()?))
    }

    /// Query points used as training targets: every mesh node.
    pub fn query_points(&self) -> Vec<Point> {
        self.mesh.nodes.clone()
    }
}

/// Reorder a node-major interleaved solution into `[component][node]`.
pub fn component_major(u: &[f64], n_out: usize) -> Vec<f64> {
    let n = u.len() / n_out;
    (0..n_out).flat_map(|c| (0..n).map(move |i| u[i * n_out + c])).collect()
}

/// Build a training set from instances and their nodal solutions.
pub fn operator_dataset(sampler: &Sampler, samples: &[(Instance, Vec<f64>)]) -> Result<OperatorDataset> {
    let n_out = sampler.kind.dofs_per_node();
    let coords = sampler.query_points();
    let mut inputs = Vec::with_capacity(samples.len() * SAMPLE_LEN);
    let mut targets = Vec::with_capacity(samples.len() * coords.len() * n_out);
    for (inst, u) in samples {
        if u.len() != coords.len() * n_out {
            return Err(Error::DimensionMismatch { what: "nodal solution", expected: coords.len() * n_out, got: u.len() });
        }
        inputs.extend(sampler.branch_input(inst));
        targets.extend(component_major(u, n_out));
    }
    OperatorDataset::new(inputs, targets, coords, n_out)
}

/// Instances `start..start+count` with their solutions.
pub fn generate(sampler: &Sampler, seed: u64, start: u64, count: usize) -> Result<Vec<(Instance, Vec<f64>)>> {
    (start..start + count as u64)
        .map(|i| {
            let inst = sampler.instance(seed, i)?;
            let u = sampler.solve(&inst)?;
            Ok((inst, u))
        })
        .collect()
}
