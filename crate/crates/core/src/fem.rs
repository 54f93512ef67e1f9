//! P1 finite-element assembly for scalar Darcy flow and plane-strain
//! elasticity, with elimination of homogeneous Dirichlet dofs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dense_solve, CsrMatrix};
use crate::mesh::{nodal_areas, square_mesh, Point, TriMesh};

/// Poisson's ratio used for data generation and solving.
pub const DEFAULT_NU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    Darcy,
    Elasticity,
}

impl ProblemKind {
    pub fn dofs_per_node(self) -> usize {
        match self {
            ProblemKind::Darcy => 1,
            ProblemKind::Elasticity => 2,
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            ProblemKind::Darcy => 0,
            ProblemKind::Elasticity => 1,
        }
    }

    pub fn from_u32(v: u32) -> Option<Self> {
        match v {
            0 => Some(ProblemKind::Darcy),
            1 => Some(ProblemKind::Elasticity),
            _ => None,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            ProblemKind::Darcy => "darcy",
            ProblemKind::Elasticity => "elasticity",
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "darcy" => Ok(ProblemKind::Darcy),
            "elasticity" => Ok(ProblemKind::Elasticity),
            _ => Err(format!("unknown problem '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub nu: f64,
}

impl MaterialParams {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::InvalidParameter(format!("Poisson's ratio must lie in (0, 0.5), got {nu}")));
        }
        Ok(MaterialParams { nu })
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { nu: DEFAULT_NU }
    }
}

/// Gradients of the three P1 shape functions and the triangle area.
pub fn p1_gradients(v: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = crate::mesh::signed_area(v[0], v[1], v[2]);
    let inv = 1.0 / (2.0 * area);
    let g = std::array::from_fn(|i| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        [(v[j][1] - v[k][1]) * inv, (v[k][0] - v[j][0]) * inv]
    });
    (g, area)
}

pub fn darcy_element_matrix(v: [Point; 3], k_bar: f64) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(v);
    let mut ke = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ke[i][j] = k_bar * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    ke
}

fn vertex_mean(tri: [usize; 3], nodal: &[f64]) -> f64 {
    (nodal[tri[0]] + nodal[tri[1]] + nodal[tri[2]]) / 3.0
}

fn check_nodal(mesh: &TriMesh, values: &[f64], what: &'static str) -> Result<()> {
    if values.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch { what, expected: mesh.n_nodes(), got: values.len() });
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!("{what} must be positive, node {i} has {v}")));
    }
    Ok(())
}

/// Scalar stiffness `∫ k ∇φ_i·∇φ_j` with the element coefficient taken as the vertex mean.
pub fn assemble_darcy(mesh: &TriMesh, k_nodal: &[f64]) -> Result<CsrMatrix> {
    check_nodal(mesh, k_nodal, "conductivity")?;
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, &tri) in mesh.triangles.iter().enumerate() {
        let ke = darcy_element_matrix(mesh.vertices(t), vertex_mean(tri, k_nodal));
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], ke[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), &triplets)
}

/// Plane-strain constitutive matrix acting on (ε_x, ε_y, γ_xy).
pub fn plane_strain_d(e: f64, nu: f64) -> [[f64; 3]; 3] {
    let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    [
        [c * (1.0 - nu), c * nu, 0.0],
        [c * nu, c * (1.0 - nu), 0.0],
        [0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0],
    ]
}

/// Strain-displacement matrix, columns ordered (u0x, u0y, u1x, u1y, u2x, u2y).
fn b_matrix(g: &[[f64; 2]; 3]) -> [[f64; 6]; 3] {
    let mut b = [[0.0; 6]; 3];
    for i in 0..3 {
        b[0][2 * i] = g[i][0];
        b[1][2 * i + 1] = g[i][1];
        b[2][2 * i] = g[i][1];
        b[2][2 * i + 1] = g[i][0];
    }
    b
}

pub fn elasticity_element_matrix(v: [Point; 3], e_bar: f64, nu: f64) -> [[f64; 6]; 6] {
    let (g, area) = p1_gradients(v);
    let b = b_matrix(&g);
    let d = plane_strain_d(e_bar, nu);
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for c in 0..6 {
            db[r][c] = (0..3).map(|k| d[r][k] * b[k][c]).sum();
        }
    }
    let mut ke = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            ke[i][j] = area * (0..3).map(|k| b[k][i] * db[k][j]).sum::<f64>();
        }
    }
    ke
}

/// Plane-strain stiffness with dofs ordered (node0_x, node0_y, node1_x, ...).
pub fn assemble_elasticity(mesh: &TriMesh, e_nodal: &[f64], material: MaterialParams) -> Result<CsrMatrix> {
    MaterialParams::new(material.nu)?;
    check_nodal(mesh, e_nodal, "Young's modulus")?;
    let mut triplets = Vec::with_capacity(36 * mesh.n_triangles());
    for (t, &tri) in mesh.triangles.iter().enumerate() {
        let ke = elasticity_element_matrix(mesh.vertices(t), vertex_mean(tri, e_nodal), material.nu);
        let dofs = [2 * tri[0], 2 * tri[0] + 1, 2 * tri[1], 2 * tri[1] + 1, 2 * tri[2], 2 * tri[2] + 1];
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((dofs[i], dofs[j], ke[i][j]));
            }
        }
    }
    let n = 2 * mesh.n_nodes();
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Element stresses (σ_x, σ_y, τ_xy) for a nodal displacement field.
pub fn element_stresses(mesh: &TriMesh, e_nodal: &[f64], material: MaterialParams, u: &[f64]) -> Vec<[f64; 3]> {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(t, &tri)| {
            let (g, _) = p1_gradients(mesh.vertices(t));
            let b = b_matrix(&g);
            let ue: Vec<f64> = tri.iter().flat_map(|&n| [u[2 * n], u[2 * n + 1]]).collect();
            let strain: Vec<f64> = (0..3).map(|r| (0..6).map(|c| b[r][c] * ue[c]).sum()).collect();
            let d = plane_strain_d(vertex_mean(tri, e_nodal), material.nu);
            [0, 1, 2].map(|r| (0..3).map(|k| d[r][k] * strain[k]).sum())
        })
        .collect()
}

/// Lumped load: nodal source value times nodal area, per component.
/// `f_nodal` is node-major with `components` entries per node.
pub fn assemble_load(mesh: &TriMesh, f_nodal: &[f64], components: usize) -> Result<Vec<f64>> {
    let expected = components * mesh.n_nodes();
    if f_nodal.len() != expected {
        return Err(Error::DimensionMismatch { what: "load field", expected, got: f_nodal.len() });
    }
    let areas = nodal_areas(mesh);
    Ok(f_nodal
        .iter()
        .enumerate()
        .map(|(k, f)| f * areas[k / components])
        .collect())
}

/// Reduced linear system on the free dofs.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub k: CsrMatrix,
    pub f: Vec<f64>,
    /// Full dof index (`node * dofs_per_node + component`) of each reduced dof.
    pub free_dofs: Vec<usize>,
    pub kind: ProblemKind,
    pub mesh: Arc<TriMesh>,
}

impl AssembledSystem {
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_full(&self) -> usize {
        self.mesh.n_nodes() * self.kind.dofs_per_node()
    }

    /// (node, component) of reduced dof `r`.
    pub fn dof(&self, r: usize) -> (usize, usize) {
        let c = self.kind.dofs_per_node();
        (self.free_dofs[r] / c, self.free_dofs[r] % c)
    }

    /// Embed a reduced vector into the full dof layout, zeros at Dirichlet dofs.
    pub fn scatter(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_full()];
        for (&d, &v) in self.free_dofs.iter().zip(reduced) {
            full[d] = v;
        }
        full
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Direct solution of the reduced system.
    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        dense_solve(&self.k.to_dense(), &self.f)
    }
}

/// Eliminate the rows and columns of all Dirichlet dofs (homogeneous data).
pub fn apply_dirichlet(k: &CsrMatrix, f: &[f64], mesh: Arc<TriMesh>, kind: ProblemKind) -> Result<AssembledSystem> {
    let c = kind.dofs_per_node();
    let n = mesh.n_nodes() * c;
    if k.n_rows() != n || f.len() != n {
        return Err(Error::DimensionMismatch { what: "stiffness/load size", expected: n, got: k.n_rows().min(f.len()) });
    }
    if mesh.dirichlet.is_empty() {
        return Err(Error::NoDirichlet);
    }
    let clamped = mesh.dirichlet_mask();
    let free_dofs: Vec<usize> = (0..n).filter(|&d| !clamped[d / c]).collect();
    if free_dofs.is_empty() {
        return Err(Error::NoFreeDofs);
    }
    Ok(AssembledSystem {
        k: k.principal_submatrix(&free_dofs),
        f: free_dofs.iter().map(|&d| f[d]).collect(),
        free_dofs,
        kind,
        mesh,
    })
}

/// Assemble the reduced Darcy system from nodal conductivity and source.
pub fn darcy_system(mesh: Arc<TriMesh>, k_nodal: &[f64], f_nodal: &[f64]) -> Result<AssembledSystem> {
    let k = assemble_darcy(&mesh, k_nodal)?;
    let f = assemble_load(&mesh, f_nodal, 1)?;
    apply_dirichlet(&k, &f, mesh, ProblemKind::Darcy)
}

/// Assemble the reduced elasticity system; `f_nodal` is node-major (fx, fy).
pub fn elasticity_system(
    mesh: Arc<TriMesh>,
    e_nodal: &[f64],
    f_nodal: &[f64],
    material: MaterialParams,
) -> Result<AssembledSystem> {
    let k = assemble_elasticity(&mesh, e_nodal, material)?;
    let f = assemble_load(&mesh, f_nodal, 2)?;
    apply_dirichlet(&k, &f, mesh, ProblemKind::Elasticity)
}

/// Nodal L2 error of the Darcy FE solution for `u = sin(πx) sin(πy)`, k = 1,
/// on the unit square with `n` cells per side.
pub fn manufactured_solution_error(n: usize) -> Result<f64> {
    use std::f64::consts::PI;
    let mesh = Arc::new(square_mesh(n)?);
    let exact: Vec<f64> = mesh.nodes.iter().map(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).collect();
    let source: Vec<f64> = exact.iter().map(|u| 2.0 * PI * PI * u).collect();
    let sys = darcy_system(mesh.clone(), &vec![1.0; mesh.n_nodes()], &source)?;
    let u = sys.scatter(&sys.solve_direct()?);
    let areas = nodal_areas(&mesh);
    let err2: f64 = u
        .iter()
        .zip(&exact)
        .zip(&areas)
        .map(|((uh, ue), a)| a * (uh - ue).powi(2))
        .sum();
    Ok(err2.sqrt())
}
