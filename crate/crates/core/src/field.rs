//! Fields on the fixed 31×31 sensor grid: Gaussian-random-field sampling and
//! transfer between grid values and mesh nodal values.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, DenseMatrix};
use crate::mesh::{in_l_notch, CutoutSpec, GeometryTag, Point, TriLocator, TriMesh};

/// Sensor points per side.
pub const GRID_N: usize = 31;
pub const GRID_LEN: usize = GRID_N * GRID_N;
/// Diagonal jitter added to the covariance before factorization.
pub const GRF_JITTER: f64 = 1e-10;

/// Coordinate of grid index `i` along either axis.
pub fn grid_coord(i: usize) -> f64 {
    i as f64 / (GRID_N - 1) as f64
}

/// Grid points in storage order (row `j` = y index, column `i` = x index).
pub fn grid_points() -> Vec<Point> {
    (0..GRID_N)
        .flat_map(|j| (0..GRID_N).map(move |i| [grid_coord(i), grid_coord(j)]))
        .collect()
}

/// Values on the 31×31 grid, row-major with `values[j * 31 + i]` at `(i/30, j/30)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros() -> Self {
        GridField { values: vec![0.0; GRID_LEN] }
    }

    pub fn constant(c: f64) -> Self {
        GridField { values: vec![c; GRID_LEN] }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != GRID_LEN {
            return Err(Error::DimensionMismatch { what: "grid field", expected: GRID_LEN, got: values.len() });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("grid field has non-finite entries".into()));
        }
        Ok(GridField { values })
    }

    pub fn from_fn(f: impl Fn(Point) -> f64) -> Self {
        GridField { values: grid_points().into_iter().map(f).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * GRID_N + i]
    }

    pub fn scaled(&self, s: f64) -> Self {
        GridField { values: self.values.iter().map(|v| v * s).collect() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Root-mean-square over all grid points.
    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / GRID_LEN as f64).sqrt()
    }

    /// Swap the x and y axes.
    pub fn transposed(&self) -> Self {
        let mut out = vec![0.0; GRID_LEN];
        for j in 0..GRID_N {
            for i in 0..GRID_N {
                out[i * GRID_N + j] = self.values[j * GRID_N + i];
            }
        }
        GridField { values: out }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub mean: f64,
    pub std: f64,
    pub corr_len: f64,
}

impl GrfSpec {
    pub fn new(mean: f64, std: f64, corr_len: f64) -> Result<Self> {
        let spec = GrfSpec { mean, std, corr_len };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std >= 0.0) || !(self.corr_len > 0.0) || !self.mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "GRF needs std >= 0 and corr_len > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Squared-exponential covariance at distance `d`.
    pub fn kernel(&self, d: f64) -> f64 {
        self.std * self.std * (-d * d / (2.0 * self.corr_len * self.corr_len)).exp()
    }
}

/// Cholesky factor of the GRF covariance over a fixed point set.
#[derive(Debug, Clone)]
pub struct GrfFactor {
    spec: GrfSpec,
    n: usize,
    /// `None` when `std == 0` (the factor is identically zero).
    lower: Option<DenseMatrix>,
}

/// Factor over the 31×31 sensor grid.
pub fn grf_factor(spec: GrfSpec) -> Result<GrfFactor> {
    GrfFactor::for_points(spec, &grid_points())
}

impl GrfFactor {
    pub fn for_points(spec: GrfSpec, points: &[Point]) -> Result<Self> {
        spec.validate()?;
        let n = points.len();
        if spec.std == 0.0 {
            return Ok(GrfFactor { spec, n, lower: None });
        }
        let cov = covariance_matrix(&spec, points);
        Ok(GrfFactor { spec, n, lower: Some(cholesky(&cov)?) })
    }

    pub fn spec(&self) -> GrfSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Dense lower factor (zero matrix for a degenerate spec).
    pub fn lower(&self) -> DenseMatrix {
        self.lower.clone().unwrap_or_else(|| DenseMatrix::zeros(self.n, self.n))
    }

    /// `mean + L z` with `z` drawn from `rng`.
    pub fn sample_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mean = self.spec.mean;
        let Some(l) = &self.lower else {
            return vec![mean; self.n];
        };
        let z: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
        (0..self.n)
            .map(|i| mean + crate::linalg::dot(&l.row(i)[..=i], &z[..=i]))
            .collect()
    }

    /// Draw one grid field from `rng`; the factor must be over the sensor grid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GridField {
        assert_eq!(self.n, GRID_LEN, "factor is not over the sensor grid");
        GridField { values: self.sample_values(rng) }
    }

    /// Redraw until every value is at least `floor`.
    pub fn sample_above<R: Rng + ?Sized>(&self, rng: &mut R, floor: f64, max_redraws: usize) -> Result<GridField> {
        for _ in 0..=max_redraws {
            let f = self.sample(rng);
            if f.min() >= floor {
                return Ok(f);
            }
        }
        Err(Error::InvalidParameter(format!(
            "no GRF draw stayed above {floor} within {max_redraws} redraws"
        )))
    }
}

/// `std² exp(−‖p−q‖²/(2ℓ²)) + ε δ_pq`.
pub fn covariance_matrix(spec: &GrfSpec, points: &[Point]) -> DenseMatrix {
    let n = points.len();
    let mut c = DenseMatrix::from_fn(n, n, |a, b| {
        let d = ((points[a][0] - points[b][0]).powi(2) + (points[a][1] - points[b][1]).powi(2)).sqrt();
        spec.kernel(d)
    });
    for i in 0..n {
        c[(i, i)] += GRF_JITTER;
    }
    c
}

/// Deterministic sample from a seed (ChaCha8 stream 0).
pub fn grf_sample(factor: &GrfFactor, seed: u64) -> GridField {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    factor.sample(&mut rng)
}

/// Bilinear interpolation weights of the sensor grid at mesh nodes.
#[derive(Debug, Clone)]
pub struct GridToMesh {
    weights: Vec<[(usize, f64); 4]>,
}

impl GridToMesh {
    pub fn new(mesh: &TriMesh) -> Self {
        let h = GRID_N - 1;
        let weights = mesh
            .nodes
            .iter()
            .map(|p| {
                let fx = (p[0].clamp(0.0, 1.0) * h as f64).min(h as f64);
                let fy = (p[1].clamp(0.0, 1.0) * h as f64).min(h as f64);
                let i0 = (fx.floor() as usize).min(h - 1);
                let j0 = (fy.floor() as usize).min(h - 1);
                let tx = fx - i0 as f64;
                let ty = fy - j0 as f64;
                [
                    (j0 * GRID_N + i0, (1.0 - tx) * (1.0 - ty)),
                    (j0 * GRID_N + i0 + 1, tx * (1.0 - ty)),
                    ((j0 + 1) * GRID_N + i0, (1.0 - tx) * ty),
                    ((j0 + 1) * GRID_N + i0 + 1, tx * ty),
                ]
            })
            .collect();
        GridToMesh { weights }
    }

    pub fn apply(&self, field: &GridField) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().map(|&(k, c)| c * field.values[k]).sum())
            .collect()
    }
}

pub fn grid_to_mesh(field: &GridField, mesh: &TriMesh) -> Vec<f64> {
    GridToMesh::new(mesh).apply(field)
}

/// Barycentric interpolation of nodal values at the sensor grid; points
/// outside the mesh, inside a recorded cutout, or in the L notch map to 0.
#[derive(Debug, Clone)]
pub struct MeshToGrid {
    n_nodes: usize,
    weights: Vec<Option<([usize; 3], [f64; 3])>>,
}

impl MeshToGrid {
    pub fn new(mesh: &TriMesh) -> Self {
        let locator = TriLocator::new(mesh);
        let weights = grid_points()
            .into_iter()
            .map(|p| {
                if excluded(mesh, p) {
                    return None;
                }
                locator.locate(p).map(|(t, w)| (mesh.triangles[t], w))
            })
            .collect();
        MeshToGrid { n_nodes: mesh.n_nodes(), weights }
    }

    pub fn apply(&self, nodal: &[f64]) -> Result<GridField> {
        if nodal.len() != self.n_nodes {
            return Err(Error::DimensionMismatch { what: "nodal vector", expected: self.n_nodes, got: nodal.len() });
        }
        let values = self
            .weights
            .iter()
            .map(|w| match w {
                Some((tri, bary)) => tri.iter().zip(bary).map(|(&v, &b)| b * nodal[v]).sum(),
                None => 0.0,
            })
            .collect();
        Ok(GridField { values })
    }

    /// Whether grid point `k` lies inside the meshed domain.
    pub fn covers(&self, k: usize) -> bool {
        self.weights[k].is_some()
    }
}

fn excluded(mesh: &TriMesh, p: Point) -> bool {
    (mesh.geometry_tag.is_l_shape() && in_l_notch(p)) || mesh.cutouts.iter().any(|c| c.contains(p))
}

pub fn mesh_to_grid(nodal: &[f64], mesh: &TriMesh) -> Result<GridField> {
    MeshToGrid::new(mesh).apply(nodal)
}

/// Region zeroed out of a grid field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskRegion {
    Cutout(CutoutSpec),
    LNotch,
}

impl MaskRegion {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            MaskRegion::Cutout(c) => c.contains(p),
            MaskRegion::LNotch => in_l_notch(p),
        }
    }

    /// Regions excluded by a preset geometry.
    pub fn for_geometry(tag: GeometryTag) -> Vec<MaskRegion> {
        let mut regions = Vec::new();
        if tag.is_l_shape() {
            regions.push(MaskRegion::LNotch);
        }
        if let Some(c) = tag.cutout() {
            regions.push(MaskRegion::Cutout(c));
        }
        regions
    }
}

/// Zero every grid value inside any of `regions`.
pub fn mask_cutout(field: &GridField, regions: &[MaskRegion]) -> GridField {
    let values = grid_points()
        .into_iter()
        .zip(&field.values)
        .map(|(p, &v)| if regions.iter().any(|r| r.contains(p)) { 0.0 } else { v })
        .collect();
    GridField { values }
}
