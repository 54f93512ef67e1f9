//! Structured triangular meshes for the source domains (unit square, L-shape)
//! and their cutout variants.
//!
//! Cutouts are realized by removing every triangle whose centroid falls inside
//! the cutout region. The resulting staircase boundary is left unmarked, so it
//! carries the natural zero-Neumann condition of the weak form.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Circular cutout of Task 1 (L-shape).
pub const TASK1_CIRCLE: CutoutSpec = CutoutSpec::Circle {
    center: [0.25, 0.25],
    radius: 0.15,
};

/// Triangular cutout of Task 2 (L-shape).
pub const TASK2_TRIANGLE: CutoutSpec = CutoutSpec::Triangle {
    vertices: [[0.2, 0.1], [0.6, 0.4], [0.3, 0.4]],
};

/// Central circular cutout of Task 3 (square plate).
pub const TASK3_CIRCLE: CutoutSpec = CutoutSpec::Circle {
    center: [0.5, 0.5],
    radius: 0.15,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeometryTag {
    LShape,
    LShapeCircle,
    LShapeTriangle,
    Square,
    SquareCircle,
}

impl GeometryTag {
    pub const ALL: [GeometryTag; 5] = [
        GeometryTag::LShape,
        GeometryTag::LShapeCircle,
        GeometryTag::LShapeTriangle,
        GeometryTag::Square,
        GeometryTag::SquareCircle,
    ];

    /// Base domain without any cutout.
    pub fn base(self) -> GeometryTag {
        match self {
            GeometryTag::LShape | GeometryTag::LShapeCircle | GeometryTag::LShapeTriangle => {
                GeometryTag::LShape
            }
            GeometryTag::Square | GeometryTag::SquareCircle => GeometryTag::Square,
        }
    }

    pub fn cutout(self) -> Option<CutoutSpec> {
        match self {
            GeometryTag::LShapeCircle => Some(TASK1_CIRCLE),
            GeometryTag::LShapeTriangle => Some(TASK2_TRIANGLE),
            GeometryTag::SquareCircle => Some(TASK3_CIRCLE),
            GeometryTag::LShape | GeometryTag::Square => None,
        }
    }

    pub fn is_l_shape(self) -> bool {
        self.base() == GeometryTag::LShape
    }

    /// Build the preset mesh with `n` subdivisions per unit side.
    pub fn mesh(self, n: usize) -> Result<TriMesh> {
        let base = match self.base() {
            GeometryTag::LShape => l_shape_mesh(n)?,
            _ => square_mesh(n)?,
        };
        match self.cutout() {
            Some(spec) => apply_cutout(&base, &spec),
            None => Ok(base),
        }
    }

    /// Whether `p` lies in the region this geometry excludes from the unit
    /// square (the removed L quadrant and/or the cutout).
    pub fn excludes(self, p: Point) -> bool {
        (self.is_l_shape() && in_l_notch(p)) || self.cutout().is_some_and(|c| c.contains(p))
    }

    pub fn as_u32(self) -> u32 {
        match self {
            GeometryTag::LShape => 0,
            GeometryTag::LShapeCircle => 1,
            GeometryTag::LShapeTriangle => 2,
            GeometryTag::Square => 3,
            GeometryTag::SquareCircle => 4,
        }
    }

    pub fn from_u32(v: u32) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            GeometryTag::LShape => "lshape",
            GeometryTag::LShapeCircle => "lshape-circle",
            GeometryTag::LShapeTriangle => "lshape-triangle",
            GeometryTag::Square => "square",
            GeometryTag::SquareCircle => "square-circle",
        }
    }
}

impl fmt::Display for GeometryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for GeometryTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        GeometryTag::ALL
            .into_iter()
            .find(|g| g.cli_name() == s)
            .ok_or_else(|| format!("unknown geometry '{s}'"))
    }
}

/// The removed quadrant of the L-shape, closed on its lower/left edges.
pub fn in_l_notch(p: Point) -> bool {
    p[0] >= 0.5 && p[1] >= 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CutoutSpec {
    Circle { center: Point, radius: f64 },
    Triangle { vertices: [Point; 3] },
}

impl CutoutSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CutoutSpec::Circle { center, radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidCutout(format!(
                        "circle radius must be positive, got {radius}"
                    )));
                }
                if !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidCutout("non-finite circle center".into()));
                }
            }
            CutoutSpec::Triangle { vertices } => {
                let area = signed_area(vertices[0], vertices[1], vertices[2]);
                if area.abs() < 1e-14 {
                    return Err(Error::InvalidCutout("triangle vertices are collinear".into()));
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership test.
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            CutoutSpec::Circle { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= radius * radius
            }
            CutoutSpec::Triangle { vertices: [a, b, c] } => {
                let s = signed_area(a, b, c).signum();
                let eps = 1e-14;
                s * signed_area(a, b, p) >= -eps
                    && s * signed_area(b, c, p) >= -eps
                    && s * signed_area(c, a, p) >= -eps
            }
        }
    }

    /// Points on the cutout boundary, used for the containment check.
    fn boundary_samples(&self) -> Vec<Point> {
        match *self {
            CutoutSpec::Circle { center, radius } => (0..64)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect(),
            CutoutSpec::Triangle { vertices } => {
                let mut pts = Vec::with_capacity(48);
                for e in 0..3 {
                    let a = vertices[e];
                    let b = vertices[(e + 1) % 3];
                    for k in 0..16 {
                        let t = k as f64 / 16.0;
                        pts.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
                pts
            }
        }
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// A 2D P1 triangulation. `dirichlet` holds the sorted indices of clamped nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub geometry_tag: GeometryTag,
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub dirichlet: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cutouts: Vec<CutoutSpec>,
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes()];
        for &i in &self.dirichlet {
            mask[i] = true;
        }
        mask
    }

    /// Check every structural invariant of the mesh.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references missing node {bad}"
                )));
            }
            let area = self.triangle_area(t);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
        }
        if !self.dirichlet.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidMesh("dirichlet list not strictly sorted".into()));
        }
        if let Some(&bad) = self.dirichlet.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidMesh(format!("dirichlet node {bad} out of range")));
        }
        // Coincident nodes: sort by x and compare neighbours within a window.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.nodes[a][0].total_cmp(&self.nodes[b][0]));
        for (k, &i) in order.iter().enumerate() {
            for &j in &order[k + 1..] {
                if self.nodes[j][0] - self.nodes[i][0] > 1e-12 {
                    break;
                }
                if (self.nodes[j][1] - self.nodes[i][1]).abs() <= 1e-12 {
                    return Err(Error::InvalidMesh(format!("nodes {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    /// Nodes lying on edges that belong to exactly one triangle.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = boundary_edges(&self.triangles)
            .into_iter()
            .flat_map(|(a, b)| [a, b])
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mesh: TriMesh = serde_json::from_str(text)?;
        mesh.validate()?;
        Ok(mesh)
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn boundary_edges(triangles: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in triangles {
        for e in 0..3 {
            *count.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
        }
    }
    let mut edges: Vec<_> = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
    edges.sort_unstable();
    edges
}

/// Build a mesh from grid cells `(i, j)` of an `n × n` structured grid that
/// pass `keep`. Nodes keep row-major order; all boundary nodes are Dirichlet.
fn structured_mesh(n: usize, tag: GeometryTag, keep: impl Fn(usize, usize) -> bool) -> TriMesh {
    let stride = n + 1;
    let mut used = vec![false; stride * stride];
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if keep(i, j) {
                cells.push((i, j));
                for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                    used[(j + dj) * stride + i + di] = true;
                }
            }
        }
    }
    let mut new_index = vec![usize::MAX; stride * stride];
    let mut nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let g = j * stride + i;
            if used[g] {
                new_index[g] = nodes.len();
                nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * cells.len());
    for (i, j) in cells {
        let sw = new_index[j * stride + i];
        let se = new_index[j * stride + i + 1];
        let ne = new_index[(j + 1) * stride + i + 1];
        let nw = new_index[(j + 1) * stride + i];
        triangles.push([sw, se, ne]);
        triangles.push([sw, ne, nw]);
    }
    let mut mesh = TriMesh {
        geometry_tag: tag,
        nodes,
        triangles,
        dirichlet: Vec::new(),
        cutouts: Vec::new(),
    };
    mesh.dirichlet = mesh.boundary_nodes();
    mesh
}

/// Unit square with `n` cells per side, each split along its SW–NE diagonal.
pub fn square_mesh(n: usize) -> Result<TriMesh> {
    if n == 0 {
        return Err(Error::InvalidParameter("square mesh needs n >= 1".into()));
    }
    Ok(structured_mesh(n, GeometryTag::Square, |_, _| true))
}

/// `(0,1)² \ [0.5,1)²` with `n` cells per unit side. `n` must be even so the
/// re-entrant corner is a grid node.
pub fn l_shape_mesh(n: usize) -> Result<TriMesh> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "L-shape mesh needs an even n >= 2, got {n}"
        )));
    }
    let half = n / 2;
    Ok(structured_mesh(n, GeometryTag::LShape, |i, j| i < half || j < half))
}

/// Remove all triangles whose centroid lies inside `spec`.
///
/// Re-applying a cutout already recorded on the mesh returns the mesh unchanged.
pub fn apply_cutout(base: &TriMesh, spec: &CutoutSpec) -> Result<TriMesh> {
    spec.validate()?;
    if base.cutouts.contains(spec) {
        return Ok(base.clone());
    }
    let locator = TriLocator::new(base);
    if let Some(p) = spec.boundary_samples().into_iter().find(|&p| locator.locate(p).is_none()) {
        return Err(Error::InvalidCutout(format!(
            "cutout boundary point ({:.4}, {:.4}) lies outside the base domain",
            p[0], p[1]
        )));
    }

    let kept: Vec<[usize; 3]> = (0..base.n_triangles())
        .filter(|&t| !spec.contains(base.centroid(t)))
        .map(|t| base.triangles[t])
        .collect();
    if kept.len() == base.n_triangles() {
        return Err(Error::InvalidCutout(
            "cutout removes no triangles at this mesh resolution".into(),
        ));
    }
    if kept.is_empty() || !edge_connected(&kept) {
        return Err(Error::InvalidCutout("cutout disconnects the mesh".into()));
    }

    let mut new_index = vec![usize::MAX; base.n_nodes()];
    for tri in &kept {
        for &v in tri {
            new_index[v] = 0;
        }
    }
    let mut nodes = Vec::new();
    for (old, idx) in new_index.iter_mut().enumerate() {
        if *idx == 0 {
            *idx = nodes.len();
            nodes.push(base.nodes[old]);
        }
    }
    let triangles = kept
        .iter()
        .map(|t| [new_index[t[0]], new_index[t[1]], new_index[t[2]]])
        .collect();
    let dirichlet = base
        .dirichlet
        .iter()
        .filter(|&&d| new_index[d] != usize::MAX)
        .map(|&d| new_index[d])
        .collect();
    let mut cutouts = base.cutouts.clone();
    cutouts.push(*spec);
    let geometry_tag = match (base.geometry_tag, spec) {
        (GeometryTag::LShape, CutoutSpec::Circle { .. }) => GeometryTag::LShapeCircle,
        (GeometryTag::LShape, CutoutSpec::Triangle { .. }) => GeometryTag::LShapeTriangle,
        (GeometryTag::Square, CutoutSpec::Circle { .. }) => GeometryTag::SquareCircle,
        (tag, _) => tag,
    };
    Ok(TriMesh {
        geometry_tag,
        nodes,
        triangles,
        dirichlet,
        cutouts,
    })
}

fn edge_connected(triangles: &[[usize; 3]]) -> bool {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            by_edge.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_default().push(t);
        }
    }
    let mut seen = vec![false; triangles.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(t) = stack.pop() {
        let tri = triangles[t];
        for e in 0..3 {
            for &nb in &by_edge[&edge_key(tri[e], tri[(e + 1) % 3])] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Lumped-mass weights: one third of every incident triangle's area.
pub fn nodal_areas(mesh: &TriMesh) -> Vec<f64> {
    let mut areas = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            areas[v] += a;
        }
    }
    areas
}

/// Bucketed point location over the triangles of a mesh in `[0,1]²`.
pub struct TriLocator<'a> {
    mesh: &'a TriMesh,
    buckets: Vec<Vec<usize>>,
    m: usize,
}

impl<'a> TriLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let m = ((mesh.n_triangles() as f64).sqrt() as usize).clamp(1, 256);
        let mut buckets = vec![Vec::new(); m * m];
        let cell = |v: f64| ((v * m as f64).floor().max(0.0) as usize).min(m - 1);
        for t in 0..mesh.n_triangles() {
            let vs = mesh.vertices(t);
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for v in vs {
                x0 = x0.min(v[0]);
                x1 = x1.max(v[0]);
                y0 = y0.min(v[1]);
                y1 = y1.max(v[1]);
            }
            let pad = 1e-9;
            for by in cell(y0 - pad)..=cell(y1 + pad) {
                for bx in cell(x0 - pad)..=cell(x1 + pad) {
                    buckets[by * m + bx].push(t);
                }
            }
        }
        TriLocator { mesh, buckets, m }
    }

    /// Containing triangle and barycentric weights, or `None` outside the mesh.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        if !(-1e-9..=1.0 + 1e-9).contains(&p[0]) || !(-1e-9..=1.0 + 1e-9).contains(&p[1]) {
            return None;
        }
        let cell = |v: f64| ((v * self.m as f64).floor().max(0.0) as usize).min(self.m - 1);
        let bucket = &self.buckets[cell(p[1]) * self.m + cell(p[0])];
        let tol = -1e-12;
        for &t in bucket {
            let [a, b, c] = self.mesh.vertices(t);
            let area = signed_area(a, b, c);
            let w0 = signed_area(p, b, c) / area;
            let w1 = signed_area(a, p, c) / area;
            let w2 = signed_area(a, b, p) / area;
            if w0 >= tol && w1 >= tol && w2 >= tol {
                return Some((t, [w0, w1, w2]));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts_and_area() {
        let m = square_mesh(1).unwrap();
        assert_eq!((m.n_nodes(), m.n_triangles()), (4, 2));
        assert!((m.area() - 1.0).abs() < 1e-15);
        let m = square_mesh(2).unwrap();
        assert_eq!((m.n_nodes(), m.n_triangles()), (9, 8));
        assert_eq!(m.dirichlet.len(), 8);
        let m = square_mesh(16).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-12);
        m.validate().unwrap();
        assert!(square_mesh(0).is_err());
    }

    #[test]
    fn l_shape_counts_and_corner() {
        let m = l_shape_mesh(2).unwrap();
        assert_eq!((m.n_nodes(), m.n_triangles()), (8, 6));
        assert!((m.area() - 0.75).abs() < 1e-15);
        // every node of the 2x2 L lies on its boundary
        assert_eq!(m.dirichlet.len(), 8);

        let m = l_shape_mesh(16).unwrap();
        assert!((m.area() - 0.75).abs() < 1e-12);
        let corner = m.nodes.iter().position(|p| *p == [0.5, 0.5]).expect("corner node");
        assert!(m.dirichlet.contains(&corner));
        m.validate().unwrap();
        assert!(l_shape_mesh(7).is_err());
        assert!(l_shape_mesh(0).is_err());
    }

    #[test]
    fn l_shape_dirichlet_is_exactly_outer_boundary() {
        let m = l_shape_mesh(8).unwrap();
        for (i, p) in m.nodes.iter().enumerate() {
            let on_boundary = p[0] == 0.0
                || p[1] == 0.0
                || (p[0] == 1.0 && p[1] <= 0.5)
                || (p[1] == 1.0 && p[0] <= 0.5)
                || (p[0] == 0.5 && p[1] >= 0.5)
                || (p[1] == 0.5 && p[0] >= 0.5);
            assert_eq!(m.dirichlet.binary_search(&i).is_ok(), on_boundary, "node {p:?}");
        }
    }

    #[test]
    fn degenerate_cutouts_rejected() {
        let base = square_mesh(8).unwrap();
        let zero = CutoutSpec::Circle { center: [0.5, 0.5], radius: 0.0 };
        assert!(apply_cutout(&base, &zero).is_err());
        let flat = CutoutSpec::Triangle { vertices: [[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]] };
        assert!(apply_cutout(&base, &flat).is_err());
        // too small to capture a centroid
        let tiny = CutoutSpec::Circle { center: [0.5, 0.5], radius: 1e-3 };
        assert!(matches!(apply_cutout(&base, &tiny), Err(Error::InvalidCutout(_))));
        // crosses the outer boundary
        let outside = CutoutSpec::Circle { center: [0.05, 0.5], radius: 0.2 };
        assert!(apply_cutout(&base, &outside).is_err());
    }

    #[test]
    fn circle_cutout_area() {
        let m = apply_cutout(&square_mesh(32).unwrap(), &TASK3_CIRCLE).unwrap();
        let expected = 1.0 - std::f64::consts::PI * 0.15 * 0.15;
        assert!((m.area() - expected).abs() < 0.01, "{}", m.area());
        assert_eq!(m.geometry_tag, GeometryTag::SquareCircle);
        m.validate().unwrap();
    }

    #[test]
    fn triangle_cutout_area() {
        let m = apply_cutout(&l_shape_mesh(32).unwrap(), &TASK2_TRIANGLE).unwrap();
        // shoelace area of the triangle is 0.045
        assert!((m.area() - 0.705).abs() < 0.01, "{}", m.area());
        assert_eq!(m.geometry_tag, GeometryTag::LShapeTriangle);
    }

    #[test]
    fn cutout_keeps_outer_dirichlet_and_is_idempotent() {
        let base = l_shape_mesh(16).unwrap();
        let cut = apply_cutout(&base, &TASK1_CIRCLE).unwrap();
        let base_dirichlet: Vec<Point> = base.dirichlet.iter().map(|&i| base.nodes[i]).collect();
        let cut_dirichlet: Vec<Point> = cut.dirichlet.iter().map(|&i| cut.nodes[i]).collect();
        assert_eq!(base_dirichlet, cut_dirichlet);
        // cutout nodes are not clamped
        for &i in &cut.dirichlet {
            let p = cut.nodes[i];
            assert!(p[0] == 0.0 || p[1] == 0.0 || p[0] == 1.0 || p[1] == 1.0 || p[0] == 0.5 || p[1] == 0.5);
        }
        let again = apply_cutout(&cut, &TASK1_CIRCLE).unwrap();
        assert_eq!(again, cut);
    }

    #[test]
    fn nodal_areas_two_triangles() {
        let m = square_mesh(1).unwrap();
        let a = nodal_areas(&m);
        // nodes: (0,0) (1,0) (0,1) (1,1); diagonal joins 0 and 3
        assert!((a[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a[3] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((a[2] - 1.0 / 6.0).abs() < 1e-15);
        let l = l_shape_mesh(2).unwrap();
        assert!((nodal_areas(&l).iter().sum::<f64>() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn preset_meshes_valid() {
        for tag in GeometryTag::ALL {
            let m = tag.mesh(16).unwrap();
            assert_eq!(m.geometry_tag, tag);
            m.validate().unwrap();
            let areas = nodal_areas(&m);
            assert!(areas.iter().all(|&a| a > 0.0));
            assert!((areas.iter().sum::<f64>() - m.area()).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let m = GeometryTag::LShapeTriangle.mesh(8).unwrap();
        let back = TriMesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn locator_finds_points() {
        let m = l_shape_mesh(8).unwrap();
        let loc = TriLocator::new(&m);
        assert!(loc.locate([0.25, 0.75]).is_some());
        assert!(loc.locate([0.75, 0.75]).is_none());
        let (_, w) = loc.locate([0.5, 0.5]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
