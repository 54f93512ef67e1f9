//! Binary dataset files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "HNTS"            4 bytes
//! version           u32 (= 1)
//! problem           u32 (0 darcy, 1 elasticity)
//! geometry          u32 (index into GeometryTag::ALL)
//! n_samples         u32
//! mesh_n            u32   mesh resolution; the mesh is rebuilt from (geometry, mesh_n)
//! seed              u64
//! records           n_samples × { coeff f64[961], forcing f64[961], solution f64[n_nodes·dofs] }
//! ```
//!
//! Solutions are full nodal vectors, node-major with components interleaved.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use hints_core::deeponet::OperatorDataset;
use hints_core::fem::ProblemKind;
use hints_core::field::{GridField, GRID_LEN};
use hints_core::linalg::{norm2, residual};
use hints_core::mesh::{GeometryTag, TriMesh};
use hints_core::problem::{operator_dataset, Instance, Sampler};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"HNTS";
pub const VERSION: u32 = 1;
/// Relative residual every stored solution must meet.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub problem: ProblemKind,
    pub geometry: GeometryTag,
    pub n_samples: u32,
    pub mesh_n: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub instance: Instance,
    pub solution: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: Header,
    pub mesh: Arc<TriMesh>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn sampler(&self) -> Result<Sampler> {
        Ok(Sampler::with_mesh(self.header.problem, self.header.geometry, self.mesh.clone())?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Training view: masked branch inputs and component-major targets at all nodes.
    pub fn to_operator_dataset(&self) -> Result<OperatorDataset> {
        let sampler = self.sampler()?;
        let samples: Vec<(Instance, Vec<f64>)> =
            self.records.iter().map(|r| (r.instance.clone(), r.solution.clone())).collect();
        Ok(operator_dataset(&sampler, &samples)?)
    }

    /// The first `n` records.
    pub fn head(&self, n: usize) -> Dataset {
        let records: Vec<Record> = self.records.iter().take(n).cloned().collect();
        Dataset { header: Header { n_samples: records.len() as u32, ..self.header }, mesh: self.mesh.clone(), records }
    }

    /// Re-assemble record `i` and check `||K u - f|| <= RESIDUAL_TOL * ||f||`.
    pub fn verify_record(&self, sampler: &Sampler, i: usize) -> std::result::Result<(), String> {
        let rec = &self.records[i];
        let sys = sampler.system(&rec.instance).map_err(|e| e.to_string())?;
        let r = residual(&sys.k, &sys.f, &sys.gather(&rec.solution));
        let (rn, fnorm) = (norm2(&r), norm2(&sys.f));
        if rn <= RESIDUAL_TOL * fnorm {
            Ok(())
        } else {
            Err(format!("record {i}: residual {rn:e} exceeds {RESIDUAL_TOL:e} x |f| = {fnorm:e}"))
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        for v in [VERSION, h.problem.as_u32(), h.geometry.as_u32(), h.n_samples, h.mesh_n] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&h.seed.to_le_bytes())?;
        for rec in &self.records {
            let fields = [rec.instance.coeff.values(), rec.instance.forcing.values(), &rec.solution[..]];
            for v in fields.into_iter().flatten() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    /// Parse a dataset; `path` only labels errors.
    pub fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let bad = |msg: String| HarnessError::format(path, msg);
        let io = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => HarnessError::format(path, "truncated dataset file"),
            _ => HarnessError::io(path, e),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not a dataset file (bad magic)".into()));
        }
        let mut u32s = [0u32; 5];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, problem, geometry, n_samples, mesh_n] = u32s;
        if version != VERSION {
            return Err(bad(format!("unsupported dataset version {version}")));
        }
        let problem = ProblemKind::from_u32(problem).ok_or_else(|| bad(format!("unknown problem code {problem}")))?;
        let geometry = GeometryTag::from_u32(geometry).ok_or_else(|| bad(format!("unknown geometry code {geometry}")))?;
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(io)?;
        let seed = u64::from_le_bytes(b);
        let mesh = Arc::new(geometry.mesh(mesh_n as usize).map_err(|e| bad(format!("mesh reference: {e}")))?);
        let sol_len = mesh.n_nodes() * problem.dofs_per_node();

        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes).map_err(io)?;
            Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let mut records = Vec::with_capacity(n_samples as usize);
        for _ in 0..n_samples {
            let coeff = GridField::from_values(read_f64s(GRID_LEN)?).map_err(|e| bad(e.to_string()))?;
            let forcing = GridField::from_values(read_f64s(GRID_LEN)?).map_err(|e| bad(e.to_string()))?;
            let solution = read_f64s(sol_len)?;
            records.push(Record { instance: Instance { coeff, forcing }, solution });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| HarnessError::io(path, e))? != 0 {
            return Err(bad("trailing bytes after the last record".into()));
        }
        let header = Header { problem, geometry, n_samples, mesh_n, seed };
        Ok(Dataset { header, mesh, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| HarnessError::io(path, e))
    }

    /// Load and spot-check the first, middle and last records.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        let ds = Self::read_from(&mut &bytes[..], path)?;
        if !ds.is_empty() {
            let sampler = ds.sampler()?;
            let n = ds.len();
            let mut idx = vec![0, n / 2, n - 1];
            idx.dedup();
            for i in idx {
                ds.verify_record(&sampler, i).map_err(|m| HarnessError::format(path, m))?;
            }
        }
        Ok(ds)
    }
}

/// Draw and solve samples `0..n_samples` of the stream `seed`. Samples are
/// independent, so `jobs` worker threads change nothing but speed.
pub fn generate(
    problem: ProblemKind,
    geometry: GeometryTag,
    mesh_n: usize,
    n_samples: usize,
    seed: u64,
    jobs: usize,
) -> Result<Dataset> {
    let mesh_n_u32 = u32::try_from(mesh_n).map_err(|_| HarnessError::Config(format!("mesh_n {mesh_n} too large")))?;
    let n_u32 = u32::try_from(n_samples).map_err(|_| HarnessError::Config(format!("n_samples {n_samples} too large")))?;
    let sampler = Sampler::new(problem, geometry, mesh_n)?;
    let records = with_pool(jobs, || {
        (0..n_samples as u64)
            .into_par_iter()
            .map(|i| -> Result<Record> {
                let instance = sampler.instance(seed, i)?;
                let solution = sampler.solve(&instance)?;
                Ok(Record { instance, solution })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let ds = Dataset {
        header: Header { problem, geometry, n_samples: n_u32, mesh_n: mesh_n_u32, seed },
        mesh: sampler.mesh.clone(),
        records,
    };
    for i in 0..ds.len() {
        ds.verify_record(&sampler, i).map_err(|m| HarnessError::Numerical(hints_core::Error::Divergence(m)))?;
    }
    Ok(ds)
}

/// Run `f` on a dedicated pool of `jobs` threads (at least one).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_is_valid() {
        let ds = generate(ProblemKind::Darcy, GeometryTag::LShape, 8, 0, 1, 1).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(bytes.len(), 4 + 5 * 4 + 8);
        let back = Dataset::read_from(&mut &bytes[..], Path::new("mem")).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn round_trip_is_byte_identical_and_parallelism_invariant() {
        for problem in [ProblemKind::Darcy, ProblemKind::Elasticity] {
            let a = generate(problem, GeometryTag::SquareCircle, 6, 5, 9, 1).unwrap();
            let b = generate(problem, GeometryTag::SquareCircle, 6, 5, 9, 3).unwrap();
            let bytes = a.to_bytes();
            assert_eq!(bytes, b.to_bytes());
            let back = Dataset::read_from(&mut &bytes[..], Path::new("mem")).unwrap();
            assert_eq!(back.header, a.header);
            assert_eq!(back.records, a.records);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let ds = generate(ProblemKind::Darcy, GeometryTag::LShape, 6, 2, 0, 1).unwrap();
        let bytes = ds.to_bytes();
        let p = Path::new("mem");
        assert!(Dataset::read_from(&mut &bytes[..bytes.len() - 3], p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Dataset::read_from(&mut &extra[..], p).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Dataset::read_from(&mut &magic[..], p).is_err());
    }

    #[test]
    fn tampered_solution_fails_spot_check() {
        let mut ds = generate(ProblemKind::Darcy, GeometryTag::LShape, 6, 3, 0, 1).unwrap();
        let sampler = ds.sampler().unwrap();
        ds.verify_record(&sampler, 1).unwrap();
        let free = sampler.system(&ds.records[1].instance).unwrap().free_dofs[0];
        ds.records[1].solution[free] += 1e-3;
        assert!(ds.verify_record(&sampler, 1).is_err());
    }
}
