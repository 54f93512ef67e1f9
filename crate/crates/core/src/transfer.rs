//! Operator transfer learning: fine-tune a source DeepONet on a few target
//! samples with a regression loss plus a conditional-embedding discrepancy
//! (CEOD) between source and target input-output relations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deeponet::{
    adam_step, conv_features, forward, loss_rel_mse_grad, AdamConfig, AdamState, DeepONetParams, Forward,
    OperatorDataset, ParamGroup, SAMPLE_LEN,
};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, DenseMatrix};
use crate::mesh::Point;

/// Largest accepted condition number of a regularized input kernel matrix.
pub const MAX_KERNEL_CONDITION: f64 = 1e12;

/// `true` for trainable entries: the branch dense stack, the last trunk layer
/// and the merge bias. Conv layers and the remaining trunk layers are frozen.
pub fn freeze_mask(params: &DeepONetParams) -> Vec<bool> {
    let last_trunk = params.arch.trunk_fc.len() - 2;
    let mut mask = vec![false; params.len()];
    for slot in &params.layout.tensors {
        let trainable = match slot.group {
            ParamGroup::Conv(_) => false,
            ParamGroup::BranchFc(_) | ParamGroup::MergeBias => true,
            ParamGroup::TrunkFc(l) => l == last_trunk,
        };
        mask[slot.range()].fill(trainable);
    }
    mask
}

/// The fixed 8×8 query grid on which CEOD compares model outputs.
pub fn ceod_query_points() -> Vec<Point> {
    (0..64).map(|k| [((k % 8) as f64 + 0.5) / 8.0, ((k / 8) as f64 + 0.5) / 8.0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeodConfig {
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub ridge: f64,
}

impl CeodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_x > 0.0 && self.gamma_y > 0.0 && self.ridge > 0.0) {
            return Err(Error::InvalidParameter("CEOD bandwidths and ridge must be positive".into()));
        }
        Ok(())
    }
}

/// Row-major point set: `n` rows of `dim` values.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    pub data: &'a [f64],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { what: "point set", expected: dim, got: data.len() });
        }
        Ok(Points { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn gauss_kernel(a: Points, b: Points, gamma: f64) -> DenseMatrix {
    DenseMatrix::from_fn(a.len(), b.len(), |i, j| (-gamma * sq_dist(a.row(i), b.row(j))).exp())
}

/// `γ = 1 / (2·median²)` of the pairwise distances between all rows of the given sets.
pub fn median_bandwidth(sets: &[Points]) -> Result<f64> {
    let rows: Vec<&[f64]> = sets.iter().flat_map(|s| (0..s.len()).map(move |i| s.row(i))).collect();
    let mut d: Vec<f64> = Vec::new();
    for i in 0..rows.len() {
        for j in 0..i {
            d.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    d.retain(|v| *v > 0.0);
    if d.is_empty() {
        return Err(Error::InvalidParameter("median heuristic needs two distinct points".into()));
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    Ok(1.0 / (2.0 * med * med))
}

/// `(K + εI)⁻¹` through the symmetric eigendecomposition, with a condition check.
fn regularized_inverse(k: &DenseMatrix, ridge: f64) -> Result<DenseMatrix> {
    let n = k.n_rows();
    let reg = DenseMatrix::from_fn(n, n, |i, j| k[(i, j)] + if i == j { ridge } else { 0.0 });
    let eig = sym_eigen(&reg)?;
    let lo = eig.eigenvalues[0];
    let hi = eig.eigenvalues[n - 1];
    if !(lo > 0.0) || hi / lo > MAX_KERNEL_CONDITION {
        return Err(Error::IllConditioned(if lo > 0.0 { hi / lo } else { f64::INFINITY }));
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| eig.eigenvectors[k][i] * eig.eigenvectors[k][j] / eig.eigenvalues[k]).sum()
    }))
}

fn trace_prod(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    // Tr(A B) = Σ_ij A_ij B_ji
    let mut s = 0.0;
    for i in 0..a.n_rows() {
        for j in 0..a.n_cols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Input-side quantities that stay fixed while the target outputs change.
#[derive(Debug, Clone)]
pub struct CeodInputs {
    a_s: DenseMatrix,
    a_t: DenseMatrix,
    /// `A_s Kx_ss A_s`
    w1: DenseMatrix,
    /// `A_s Kx_st A_t`
    w2: DenseMatrix,
    /// `A_t Kx_tt A_t`
    w3: DenseMatrix,
}

impl CeodInputs {
    pub fn new(xs: Points, xt: Points, cfg: &CeodConfig) -> Result<Self> {
        cfg.validate()?;
        if xs.dim != xt.dim {
            return Err(Error::DimensionMismatch { what: "CEOD input dimension", expected: xs.dim, got: xt.dim });
        }
        if xs.is_empty() || xt.is_empty() {
            return Err(Error::InvalidParameter("CEOD needs non-empty batches".into()));
        }
        let kss = gauss_kernel(xs, xs, cfg.gamma_x);
        let ktt = gauss_kernel(xt, xt, cfg.gamma_x);
        let kst = gauss_kernel(xs, xt, cfg.gamma_x);
        let a_s = regularized_inverse(&kss, cfg.ridge)?;
        let a_t = regularized_inverse(&ktt, cfg.ridge)?;
        let w1 = a_s.matmul(&kss).matmul(&a_s);
        let w2 = a_s.matmul(&kst).matmul(&a_t);
        let w3 = a_t.matmul(&ktt).matmul(&a_t);
        Ok(CeodInputs { a_s, a_t, w1, w2, w3 })
    }

    pub fn n_source(&self) -> usize {
        self.a_s.n_rows()
    }

    pub fn n_target(&self) -> usize {
        self.a_t.n_rows()
    }

    /// Loss and its gradient with respect to the target outputs (row-major like `yt`).
    pub fn loss_grad(&self, ys: Points, yt: Points, gamma_y: f64) -> Result<(f64, Vec<f64>)> {
        let (m, n) = (self.n_source(), self.n_target());
        if ys.len() != m || yt.len() != n || ys.dim != yt.dim {
            return Err(Error::DimensionMismatch { what: "CEOD output batch", expected: m + n, got: ys.len() + yt.len() });
        }
        let kss = gauss_kernel(ys, ys, gamma_y);
        let kst = gauss_kernel(ys, yt, gamma_y);
        let ktt = gauss_kernel(yt, yt, gamma_y);
        // Tr[A_s Ky_ss A_s Kx_ss] = Σ Ky_ss ∘ W1 (all symmetric)
        let l1 = trace_prod(&kss, &self.w1);
        let l2 = trace_prod(&kst, &self.w2.transpose());
        let l3 = trace_prod(&ktt, &self.w3);
        let loss = l1 - 2.0 * l2 + l3;
        let dim = yt.dim;
        let mut grad = vec![0.0; n * dim];
        for j in 0..n {
            let g = &mut grad[j * dim..(j + 1) * dim];
            let yj = yt.row(j);
            for i in 0..m {
                let c = -2.0 * self.w2[(i, j)] * kst[(i, j)] * (-2.0 * gamma_y);
                for ((gd, a), b) in g.iter_mut().zip(yj).zip(ys.row(i)) {
                    *gd += c * (a - b);
                }
            }
            for i in 0..n {
                let c = 2.0 * self.w3[(i, j)] * ktt[(i, j)] * (-2.0 * gamma_y);
                for ((gd, a), b) in g.iter_mut().zip(yj).zip(yt.row(i)) {
                    *gd += c * (a - b);
                }
            }
        }
        Ok((loss, grad))
    }
}

/// Empirical Hilbert–Schmidt distance between the conditional embedding
/// operators of the source pairs `(xs, ys)` and target pairs `(xt, yt)`.
pub fn ceod_loss(xs: Points, ys: Points, xt: Points, yt: Points, cfg: &CeodConfig) -> Result<f64> {
    Ok(ceod_loss_grad(xs, ys, xt, yt, cfg)?.0)
}

/// [`ceod_loss`] and its gradient with respect to `yt`.
pub fn ceod_loss_grad(xs: Points, ys: Points, xt: Points, yt: Points, cfg: &CeodConfig) -> Result<(f64, Vec<f64>)> {
    CeodInputs::new(xs, xt, cfg)?.loss_grad(ys, yt, cfg.gamma_y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    #[serde(default = "one")]
    pub lambda1: f64,
    #[serde(default = "ten")]
    pub lambda2: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Fixed `(γ_x, γ_y)`; the median heuristic is used when absent.
    #[serde(default)]
    pub bandwidths: Option<(f64, f64)>,
    /// Target samples per iteration (capped by the dataset size).
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Treat λ2 as a self-adaptive weight updated by gradient ascent on the CEOD term.
    #[serde(default)]
    pub adaptive_lambda2: bool,
    #[serde(default = "default_lambda_lr")]
    pub lambda_learning_rate: f64,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn default_ridge() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    50
}
fn default_lambda_lr() -> f64 {
    1e-2
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            iterations: 1000,
            learning_rate: 1e-4,
            lambda1: one(),
            lambda2: ten(),
            ridge: default_ridge(),
            bandwidths: None,
            batch_size: default_batch(),
            seed: 0,
            adaptive_lambda2: false,
            lambda_learning_rate: default_lambda_lr(),
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda1 > 0.0) || self.lambda2 < 0.0 {
            return bad("lambda1 must be positive and lambda2 non-negative");
        }
        if self.lambda2 > 0.0 && self.lambda2 < self.lambda1 {
            return bad("lambda2 must be at least lambda1 when the CEOD term is active");
        }
        if !(self.ridge > 0.0) {
            return bad("ridge must be positive");
        }
        if let Some((gx, gy)) = self.bandwidths {
            if !(gx > 0.0 && gy > 0.0) {
                return bad("bandwidths must be positive");
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub iteration: u64,
    pub loss: f64,
    pub regression: f64,
    pub ceod: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub params: DeepONetParams,
    pub history: Vec<FineTuneRecord>,
    pub ceod_config: Option<CeodConfig>,
}

/// Cycles through a dataset in seeded shuffled batches.
struct Batcher {
    n: usize,
    size: usize,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, size: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Batcher { n, size: size.min(n), order: (0..n).collect(), pos: n, rng }
    }

    fn next(&mut self) -> Vec<usize> {
        if self.size == self.n {
            return self.order.clone();
        }
        if self.pos + self.size > self.n {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let b = self.order[self.pos..self.pos + self.size].to_vec();
        self.pos += self.size;
        b
    }
}

fn gather_rows(data: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied()).collect()
}

/// Fine-tune `source` on `target` with the regression + CEOD loss; only the
/// entries of [`freeze_mask`] change.
///
/// The CEOD source side is the frozen source network evaluated on the same
/// target inputs, so the discrepancy is exactly zero while the two networks
/// agree. Disjoint source and target batches make the estimator biased: it is
/// far from zero even for identical operators, and minimizing it collapses the
/// target outputs.
pub fn fine_tune(source: &DeepONetParams, target: &OperatorDataset, cfg: &FineTuneConfig) -> Result<FineTuneOutcome> {
    cfg.validate()?;
    let n_out = source.arch.n_out;
    if target.n_out != n_out {
        return Err(Error::DimensionMismatch { what: "dataset output components", expected: n_out, got: target.n_out });
    }
    if target.is_empty() {
        return Err(Error::InvalidParameter("empty target dataset".into()));
    }
    let mut params = source.clone();
    let mask = freeze_mask(&params);
    let trunk_first = params.arch.trunk_fc.len() - 2;
    let use_ceod = cfg.lambda2 > 0.0;
    let grid = ceod_query_points();
    let y_dim = n_out * grid.len();
    let feat_dim = params.arch.flattened_conv_size();

    // Frozen conv stack: features are computed once.
    let target_feats = conv_features(&params, &target.inputs, target.len())?;
    let feats_of = |all: &[f64], n_all: usize, idx: &[usize]| -> Vec<f64> {
        let mut out = vec![0.0; feat_dim * idx.len()];
        for f in 0..feat_dim {
            for (b, &i) in idx.iter().enumerate() {
                out[f * idx.len() + b] = all[f * n_all + i];
            }
        }
        out
    };
    let source_y = if use_ceod { forward(source, &target.inputs, target.len(), &grid)? } else { Vec::new() };

    let mut batches = Batcher::new(target.len(), cfg.batch_size, cfg.seed, 0);
    let mut ceod_cfg = None;
    let mut cached: Option<(Vec<usize>, CeodInputs)> = None;
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let mut state = AdamState::new(params.len());
    let mut lambda2 = cfg.lambda2;
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    let per_sample = target.per_sample();

    for it in 0..cfg.iterations {
        let idx = batches.next();
        let feats = feats_of(&target_feats, target.len(), &idx);
        let (_, y_true) = target.gather(&idx);
        let fwd = Forward::from_features(&params, feats.clone(), idx.len(), &target.coords)?;
        let (reg, mut d_out) = loss_rel_mse_grad(&fwd.output, &y_true, per_sample);
        d_out.iter_mut().for_each(|g| *g *= cfg.lambda1);
        let mut grads = vec![0.0; params.len()];
        fwd.backward_from(&params, &d_out, &mut grads, trunk_first);

        let mut ceod = 0.0;
        if use_ceod {
            let x = gather_rows(&target.inputs, SAMPLE_LEN, &idx);
            let ys = gather_rows(&source_y, y_dim, &idx);
            let gfwd = Forward::from_features(&params, feats, idx.len(), &grid)?;
            let yt = &gfwd.output;
            let cc = match ceod_cfg {
                Some(c) => c,
                None => {
                    let (gx, gy) = match cfg.bandwidths {
                        Some(b) => b,
                        None => (
                            median_bandwidth(&[Points::new(&x, SAMPLE_LEN)?])?,
                            median_bandwidth(&[Points::new(&ys, y_dim)?, Points::new(yt, y_dim)?])?,
                        ),
                    };
                    let c = CeodConfig { gamma_x: gx, gamma_y: gy, ridge: cfg.ridge };
                    ceod_cfg = Some(c);
                    c
                }
            };
            if !matches!(&cached, Some((b, _)) if *b == idx) {
                let xp = Points::new(&x, SAMPLE_LEN)?;
                cached = Some((idx.clone(), CeodInputs::new(xp, xp, &cc)?));
            }
            let inputs = &cached.as_ref().unwrap().1;
            let (l, g) = inputs.loss_grad(Points::new(&ys, y_dim)?, Points::new(yt, y_dim)?, cc.gamma_y)?;
            ceod = l;
            let d: Vec<f64> = g.iter().map(|v| v * lambda2).collect();
            gfwd.backward_from(&params, &d, &mut grads, trunk_first);
        }
        let loss = cfg.lambda1 * reg + lambda2 * ceod;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite fine-tuning loss at iteration {}", it + 1)));
        }
        history.push(FineTuneRecord { iteration: it + 1, loss, regression: reg, ceod, lambda2 });
        adam_step(&mut params.values, &grads, &mut state, &adam, Some(&mask));
        if cfg.adaptive_lambda2 && use_ceod {
            lambda2 = (lambda2 + cfg.lambda_learning_rate * ceod).max(cfg.lambda1);
        }
    }
    if !params.is_finite() {
        return Err(Error::Divergence("non-finite parameters after fine-tuning".into()));
    }
    Ok(FineTuneOutcome { params, history, ceod_config: ceod_cfg })
}
