//! Batched forward and reverse passes.
//!
//! Activations are stored feature-major: a conv activation is laid out as
//! `[channel][sample][y][x]`, dense activations as `[feature][sample]`, trunk
//! activations as `[feature][query]`. Network output is `[sample][component][query]`.

use crate::error::{Error, Result};
use crate::field::GRID_LEN;
use crate::mesh::Point;

use super::gemm::{gemm, View};
use super::{DeepONetParams, ParamGroup, BRANCH_CHANNELS, CONV_KERNEL, CONV_STRIDE};

const KK: usize = CONV_KERNEL * CONV_KERNEL;

/// Values per branch-input sample (2 channels × 31 × 31).
pub const SAMPLE_LEN: usize = BRANCH_CHANNELS * GRID_LEN;

fn check_inputs(inputs: &[f64], batch: usize) -> Result<()> {
    if inputs.len() != batch * SAMPLE_LEN {
        return Err(Error::DimensionMismatch { what: "branch input batch", expected: batch * SAMPLE_LEN, got: inputs.len() });
    }
    Ok(())
}

fn conv_im2col(input: &[f64], cin: usize, batch: usize, h: usize, ho: usize, cols: &mut [f64]) {
    let n = batch * ho * ho;
    for ci in 0..cin {
        for ky in 0..CONV_KERNEL {
            for kx in 0..CONV_KERNEL {
                let row = &mut cols[(ci * KK + ky * CONV_KERNEL + kx) * n..][..n];
                for b in 0..batch {
                    let plane = &input[(ci * batch + b) * h * h..][..h * h];
                    for oy in 0..ho {
                        let src = &plane[(CONV_STRIDE * oy + ky) * h + kx..];
                        let dst = &mut row[(b * ho + oy) * ho..][..ho];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[CONV_STRIDE * ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_col2im(dcols: &[f64], cin: usize, batch: usize, h: usize, ho: usize, dinput: &mut [f64]) {
    let n = batch * ho * ho;
    for ci in 0..cin {
        for ky in 0..CONV_KERNEL {
            for kx in 0..CONV_KERNEL {
                let row = &dcols[(ci * KK + ky * CONV_KERNEL + kx) * n..][..n];
                for b in 0..batch {
                    let plane = &mut dinput[(ci * batch + b) * h * h..][..h * h];
                    for oy in 0..ho {
                        let base = (CONV_STRIDE * oy + ky) * h + kx;
                        let src = &row[(b * ho + oy) * ho..][..ho];
                        for (ox, s) in src.iter().enumerate() {
                            plane[base + CONV_STRIDE * ox] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Cached conv activations of one batch.
#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    batch: usize,
}

/// Run the conv stack; returns flattened features `[feature][sample]`.
fn conv_forward(params: &DeepONetParams, inputs: &[f64], batch: usize) -> (Vec<f64>, ConvCache) {
    let arch = &params.arch;
    let sizes = arch.spatial_sizes();
    // sample-major [b][c][pix] -> channel-major [c][b][pix]
    let mut x = vec![0.0; inputs.len()];
    for b in 0..batch {
        for c in 0..BRANCH_CHANNELS {
            x[(c * batch + b) * GRID_LEN..][..GRID_LEN]
                .copy_from_slice(&inputs[(b * BRANCH_CHANNELS + c) * GRID_LEN..][..GRID_LEN]);
        }
    }
    let mut cols_all = Vec::new();
    let mut acts = Vec::new();
    for (l, ch) in arch.conv_channels.windows(2).enumerate() {
        let (cin, cout) = (ch[0], ch[1]);
        let (h, ho) = (sizes[l], sizes[l + 1]);
        let k = cin * KK;
        let n = batch * ho * ho;
        let mut cols = vec![0.0; k * n];
        conv_im2col(&x, cin, batch, h, ho, &mut cols);
        let w = params.tensor(ParamGroup::Conv(l), false);
        let bias = params.tensor(ParamGroup::Conv(l), true);
        let mut out = vec![0.0; cout * n];
        for (o, row) in out.chunks_mut(n).enumerate() {
            row.fill(bias[o]);
        }
        gemm(cout, k, n, 1.0, View::row_major(w, k), View::row_major(&cols, n), 1.0, &mut out, n, 1);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        cols_all.push(cols);
        acts.push(out.clone());
        x = out;
    }
    let features = flatten(&x, *arch.conv_channels.last().unwrap(), batch, sizes.last().unwrap().pow(2));
    (features, ConvCache { cols: cols_all, acts, batch })
}

fn flatten(act: &[f64], c: usize, batch: usize, ss: usize) -> Vec<f64> {
    if ss == 1 {
        return act.to_vec();
    }
    let mut out = vec![0.0; act.len()];
    for ch in 0..c {
        for b in 0..batch {
            for p in 0..ss {
                out[(ch * ss + p) * batch + b] = act[(ch * batch + b) * ss + p];
            }
        }
    }
    out
}

fn unflatten(feat: &[f64], c: usize, batch: usize, ss: usize) -> Vec<f64> {
    if ss == 1 {
        return feat.to_vec();
    }
    let mut out = vec![0.0; feat.len()];
    for ch in 0..c {
        for b in 0..batch {
            for p in 0..ss {
                out[(ch * batch + b) * ss + p] = feat[(ch * ss + p) * batch + b];
            }
        }
    }
    out
}

fn conv_backward(params: &DeepONetParams, cache: &ConvCache, d_features: &[f64], grads: &mut [f64]) {
    let arch = &params.arch;
    let sizes = arch.spatial_sizes();
    let batch = cache.batch;
    let n_layers = arch.conv_channels.len() - 1;
    let mut d_act = unflatten(d_features, arch.conv_channels[n_layers], batch, sizes[n_layers].pow(2));
    for l in (0..n_layers).rev() {
        let (cin, cout) = (arch.conv_channels[l], arch.conv_channels[l + 1]);
        let (h, ho) = (sizes[l], sizes[l + 1]);
        let k = cin * KK;
        let n = batch * ho * ho;
        let act = &cache.acts[l];
        for (d, a) in d_act.iter_mut().zip(act) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        let wslot = params.layout.find(ParamGroup::Conv(l), false).range();
        let bslot = params.layout.find(ParamGroup::Conv(l), true).range();
        let cols = &cache.cols[l];
        gemm(cout, n, k, 1.0, View::row_major(&d_act, n), View::transposed(cols, n), 1.0, &mut grads[wslot.clone()], k, 1);
        for (g, row) in grads[bslot].iter_mut().zip(d_act.chunks(n)) {
            *g += row.iter().sum::<f64>();
        }
        if l == 0 {
            break;
        }
        let w = &params.values[wslot];
        let mut dcols = vec![0.0; k * n];
        gemm(k, cout, n, 1.0, View::transposed(w, k), View::row_major(&d_act, n), 0.0, &mut dcols, n, 1);
        let mut d_in = vec![0.0; cin * batch * h * h];
        conv_col2im(&dcols, cin, batch, h, ho, &mut d_in);
        d_act = d_in;
    }
}

/// Flattened conv features `[feature][sample]` of a batch of branch inputs.
pub fn conv_features(params: &DeepONetParams, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
    check_inputs(inputs, batch)?;
    Ok(conv_forward(params, inputs, batch).0)
}

/// Dense layer stack cache: the input of every layer plus the final output.
#[derive(Debug, Clone)]
pub struct DenseCache {
    xs: Vec<Vec<f64>>,
    cols: usize,
}

#[derive(Debug, Clone, Copy)]
enum Activation {
    Relu,
    Tanh,
}

fn dense_forward(
    params: &DeepONetParams,
    widths: &[usize],
    group: fn(usize) -> ParamGroup,
    act: Activation,
    input: Vec<f64>,
    cols: usize,
) -> (Vec<f64>, DenseCache) {
    let mut xs = vec![input];
    let n_layers = widths.len() - 1;
    for l in 0..n_layers {
        let (fin, fout) = (widths[l], widths[l + 1]);
        let w = params.tensor(group(l), false);
        let b = params.tensor(group(l), true);
        let mut y = vec![0.0; fout * cols];
        for (o, row) in y.chunks_mut(cols).enumerate() {
            row.fill(b[o]);
        }
        gemm(fout, fin, cols, 1.0, View::row_major(w, fin), View::row_major(xs.last().unwrap(), cols), 1.0, &mut y, cols, 1);
        if l + 1 < n_layers {
            match act {
                Activation::Relu => y.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
            }
        }
        xs.push(y);
    }
    let out = xs.pop().unwrap();
    (out, DenseCache { xs, cols })
}

/// Backprop through a dense stack; returns the gradient w.r.t. its input when
/// `need_input` is set. Only layers `>= first_trainable` receive gradients.
#[allow(clippy::too_many_arguments)]
fn dense_backward(
    params: &DeepONetParams,
    widths: &[usize],
    group: fn(usize) -> ParamGroup,
    act: Activation,
    cache: &DenseCache,
    d_out: &[f64],
    grads: &mut [f64],
    first_trainable: usize,
    need_input: bool,
) -> Option<Vec<f64>> {
    let cols = cache.cols;
    let n_layers = widths.len() - 1;
    let mut dy = d_out.to_vec();
    for l in (0..n_layers).rev() {
        let (fin, fout) = (widths[l], widths[l + 1]);
        let x = &cache.xs[l];
        let wr = params.layout.find(group(l), false).range();
        if l >= first_trainable {
            let br = params.layout.find(group(l), true).range();
            gemm(fout, cols, fin, 1.0, View::row_major(&dy, cols), View::transposed(x, cols), 1.0, &mut grads[wr.clone()], fin, 1);
            for (g, row) in grads[br].iter_mut().zip(dy.chunks(cols)) {
                *g += row.iter().sum::<f64>();
            }
        }
        if l == 0 && !need_input {
            return None;
        }
        if l < first_trainable && !need_input {
            return None;
        }
        let mut dx = vec![0.0; fin * cols];
        gemm(fin, fout, cols, 1.0, View::transposed(&params.values[wr], fin), View::row_major(&dy, cols), 0.0, &mut dx, cols, 1);
        if l == 0 {
            return Some(dx);
        }
        match act {
            Activation::Relu => {
                for (d, xv) in dx.iter_mut().zip(x) {
                    if *xv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (d, xv) in dx.iter_mut().zip(x) {
                    *d *= 1.0 - xv * xv;
                }
            }
        }
        dy = dx;
    }
    None
}

pub type BranchFcCache = DenseCache;
pub type TrunkCache = DenseCache;

/// Branch dense stack on conv features; returns `[p·n_out][sample]`.
pub fn branch_fc_forward(params: &DeepONetParams, features: Vec<f64>, batch: usize) -> (Vec<f64>, BranchFcCache) {
    let widths = params.arch.branch_fc.clone();
    dense_forward(params, &widths, ParamGroup::BranchFc, Activation::Relu, features, batch)
}

/// Accumulates branch FC gradients; returns d(features) when `need_input`.
pub fn branch_fc_backward(
    params: &DeepONetParams,
    cache: &BranchFcCache,
    d_bo: &[f64],
    grads: &mut [f64],
    need_input: bool,
) -> Option<Vec<f64>> {
    let widths = params.arch.branch_fc.clone();
    dense_backward(params, &widths, ParamGroup::BranchFc, Activation::Relu, cache, d_bo, grads, 0, need_input)
}

/// Trunk net on query coordinates; returns `[p·n_out][query]`.
pub fn trunk_forward(params: &DeepONetParams, coords: &[Point]) -> (Vec<f64>, TrunkCache) {
    let q = coords.len();
    let mut x = vec![0.0; 2 * q];
    for (k, p) in coords.iter().enumerate() {
        x[k] = p[0];
        x[q + k] = p[1];
    }
    let widths = params.arch.trunk_fc.clone();
    dense_forward(params, &widths, ParamGroup::TrunkFc, Activation::Tanh, x, q)
}

/// Accumulates trunk gradients for layers `>= first_trainable`.
pub fn trunk_backward(params: &DeepONetParams, cache: &TrunkCache, d_t: &[f64], grads: &mut [f64], first_trainable: usize) {
    let widths = params.arch.trunk_fc.clone();
    dense_backward(params, &widths, ParamGroup::TrunkFc, Activation::Tanh, cache, d_t, grads, first_trainable, false);
}

/// `out[b][c][q] = scale · (Σ_j bo[c·p+j][b] · t[c·p+j][q] + bias[c])`.
pub fn merge_forward(params: &DeepONetParams, bo: &[f64], batch: usize, t: &[f64], q: usize) -> Vec<f64> {
    let n_out = params.arch.n_out;
    let p = params.arch.p();
    let bias = params.tensor(ParamGroup::MergeBias, true);
    let mut out = vec![0.0; batch * n_out * q];
    for b in 0..batch {
        for c in 0..n_out {
            out[(b * n_out + c) * q..][..q].fill(bias[c]);
        }
    }
    for c in 0..n_out {
        let bo_c = &bo[c * p * batch..];
        let t_c = &t[c * p * q..];
        // (batch × p) · (p × q), rows of the output strided by n_out·q
        gemm(batch, p, q, 1.0, View::transposed(bo_c, batch), View::row_major(t_c, q), 1.0, &mut out[c * q..], n_out * q, 1);
    }
    if params.output_scale != 1.0 {
        out.iter_mut().for_each(|v| *v *= params.output_scale);
    }
    out
}

/// Returns `(d_bo, d_t)` and accumulates the merge-bias gradient.
pub fn merge_backward(
    params: &DeepONetParams,
    bo: &[f64],
    batch: usize,
    t: &[f64],
    q: usize,
    d_out: &[f64],
    grads: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let n_out = params.arch.n_out;
    let p = params.arch.p();
    let scaled;
    let d_out = if params.output_scale != 1.0 {
        scaled = d_out.iter().map(|v| v * params.output_scale).collect::<Vec<_>>();
        &scaled[..]
    } else {
        d_out
    };
    let br = params.layout.find(ParamGroup::MergeBias, true).range();
    for b in 0..batch {
        for c in 0..n_out {
            grads[br.start + c] += d_out[(b * n_out + c) * q..][..q].iter().sum::<f64>();
        }
    }
    let mut d_bo = vec![0.0; bo.len()];
    let mut d_t = vec![0.0; t.len()];
    for c in 0..n_out {
        let d_c = View { data: &d_out[c * q..], rs: n_out * q, cs: 1 };
        // d_bo_c (p × batch) = t_c (p × q) · d_cᵀ (q × batch)
        gemm(p, q, batch, 1.0, View::row_major(&t[c * p * q..], q), View { data: d_c.data, rs: 1, cs: n_out * q }, 0.0, &mut d_bo[c * p * batch..], batch, 1);
        // d_t_c (p × q) = bo_c (p × batch) · d_c (batch × q)
        gemm(p, batch, q, 1.0, View::row_major(&bo[c * p * batch..], batch), d_c, 0.0, &mut d_t[c * p * q..], q, 1);
    }
    (d_bo, d_t)
}

/// Everything needed to backpropagate one batch.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: Vec<f64>,
    pub batch: usize,
    pub n_query: usize,
    conv: Option<ConvCache>,
    fc: BranchFcCache,
    trunk: TrunkCache,
    bo: Vec<f64>,
    t: Vec<f64>,
}

impl Forward {
    pub fn run(params: &DeepONetParams, inputs: &[f64], batch: usize, coords: &[Point]) -> Result<Self> {
        check_inputs(inputs, batch)?;
        let (features, conv) = conv_forward(params, inputs, batch);
        let mut fwd = Self::from_features(params, features, batch, coords)?;
        fwd.conv = Some(conv);
        Ok(fwd)
    }

    /// Start from precomputed conv features (see [`conv_features`]); the
    /// backward pass then stops at the branch dense stack.
    pub fn from_features(params: &DeepONetParams, features: Vec<f64>, batch: usize, coords: &[Point]) -> Result<Self> {
        let want = params.arch.flattened_conv_size() * batch;
        if features.len() != want {
            return Err(Error::DimensionMismatch { what: "conv features", expected: want, got: features.len() });
        }
        let (bo, fc) = branch_fc_forward(params, features, batch);
        let (t, trunk) = trunk_forward(params, coords);
        let output = merge_forward(params, &bo, batch, &t, coords.len());
        Ok(Forward { output, batch, n_query: coords.len(), conv: None, fc, trunk, bo, t })
    }

    /// Accumulate `∂(d_out · output)/∂θ` into `grads`.
    pub fn backward(&self, params: &DeepONetParams, d_out: &[f64], grads: &mut [f64]) {
        self.backward_from(params, d_out, grads, 0);
    }

    /// Like [`Forward::backward`] but trunk layers below `trunk_first` get no gradient.
    pub fn backward_from(&self, params: &DeepONetParams, d_out: &[f64], grads: &mut [f64], trunk_first: usize) {
        let (d_bo, d_t) = merge_backward(params, &self.bo, self.batch, &self.t, self.n_query, d_out, grads);
        trunk_backward(params, &self.trunk, &d_t, grads, trunk_first);
        let need_input = self.conv.is_some();
        if let Some(d_feat) = branch_fc_backward(params, &self.fc, &d_bo, grads, need_input) {
            if let Some(conv) = &self.conv {
                conv_backward(params, conv, &d_feat, grads);
            }
        }
    }
}

/// Predictions `[sample][component][query]` for a batch of branch inputs
/// (`[sample][channel][31·31]`).
pub fn forward(params: &DeepONetParams, inputs: &[f64], batch: usize, coords: &[Point]) -> Result<Vec<f64>> {
    check_inputs(inputs, batch)?;
    let (features, _) = conv_forward(params, inputs, batch);
    let (bo, _) = branch_fc_forward(params, features, batch);
    let (t, _) = trunk_forward(params, coords);
    Ok(merge_forward(params, &bo, batch, &t, coords.len()))
}

const REL_EPS: f64 = 1e-12;

/// Mean over samples of `‖pred − target‖² / (‖target‖² + 1e-12)`;
/// each sample occupies `per_sample` consecutive entries.
pub fn loss_rel_mse(pred: &[f64], target: &[f64], per_sample: usize) -> f64 {
    assert_eq!(pred.len(), target.len());
    let batch = pred.len() / per_sample.max(1);
    if batch == 0 {
        return 0.0;
    }
    pred.chunks(per_sample)
        .zip(target.chunks(per_sample))
        .map(|(p, t)| {
            let num: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = t.iter().map(|b| b * b).sum::<f64>() + REL_EPS;
            num / den
        })
        .sum::<f64>()
        / batch as f64
}

/// Loss value and its gradient with respect to `pred`.
pub fn loss_rel_mse_grad(pred: &[f64], target: &[f64], per_sample: usize) -> (f64, Vec<f64>) {
    let batch = (pred.len() / per_sample.max(1)).max(1) as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut loss = 0.0;
    for ((p, t), g) in pred.chunks(per_sample).zip(target.chunks(per_sample)).zip(grad.chunks_mut(per_sample)) {
        let den: f64 = t.iter().map(|b| b * b).sum::<f64>() + REL_EPS;
        let mut num = 0.0;
        for ((a, b), gi) in p.iter().zip(t).zip(g.iter_mut()) {
            num += (a - b) * (a - b);
            *gi = 2.0 * (a - b) / (den * batch);
        }
        loss += num / den;
    }
    (loss / batch, grad)
}

/// Mean over samples of `‖pred − target‖ / ‖target‖`.
pub fn relative_l2_error(pred: &[f64], target: &[f64], per_sample: usize) -> f64 {
    let batch = pred.len() / per_sample.max(1);
    if batch == 0 {
        return 0.0;
    }
    pred.chunks(per_sample)
        .zip(target.chunks(per_sample))
        .map(|(p, t)| {
            let num: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = t.iter().map(|b| b * b).sum::<f64>() + REL_EPS;
            (num / den).sqrt()
        })
        .sum::<f64>()
        / batch as f64
}

/// Relative-MSE loss and its exact gradient over all parameters.
pub fn gradients(
    params: &DeepONetParams,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
    coords: &[Point],
) -> Result<(f64, Vec<f64>)> {
    let fwd = Forward::run(params, inputs, batch, coords)?;
    let per_sample = params.arch.n_out * coords.len();
    if targets.len() != batch * per_sample {
        return Err(Error::DimensionMismatch { what: "targets", expected: batch * per_sample, got: targets.len() });
    }
    let (loss, d_out) = loss_rel_mse_grad(&fwd.output, targets, per_sample);
    let mut grads = vec![0.0; params.len()];
    fwd.backward(params, &d_out, &mut grads);
    Ok((loss, grads))
}
