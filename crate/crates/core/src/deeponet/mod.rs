//! DeepONet with a convolutional branch net and an MLP trunk net, trained from
//! scratch with hand-written reverse-mode gradients and Adam.
//!
//! Parameters live in one flat `Vec<f64>` so that optimizers, layer-freezing
//! masks and checkpoints all work on the same layout. The tensor order is:
//! every conv layer (weights `out×in×3×3`, then bias), every branch dense
//! layer (`out×in`, bias), every trunk dense layer, then one merge bias per
//! output component.

mod adam;
mod checkpoint;
pub(crate) mod gemm;
mod net;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GRID_N;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NamedTensor, Provenance};
pub use net::{
    branch_fc_backward, branch_fc_forward, conv_features, forward, gradients, loss_rel_mse, loss_rel_mse_grad,
    merge_backward, merge_forward, relative_l2_error, trunk_backward, trunk_forward, BranchFcCache, Forward,
    TrunkCache, SAMPLE_LEN,
};
pub use train::{
    epoch_permutation, evaluate, train, train_from, EpochRecord, OperatorDataset, TrainConfig, TrainOutcome, TrainState,
};

/// Input channels of the branch net: coefficient field and forcing field.
pub const BRANCH_CHANNELS: usize = 2;
pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;

/// Layer widths of a DeepONet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    /// Channel list starting with the input channel count.
    pub conv_channels: Vec<usize>,
    /// Dense widths starting with the flattened conv output.
    pub branch_fc: Vec<usize>,
    /// Dense widths starting with the coordinate dimension 2.
    pub trunk_fc: Vec<usize>,
    /// Output components (1 for Darcy, 2 for elasticity).
    pub n_out: usize,
}

impl Arch {
    pub fn darcy() -> Self {
        Arch {
            conv_channels: vec![2, 40, 60, 100, 180],
            branch_fc: vec![180, 80, 80],
            trunk_fc: vec![2, 80, 80, 80],
            n_out: 1,
        }
    }

    pub fn elasticity() -> Self {
        Arch {
            conv_channels: vec![2, 40, 60, 100, 256],
            branch_fc: vec![256, 160],
            trunk_fc: vec![2, 128, 128, 160],
            n_out: 2,
        }
    }

    /// Spatial size after each conv layer, starting with the input size.
    pub fn spatial_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![GRID_N];
        for _ in 1..self.conv_channels.len() {
            let s = *sizes.last().unwrap();
            sizes.push(if s >= CONV_KERNEL { (s - CONV_KERNEL) / CONV_STRIDE + 1 } else { 0 });
        }
        sizes
    }

    pub fn flattened_conv_size(&self) -> usize {
        let s = *self.spatial_sizes().last().unwrap();
        s * s * self.conv_channels.last().copied().unwrap_or(0)
    }

    /// Basis functions per output component.
    pub fn p(&self) -> usize {
        self.trunk_fc.last().copied().unwrap_or(0) / self.n_out.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("inconsistent DeepONet architecture: {msg}")));
        if self.conv_channels.first() != Some(&BRANCH_CHANNELS) {
            return bad(format!("branch input must have {BRANCH_CHANNELS} channels"));
        }
        if self.conv_channels.len() < 2 || self.branch_fc.len() < 2 || self.trunk_fc.len() < 2 {
            return bad("every sub-network needs at least one layer".into());
        }
        if self.spatial_sizes().contains(&0) {
            return bad("conv stack shrinks the input below one pixel".into());
        }
        if self.branch_fc[0] != self.flattened_conv_size() {
            return bad(format!(
                "conv stack flattens to {} features but branch FC expects {}",
                self.flattened_conv_size(),
                self.branch_fc[0]
            ));
        }
        if self.trunk_fc[0] != 2 {
            return bad("trunk input must be 2D coordinates".into());
        }
        if self.n_out == 0 || self.branch_fc.last() != self.trunk_fc.last() {
            return bad("branch and trunk output widths differ".into());
        }
        if !self.trunk_fc.last().unwrap().is_multiple_of(self.n_out) {
            return bad("output width not divisible by the component count".into());
        }
        if self.conv_channels.iter().chain(&self.branch_fc).chain(&self.trunk_fc).any(|&w| w == 0) {
            return bad("zero-width layer".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Conv(usize),
    BranchFc(usize),
    TrunkFc(usize),
    MergeBias,
}

/// One weight or bias tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSlot {
    pub name: String,
    pub group: ParamGroup,
    pub is_bias: bool,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl TensorSlot {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Tensor layout for an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSlot>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(arch: &Arch) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, group, is_bias, shape: Vec<usize>| {
            let len = shape.iter().product();
            tensors.push(TensorSlot { name, group, is_bias, shape, offset, len });
            offset += len;
        };
        for (l, w) in arch.conv_channels.windows(2).enumerate() {
            push(format!("conv{l}.weight"), ParamGroup::Conv(l), false, vec![w[1], w[0], CONV_KERNEL, CONV_KERNEL]);
            push(format!("conv{l}.bias"), ParamGroup::Conv(l), true, vec![w[1]]);
        }
        for (l, w) in arch.branch_fc.windows(2).enumerate() {
            push(format!("branch{l}.weight"), ParamGroup::BranchFc(l), false, vec![w[1], w[0]]);
            push(format!("branch{l}.bias"), ParamGroup::BranchFc(l), true, vec![w[1]]);
        }
        for (l, w) in arch.trunk_fc.windows(2).enumerate() {
            push(format!("trunk{l}.weight"), ParamGroup::TrunkFc(l), false, vec![w[1], w[0]]);
            push(format!("trunk{l}.bias"), ParamGroup::TrunkFc(l), true, vec![w[1]]);
        }
        push("merge.bias".into(), ParamGroup::MergeBias, true, vec![arch.n_out]);
        ParamLayout { tensors, total: offset }
    }

    pub fn find(&self, group: ParamGroup, is_bias: bool) -> &TensorSlot {
        self.tensors
            .iter()
            .find(|t| t.group == group && t.is_bias == is_bias)
            .expect("tensor present in layout")
    }
}

/// All weights and biases of a DeepONet.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepONetParams {
    pub arch: Arch,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
    /// Fixed factor applied to the merged output; lets the trainable part
    /// work at unit scale when targets are small. Not trained.
    pub output_scale: f64,
}

impl DeepONetParams {
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        let layout = ParamLayout::new(&arch);
        let values = vec![0.0; layout.total];
        Ok(DeepONetParams { arch, layout, values, output_scale: 1.0 })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, group: ParamGroup, is_bias: bool) -> &[f64] {
        &self.values[self.layout.find(group, is_bias).range()]
    }

    pub fn tensor_mut(&mut self, group: ParamGroup, is_bias: bool) -> &mut [f64] {
        let r = self.layout.find(group, is_bias).range();
        &mut self.values[r]
    }

    pub fn is_finite(&self) -> bool {
        self.output_scale.is_finite() && self.values.iter().all(|v| v.is_finite())
    }
}

/// Xavier-uniform weights, zero biases.
pub fn init_params(arch: &Arch, seed: u64) -> Result<DeepONetParams> {
    let mut params = DeepONetParams::zeros(arch.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for slot in params.layout.tensors.clone() {
        if slot.is_bias {
            continue;
        }
        let (fan_in, fan_out) = match slot.shape.as_slice() {
            [out, inp, kh, kw] => (inp * kh * kw, out * kh * kw),
            [out, inp] => (*inp, *out),
            _ => unreachable!("weights are 2D or 4D"),
        };
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut params.values[slot.range()] {
            *v = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}
