//! JSON checkpoints.
//!
//! ```text
//! {
//!   "arch":  { "conv_channels": [...], "branch_fc": [...], "trunk_fc": [...], "n_out": 1 },
//!   "seed":  42,
//!   "epoch": 3000,
//!   "output_scale": 1.0e-3,
//!   "params": [ { "name": "conv0.weight", "shape": [40, 2, 3, 3], "values": [...] }, ... ],
//!   "adam_state": { "step": ..., "m": [...], "v": [...] },      // optional
//!   "last_params": [...],                                      // optional
//!   "best_epoch": 2870, "best_test_error": 0.11,               // optional
//!   "provenance": { "source_checkpoint": ..., "target_geometry": ..., "config": {...} }  // optional
//! }
//! ```
//!
//! `params` holds the selected (best-on-test) weights in layout order.
//! `adam_state` and `last_params` hold the optimizer state and the weights at
//! `epoch`, which is what resuming needs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Arch, DeepONetParams, ParamLayout, TrainState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_checkpoint: String,
    pub target_geometry: String,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Arch,
    pub seed: u64,
    pub epoch: u64,
    #[serde(default = "unit_scale")]
    pub output_scale: f64,
    pub params: Vec<NamedTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_state: Option<AdamState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_test_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn unit_scale() -> f64 {
    1.0
}

impl Checkpoint {
    pub fn new(params: &DeepONetParams, seed: u64, epoch: u64) -> Self {
        let tensors = params
            .layout
            .tensors
            .iter()
            .map(|s| NamedTensor { name: s.name.clone(), shape: s.shape.clone(), values: params.values[s.range()].to_vec() })
            .collect();
        Checkpoint {
            arch: params.arch.clone(),
            seed,
            epoch,
            output_scale: params.output_scale,
            params: tensors,
            adam_state: None,
            last_params: None,
            best_epoch: None,
            best_test_error: None,
            provenance: None,
        }
    }

    /// Best weights plus everything [`Checkpoint::train_state`] needs to resume.
    pub fn from_train_state(state: &TrainState, seed: u64) -> Self {
        let mut ck = Checkpoint::new(&state.best_params, seed, state.epoch);
        ck.adam_state = Some(state.adam.clone());
        ck.last_params = Some(state.params.values.clone());
        ck.best_epoch = Some(state.best_epoch);
        ck.best_test_error = state.best_test_error.is_finite().then_some(state.best_test_error);
        ck
    }

    /// Training state at `epoch`; fails without optimizer state.
    pub fn train_state(&self) -> Result<TrainState> {
        let adam = self
            .adam_state
            .clone()
            .ok_or_else(|| Error::InvalidParameter("checkpoint has no optimizer state to resume from".into()))?;
        let best_params = self.params()?;
        let params = self.resume_params()?;
        if adam.m.len() != params.len() || adam.v.len() != params.len() {
            return Err(Error::DimensionMismatch { what: "optimizer state", expected: params.len(), got: adam.m.len() });
        }
        Ok(TrainState {
            params,
            adam,
            epoch: self.epoch,
            best_params,
            best_test_error: self.best_test_error.unwrap_or(f64::INFINITY),
            best_epoch: self.best_epoch.unwrap_or(self.epoch),
        })
    }

    /// Rebuild the parameter vector, checking every tensor name and shape.
    pub fn params(&self) -> Result<DeepONetParams> {
        let mut out = DeepONetParams::zeros(self.arch.clone())?;
        out.output_scale = self.output_scale;
        let layout = ParamLayout::new(&self.arch);
        if layout.tensors.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                what: "checkpoint tensor count",
                expected: layout.tensors.len(),
                got: self.params.len(),
            });
        }
        for (slot, t) in layout.tensors.iter().zip(&self.params) {
            if slot.name != t.name || slot.shape != t.shape || t.values.len() != slot.len {
                return Err(Error::InvalidParameter(format!(
                    "checkpoint tensor {} {:?} does not match expected {} {:?}",
                    t.name, t.shape, slot.name, slot.shape
                )));
            }
            out.values[slot.range()].copy_from_slice(&t.values);
        }
        if !out.is_finite() {
            return Err(Error::InvalidParameter("checkpoint contains non-finite parameters".into()));
        }
        Ok(out)
    }

    /// Weights at `epoch` (falls back to `params`).
    pub fn resume_params(&self) -> Result<DeepONetParams> {
        let mut p = self.params()?;
        if let Some(last) = &self.last_params {
            if last.len() != p.len() {
                return Err(Error::DimensionMismatch { what: "last_params", expected: p.len(), got: last.len() });
            }
            p.values.copy_from_slice(last);
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
