//! TOML experiment presets. Every section is optional; each command reads
//! the sections it needs and command-line flags override file values.
//!
//! ```toml
//! [data]
//! problem = "darcy"
//! geometry = "lshape"
//! mesh_n = 32
//! n_samples = 2000
//! seed = 1
//!
//! [train]
//! train_data = "darcy_train.hnts"
//! test_data = "darcy_test.hnts"
//! [train.optimizer]
//! learning_rate = 1e-3
//! epochs = 3000
//! batch_size = 256
//! seed = 0
//!
//! [finetune]
//! source_checkpoint = "darcy.json"
//! target_data = "task1_train.hnts"
//! n_target = 50
//! [finetune.optimizer]
//! iterations = 1000
//! learning_rate = 1e-4
//!
//! [hints]
//! n_r = 10
//!
//! [bench]
//! n_cases = 20
//! seed = 100
//! ```

use std::path::{Path, PathBuf};

use hints_core::deeponet::TrainConfig;
use hints_core::fem::ProblemKind;
use hints_core::hints::HintsConfig;
use hints_core::mesh::GeometryTag;
use hints_core::transfer::FineTuneConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub data: Option<DataSection>,
    pub train: Option<TrainSection>,
    pub finetune: Option<FineTuneSection>,
    pub hints: Option<HintsConfig>,
    pub bench: Option<BenchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(with = "named")]
    pub problem: ProblemKind,
    #[serde(with = "named")]
    pub geometry: GeometryTag,
    pub mesh_n: usize,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    #[serde(default)]
    pub optimizer: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneSection {
    pub source_checkpoint: Option<PathBuf>,
    pub target_data: Option<PathBuf>,
    /// Held-out target samples for the error report.
    pub target_test_data: Option<PathBuf>,
    /// Use only the first `n_target` target samples.
    pub n_target: Option<usize>,
    #[serde(default)]
    pub optimizer: FineTuneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    #[serde(default = "default_cases")]
    pub n_cases: usize,
    #[serde(default)]
    pub seed: u64,
    pub mesh_n: Option<usize>,
}

fn default_cases() -> usize {
    20
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { n_cases: default_cases(), seed: 0, mesh_n: None }
    }
}

/// Serialize enums through their command-line names.
pub mod named {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr<Err = String>,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Preset {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        // toml errors carry the line and column of the offending key
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Preset::default()), Self::load)
    }
}

/// Fail early, with the config key in the message, when a required input
/// file is absent.
pub fn require_file(path: Option<&PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| HarnessError::Config(format!("{key} is not set")))?;
    if !p.is_file() {
        return Err(HarnessError::Config(format!("{key}: {} does not exist", p.display())));
    }
    Ok(p.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_preset_parses() {
        let text = r#"
            [data]
            problem = "elasticity"
            geometry = "square-circle"
            mesh_n = 24
            n_samples = 2000

            [train]
            train_data = "a.hnts"
            [train.optimizer]
            learning_rate = 1e-3
            epochs = 3000
            batch_size = 256
            seed = 4

            [finetune]
            n_target = 50
            [finetune.optimizer]
            iterations = 1000
            learning_rate = 1e-4

            [hints]
            n_r = 8
            elasticity_feed = "superpose"

            [bench]
            n_cases = 5
        "#;
        let p = Preset::parse(text, Path::new("x.toml")).unwrap();
        let d = p.data.unwrap();
        assert_eq!((d.problem, d.geometry, d.seed), (ProblemKind::Elasticity, GeometryTag::SquareCircle, 0));
        assert_eq!(p.train.unwrap().optimizer.seed, 4);
        assert_eq!(p.hints.unwrap().n_r, 8);
        assert_eq!(p.bench.unwrap().n_cases, 5);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "[train]\ntrain_data = \"a\"\n[train.optimizer]\nlerning_rate = 1.0\n";
        let err = Preset::parse(text, Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("lerning_rate"), "{err}");
        let err = Preset::parse("[data]\nproblem = \"heat\"\n", Path::new("bad.toml")).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("heat"), "{err}");
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let e = require_file(Some(&PathBuf::from("/nonexistent/x.hnts")), "train.train_data").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(require_file(None, "train.train_data").is_err());
    }
}
