//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use kbrn::benchmarks::{NoiseAlphabet, PrefixTaskSpec};
use kbrn::cells::CellKind;
use kbrn::model::ModelConfig;
use kbrn::training::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub cell: CellKind,
    pub hidden: usize,
    pub num_centers: usize,
    pub bandwidth_factor: f64,
    #[serde(default)]
    pub learn_centers: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::new(CellKind::Kbrn, 1, 10, 2);
        ModelSection {
            cell: d.cell,
            hidden: d.hidden,
            num_centers: d.num_centers,
            bandwidth_factor: d.bandwidth_factor,
            learn_centers: d.learn_centers,
        }
    }
}

/// [`TrainConfig`] without the seed, which lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_smooth: f64,
    pub lambda_w: f64,
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub target_accuracy: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lr: d.lr,
            optimizer: d.optimizer,
            batch_size: d.batch_size,
            epochs: d.epochs,
            lambda_smooth: d.lambda_smooth,
            lambda_w: d.lambda_w,
            clip: d.clip,
            target_accuracy: d.target_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub seq_len: usize,
    pub prefix_len: usize,
    pub num_classes: usize,
    pub alphabet: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub noise: NoiseAlphabet,
    /// Existing dataset directory (from `genbench`); generated in the run
    /// directory when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            seq_len: 10,
            prefix_len: 1,
            num_classes: 2,
            alphabet: 5,
            n_train: 2000,
            n_test: 500,
            noise: NoiseAlphabet::Shared,
            dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub seq_lens: Vec<usize>,
    pub cells: Vec<CellKind>,
    /// Accuracy threshold for the `epochs_to_95` column.
    pub threshold: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            seq_lens: vec![10, 25, 50, 100],
            cells: CellKind::ALL.to_vec(),
            threshold: 0.95,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; errors carry `path:line:column`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}:{}:{}: {}", e.line(), e.column(), strip_position(&e))))?;
        cfg.validate().map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> kbrn::Result<()> {
        self.model_config().validate()?;
        self.train_config().validate()?;
        self.task_spec(self.data.seq_len).validate()?;
        if self.sweep.seq_lens.is_empty() || self.sweep.cells.is_empty() {
            return Err(kbrn::Error::Argument("sweep grid must not be empty".into()));
        }
        for &t in &self.sweep.seq_lens {
            self.task_spec(t).validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model_config_for(self.model.cell)
    }

    pub fn model_config_for(&self, cell: CellKind) -> ModelConfig {
        let mut m = ModelConfig::new(cell, self.data.alphabet, self.model.hidden, self.data.num_classes);
        m.num_centers = self.model.num_centers;
        m.bandwidth_factor = self.model.bandwidth_factor;
        m.learn_centers = self.model.learn_centers && cell == CellKind::Kbrn;
        m
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lambda_smooth: t.lambda_smooth,
            lambda_w: t.lambda_w,
            clip: t.clip,
            seed: self.seed,
            target_accuracy: t.target_accuracy,
        }
    }

    pub fn task_spec(&self, seq_len: usize) -> PrefixTaskSpec {
        let d = &self.data;
        PrefixTaskSpec {
            seq_len,
            prefix_len: d.prefix_len,
            num_classes: d.num_classes,
            alphabet: d.alphabet,
            n_train: d.n_train,
            n_test: d.n_test,
            noise: d.noise,
        }
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form, with the
    /// seed and output directory excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.seed = 0;
        canon.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    /// `<out_dir>/<command>-<hash>-s<seed>`
    pub fn run_dir(&self, command: &str) -> PathBuf {
        self.out_dir.join(format!("{command}-{}-s{}", self.hash(), self.seed))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: default_out(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            data: DataSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// serde_json appends " at line L column C"; the position is already in
/// the prefix.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let d = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&d.to_pretty_json(), "default").unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = "{\n  \"seed\": 1,\n  \"model\": {\"cell\": \"kbrn\", \"hidden\": 4, \"num_centers\": 5,\n    \"bandwidth_factor\": 1.5, \"colour\": 3}\n}";
        let err = ExperimentConfig::parse(text, "c.json").unwrap_err().to_string();
        assert!(err.contains(" c.json:4:"), "{err}");
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let mut d = ExperimentConfig::default();
        d.data.alphabet = 1;
        let err = ExperimentConfig::parse(&d.to_pretty_json(), "x").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_seed_and_out_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 7;
        b.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.model.hidden = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
