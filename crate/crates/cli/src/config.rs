//! JSON experiment configuration. Every key has a default and every key can
//! be overridden by a command-line flag.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ham_core::checks::Scale;
use ham_core::data::{gen_task, Corpus, Task};
use ham_core::train::{ModelTemplate, OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// root seed: restart `r` trains with `seed + r`, and synthetic corpora
    /// are drawn from `seed` on a separate generator stream
    pub seed: u64,
    pub out: PathBuf,
    pub task: TaskSpec,
    pub model: ModelTemplate,
    pub train: TrainSpec,
    pub depths: Vec<usize>,
    /// write measured wall time into the sweep CSV (makes it nondeterministic)
    pub record_wall_time: bool,
    pub verify: VerifySpec,
    pub gradcheck: GradcheckSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            task: TaskSpec::default(),
            model: ModelTemplate::default(),
            train: TrainSpec::default(),
            depths: vec![1, 2, 5],
            record_wall_time: false,
            verify: VerifySpec::default(),
            gradcheck: GradcheckSpec::default(),
        }
    }
}

/// Either a corpus file or a synthetic task to generate from the root seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: Task,
    pub pairs: usize,
    pub seq_len: usize,
    pub payload_vocab: usize,
    pub corpus: Option<PathBuf>,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            kind: Task::Copy,
            pairs: 512,
            seq_len: 6,
            payload_vocab: 8,
            corpus: None,
        }
    }
}

/// Training settings; the seed comes from the root seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    /// depth used by `train`; sweeps use `depths`
    pub depth: usize,
    pub restarts: usize,
    pub freeze_level_weights: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            optimizer: t.optimizer,
            epochs: t.epochs,
            batch_size: t.batch_size,
            depth: t.depth,
            restarts: 5,
            freeze_level_weights: t.freeze_level_weights,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub trials: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { trials: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSpec {
    pub scale: Scale,
    pub instances: usize,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        Self {
            scale: Scale::Tiny,
            instances: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            optimizer: self.train.optimizer,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seed,
            depth: self.train.depth,
            restarts: self.train.restarts,
            freeze_level_weights: self.train.freeze_level_weights,
        }
    }

    pub fn validate_training(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.model.hidden == 0 {
            bail!("model.hidden must be positive");
        }
        if self.task.corpus.is_none() {
            if self.task.kind == Task::File {
                bail!("task.kind \"file\" needs task.corpus");
            }
            if self.task.pairs == 0 || self.task.seq_len == 0 || self.task.payload_vocab < 2 {
                bail!("task needs pairs >= 1, seq_len >= 1 and payload_vocab >= 2");
            }
        } else if let Some(path) = &self.task.corpus {
            if !path.is_file() {
                bail!("corpus file {} does not exist", path.display());
            }
        }
        Ok(())
    }

    pub fn validate_sweep(&self) -> Result<()> {
        self.validate_training()?;
        if self.depths.is_empty() || self.depths.contains(&0) {
            bail!("depths must be a non-empty list of positive integers");
        }
        if self.depths.windows(2).any(|w| w[0] >= w[1]) {
            bail!("depths must be strictly increasing");
        }
        if self.train.restarts == 0 {
            bail!("train.restarts must be at least 1");
        }
        Ok(())
    }

    /// Loads the configured corpus file or generates the synthetic task.
    pub fn corpus(&self) -> Result<Corpus> {
        let corpus = match &self.task.corpus {
            Some(path) => Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))?,
            None => gen_task(
                self.task.kind,
                self.task.pairs,
                self.task.seq_len,
                self.task.payload_vocab,
                self.seed,
            )?,
        };
        if corpus.is_empty() {
            bail!("corpus is empty");
        }
        Ok(corpus)
    }
}
