//! Experiment configuration: one TOML file with `[experiment]`,
//! `[backbone]`, `[train]` and `[corpus]` sections. Unknown keys are
//! rejected and everything is validated before any compute starts.

use std::path::{Path, PathBuf};

use icas_core::pipeline::BackboneConfig;
use icas_core::style_injection::GateMode;
use icas_core::synthdata::{CorpusSpec, MAX_SUBJECTS};
use icas_core::training::{EmbedMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Train,
    Sample,
    AblateGate,
    AblateEmbed,
    CompareStrategies,
    SweepGamma,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Train => "train",
            ExperimentKind::Sample => "sample",
            ExperimentKind::AblateGate => "ablate-gate",
            ExperimentKind::AblateEmbed => "ablate-embed",
            ExperimentKind::CompareStrategies => "compare-strategies",
            ExperimentKind::SweepGamma => "sweep-gamma",
        }
    }

    /// Experiments that evaluate existing weights rather than training.
    pub fn needs_checkpoint(self) -> bool {
        matches!(
            self,
            ExperimentKind::SweepGamma | ExperimentKind::AblateGate
        )
    }
}

fn default_dump_images() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Weights to start from. Relative paths resolve against the config
    /// file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Sampled images per variant written as PPM.
    #[serde(default = "default_dump_images")]
    pub dump_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub subjects: usize,
    pub train_seed: u64,
    pub train_size: usize,
    pub eval_seed: u64,
    pub eval_size: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            subjects: 2,
            train_seed: 1,
            train_size: 32,
            eval_seed: 2,
            eval_size: 32,
        }
    }
}

impl CorpusSection {
    pub fn train_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.train_seed,
            size: self.train_size,
            subjects: self.subjects,
        }
    }

    pub fn eval_spec(&self) -> CorpusSpec {
        CorpusSpec {
            seed: self.eval_seed,
            size: self.eval_size,
            subjects: self.subjects,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub corpus: CorpusSection,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads, overrides, resolves the checkpoint path, and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply(overrides);
        if let Some(ckpt) = &cfg.experiment.checkpoint {
            if ckpt.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.experiment.checkpoint = Some(base.join(ckpt));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.experiment.seed = seed;
        }
        if let Some(alpha) = o.alpha {
            self.backbone.alpha = alpha;
        }
        if let Some(gamma) = o.gamma {
            self.backbone.gamma = gamma;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.train.validate()?;
        let c = &self.corpus;
        if c.train_size == 0 || c.eval_size == 0 {
            return Err(HarnessError::Config("corpus sizes must be positive".into()));
        }
        if !(1..=MAX_SUBJECTS).contains(&c.subjects) {
            return Err(HarnessError::Config(format!(
                "corpus.subjects must lie in 1..={MAX_SUBJECTS}"
            )));
        }
        let multi = self.train.embed == EmbedMode::Multi
            || self.experiment.kind == ExperimentKind::AblateEmbed;
        if multi && c.subjects > self.backbone.blocks {
            return Err(HarnessError::Config(format!(
                "{} subjects cannot cycle over {} blocks",
                c.subjects, self.backbone.blocks
            )));
        }
        if self.train.seed != 0 {
            return Err(HarnessError::Config(
                "train.seed is derived from experiment.seed; set that instead".into(),
            ));
        }
        if self.experiment.kind == ExperimentKind::AblateGate
            && self.backbone.gate != GateMode::Learned
        {
            return Err(HarnessError::Config(
                "ablate-gate compares against the learned gate; set backbone.gate = \"learned\""
                    .into(),
            ));
        }
        if self.experiment.kind.needs_checkpoint() {
            match &self.experiment.checkpoint {
                None => {
                    return Err(HarnessError::Config(format!(
                        "{} needs experiment.checkpoint",
                        self.experiment.kind.name()
                    )))
                }
                Some(p) if !p.is_file() => {
                    return Err(HarnessError::Config(format!(
                        "missing checkpoint {}",
                        p.display()
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Canonical text of the resolved configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
