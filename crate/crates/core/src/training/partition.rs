use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Frozen,
    Trainable,
}

/// Which parameters a run may update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Content cross-attention, style gates, and the structure projection.
    ContentOnly,
    /// Every adapter parameter, including the style projections.
    FullFinetune,
    NoFinetune,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::ContentOnly,
        Preset::FullFinetune,
        Preset::NoFinetune,
    ];

    pub fn trains(self, name: &str) -> bool {
        let content_only = name.contains(".content.")
            || name.ends_with(".sim.w_g")
            || name.ends_with(".sim.b_g")
            || name.starts_with("spm.");
        match self {
            Preset::ContentOnly => content_only,
            Preset::FullFinetune => {
                content_only || name.ends_with(".sim.w_k") || name.ends_with(".sim.w_v")
            }
            Preset::NoFinetune => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::ContentOnly => "content-only",
            Preset::FullFinetune => "full-finetune",
            Preset::NoFinetune => "no-finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterPartition {
    labels: BTreeMap<String, Label>,
}

impl ParameterPartition {
    pub fn from_fn(params: &ModelParams, trainable: impl Fn(&str) -> bool) -> Self {
        let labels = params
            .names()
            .into_iter()
            .map(|n| {
                let label = if trainable(&n) {
                    Label::Trainable
                } else {
                    Label::Frozen
                };
                (n, label)
            })
            .collect();
        Self { labels }
    }

    pub fn preset(params: &ModelParams, preset: Preset) -> Self {
        Self::from_fn(params, |n| preset.trains(n))
    }

    pub fn label(&self, name: &str) -> Option<Label> {
        self.labels.get(name).copied()
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.label(name) == Some(Label::Trainable)
    }

    pub fn labels(&self) -> &BTreeMap<String, Label> {
        &self.labels
    }

    pub fn trainable_names(&self) -> Vec<&str> {
        self.with_label(Label::Trainable)
    }

    pub fn frozen_names(&self) -> Vec<&str> {
        self.with_label(Label::Frozen)
    }

    fn with_label(&self, label: Label) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, l)| **l == label)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self, params: &ModelParams) -> usize {
        params.count(|n| self.is_trainable(n))
    }

    /// Every parameter of `params` is labelled exactly once, and nothing else is.
    pub fn check_covers(&self, params: &ModelParams) -> Result<()> {
        let names = params.names();
        if names.len() != self.labels.len() || names.iter().any(|n| !self.labels.contains_key(n)) {
            return Err(Error::PartitionBreach(
                "partition does not label exactly the model's parameters".into(),
            ));
        }
        Ok(())
    }
}
