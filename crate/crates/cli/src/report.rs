//! Run reports and the files written from them.

use std::path::{Path, PathBuf};

use icas_core::content_cycling::CyclicSchedule;
use icas_core::files::write_atomic;
use icas_core::style_injection::GateMode;
use icas_core::training::{EmbedMode, Preset};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

pub const METRICS_HEADER: &str = "experiment,variant,gamma,alpha,k,image_id,structure_alignment,style_distance,subject_id,subject_match";

/// Variant name kept free for imported outputs of external systems.
pub const EXTERNAL_VARIANT: &str = "external";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image_id: usize,
    pub structure_alignment: f64,
    pub style_distance: f64,
    pub subject_match: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub structure_alignment: f64,
    pub style_distance: f64,
    pub subject_match: f64,
    /// Mean over images of the variance of subject_match across subjects.
    pub subject_match_variance: f64,
}

impl Summary {
    pub fn of(rows: &[ImageRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let mut s = Summary {
            structure_alignment: 0.0,
            style_distance: 0.0,
            subject_match: 0.0,
            subject_match_variance: 0.0,
        };
        for r in rows {
            let m = mean(&r.subject_match);
            let var = mean(
                &r.subject_match
                    .iter()
                    .map(|x| (x - m) * (x - m))
                    .collect::<Vec<_>>(),
            );
            s.structure_alignment += r.structure_alignment / n;
            s.style_distance += r.style_distance / n;
            s.subject_match += m / n;
            s.subject_match_variance += var / n;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub preset: Preset,
    pub steps: usize,
    pub trainable_params: usize,
    pub final_loss: f64,
    pub loss_curve: String,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub gamma: f64,
    pub alpha: f64,
    pub gate: GateMode,
    pub embed: EmbedMode,
    /// Content embeddings per image.
    pub k: usize,
    pub training: Option<TrainingSummary>,
    /// Hash of every initial noise tensor the variant sampled from.
    pub noise_sha256: String,
    pub summary: Summary,
    pub images: Vec<ImageRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionAudit {
    pub variant: String,
    pub preset: Preset,
    pub trainable: Vec<String>,
    pub optimizer_state: Vec<String>,
    pub frozen_unchanged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleAudit {
    pub variant: String,
    pub schedule: CyclicSchedule,
    /// Every evaluated image resolved to this schedule.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub schedules: Vec<ScheduleAudit>,
    pub partitions: Vec<PartitionAudit>,
    /// Contracts of the run itself; a failure aborts the run.
    pub checks: Vec<Check>,
    /// Comparisons between variants, reported but not enforced.
    pub findings: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDelta {
    pub image_id: usize,
    pub structure_alignment: f64,
    pub style_distance: f64,
    pub subject_match: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    /// Hash over the resolved config and any checkpoint it reads.
    pub input_sha256: String,
    pub train_corpus_sha256: String,
    pub eval_corpus_sha256: String,
    pub variants: Vec<VariantReport>,
    /// Per-image differences `first − second` for paired ablations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paired_deltas: Vec<ImageDelta>,
    pub audit: Audit,
    pub timings: String,
}

impl RunReport {
    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub phase: String,
    pub seconds: f64,
}

/// Files produced alongside the report, by path relative to the output
/// directory.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn extend(&mut self, other: Artifacts) {
        self.files.extend(other.files);
    }
}

pub fn metrics_csv(report: &RunReport) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    let exp = report.experiment.name();
    for v in &report.variants {
        for img in &v.images {
            for (sid, m) in img.subject_match.iter().enumerate() {
                out.push_str(&format!(
                    "{exp},{},{},{},{},{},{},{},{sid},{m}\n",
                    v.name,
                    v.gamma,
                    v.alpha,
                    v.k,
                    img.image_id,
                    img.structure_alignment,
                    img.style_distance,
                ));
            }
        }
    }
    out
}

fn write(out: &Path, rel: &Path, bytes: &[u8]) -> Result<()> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    write_atomic(&path, bytes)?;
    Ok(())
}

/// Writes `report.json`, `metrics.csv`, `timings.json` and every artifact,
/// each through a temp file and rename.
pub fn emit_outputs(
    out: &Path,
    report: &RunReport,
    timings: &[Phase],
    artifacts: &Artifacts,
) -> Result<()> {
    for (rel, bytes) in &artifacts.files {
        write(out, rel, bytes)?;
    }
    write(
        out,
        Path::new("metrics.csv"),
        metrics_csv(report).as_bytes(),
    )?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write(out, Path::new("report.json"), json.as_bytes())?;
    let timing_json = serde_json::to_string_pretty(timings).expect("timings serialize");
    write(out, Path::new(&report.timings), timing_json.as_bytes())?;
    Ok(())
}
