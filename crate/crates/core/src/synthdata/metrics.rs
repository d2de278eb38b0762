//! Proxy metrics for structure preservation, style match, and per-subject
//! fidelity. They are transparent stand-ins, not FID or user ratings.

use serde::{Deserialize, Serialize};

use super::encoders::{channel_stats, edge_magnitude};
use super::image::SyntheticImage;
use crate::error::{Error, Result};

/// Edge pixels are those above this fraction of the image's strongest edge.
pub const EDGE_THRESHOLD: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub structure_alignment: f64,
    pub style_distance: f64,
    pub subject_match: Vec<f64>,
}

fn check_sizes(a: &SyntheticImage, b: &SyntheticImage) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape {
            op: "metric",
            lhs: vec![a.height(), a.width()],
            rhs: vec![b.height(), b.width()],
        });
    }
    Ok(())
}

pub fn binary_edges(img: &SyntheticImage) -> Vec<bool> {
    let mag = edge_magnitude(img);
    let max = mag.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return vec![false; mag.len()];
    }
    mag.iter().map(|&m| m > EDGE_THRESHOLD * max).collect()
}

/// Intersection over union; two empty maps agree perfectly.
pub fn binary_iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn metric_structure_alignment(a: &SyntheticImage, b: &SyntheticImage) -> Result<f64> {
    check_sizes(a, b)?;
    Ok(binary_iou(&binary_edges(a), &binary_edges(b)))
}

/// L2 distance between per-channel `(mean, std)` vectors.
pub fn metric_style_distance(output: &SyntheticImage, style_ref: &SyntheticImage) -> f64 {
    let (a, b) = (channel_stats(output), channel_stats(style_ref));
    a.iter()
        .zip(&b)
        .map(|((ma, sa), (mb, sb))| (ma - mb).powi(2) + (sa - sb).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 1.0;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Normalized cross-correlation of edge magnitudes inside each subject's
/// mask, grown by one pixel so the outline is included.
pub fn metric_subject_match(output: &SyntheticImage, content: &SyntheticImage) -> Result<Vec<f64>> {
    check_sizes(output, content)?;
    if content.masks.is_empty() {
        return Err(Error::EmptyMasks);
    }
    let (eo, ec) = (edge_magnitude(output), edge_magnitude(content));
    content
        .masks
        .iter()
        .map(|mask| {
            if mask.is_empty() {
                return Err(Error::EmptyMasks);
            }
            let region = mask.dilate();
            let idx: Vec<usize> = (0..region.bits().len())
                .filter(|&i| region.bits()[i])
                .collect();
            let a: Vec<f64> = idx.iter().map(|&i| ec[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| eo[i]).collect();
            Ok(ncc(&a, &b))
        })
        .collect()
}

/// All three metrics for one output against its content and style inputs.
pub fn evaluate(
    output: &SyntheticImage,
    content: &SyntheticImage,
    style_ref: &SyntheticImage,
) -> Result<MetricReport> {
    Ok(MetricReport {
        structure_alignment: metric_structure_alignment(output, content)?,
        style_distance: metric_style_distance(output, style_ref),
        subject_match: metric_subject_match(output, content)?,
    })
}
