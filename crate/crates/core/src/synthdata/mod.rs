//! Synthetic multi-subject corpus, frozen toy encoders, and proxy metrics.

mod corpus;
mod encoders;
mod generate;
mod image;
mod metrics;

pub use corpus::{derive_seed, Corpus, CorpusItem, CorpusManifest, CorpusSpec, ManifestEntry};
pub use encoders::{
    channel_stats, edge_magnitude, encode_latent, gradients, ContentEncoder, Encoders,
    StructureEncoder, StyleEncoder, EDGE_FLOOR, STRUCTURE_CHANNELS,
};
pub use generate::{gen_content, StyleSpec, IMAGE_SIZE, MAX_SUBJECTS};
pub use image::{ImageMeta, Mask, Shape, SubjectMeta, SyntheticImage};
pub use metrics::{
    binary_edges, binary_iou, evaluate, metric_structure_alignment, metric_style_distance,
    metric_subject_match, MetricReport, EDGE_THRESHOLD,
};

/// Colour jitter amplitude applied to content augmentations.
pub const JITTER_AMPLITUDE: f64 = 0.05;
