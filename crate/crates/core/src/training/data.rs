use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::content_cycling::{extract_content_embeddings, ExtractionMode};
use crate::error::Result;
use crate::numerics::Tensor;
use crate::pipeline::{BackboneConfig, Conditions};
use crate::synthdata::{encode_latent, CorpusItem, Encoders, SyntheticImage, JITTER_AMPLITUDE};

/// How content embeddings are drawn from a content image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMode {
    /// One embedding of the region covered by all subjects.
    Single,
    /// One embedding per subject, cycled over the blocks.
    Multi,
}

impl EmbedMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbedMode::Single => "single-embed",
            EmbedMode::Multi => "multi-embed",
        }
    }
}

/// Content augmentation applied to one training draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Augment {
    pub flip: bool,
    pub jitter_seed: Option<u64>,
}

pub fn conditions_for(
    content: &SyntheticImage,
    style_ref: &SyntheticImage,
    encoders: &Encoders,
    mode: EmbedMode,
) -> Result<Conditions> {
    let extraction = match mode {
        EmbedMode::Single => ExtractionMode::Augmentation(1),
        EmbedMode::Multi => ExtractionMode::Segmentation,
    };
    let contents =
        extract_content_embeddings(content, &content.masks, &encoders.content, extraction, 0)?;
    Ok(Conditions::new(
        contents,
        encoders.style.encode(style_ref)?,
        encoders.structure.encode(content)?,
    ))
}

/// A clean latent with its conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub x0: Tensor,
    pub cond: Conditions,
}

/// The denoising target is the stylized rendering of the content; flips
/// apply to content and target together, jitter to content only.
pub fn prepare_example(
    item: &CorpusItem,
    encoders: &Encoders,
    backbone: &BackboneConfig,
    mode: EmbedMode,
    augment: Option<Augment>,
) -> Result<Example> {
    let (mut content, mut target) = (item.content.clone(), item.target.clone());
    if let Some(aug) = augment {
        if aug.flip {
            content = content.flip_horizontal();
            target = target.flip_horizontal();
        }
        if let Some(seed) = aug.jitter_seed {
            content = content.color_jitter(JITTER_AMPLITUDE, &mut ChaCha8Rng::seed_from_u64(seed));
        }
    }
    Ok(Example {
        x0: encode_latent(&target, backbone.grid_hw(), backbone.width)?,
        cond: conditions_for(&content, &item.style_ref, encoders, mode)?,
    })
}
