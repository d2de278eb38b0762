//! Cyclic assignment of several content embeddings to the backbone's
//! content cross-attention sites: site `i` sees embedding `i mod k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::style_injection::Embedding;
use crate::synthdata::{ContentEncoder, Mask, SyntheticImage, JITTER_AMPLITUDE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "id")]
pub enum Origin {
    Subject(usize),
    Augmentation(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContentEmbeddingList {
    items: Vec<Embedding>,
    origins: Vec<Origin>,
}

impl ContentEmbeddingList {
    pub fn new(items: Vec<Embedding>, origins: Vec<Origin>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Config("content embedding list is empty".into()));
        }
        if origins.len() != items.len() {
            return Err(Error::Config(
                "one origin tag per embedding required".into(),
            ));
        }
        let d = items[0].width();
        if items.iter().any(|e| e.width() != d) {
            return Err(Error::Config("content embeddings differ in width".into()));
        }
        Ok(Self { items, origins })
    }

    pub fn single(e: Embedding) -> Self {
        Self {
            items: vec![e],
            origins: vec![Origin::Augmentation(0)],
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn width(&self) -> usize {
        self.items[0].width()
    }

    pub fn items(&self) -> &[Embedding] {
        &self.items
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicSchedule {
    pub num_sites: usize,
    pub num_embeddings: usize,
    pub assignment: Vec<usize>,
}

/// `assignment[i] = i mod k` over `L` sites. More embeddings than sites
/// would leave some unused, so that is rejected.
pub fn build_schedule(k: usize, num_sites: usize) -> Result<CyclicSchedule> {
    if k == 0 || num_sites == 0 {
        return Err(Error::Config(format!(
            "schedule needs k ≥ 1 and L ≥ 1 (got k={k}, L={num_sites})"
        )));
    }
    if k > num_sites {
        return Err(Error::Config(format!(
            "{k} content embeddings exceed {num_sites} attention sites"
        )));
    }
    Ok(CyclicSchedule {
        num_sites,
        num_embeddings: k,
        assignment: (0..num_sites).map(|i| i % k).collect(),
    })
}

pub fn embedding_for_site<'a>(
    schedule: &CyclicSchedule,
    embeddings: &'a ContentEmbeddingList,
    site: usize,
) -> Result<&'a Embedding> {
    let idx = *schedule.assignment.get(site).ok_or(Error::OutOfRange {
        index: site,
        len: schedule.num_sites,
    })?;
    embeddings.items.get(idx).ok_or(Error::OutOfRange {
        index: idx,
        len: embeddings.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "views")]
pub enum ExtractionMode {
    /// One embedding per subject mask.
    Segmentation,
    /// One embedding per view: original, flipped, jittered, flipped+jittered, …
    Augmentation(usize),
}

/// Encodes one embedding per mask, or per augmented view of the region
/// covered by all masks.
pub fn extract_content_embeddings(
    image: &SyntheticImage,
    masks: &[Mask],
    encoder: &ContentEncoder,
    mode: ExtractionMode,
    seed: u64,
) -> Result<ContentEmbeddingList> {
    if masks.is_empty() {
        return Err(Error::EmptyMasks);
    }
    match mode {
        ExtractionMode::Segmentation => {
            let items = masks
                .iter()
                .map(|m| encoder.encode_region(image, m))
                .collect::<Result<Vec<_>>>()?;
            let origins = (0..items.len()).map(Origin::Subject).collect();
            ContentEmbeddingList::new(items, origins)
        }
        ExtractionMode::Augmentation(views) => {
            if views == 0 {
                return Err(Error::Config("augmentation mode needs ≥ 1 view".into()));
            }
            let (w, h) = (image.width(), image.height());
            let union = Mask::new(
                w,
                h,
                (0..w * h)
                    .map(|i| masks.iter().any(|m| m.bits()[i]))
                    .collect(),
            )?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let items = (0..views)
                .map(|v| {
                    let (mut view, mut region) = (image.clone(), union.clone());
                    if v % 2 == 1 {
                        view = view.flip_horizontal();
                        region = region.flip_horizontal();
                    }
                    if v >= 2 {
                        view = view.color_jitter(JITTER_AMPLITUDE, &mut rng);
                    }
                    encoder.encode_region(&view, &region)
                })
                .collect::<Result<Vec<_>>>()?;
            let origins = (0..views).map(Origin::Augmentation).collect();
            ContentEmbeddingList::new(items, origins)
        }
    }
}
