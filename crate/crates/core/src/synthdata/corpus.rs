use serde::{Deserialize, Serialize};

use super::generate::{gen_content, StyleSpec};
use super::image::{ImageMeta, SyntheticImage};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub size: usize,
    pub subjects: usize,
}

/// SplitMix64 finalizer; derives independent seeds per item and stream.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct CorpusItem {
    pub index: usize,
    pub content: SyntheticImage,
    pub style: StyleSpec,
    pub style_ref: SyntheticImage,
    /// The content layout rendered in the item's style.
    pub target: SyntheticImage,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub items: Vec<CorpusItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub content_seed: u64,
    pub style_seed: u64,
    pub content: ImageMeta,
    pub style: StyleSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: CorpusSpec,
    pub items: Vec<ManifestEntry>,
}

impl Corpus {
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        let items = (0..spec.size)
            .map(|i| {
                let content = gen_content(derive_seed(spec.seed, 1, i as u64), spec.subjects)?;
                let style = StyleSpec::generate(derive_seed(spec.seed, 2, i as u64));
                let style_ref = style.render_reference();
                let target = style.stylize(&content);
                Ok(CorpusItem {
                    index: i,
                    content,
                    style,
                    style_ref,
                    target,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            items,
        })
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            spec: self.spec.clone(),
            items: self
                .items
                .iter()
                .map(|it| ManifestEntry {
                    index: it.index,
                    content_seed: it.content.meta.seed,
                    style_seed: it.style.seed,
                    content: it.content.meta.clone(),
                    style: it.style.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_byte_identical() {
        let spec = CorpusSpec {
            seed: 42,
            size: 6,
            subjects: 2,
        };
        let (a, b) = (
            Corpus::generate(&spec).unwrap(),
            Corpus::generate(&spec).unwrap(),
        );
        for (x, y) in a.items.iter().zip(&b.items) {
            assert_eq!(x.content.to_ppm(), y.content.to_ppm());
            assert_eq!(x.target.to_ppm(), y.target.to_ppm());
            assert_eq!(x.style_ref.to_ppm(), y.style_ref.to_ppm());
        }
        assert_eq!(a.manifest(), b.manifest());
    }

    #[test]
    fn masks_are_pairwise_disjoint_across_corpus() {
        for subjects in 1..=4 {
            let corpus = Corpus::generate(&CorpusSpec {
                seed: 7,
                size: 40,
                subjects,
            })
            .unwrap();
            for item in &corpus.items {
                let m = &item.content.masks;
                assert_eq!(m.len(), subjects);
                for i in 0..m.len() {
                    assert!(!m[i].is_empty());
                    for j in i + 1..m.len() {
                        assert!(!m[i].intersects(&m[j]), "item {} masks {i},{j}", item.index);
                    }
                }
            }
        }
    }
}
