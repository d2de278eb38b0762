#![allow(dead_code)]

use icas_core::content_cycling::{ContentEmbeddingList, Origin};
use icas_core::pipeline::{BackboneConfig, Conditions, Model, ModelParams};
use icas_core::structure_preservation::StructureCondition;
use icas_core::{Embedding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod oracle;

/// Small backbone within the gradient-check budget: 16 tokens of width 8.
pub fn small_config() -> BackboneConfig {
    BackboneConfig {
        grid: [4, 4],
        width: 8,
        blocks: 3,
        style_tokens: 2,
        steps: 4,
        ..Default::default()
    }
}

pub fn random_embedding(d: usize, rng: &mut impl Rng) -> Embedding {
    Embedding::from_tensor(&Tensor::randn(&[d], 1.0, rng)).unwrap()
}

pub fn random_conditions(cfg: &BackboneConfig, k: usize, rng: &mut impl Rng) -> Conditions {
    let d = cfg.width;
    let items = (0..k).map(|_| random_embedding(d, rng)).collect();
    let contents = ContentEmbeddingList::new(items, (0..k).map(Origin::Subject).collect()).unwrap();
    let feat = Tensor::from_fn(&[cfg.grid[0], cfg.grid[1], cfg.structure_channels], |_| {
        rng.random_range(0.0..1.0)
    });
    Conditions::new(
        contents,
        random_embedding(d, rng),
        StructureCondition::new(feat).unwrap(),
    )
}

/// Initialized parameters with every tensor nudged away from its init, so
/// zero-initialized gates and projections carry gradient.
pub fn perturbed_model(cfg: &BackboneConfig, seed: u64, scale: f64) -> Model {
    let mut params = ModelParams::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    params.for_each_mut(|_, t| {
        let noise = Tensor::randn(t.shape(), scale, &mut rng);
        *t = t.zip_map(&noise, |a, b| a + b).unwrap();
    });
    Model::new(cfg.clone(), params).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
