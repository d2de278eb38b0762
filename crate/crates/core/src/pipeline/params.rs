//! Named parameters of the toy backbone and its adapters.
//!
//! Names are `block{NN}.{group}.{weight}` and `spm.{weight}`; iteration is
//! always in sorted name order so checkpoints and partitions are stable.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::BackboneConfig;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::structure_preservation::{SpmParams, SpmVars};
use crate::style_injection::{SimParams, SimVars};

#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttnParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

/// Content cross-attention: queries are the block features, the single
/// key/value pair comes from the site's content embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentAttnParams {
    pub w_kc: Tensor,
    pub w_vc: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub self_attn: SelfAttnParams,
    pub content: ContentAttnParams,
    pub sim: SimParams,
    pub mlp: MlpParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub blocks: Vec<BlockParams>,
    pub spm: SpmParams,
}

/// Output scale of the frozen self-attention and MLP branches.
pub const BACKBONE_RESIDUAL_SCALE: f64 = 0.1;

pub fn block_prefix(i: usize) -> String {
    format!("block{i:02}")
}

impl BlockParams {
    fn init(d: usize, m: usize, rng: &mut impl Rng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        let hidden = 2 * d;
        Self {
            self_attn: SelfAttnParams {
                w_q: Tensor::randn(&[d, d], s, rng),
                w_k: Tensor::randn(&[d, d], s, rng),
                w_v: Tensor::randn(&[d, d], s, rng),
                w_o: Tensor::randn(&[d, d], BACKBONE_RESIDUAL_SCALE * s, rng),
            },
            content: ContentAttnParams {
                w_kc: Tensor::randn(&[d, d], s, rng),
                w_vc: Tensor::randn(&[d, d], 0.5 * s, rng),
            },
            sim: SimParams::init(d, m, rng),
            mlp: MlpParams {
                w1: Tensor::randn(&[d, hidden], s, rng),
                b1: Tensor::zeros(&[hidden]),
                w2: Tensor::randn(
                    &[hidden, d],
                    BACKBONE_RESIDUAL_SCALE / (hidden as f64).sqrt(),
                    rng,
                ),
                b2: Tensor::zeros(&[d]),
            },
        }
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        let a = &self.self_attn;
        for (n, t) in [
            ("w_q", &a.w_q),
            ("w_k", &a.w_k),
            ("w_v", &a.w_v),
            ("w_o", &a.w_o),
        ] {
            f(format!("{prefix}.self_attn.{n}"), t);
        }
        f(format!("{prefix}.content.w_kc"), &self.content.w_kc);
        f(format!("{prefix}.content.w_vc"), &self.content.w_vc);
        for (n, t) in self.sim.named() {
            f(format!("{prefix}.sim.{n}"), t);
        }
        let m = &self.mlp;
        for (n, t) in [("w1", &m.w1), ("b1", &m.b1), ("w2", &m.w2), ("b2", &m.b2)] {
            f(format!("{prefix}.mlp.{n}"), t);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        let a = &mut self.self_attn;
        for (n, t) in [
            ("w_q", &mut a.w_q),
            ("w_k", &mut a.w_k),
            ("w_v", &mut a.w_v),
            ("w_o", &mut a.w_o),
        ] {
            f(format!("{prefix}.self_attn.{n}"), t);
        }
        f(format!("{prefix}.content.w_kc"), &mut self.content.w_kc);
        f(format!("{prefix}.content.w_vc"), &mut self.content.w_vc);
        for (n, t) in self.sim.named_mut() {
            f(format!("{prefix}.sim.{n}"), t);
        }
        let m = &mut self.mlp;
        for (n, t) in [
            ("w1", &mut m.w1),
            ("b1", &mut m.b1),
            ("w2", &mut m.w2),
            ("b2", &mut m.b2),
        ] {
            f(format!("{prefix}.mlp.{n}"), t);
        }
    }
}

impl ModelParams {
    /// Seeded initialization. Backbone and style projections stand in for
    /// pre-trained weights; gates start neutral and `φ` starts at zero.
    pub fn init(config: &BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.width;
        let blocks = (0..config.blocks)
            .map(|_| BlockParams::init(d, config.style_tokens, &mut rng))
            .collect();
        let spm = SpmParams::init(config.structure_channels, d, &mut rng);
        Ok(Self { blocks, spm })
    }

    /// Every parameter with its full name, in sorted name order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&block_prefix(i), &mut |n, t| out.push((n, t)));
        }
        for (n, t) in self.spm.named() {
            out.push((format!("spm.{n}"), t));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.named().into_iter().map(|(n, _)| n).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.named()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&block_prefix(i), &mut |n, t| f(&n, t));
        }
        for (n, t) in self.spm.named_mut() {
            f(&format!("spm.{n}"), t);
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, Tensor> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }

    /// Overwrites every parameter from a map that must hold exactly the
    /// same names and shapes.
    pub fn load_map(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        let names = self.names();
        if names.len() != map.len() || names.iter().any(|n| !map.contains_key(n)) {
            return Err(Error::Checkpoint(
                "parameter names do not match the model".into(),
            ));
        }
        let mut err = None;
        self.for_each_mut(|n, t| {
            let src = &map[n];
            if src.shape() != t.shape() {
                err.get_or_insert_with(|| {
                    Error::Checkpoint(format!("{n}: shape {:?} vs {:?}", src.shape(), t.shape()))
                });
            } else {
                *t = src.clone();
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn count(&self, mut include: impl FnMut(&str) -> bool) -> usize {
        self.named()
            .iter()
            .filter(|(n, _)| include(n))
            .map(|(_, t)| t.len())
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelfAttnVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct ContentAttnVars {
    pub w_kc: Var,
    pub w_vc: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub self_attn: SelfAttnVars,
    pub content: ContentAttnVars,
    pub sim: SimVars,
    pub mlp: MlpVars,
}

/// All parameters registered as tape leaves.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub blocks: Vec<BlockVars>,
    pub spm: SpmVars,
    pub leaves: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn bind(params: &ModelParams, tape: &mut Tape, trainable: &dyn Fn(&str) -> bool) -> Self {
        Self::assemble(params, tape, &mut |tape, name, t| {
            tape.leaf(t.clone(), trainable(name))
        })
    }

    /// Builds the handles from already-registered leaves, looked up by name.
    pub fn from_leaves(
        params: &ModelParams,
        tape: &mut Tape,
        leaves: &BTreeMap<String, Var>,
    ) -> Result<Self> {
        let missing = params.names().into_iter().find(|n| !leaves.contains_key(n));
        if let Some(name) = missing {
            return Err(Error::Config(format!("no leaf bound for {name}")));
        }
        Ok(Self::assemble(params, tape, &mut |_, name, _| leaves[name]))
    }

    fn assemble(
        params: &ModelParams,
        tape: &mut Tape,
        make: &mut dyn FnMut(&mut Tape, &str, &Tensor) -> Var,
    ) -> Self {
        let mut leaves = BTreeMap::new();
        let mut leaf = |tape: &mut Tape, name: String, t: &Tensor| {
            let v = make(tape, &name, t);
            leaves.insert(name, v);
            v
        };
        let mut blocks = Vec::with_capacity(params.blocks.len());
        for (i, b) in params.blocks.iter().enumerate() {
            let p = block_prefix(i);
            let a = &b.self_attn;
            let self_attn = SelfAttnVars {
                w_q: leaf(tape, format!("{p}.self_attn.w_q"), &a.w_q),
                w_k: leaf(tape, format!("{p}.self_attn.w_k"), &a.w_k),
                w_v: leaf(tape, format!("{p}.self_attn.w_v"), &a.w_v),
                w_o: leaf(tape, format!("{p}.self_attn.w_o"), &a.w_o),
            };
            let content = ContentAttnVars {
                w_kc: leaf(tape, format!("{p}.content.w_kc"), &b.content.w_kc),
                w_vc: leaf(tape, format!("{p}.content.w_vc"), &b.content.w_vc),
            };
            let sim = SimVars {
                w_k: leaf(tape, format!("{p}.sim.w_k"), &b.sim.w_k),
                w_v: leaf(tape, format!("{p}.sim.w_v"), &b.sim.w_v),
                w_g: leaf(tape, format!("{p}.sim.w_g"), &b.sim.w_g),
                b_g: leaf(tape, format!("{p}.sim.b_g"), &b.sim.b_g),
                m: b.sim.m,
            };
            let m = &b.mlp;
            let mlp = MlpVars {
                w1: leaf(tape, format!("{p}.mlp.w1"), &m.w1),
                b1: leaf(tape, format!("{p}.mlp.b1"), &m.b1),
                w2: leaf(tape, format!("{p}.mlp.w2"), &m.w2),
                b2: leaf(tape, format!("{p}.mlp.b2"), &m.b2),
            };
            blocks.push(BlockVars {
                self_attn,
                content,
                sim,
                mlp,
            });
        }
        let s = &params.spm;
        let spm = SpmVars {
            phi_w1: leaf(tape, "spm.phi_w1".into(), &s.phi_w1),
            phi_b1: leaf(tape, "spm.phi_b1".into(), &s.phi_b1),
            phi_w2: leaf(tape, "spm.phi_w2".into(), &s.phi_w2),
            phi_b2: leaf(tape, "spm.phi_b2".into(), &s.phi_b2),
        };
        Self {
            blocks,
            spm,
            leaves,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_sorted_and_complete() {
        let cfg = BackboneConfig {
            blocks: 2,
            ..Default::default()
        };
        let p = ModelParams::init(&cfg, 1).unwrap();
        let names = p.names();
        assert_eq!(names.len(), 2 * 14 + 4);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, names);
        assert!(names.contains(&"block01.sim.w_g".to_string()));
        assert!(names.contains(&"spm.phi_w2".to_string()));

        let mut tape = Tape::new();
        let bound = BoundParams::bind(&p, &mut tape, &|_| false);
        assert_eq!(bound.leaves.keys().cloned().collect::<Vec<_>>(), names);
    }

    #[test]
    fn map_round_trip_and_mismatch() {
        let cfg = BackboneConfig {
            blocks: 1,
            ..Default::default()
        };
        let a = ModelParams::init(&cfg, 1).unwrap();
        let mut b = ModelParams::init(&cfg, 2).unwrap();
        assert_ne!(a, b);
        b.load_map(&a.to_map()).unwrap();
        assert_eq!(a, b);

        let mut bad = a.to_map();
        bad.remove("spm.phi_b2");
        assert!(b.load_map(&bad).is_err());
    }

    #[test]
    fn init_contracts() {
        let p = ModelParams::init(&BackboneConfig::default(), 3).unwrap();
        assert!(p.spm.phi_w2.data().iter().all(|&x| x == 0.0));
        assert!(p.spm.phi_b2.data().iter().all(|&x| x == 0.0));
        for b in &p.blocks {
            assert!(b.sim.w_g.data().iter().all(|&x| x == 0.0));
            assert_eq!(b.sim.w_k.shape(), &[16, 64]);
        }
    }
}
