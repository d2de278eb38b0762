//! The toy denoiser: a single-resolution stack of attention blocks with
//! content, style, and structure conditioning.

use super::config::BackboneConfig;
use super::params::{BlockVars, BoundParams, ModelParams};
use super::schedule::NoiseSchedule;
use crate::content_cycling::{build_schedule, ContentEmbeddingList, CyclicSchedule};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::structure_preservation::{inject_structure_on, project_residual_on, StructureCondition};
use crate::style_injection::{inject_style_on, Embedding, GateConfig};

const TIME_EMBED_SCALE: f64 = 0.5;

/// Everything the denoiser is conditioned on besides `x_t` and `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditions {
    pub contents: ContentEmbeddingList,
    pub style: Embedding,
    pub structure: StructureCondition,
}

impl Conditions {
    pub fn new(
        contents: ContentEmbeddingList,
        style: Embedding,
        structure: StructureCondition,
    ) -> Self {
        Self {
            contents,
            style,
            structure,
        }
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub eps: Var,
    pub x0: Var,
    /// One `1×d` gate per block, in block order.
    pub gates: Vec<Var>,
}

/// Sinusoidal embedding of the step index, one `d`-vector.
pub fn time_embedding(t: usize, d: usize) -> Tensor {
    Tensor::from_fn(&[d], |j| {
        let freq = (10_000f64).powf(-((j / 2 * 2) as f64) / d as f64);
        let phase = t as f64 * freq;
        TIME_EMBED_SCALE * if j % 2 == 0 { phase.sin() } else { phase.cos() }
    })
}

/// Fixed 2D position code over the latent grid. Channels cycle through
/// `(axis, frequency, sin/cos)` with frequencies `π·2^k / extent`.
pub fn position_embedding(grid: (usize, usize), d: usize) -> Tensor {
    let (h, w) = grid;
    Tensor::from_fn(&[h * w, d], |flat| {
        let (tok, j) = (flat / d, flat % d);
        let (pos, extent) = if (j / 2) % 2 == 0 {
            ((tok / w) as f64 + 0.5, h as f64)
        } else {
            ((tok % w) as f64 + 0.5, w as f64)
        };
        let arg = std::f64::consts::PI * 2f64.powi((j / 4 % 4) as i32) * pos / extent;
        if j % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: BackboneConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: BackboneConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let d = config.width;
        if params.blocks.len() != config.blocks {
            return Err(Error::Config(format!(
                "{} parameter blocks for {} configured blocks",
                params.blocks.len(),
                config.blocks
            )));
        }
        for b in &params.blocks {
            b.sim.validate()?;
            if b.sim.width() != d || b.sim.m != config.style_tokens {
                return Err(Error::Config("SIM parameters disagree with config".into()));
            }
            if b.self_attn.w_q.shape() != [d, d] || b.content.w_kc.shape() != [d, d] {
                return Err(Error::Config("block width disagrees with config".into()));
            }
        }
        if params.spm.phi_w1.shape()[0] != config.structure_channels
            || params.spm.phi_w2.shape()[1] != d
        {
            return Err(Error::Config("SPM parameters disagree with config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn init(config: BackboneConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Self::new(config, params)
    }

    pub fn noise_schedule(&self) -> NoiseSchedule {
        NoiseSchedule::cosine(self.config.steps).expect("validated step count")
    }

    pub fn cyclic_schedule(&self, cond: &Conditions) -> Result<CyclicSchedule> {
        build_schedule(cond.contents.len(), self.config.blocks)
    }

    /// Forward pass with content embeddings resolved through the cyclic
    /// schedule.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x_t: Var,
        t: usize,
        cond: &Conditions,
    ) -> Result<ForwardVars> {
        forward_conditions(&self.config, tape, bound, x_t, t, cond)
    }

    /// [`Model::forward_on`] with the structure scale overridden, as used
    /// when training drops the structure condition.
    pub fn forward_on_with_gamma(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x_t: Var,
        t: usize,
        cond: &Conditions,
        gamma: f64,
    ) -> Result<ForwardVars> {
        let config = BackboneConfig {
            gamma,
            ..self.config.clone()
        };
        forward_conditions(&config, tape, bound, x_t, t, cond)
    }

    /// Forward pass with one explicit content embedding per block.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_sites_on(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x_t: Var,
        t: usize,
        sites: &[Var],
        style: &Embedding,
        structure: &StructureCondition,
    ) -> Result<ForwardVars> {
        forward_sites(&self.config, tape, bound, x_t, t, sites, style, structure)
    }

    fn frozen_tape(&self) -> (Tape, BoundParams) {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&self.params, &mut tape, &|_| false);
        (tape, bound)
    }

    /// Predicted noise for `x_t` at step `t`.
    pub fn forward(&self, x_t: &Tensor, t: usize, cond: &Conditions) -> Result<Tensor> {
        let (mut tape, bound) = self.frozen_tape();
        let x = tape.constant(x_t.clone());
        let out = self.forward_on(&mut tape, &bound, x, t, cond)?;
        Ok(tape.value(out.eps).clone())
    }

    /// Forward pass that feeds the same content embedding to every block
    /// without any schedule.
    pub fn forward_single_content(
        &self,
        x_t: &Tensor,
        t: usize,
        content: &Embedding,
        style: &Embedding,
        structure: &StructureCondition,
    ) -> Result<Tensor> {
        let (mut tape, bound) = self.frozen_tape();
        let x = tape.constant(x_t.clone());
        let e_c = tape.constant(content.tensor().clone());
        let sites = vec![e_c; self.config.blocks];
        let out = self.forward_sites_on(&mut tape, &bound, x, t, &sites, style, structure)?;
        Ok(tape.value(out.eps).clone())
    }

    /// Deterministic sampling from `x_T` through every step of the schedule.
    pub fn sample(&self, x_big_t: &Tensor, cond: &Conditions) -> Result<Tensor> {
        let schedule = self.noise_schedule();
        super::sampler::sample(
            &|x: &Tensor, t| self.forward(x, t, cond),
            x_big_t,
            &schedule,
        )
    }

    pub fn gate_config(&self) -> Result<GateConfig> {
        self.config.gate_config()
    }
}

fn check_inputs(
    config: &BackboneConfig,
    x_t: &Tensor,
    t: usize,
    style: &Embedding,
    structure: &StructureCondition,
) -> Result<()> {
    let (n, d) = (config.tokens(), config.width);
    if x_t.shape() != [n, d] {
        return Err(Error::Shape {
            op: "forward x_t",
            lhs: x_t.shape().to_vec(),
            rhs: vec![n, d],
        });
    }
    if t == 0 || t > config.steps {
        return Err(Error::OutOfRange {
            index: t,
            len: config.steps + 1,
        });
    }
    if style.width() != d {
        return Err(Error::Config(format!(
            "style embedding width {} vs model width {d}",
            style.width()
        )));
    }
    if structure.grid() != config.grid_hw() || structure.channels() != config.structure_channels {
        return Err(Error::Config(format!(
            "structure condition {:?} does not match grid {:?} with {} channels",
            structure.feat().shape(),
            config.grid,
            config.structure_channels
        )));
    }
    Ok(())
}

/// Resolves content sites through the cyclic schedule.
fn forward_conditions(
    cfg: &BackboneConfig,
    tape: &mut Tape,
    bound: &BoundParams,
    x_t: Var,
    t: usize,
    cond: &Conditions,
) -> Result<ForwardVars> {
    if cond.contents.width() != cfg.width {
        return Err(Error::Config(format!(
            "content embedding width {} vs model width {}",
            cond.contents.width(),
            cfg.width
        )));
    }
    let schedule = build_schedule(cond.contents.len(), cfg.blocks)?;
    let items: Vec<Var> = cond
        .contents
        .items()
        .iter()
        .map(|e| tape.constant(e.tensor().clone()))
        .collect();
    let sites: Vec<Var> = schedule.assignment.iter().map(|&i| items[i]).collect();
    forward_sites(
        cfg,
        tape,
        bound,
        x_t,
        t,
        &sites,
        &cond.style,
        &cond.structure,
    )
}

#[allow(clippy::too_many_arguments)]
fn forward_sites(
    cfg: &BackboneConfig,
    tape: &mut Tape,
    bound: &BoundParams,
    x_t: Var,
    t: usize,
    sites: &[Var],
    style: &Embedding,
    structure: &StructureCondition,
) -> Result<ForwardVars> {
    let d = cfg.width;
    check_inputs(cfg, tape.value(x_t), t, style, structure)?;
    if sites.len() != cfg.blocks || bound.blocks.len() != cfg.blocks {
        return Err(Error::Config(format!(
            "{} content sites for {} blocks",
            sites.len(),
            cfg.blocks
        )));
    }
    let gate_cfg = cfg.gate_config()?;
    let scale = cfg.structure_scale()?;

    let temb = tape.constant(time_embedding(t, d));
    let h0 = tape.add_row(x_t, temb)?;
    let pos = tape.constant(position_embedding(cfg.grid_hw(), d));

    let e_r = tape.constant(style.tensor().clone());
    let cells = tape.constant(structure.cells());
    let residual = project_residual_on(tape, cells, &bound.spm)?;

    let mut h = h0;
    let mut gates = Vec::with_capacity(cfg.blocks);
    for (i, (vars, &e_c)) in bound.blocks.iter().zip(sites).enumerate() {
        h = self_attention(tape, h, vars, d)?;
        h = content_attention(tape, h, pos, e_c, vars, d)?;
        let sim = inject_style_on(tape, h, e_c, e_r, &vars.sim, &gate_cfg)?;
        gates.push(sim.gate);
        h = sim.features;
        if cfg.spm_enabled(i) {
            h = inject_structure_on(tape, h, residual, scale)?;
        }
        h = mlp(tape, h, vars)?;
    }

    // The last block's tokens are the clean-latent estimate; the noise
    // estimate follows from the schedule.
    let x0 = h;
    let abar = NoiseSchedule::cosine(cfg.steps)?.alpha_bar(t)?;
    let scaled = tape.scale(x0, abar.sqrt())?;
    let diff = tape.sub(x_t, scaled)?;
    let eps = tape.scale(diff, 1.0 / (1.0 - abar).sqrt())?;
    Ok(ForwardVars { eps, x0, gates })
}

fn self_attention(tape: &mut Tape, h: Var, vars: &BlockVars, d: usize) -> Result<Var> {
    let a = &vars.self_attn;
    let q = tape.matmul(h, a.w_q)?;
    let k = tape.matmul(h, a.w_k)?;
    let v = tape.matmul(h, a.w_v)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    let mixed = tape.matmul(weights, v)?;
    let out = tape.matmul(mixed, a.w_o)?;
    tape.add(h, out)
}

/// Cross-attention onto a single content token next to an implicit null
/// token with zero key and value: the softmax over the pair reduces to a
/// sigmoid of the content score. Queries carry the position code so a
/// content token can land on its own region.
fn content_attention(
    tape: &mut Tape,
    h: Var,
    pos: Var,
    e_c: Var,
    vars: &BlockVars,
    d: usize,
) -> Result<Var> {
    let c = &vars.content;
    let row = tape.reshape(e_c, &[1, d])?;
    let k = tape.matmul(row, c.w_kc)?;
    let v = tape.matmul(row, c.w_vc)?;
    let kt = tape.transpose(k)?;
    let queries = tape.add(h, pos)?;
    let scores = tape.matmul(queries, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = tape.sigmoid(scores)?;
    let out = tape.matmul(weights, v)?;
    tape.add(h, out)
}

fn mlp(tape: &mut Tape, h: Var, vars: &BlockVars) -> Result<Var> {
    let m = &vars.mlp;
    let hidden = tape.matmul(h, m.w1)?;
    let hidden = tape.add_row(hidden, m.b1)?;
    let hidden = tape.sigmoid(hidden)?;
    let out = tape.matmul(hidden, m.w2)?;
    let out = tape.add_row(out, m.b2)?;
    tape.add(h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content_cycling::Origin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_setup(k: usize) -> (Model, Conditions, Tensor) {
        let cfg = BackboneConfig {
            grid: [4, 4],
            width: 8,
            blocks: 3,
            style_tokens: 2,
            ..Default::default()
        };
        let model = Model::init(cfg, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let items = (0..k)
            .map(|_| Embedding::from_tensor(&Tensor::randn(&[8], 1.0, &mut rng)).unwrap())
            .collect();
        let contents =
            ContentEmbeddingList::new(items, (0..k).map(Origin::Subject).collect()).unwrap();
        let style = Embedding::from_tensor(&Tensor::randn(&[8], 1.0, &mut rng)).unwrap();
        let feat = Tensor::from_fn(&[4, 4, 4], |i| ((i * 7) % 11) as f64 / 10.0);
        let cond = Conditions::new(contents, style, StructureCondition::new(feat).unwrap());
        let x = Tensor::randn(&[16, 8], 1.0, &mut rng);
        (model, cond, x)
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let (model, cond, x) = small_setup(2);
        let a = model.forward(&x, 3, &cond).unwrap();
        let b = model.forward(&x, 3, &cond).unwrap();
        assert!(a.bit_eq(&b));
        assert!(a.is_finite());
        assert_eq!(a.shape(), &[16, 8]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (model, cond, x) = small_setup(1);
        assert!(model.forward(&x, 0, &cond).is_err());
        assert!(model.forward(&x, 9, &cond).is_err());
        assert!(model.forward(&Tensor::zeros(&[16, 7]), 1, &cond).is_err());
        let (_, too_many, _) = small_setup(4);
        assert!(model.forward(&x, 1, &too_many).is_err());
    }

    #[test]
    fn single_content_matches_k1_schedule() {
        let (model, cond, x) = small_setup(1);
        let a = model.forward(&x, 2, &cond).unwrap();
        let b = model
            .forward_single_content(
                &x,
                2,
                &cond.contents.items()[0],
                &cond.style,
                &cond.structure,
            )
            .unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn zero_init_structure_branch_is_gamma_independent() {
        let (mut model, cond, x) = small_setup(2);
        let base = model.forward(&x, 4, &cond).unwrap();
        model.config.gamma = 0.0;
        assert!(model.forward(&x, 4, &cond).unwrap().bit_eq(&base));
    }

    #[test]
    fn embeddings_are_bounded() {
        let t = time_embedding(5, 16);
        assert!(t.data().iter().all(|v| v.abs() <= TIME_EMBED_SCALE));
        let p = position_embedding((8, 8), 16);
        assert_eq!(p.shape(), &[64, 16]);
        let distinct = (0..64).all(|a| (0..a).all(|b| p.row(a) != p.row(b)));
        assert!(distinct);
    }
}
