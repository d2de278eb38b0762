use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{prepare_example, Augment, EmbedMode, Example};
use super::loss::{denoising_loss_on, LossParts, LossVars};
use super::optimizer::{AdamConfig, AdamW};
use super::partition::{ParameterPartition, Preset};
use crate::error::{Error, Result};
use crate::numerics::{grad_check, GradCheckReport, GradParam, Tape, Tensor};
use crate::pipeline::{add_noise, BoundParams, Model};
use crate::synthdata::{CorpusItem, Encoders};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub lambda_gate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub preset: Preset,
    pub embed: EmbedMode,
    pub augment: bool,
    /// Probability that a draw trains without the structure condition.
    pub structure_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            lambda_gate: 1e-3,
            batch_size: 4,
            steps: 200,
            seed: 0,
            preset: Preset::ContentOnly,
            embed: EmbedMode::Multi,
            augment: false,
            structure_dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if !(self.lambda_gate >= 0.0 && self.lambda_gate.is_finite()) {
            return Err(Error::Config("lambda_gate must be finite and ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.structure_dropout) {
            return Err(Error::Config("structure_dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub mse: f64,
    pub gate_reg: f64,
}

pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut out = String::from("step,loss,mse,gate_reg\n");
    for r in curve {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.loss, r.mse, r.gate_reg));
    }
    out
}

/// One noisy training draw.
#[derive(Clone, Debug)]
pub struct Draw {
    pub item: usize,
    pub t: usize,
    pub noise: Tensor,
    pub augment: Option<Augment>,
    /// Train this draw with the structure branch switched off.
    pub drop_structure: bool,
}

/// The draws for every step, fixed by the seed alone so that runs with
/// different presets see the same data in the same order.
pub struct DrawStream {
    rng: ChaCha8Rng,
    items: usize,
    steps: usize,
    shape: [usize; 2],
    augment: bool,
    structure_dropout: f64,
}

impl DrawStream {
    pub fn new(
        seed: u64,
        items: usize,
        steps: usize,
        shape: [usize; 2],
        augment: bool,
        structure_dropout: f64,
    ) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            items,
            steps,
            shape,
            augment,
            structure_dropout,
        }
    }

    pub fn next_draw(&mut self) -> Draw {
        let item = self.rng.random_range(0..self.items);
        let t = self.rng.random_range(1..=self.steps);
        let noise = Tensor::randn(&self.shape, 1.0, &mut self.rng);
        let flip = self.rng.random_bool(0.5);
        let jitter = self.rng.random_bool(0.5);
        let jitter_seed: u64 = self.rng.random();
        let drop_structure = self.rng.random::<f64>() < self.structure_dropout;
        let augment = self.augment.then_some(Augment {
            flip,
            jitter_seed: jitter.then_some(jitter_seed),
        });
        Draw {
            item,
            t,
            noise,
            augment,
            drop_structure,
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<LossRecord>,
    pub optimizer: AdamW,
}

/// Records the batch loss on `tape` against already bound parameters.
pub fn batch_loss_on(
    model: &Model,
    tape: &mut Tape,
    bound: &BoundParams,
    batch: &[(&Example, &Draw)],
    lambda_gate: f64,
) -> Result<LossVars> {
    let schedule = model.noise_schedule();
    let mut pairs = Vec::with_capacity(batch.len());
    let mut gates = Vec::new();
    for (ex, draw) in batch {
        let x_t = add_noise(&ex.x0, &draw.noise, &schedule, draw.t)?;
        let x = tape.constant(x_t);
        let gamma = if draw.drop_structure {
            0.0
        } else {
            model.config.gamma
        };
        let out = model.forward_on_with_gamma(tape, bound, x, draw.t, &ex.cond, gamma)?;
        let target = tape.constant(draw.noise.clone());
        pairs.push((out.eps, target));
        gates.extend(out.gates);
    }
    denoising_loss_on(tape, &pairs, &gates, lambda_gate)
}

/// Finite-difference check of the full training loss with respect to
/// every parameter the partition marks trainable.
pub fn check_gradients(
    model: &Model,
    partition: &ParameterPartition,
    batch: &[(&Example, &Draw)],
    lambda_gate: f64,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let named = model.params.named();
    let params: Vec<GradParam> = named
        .iter()
        .map(|(n, t)| GradParam::new(n.clone(), (*t).clone(), partition.is_trainable(n)))
        .collect();
    let names: Vec<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
    grad_check(
        |tape, vars| {
            let leaves = names
                .iter()
                .map(|n| n.to_string())
                .zip(vars.iter().copied())
                .collect();
            let bound = BoundParams::from_leaves(&model.params, tape, &leaves)?;
            Ok(batch_loss_on(model, tape, &bound, batch, lambda_gate)?.total)
        },
        &params,
        h,
        tol,
    )
}

/// Loss of one batch and, when anything is trainable, its gradients by
/// parameter name.
pub fn batch_loss(
    model: &Model,
    partition: &ParameterPartition,
    batch: &[(&Example, &Draw)],
    lambda_gate: f64,
) -> Result<(LossParts, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&model.params, &mut tape, &|n| partition.is_trainable(n));
    let loss = batch_loss_on(model, &mut tape, &bound, batch, lambda_gate)?;
    let parts = loss.values(&tape);
    let mut grads = BTreeMap::new();
    if tape.requires_grad(loss.total) {
        let g = tape.backward(loss.total)?;
        for (name, &var) in &bound.leaves {
            match (g.get(var), partition.is_trainable(name)) {
                (Some(t), true) => {
                    grads.insert(name.clone(), t.clone());
                }
                (Some(_), false) => {
                    return Err(Error::PartitionBreach(format!(
                        "frozen parameter {name} received a gradient"
                    )))
                }
                _ => {}
            }
        }
    }
    Ok((parts, grads))
}

/// Runs `cfg.steps` optimizer steps from `model`.
pub fn train(
    model: &Model,
    items: &[CorpusItem],
    encoders: &Encoders,
    cfg: &TrainConfig,
    partition: &ParameterPartition,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    partition.check_covers(&model.params)?;
    let mut model = model.clone();
    let mut optimizer = AdamW::new(cfg.adam(), &model.params, partition)?;
    let backbone = model.config.clone();
    let cached: Vec<Example> = if cfg.augment {
        Vec::new()
    } else {
        items
            .iter()
            .map(|it| prepare_example(it, encoders, &backbone, cfg.embed, None))
            .collect::<Result<_>>()?
    };
    let mut stream = DrawStream::new(
        cfg.seed,
        items.len(),
        backbone.steps,
        [backbone.tokens(), backbone.width],
        cfg.augment,
        cfg.structure_dropout,
    );
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let draws: Vec<Draw> = (0..cfg.batch_size).map(|_| stream.next_draw()).collect();
        let fresh: Vec<Example> = if cfg.augment {
            draws
                .iter()
                .map(|d| prepare_example(&items[d.item], encoders, &backbone, cfg.embed, d.augment))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let batch: Vec<(&Example, &Draw)> = draws
            .iter()
            .enumerate()
            .map(|(i, d)| {
                (
                    if cfg.augment {
                        &fresh[i]
                    } else {
                        &cached[d.item]
                    },
                    d,
                )
            })
            .collect();
        let (parts, grads) =
            batch_loss(&model, partition, &batch, cfg.lambda_gate).map_err(|e| match e {
                Error::NonFinite { op } => Error::NonFinite {
                    op: format!("{op} at training step {step}"),
                },
                other => other,
            })?;
        if !parts.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        curve.push(LossRecord {
            step,
            loss: parts.total,
            mse: parts.mse,
            gate_reg: parts.gate_reg,
        });
        optimizer.step(&mut model.params, &grads)?;
    }
    Ok(TrainOutcome {
        model,
        curve,
        optimizer,
    })
}
