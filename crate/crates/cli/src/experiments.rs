//! The six experiment verbs. Every variant is a pure function of the
//! resolved config, so variants run concurrently and the outputs are
//! byte-identical for any worker count.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use icas_core::content_cycling::build_schedule;
use icas_core::pipeline::{decode, sample, Model, ModelParams};
use icas_core::style_injection::{inject_style, GateConfig, GateMode};
use icas_core::synthdata::{derive_seed, evaluate, Corpus, Encoders};
use icas_core::training::{
    conditions_for, encode_checkpoint, loss_curve_csv, parameter_hashes, read_checkpoint,
    sha256_hex, train, EmbedMode, ParameterPartition, Preset, TrainConfig,
};
use icas_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::parallel::{run_jobs, Job};
use crate::report::{
    emit_outputs, Artifacts, Audit, Check, ImageDelta, ImageRow, PartitionAudit, Phase, RunReport,
    ScheduleAudit, Summary, TrainingSummary, VariantReport, EXTERNAL_VARIANT,
};

/// Structure scales swept by `sweep-gamma`, besides the γ = 0 control.
pub const GAMMA_GRID: [f64; 5] = [0.4, 0.5, 0.6, 0.7, 0.8];

/// Gate constant of the no-gate arm in `ablate-gate`.
pub const FIXED_GATE: f64 = 1.0;

const STREAM_INIT: u64 = 10;
const STREAM_TRAIN: u64 = 11;
const STREAM_NOISE: u64 = 12;
const STREAM_PROBE: u64 = 13;

pub struct RunOutput {
    pub report: RunReport,
    pub timings: Vec<Phase>,
    pub artifacts: Artifacts,
}

/// Runs the experiment and writes every output under `out`. Outputs are
/// written even when a self-check fails, so the failure can be inspected.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunReport> {
    let output = run(cfg, threads)?;
    emit_outputs(out, &output.report, &output.timings, &output.artifacts)?;
    if let Some(c) = output.report.audit.checks.iter().find(|c| !c.passed) {
        return Err(HarnessError::Audit(format!("{}: {}", c.name, c.detail)));
    }
    Ok(output.report)
}

pub fn run(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let ctx = Ctx::new(cfg, threads)?;
    let (variants, audit, deltas, artifacts) = match cfg.experiment.kind {
        ExperimentKind::Train => ctx.train_verb()?,
        ExperimentKind::Sample => ctx.sample_verb()?,
        ExperimentKind::SweepGamma => ctx.sweep_gamma()?,
        ExperimentKind::AblateGate => ctx.ablate_gate()?,
        ExperimentKind::AblateEmbed => ctx.ablate_embed()?,
        ExperimentKind::CompareStrategies => ctx.compare_strategies()?,
    };
    debug_assert!(variants.iter().all(|v| v.name != EXTERNAL_VARIANT));
    let report = RunReport {
        experiment: cfg.experiment.kind,
        config: cfg.clone(),
        input_sha256: ctx.input_hash(),
        train_corpus_sha256: corpus_hash(&ctx.train),
        eval_corpus_sha256: corpus_hash(&ctx.eval),
        variants,
        paired_deltas: deltas,
        audit,
        timings: "timings.json".into(),
    };
    let timings = ctx.timings.into_inner().unwrap();
    Ok(RunOutput {
        report,
        timings,
        artifacts,
    })
}

fn corpus_hash(c: &Corpus) -> String {
    sha256_hex(&serde_json::to_vec(&c.manifest()).expect("manifest serializes"))
}

/// Initial noise for evaluation image `index`; shared by every variant.
pub fn eval_noise(seed: u64, index: usize, shape: [usize; 2]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_NOISE, index as u64));
    Tensor::randn(&shape, 1.0, &mut rng)
}

/// Starting weights: the configured checkpoint, or a fresh init derived
/// from the experiment seed.
pub fn initial_model(cfg: &ExperimentConfig) -> Result<(Model, Option<Vec<u8>>)> {
    let mut params = ModelParams::init(
        &cfg.backbone,
        derive_seed(cfg.experiment.seed, STREAM_INIT, 0),
    )?;
    let mut bytes = None;
    if let Some(path) = &cfg.experiment.checkpoint {
        let raw = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        params.load_map(&read_checkpoint(path)?)?;
        bytes = Some(raw);
    }
    Ok((Model::new(cfg.backbone.clone(), params)?, bytes))
}

type VerbOutput = (Vec<VariantReport>, Audit, Vec<ImageDelta>, Artifacts);

struct Evaluated {
    report: VariantReport,
    latents: Vec<Tensor>,
    artifacts: Artifacts,
}

struct Trained {
    model: Model,
    summary: TrainingSummary,
    partition: PartitionAudit,
    artifacts: Artifacts,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    train: Corpus,
    eval: Corpus,
    enc: Encoders,
    start: Model,
    checkpoint_bytes: Option<Vec<u8>>,
    threads: usize,
    timings: Mutex<Vec<Phase>>,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ExperimentConfig, threads: usize) -> Result<Self> {
        let t0 = Instant::now();
        let train = Corpus::generate(&cfg.corpus.train_spec())?;
        let eval = Corpus::generate(&cfg.corpus.eval_spec())?;
        let (start, checkpoint_bytes) = initial_model(cfg)?;
        let enc = Encoders::new(cfg.backbone.width, cfg.backbone.grid_hw());
        let ctx = Self {
            cfg,
            train,
            eval,
            enc,
            start,
            checkpoint_bytes,
            threads,
            timings: Mutex::new(Vec::new()),
        };
        ctx.record("setup", t0);
        Ok(ctx)
    }

    fn record(&self, phase: &str, t0: Instant) {
        self.timings.lock().unwrap().push(Phase {
            phase: phase.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
    }

    fn seed(&self) -> u64 {
        self.cfg.experiment.seed
    }

    fn input_hash(&self) -> String {
        let mut h = Sha256::new();
        let text = self.cfg.canonical();
        h.update(format!("config {}\0", text.len()));
        h.update(text.as_bytes());
        if let Some(bytes) = &self.checkpoint_bytes {
            h.update(format!("checkpoint {}\0", bytes.len()));
            h.update(bytes);
        }
        hex(&h.finalize())
    }

    fn start_bytes(&self) -> Vec<u8> {
        encode_checkpoint(&self.start.params)
    }

    fn with_config(&self, f: impl FnOnce(&mut Model)) -> Model {
        let mut m = self.start.clone();
        f(&mut m);
        m
    }

    fn train_arm(&self, name: &str, preset: Preset, embed: EmbedMode) -> Result<Trained> {
        let tc = TrainConfig {
            seed: derive_seed(self.seed(), STREAM_TRAIN, 0),
            preset,
            embed,
            ..self.cfg.train.clone()
        };
        let part = ParameterPartition::preset(&self.start.params, preset);
        let t0 = Instant::now();
        let out = train(&self.start, &self.train.items, &self.enc, &tc, &part)?;
        self.record(&format!("train:{name}"), t0);

        let (before, after) = (
            parameter_hashes(&self.start.params),
            parameter_hashes(&out.model.params),
        );
        let moved: Vec<&str> = part
            .frozen_names()
            .into_iter()
            .filter(|n| before[*n] != after[*n])
            .collect();
        let trainable: Vec<String> = part
            .trainable_names()
            .into_iter()
            .map(String::from)
            .collect();
        let state: Vec<String> = out
            .optimizer
            .state_names()
            .into_iter()
            .map(String::from)
            .collect();
        if !moved.is_empty() {
            return Err(icas_core::Error::PartitionBreach(format!(
                "{name}: frozen parameters changed: {moved:?}"
            ))
            .into());
        }
        if state != trainable {
            return Err(icas_core::Error::PartitionBreach(format!(
                "{name}: optimizer state does not match the trainable set"
            ))
            .into());
        }

        let ckpt = encode_checkpoint(&out.model.params);
        let final_loss = out.curve.last().map_or(f64::NAN, |r| r.loss);
        let summary = TrainingSummary {
            preset,
            steps: tc.steps,
            trainable_params: part.trainable_count(&self.start.params),
            final_loss,
            loss_curve: format!("loss/{name}.csv"),
            checkpoint: format!("checkpoints/{name}.ckpt"),
            checkpoint_sha256: sha256_hex(&ckpt),
        };
        let mut artifacts = Artifacts::default();
        artifacts.add(&summary.loss_curve, loss_curve_csv(&out.curve).into_bytes());
        artifacts.add(&summary.checkpoint, ckpt);
        Ok(Trained {
            model: out.model,
            summary,
            partition: PartitionAudit {
                variant: name.into(),
                preset,
                trainable,
                optimizer_state: state,
                frozen_unchanged: true,
            },
            artifacts,
        })
    }

    /// Samples every evaluation image from its shared noise and scores it.
    fn evaluate(
        &self,
        name: &str,
        model: &Model,
        embed: EmbedMode,
        training: Option<TrainingSummary>,
    ) -> Result<Evaluated> {
        let t0 = Instant::now();
        let cfg = &model.config;
        let shape = [cfg.tokens(), cfg.width];
        let mut noise_hash = Sha256::new();
        let (mut rows, mut latents) = (Vec::new(), Vec::new());
        let mut artifacts = Artifacts::default();
        let mut k = 0;
        for (i, item) in self.eval.items.iter().enumerate() {
            let cond = conditions_for(&item.content, &item.style_ref, &self.enc, embed)?;
            k = k.max(cond.contents.len());
            let noise = eval_noise(self.seed(), i, shape);
            noise_hash.update(noise.to_le_bytes());
            let x0 = model.sample(&noise, &cond)?;
            let img = decode(&x0, cfg.grid_hw())?;
            let m = evaluate(&img, &item.content, &item.style_ref)?;
            let finite = m.structure_alignment.is_finite()
                && m.style_distance.is_finite()
                && m.subject_match.iter().all(|v| v.is_finite());
            if !finite {
                return Err(icas_core::Error::NonFinite {
                    op: format!("metrics of {name} image {i}"),
                }
                .into());
            }
            if i < self.cfg.experiment.dump_images {
                artifacts.add(format!("images/{name}/{i:03}.ppm"), img.to_ppm());
            }
            rows.push(ImageRow {
                image_id: i,
                structure_alignment: m.structure_alignment,
                style_distance: m.style_distance,
                subject_match: m.subject_match,
            });
            latents.push(x0);
        }
        self.record(&format!("eval:{name}"), t0);
        Ok(Evaluated {
            report: VariantReport {
                name: name.into(),
                gamma: cfg.gamma,
                alpha: cfg.alpha,
                gate: cfg.gate,
                embed,
                k,
                training,
                noise_sha256: hex(&noise_hash.finalize()),
                summary: Summary::of(&rows),
                images: rows,
            },
            latents,
            artifacts,
        })
    }

    fn train_and_evaluate(
        &self,
        name: &str,
        preset: Preset,
        embed: EmbedMode,
    ) -> Result<(Evaluated, PartitionAudit, Model)> {
        let t = self.train_arm(name, preset, embed)?;
        let mut e = self.evaluate(name, &t.model, embed, Some(t.summary))?;
        e.artifacts.extend(t.artifacts);
        Ok((e, t.partition, t.model))
    }

    fn train_verb(&self) -> Result<VerbOutput> {
        let (preset, embed) = (self.cfg.train.preset, self.cfg.train.embed);
        let (e, partition, _) = self.train_and_evaluate(preset.name(), preset, embed)?;
        let mut artifacts = e.artifacts;
        artifacts.add("checkpoints/init.ckpt", self.start_bytes());
        let audit = Audit {
            partitions: vec![partition],
            ..Default::default()
        };
        Ok((vec![e.report], audit, Vec::new(), artifacts))
    }

    fn sample_verb(&self) -> Result<VerbOutput> {
        let e = self.evaluate("sample", &self.start, self.cfg.train.embed, None)?;
        Ok((vec![e.report], Audit::default(), Vec::new(), e.artifacts))
    }

    fn sweep_gamma(&self) -> Result<VerbOutput> {
        let embed = self.cfg.train.embed;
        let mut arms: Vec<(String, Model)> =
            vec![("control".into(), self.with_config(|m| m.config.gamma = 0.0))];
        for g in GAMMA_GRID {
            arms.push((
                format!("gamma-{g}"),
                self.with_config(|m| m.config.gamma = g),
            ));
        }
        arms.push((
            "spm-disabled".into(),
            self.with_config(|m| m.config.spm_sites = vec![false; m.config.blocks]),
        ));
        let jobs: Vec<Job<Evaluated>> = arms
            .iter()
            .map(|(name, model)| {
                Box::new(move || self.evaluate(name, model, embed, None)) as Job<Evaluated>
            })
            .collect();
        let mut evaluated = run_jobs(jobs, self.threads)?;
        let disabled = evaluated.pop().expect("disabled arm");

        let control = &evaluated[0];
        let same = control
            .latents
            .iter()
            .zip(&disabled.latents)
            .all(|(a, b)| a.bit_eq(b))
            && rows_bit_eq(&control.report.images, &disabled.report.images);
        let mut audit = Audit::default();
        audit.checks.push(Check::new(
            "gamma-zero-equals-spm-disabled",
            same,
            "control samples and metrics are bit-identical to the pipeline with every structure site off",
        ));
        audit.checks.push(noise_check(&evaluated));

        let align: Vec<f64> = evaluated[1..]
            .iter()
            .map(|e| e.report.summary.structure_alignment)
            .collect();
        let drops: Vec<f64> = align
            .windows(2)
            .map(|w| w[0] - w[1])
            .filter(|d| *d > 0.0)
            .collect();
        audit.findings.push(Check::new(
            "alignment-rises-with-gamma",
            drops.len() <= 1 && drops.iter().all(|d| *d <= 0.01),
            format!("mean structure_alignment over {GAMMA_GRID:?}: {align:?}"),
        ));
        audit.findings.push(Check::new(
            "alignment-top-vs-bottom",
            align[4] >= align[0],
            format!("gamma 0.8: {}, gamma 0.4: {}", align[4], align[0]),
        ));
        Ok(collect(evaluated, audit, Vec::new(), Artifacts::default()))
    }

    fn ablate_gate(&self) -> Result<VerbOutput> {
        let embed = self.cfg.train.embed;
        let fixed = self.with_config(|m| m.config.gate = GateMode::FixedConstant(FIXED_GATE));
        let arms = [("learned", &self.start), ("fixed-1", &fixed)];
        let jobs: Vec<Job<Evaluated>> = arms
            .iter()
            .map(|&(name, model)| {
                Box::new(move || self.evaluate(name, model, embed, None)) as Job<Evaluated>
            })
            .collect();
        let evaluated = run_jobs(jobs, self.threads)?;

        let mut audit = Audit::default();
        audit.checks.push(noise_check(&evaluated));
        audit.checks.push(self.fixed_gate_probe()?);
        let (l, f) = (&evaluated[0].report, &evaluated[1].report);
        audit.findings.push(Check::new(
            "learned-gate-subject-match",
            l.summary.subject_match >= f.summary.subject_match,
            format!(
                "mean subject_match learned {} vs fixed {}",
                l.summary.subject_match, f.summary.subject_match
            ),
        ));
        let deltas = paired_deltas(&l.images, &f.images);
        Ok(collect(evaluated, audit, deltas, Artifacts::default()))
    }

    /// The fixed-constant arm at block 0 must equal the ungated blend plus
    /// exactly `FIXED_GATE`.
    fn fixed_gate_probe(&self) -> Result<Check> {
        let cfg = &self.start.config;
        let item = &self.eval.items[0];
        let cond = conditions_for(
            &item.content,
            &item.style_ref,
            &self.enc,
            self.cfg.train.embed,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed(), STREAM_PROBE, 0));
        let q = Tensor::randn(&[cfg.tokens(), cfg.width], 1.0, &mut rng);
        let sim = &self.start.params.blocks[0].sim;
        let e_c = &cond.contents.items()[0];
        let gated = |c: f64| -> Result<Tensor> {
            let gc = GateConfig::new(cfg.alpha, GateMode::FixedConstant(c))?;
            Ok(inject_style(&q, e_c, &cond.style, sim, &gc)?)
        };
        let want = gated(0.0)?.map(|x| x + FIXED_GATE);
        Ok(Check::new(
            "fixed-gate-is-blend-plus-constant",
            gated(FIXED_GATE)?.bit_eq(&want),
            "block 0 output with g = 1 equals alpha*A + (1-alpha)*Q + 1 bit-for-bit",
        ))
    }

    fn ablate_embed(&self) -> Result<VerbOutput> {
        let preset = self.cfg.train.preset;
        let arms = [
            (EmbedMode::Single.name(), EmbedMode::Single),
            (EmbedMode::Multi.name(), EmbedMode::Multi),
        ];
        let jobs: Vec<Job<(Evaluated, PartitionAudit, Model)>> = arms
            .iter()
            .map(|&(name, embed)| {
                Box::new(move || self.train_and_evaluate(name, preset, embed))
                    as Job<(Evaluated, PartitionAudit, Model)>
            })
            .collect();
        let results = run_jobs(jobs, self.threads)?;

        let mut audit = Audit::default();
        let mut artifacts = Artifacts::default();
        artifacts.add("checkpoints/init.ckpt", self.start_bytes());
        for ((e, _, model), &(name, embed)) in results.iter().zip(&arms) {
            let schedule = build_schedule(e.report.k, model.config.blocks)?;
            let mut consistent = true;
            for item in &self.eval.items {
                let cond = conditions_for(&item.content, &item.style_ref, &self.enc, embed)?;
                consistent &= model.cyclic_schedule(&cond)? == schedule;
            }
            audit.schedules.push(ScheduleAudit {
                variant: name.into(),
                schedule,
                consistent,
            });
        }
        let (single, _, single_model) = &results[0];
        let cycling_free = self.cycling_free_matches(single_model, &single.latents)?;
        audit.checks.push(Check::new(
            "single-embed-is-cycling-free",
            single.report.k == 1 && cycling_free,
            "k = 1 samples are bit-identical to sampling with one embedding fed to every block directly",
        ));
        audit.checks.push(Check::new(
            "schedules-consistent",
            audit.schedules.iter().all(|s| s.consistent),
            "every image resolves to the audited schedule",
        ));

        let mut evaluated = Vec::new();
        for (e, partition, _) in results {
            audit.partitions.push(partition);
            evaluated.push(e);
        }
        audit.checks.push(noise_check(&evaluated));
        let (s, m) = (&evaluated[0].report.summary, &evaluated[1].report.summary);
        audit.findings.push(Check::new(
            "multi-embed-subject-match",
            m.subject_match >= s.subject_match,
            format!(
                "mean subject_match multi {} vs single {}",
                m.subject_match, s.subject_match
            ),
        ));
        audit.findings.push(Check::new(
            "multi-embed-subject-variance",
            m.subject_match_variance < s.subject_match_variance,
            format!(
                "per-subject variance multi {} vs single {}",
                m.subject_match_variance, s.subject_match_variance
            ),
        ));
        let deltas = paired_deltas(&evaluated[1].report.images, &evaluated[0].report.images);
        Ok(collect(evaluated, audit, deltas, artifacts))
    }

    fn cycling_free_matches(&self, model: &Model, latents: &[Tensor]) -> Result<bool> {
        let cfg = &model.config;
        let schedule = model.noise_schedule();
        for (i, item) in self.eval.items.iter().enumerate() {
            let cond =
                conditions_for(&item.content, &item.style_ref, &self.enc, EmbedMode::Single)?;
            let [content] = cond.contents.items() else {
                return Ok(false);
            };
            let net = |x: &Tensor, t| {
                model.forward_single_content(x, t, content, &cond.style, &cond.structure)
            };
            let noise = eval_noise(self.seed(), i, [cfg.tokens(), cfg.width]);
            if !sample(&net, &noise, &schedule)?.bit_eq(&latents[i]) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn compare_strategies(&self) -> Result<VerbOutput> {
        let embed = self.cfg.train.embed;
        let jobs: Vec<Job<(Evaluated, PartitionAudit, Model)>> = Preset::ALL
            .iter()
            .map(|&p| {
                Box::new(move || self.train_and_evaluate(p.name(), p, embed))
                    as Job<(Evaluated, PartitionAudit, Model)>
            })
            .collect();
        let results = run_jobs(jobs, self.threads)?;

        let mut audit = Audit::default();
        let mut artifacts = Artifacts::default();
        let init = self.start_bytes();
        let by_preset: BTreeMap<&str, &(Evaluated, PartitionAudit, Model)> =
            Preset::ALL.iter().map(|p| p.name()).zip(&results).collect();
        let none = by_preset[Preset::NoFinetune.name()];
        audit.checks.push(Check::new(
            "no-finetune-checkpoint-equals-init",
            encode_checkpoint(&none.2.params) == init,
            "no-finetune weights serialize to the initialization bytes",
        ));
        let count = |p: Preset| {
            by_preset[p.name()]
                .0
                .report
                .training
                .as_ref()
                .map_or(0, |t| t.trainable_params)
        };
        let counts = [
            count(Preset::NoFinetune),
            count(Preset::ContentOnly),
            count(Preset::FullFinetune),
        ];
        audit.checks.push(Check::new(
            "trainable-count-ordering",
            counts[0] == 0 && counts[0] < counts[1] && counts[1] < counts[2],
            format!("no-finetune, content-only, full-finetune: {counts:?}"),
        ));
        let loss = |p: Preset| {
            by_preset[p.name()]
                .0
                .report
                .training
                .as_ref()
                .map_or(f64::NAN, |t| t.final_loss)
        };
        let (co, nf) = (loss(Preset::ContentOnly), loss(Preset::NoFinetune));
        audit.findings.push(Check::new(
            "content-only-beats-no-finetune",
            co < nf,
            format!("final loss content-only {co} vs no-finetune {nf}"),
        ));
        artifacts.add("checkpoints/init.ckpt", init);

        let mut evaluated = Vec::new();
        for (e, partition, _) in results {
            audit.partitions.push(partition);
            evaluated.push(e);
        }
        audit.checks.push(noise_check(&evaluated));
        Ok(collect(evaluated, audit, Vec::new(), artifacts))
    }
}

fn collect(
    evaluated: Vec<Evaluated>,
    audit: Audit,
    deltas: Vec<ImageDelta>,
    mut artifacts: Artifacts,
) -> VerbOutput {
    let mut variants = Vec::new();
    for e in evaluated {
        artifacts.extend(e.artifacts);
        variants.push(e.report);
    }
    (variants, audit, deltas, artifacts)
}

fn noise_check(evaluated: &[Evaluated]) -> Check {
    let hashes: Vec<&str> = evaluated
        .iter()
        .map(|e| e.report.noise_sha256.as_str())
        .collect();
    Check::new(
        "shared-noise",
        hashes.windows(2).all(|w| w[0] == w[1]),
        format!(
            "initial noise sha256 {}",
            hashes.first().copied().unwrap_or("")
        ),
    )
}

fn rows_bit_eq(a: &[ImageRow], b: &[ImageRow]) -> bool {
    let bits = |r: &ImageRow| -> Vec<u64> {
        [r.structure_alignment, r.style_distance]
            .iter()
            .chain(&r.subject_match)
            .map(|v| v.to_bits())
            .collect()
    };
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| bits(x) == bits(y))
}

fn paired_deltas(first: &[ImageRow], second: &[ImageRow]) -> Vec<ImageDelta> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    first
        .iter()
        .zip(second)
        .map(|(a, b)| ImageDelta {
            image_id: a.image_id,
            structure_alignment: a.structure_alignment - b.structure_alignment,
            style_distance: a.style_distance - b.style_distance,
            subject_match: mean(&a.subject_match) - mean(&b.subject_match),
        })
        .collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
