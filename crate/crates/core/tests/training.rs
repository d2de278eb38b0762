mod common;

use std::collections::BTreeMap;

use common::oracle::{self, Gate};
use common::{perturbed_model, random_conditions, rng};
use icas_core::pipeline::{BackboneConfig, Model};
use icas_core::synthdata::{Corpus, CorpusSpec, Encoders};
use icas_core::training::checkpoint::{
    decode_checkpoint, encode_checkpoint, parameter_hashes, read_checkpoint, write_checkpoint,
};
use icas_core::training::{
    batch_loss, train, AdamConfig, AdamW, Draw, Example, ParameterPartition, Preset, TrainConfig,
};
use icas_core::Tensor;

fn corpus() -> (Corpus, Encoders, BackboneConfig) {
    let backbone = BackboneConfig::default();
    let corpus = Corpus::generate(&CorpusSpec {
        seed: 11,
        size: 8,
        subjects: 2,
    })
    .unwrap();
    let enc = Encoders::new(backbone.width, backbone.grid_hw());
    (corpus, enc, backbone)
}

fn is_adapter(name: &str) -> bool {
    name.contains(".sim.") || name.contains(".content.") || name.starts_with("spm.")
}

#[test]
fn content_only_training_keeps_frozen_bytes() {
    let (corpus, enc, backbone) = corpus();
    let model = Model::init(backbone, 3).unwrap();
    let part = ParameterPartition::preset(&model.params, Preset::ContentOnly);
    let before = parameter_hashes(&model.params);
    let cfg = TrainConfig {
        steps: 200,
        ..Default::default()
    };
    let out = train(&model, &corpus.items, &enc, &cfg, &part).unwrap();
    let after = parameter_hashes(&out.model.params);
    for name in part.frozen_names() {
        assert_eq!(before[name], after[name], "{name} moved");
    }
    let moved = part
        .trainable_names()
        .into_iter()
        .filter(|n| before[*n] != after[*n])
        .count();
    assert!(moved > 0);
    assert_eq!(out.optimizer.state_names(), part.trainable_names());
    assert_eq!(out.optimizer.steps_taken(), 200);

    let window = |c: &[icas_core::training::LossRecord]| {
        c.iter().map(|r| r.loss).sum::<f64>() / c.len() as f64
    };
    assert!(window(&out.curve[180..]) < window(&out.curve[..20]));
}

#[test]
fn preset_definitions() {
    let model = Model::init(BackboneConfig::default(), 0).unwrap();
    let full = ParameterPartition::preset(&model.params, Preset::FullFinetune);
    let content = ParameterPartition::preset(&model.params, Preset::ContentOnly);
    let none = ParameterPartition::preset(&model.params, Preset::NoFinetune);
    for name in model.params.names() {
        assert_eq!(full.is_trainable(&name), is_adapter(&name), "{name}");
        assert!(!none.is_trainable(&name));
        if content.is_trainable(&name) {
            assert!(full.is_trainable(&name));
        }
        let style_projection = name.ends_with(".sim.w_k") || name.ends_with(".sim.w_v");
        assert_eq!(
            content.is_trainable(&name),
            is_adapter(&name) && !style_projection,
            "{name}"
        );
    }
    let counts: Vec<usize> = [&none, &content, &full]
        .iter()
        .map(|p| p.trainable_count(&model.params))
        .collect();
    assert!(counts[0] == 0 && counts[0] < counts[1] && counts[1] < counts[2]);
}

#[test]
fn no_finetune_run_keeps_checkpoint_and_sees_same_batches() {
    let (corpus, enc, backbone) = corpus();
    let model = Model::init(backbone, 4).unwrap();
    let cfg = TrainConfig {
        steps: 20,
        preset: Preset::NoFinetune,
        ..Default::default()
    };
    let none = ParameterPartition::preset(&model.params, Preset::NoFinetune);
    let a = train(&model, &corpus.items, &enc, &cfg, &none).unwrap();
    assert_eq!(
        encode_checkpoint(&a.model.params),
        encode_checkpoint(&model.params)
    );
    assert!(a.optimizer.state().is_empty());
    // A second, longer run sees the same opening batches.
    let longer = TrainConfig { steps: 30, ..cfg };
    let b = train(&model, &corpus.items, &enc, &longer, &none).unwrap();
    assert_eq!(a.curve[..], b.curve[..20]);
}

#[test]
fn checkpoints_round_trip_and_runs_repeat() {
    let (corpus, enc, backbone) = corpus();
    let model = Model::init(backbone, 5).unwrap();
    let part = ParameterPartition::preset(&model.params, Preset::ContentOnly);
    let cfg = TrainConfig {
        steps: 15,
        augment: true,
        ..Default::default()
    };
    let a = train(&model, &corpus.items, &enc, &cfg, &part).unwrap();
    let b = train(&model, &corpus.items, &enc, &cfg, &part).unwrap();
    let bytes = encode_checkpoint(&a.model.params);
    assert_eq!(bytes, encode_checkpoint(&b.model.params));

    let dir = std::env::temp_dir().join(format!("icas-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.ckpt");
    write_checkpoint(&path, &a.model.params).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    let map = read_checkpoint(&path).unwrap();
    assert_eq!(map, a.model.params.to_map());
    assert_eq!(decode_checkpoint(&bytes).unwrap(), map);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn fixed_batch(model: &Model, seed: u64) -> (Vec<Example>, Vec<Draw>) {
    let cfg = &model.config;
    let mut r = rng(seed);
    let shape = [cfg.tokens(), cfg.width];
    let examples = (0..3)
        .map(|_| Example {
            x0: Tensor::randn(&shape, 0.5, &mut r),
            cond: random_conditions(cfg, 2, &mut r),
        })
        .collect();
    let draws = (0..3)
        .map(|i| Draw {
            item: i,
            t: 1 + i % cfg.steps,
            noise: Tensor::randn(&shape, 1.0, &mut r),
            augment: None,
            drop_structure: false,
        })
        .collect();
    (examples, draws)
}

#[test]
fn small_steps_descend_on_a_fixed_batch() {
    let model = perturbed_model(&common::small_config(), 21, 0.2);
    let (examples, draws) = fixed_batch(&model, 22);
    let batch: Vec<_> = examples.iter().zip(&draws).collect();
    let part = ParameterPartition::preset(&model.params, Preset::ContentOnly);
    let adam = AdamConfig {
        learning_rate: 1e-4,
        ..Default::default()
    };
    let mut opt = AdamW::new(adam, &model.params, &part).unwrap();
    let mut params = model.params.clone();
    let initial = batch_loss(&model, &part, &batch, 1e-3).unwrap().0.total;
    let mut last = initial;
    for _ in 0..50 {
        let current = Model::new(model.config.clone(), params.clone()).unwrap();
        let (loss, grads) = batch_loss(&current, &part, &batch, 1e-3).unwrap();
        last = loss.total;
        opt.step(&mut params, &grads).unwrap();
    }
    assert!(last <= initial, "{last} > {initial}");
}

#[test]
fn gate_regularizer_only_touches_gate_gradients() {
    let model = perturbed_model(&common::small_config(), 23, 0.3);
    let (examples, draws) = fixed_batch(&model, 24);
    let batch: Vec<_> = examples.iter().zip(&draws).collect();
    let part = ParameterPartition::preset(&model.params, Preset::FullFinetune);
    let grads = |lambda: f64| -> (f64, BTreeMap<String, Tensor>) {
        let (loss, g) = batch_loss(&model, &part, &batch, lambda).unwrap();
        (loss.total, g)
    };
    let (l0, g0) = grads(0.0);
    let (l1, g1) = grads(1.0);
    let (lh, gh) = grads(0.25);
    let reg = l1 - l0;
    assert!(((lh - l0) - 0.25 * reg).abs() < 1e-12);
    for (name, t0) in &g0 {
        let (t1, th) = (&g1[name], &gh[name]);
        if name.ends_with(".sim.w_g") || name.ends_with(".sim.b_g") {
            for ((a, b), c) in t0.data().iter().zip(t1.data()).zip(th.data()) {
                assert!(((c - a) - 0.25 * (b - a)).abs() < 1e-12, "{name}");
            }
        } else {
            assert!(t0.bit_eq(t1) && t0.bit_eq(th), "{name} depends on lambda");
        }
    }
}

#[test]
fn one_token_loss_matches_straight_line() {
    let cfg = BackboneConfig {
        grid: [1, 1],
        width: 4,
        blocks: 2,
        style_tokens: 2,
        steps: 3,
        ..Default::default()
    };
    let model = perturbed_model(&cfg, 25, 0.4);
    let (examples, draws) = fixed_batch(&model, 26);
    let batch: Vec<_> = examples.iter().zip(&draws).take(1).collect();
    let lambda = 0.3;
    let none = ParameterPartition::preset(&model.params, Preset::NoFinetune);
    let (parts, _) = batch_loss(&model, &none, &batch, lambda).unwrap();

    let (ex, d) = batch[0];
    let a = oracle::alpha_bar(d.t, cfg.steps);
    let x_t: oracle::Mat = vec![ex
        .x0
        .data()
        .iter()
        .zip(d.noise.data())
        .map(|(x, n)| a.sqrt() * x + (1.0 - a).sqrt() * n)
        .collect()];
    let sites: Vec<Vec<f64>> = (0..cfg.blocks)
        .map(|i| ex.cond.contents.items()[i % 2].values().to_vec())
        .collect();
    let eps = oracle::forward(
        &model,
        cfg.gamma,
        &x_t,
        d.t,
        &sites,
        ex.cond.style.values(),
        &oracle::mat(&ex.cond.structure.cells()),
    );
    let mse = oracle::mse(&eps, &oracle::mat(&d.noise));
    let reg: f64 = sites
        .iter()
        .enumerate()
        .map(|(i, e_c)| {
            let p = &model.params.blocks[i].sim;
            let g = oracle::gate(
                e_c,
                ex.cond.style.values(),
                &Gate::Learned {
                    w_g: oracle::mat(&p.w_g),
                    b_g: oracle::vec1(&p.b_g),
                },
            );
            g.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / g.len() as f64
        })
        .sum::<f64>()
        / cfg.blocks as f64;
    assert!((parts.mse - mse).abs() <= 1e-12, "{} vs {mse}", parts.mse);
    assert!((parts.gate_reg - reg).abs() <= 1e-12);
    assert!((parts.total - (mse + lambda * reg)).abs() <= 1e-12);
}
