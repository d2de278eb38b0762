//! Gated style cross-attention.
//!
//! The style embedding is projected to `m` key/value tokens by frozen
//! matrices, backbone queries attend over them, and the blend
//! `α·A_R + (1−α)·Q + g` adds a content/style agreement gate `g`
//! broadcast over every query row.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// A `d`-wide content, style, or structure vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    vec: Tensor,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let d = values.len();
        let vec = Tensor::new(&[d], values)?;
        if !vec.is_finite() {
            return Err(Error::NonFinite {
                op: "embedding".into(),
            });
        }
        Ok(Self { vec })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        Self::new(t.data().to_vec())
    }

    pub fn width(&self) -> usize {
        self.vec.len()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.vec
    }

    pub fn values(&self) -> &[f64] {
        self.vec.data()
    }

    /// The embedding as a `1×d` row.
    pub fn row(&self) -> Tensor {
        self.vec.reshape(&[1, self.vec.len()]).expect("same length")
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        let dot: f64 = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| a * b)
            .sum();
        let na = self.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = other.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb).max(f64::MIN_POSITIVE)
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    Learned,
    /// Constant gate `c·1`; `c = 1.0` is the no-gate ablation.
    FixedConstant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    alpha: f64,
    pub mode: GateMode,
}

impl GateConfig {
    pub fn new(alpha: f64, mode: GateMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
        }
        if let GateMode::FixedConstant(c) = mode {
            if !c.is_finite() {
                return Err(Error::Config(format!(
                    "fixed gate constant {c} is not finite"
                )));
            }
        }
        Ok(Self { alpha, mode })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mode: GateMode::Learned,
        }
    }
}

/// Weights of one style injection site.
#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    /// `d × (m·d)` key projection; frozen.
    pub w_k: Tensor,
    /// `d × (m·d)` value projection; frozen.
    pub w_v: Tensor,
    /// `d × d` gate weights.
    pub w_g: Tensor,
    /// `d` gate bias.
    pub b_g: Tensor,
    pub m: usize,
}

/// [`SimParams`] registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SimVars {
    pub w_k: Var,
    pub w_v: Var,
    pub w_g: Var,
    pub b_g: Var,
    pub m: usize,
}

pub const SIM_PARAM_NAMES: [&str; 4] = ["w_k", "w_v", "w_g", "b_g"];

impl SimParams {
    /// Style projections drawn from `N(0, 1/d)`; gate starts at zero so
    /// `g = 0.5` before training.
    pub fn init(d: usize, m: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / (d as f64).sqrt();
        Self {
            w_k: Tensor::randn(&[d, m * d], std, rng),
            w_v: Tensor::randn(&[d, m * d], std, rng),
            w_g: Tensor::zeros(&[d, d]),
            b_g: Tensor::zeros(&[d]),
            m,
        }
    }

    pub fn width(&self) -> usize {
        self.w_g.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.width();
        let check = |t: &Tensor, want: &[usize]| {
            if t.shape() == want {
                Ok(())
            } else {
                Err(Error::Shape {
                    op: "sim params",
                    lhs: t.shape().to_vec(),
                    rhs: want.to_vec(),
                })
            }
        };
        if self.m == 0 {
            return Err(Error::Config("style token count m must be ≥ 1".into()));
        }
        check(&self.w_k, &[d, self.m * d])?;
        check(&self.w_v, &[d, self.m * d])?;
        check(&self.w_g, &[d, d])?;
        check(&self.b_g, &[d])
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_g", &self.w_g),
            ("b_g", &self.b_g),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 4] {
        [
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_g", &mut self.w_g),
            ("b_g", &mut self.b_g),
        ]
    }

    /// Registers the weights as leaves; `trainable` decides per local name.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> SimVars {
        SimVars {
            w_k: tape.leaf(self.w_k.clone(), trainable("w_k")),
            w_v: tape.leaf(self.w_v.clone(), trainable("w_v")),
            w_g: tape.leaf(self.w_g.clone(), trainable("w_g")),
            b_g: tape.leaf(self.b_g.clone(), trainable("b_g")),
            m: self.m,
        }
    }
}

fn as_row(tape: &mut Tape, e: Var) -> Result<Var> {
    let v = tape.value(e);
    match v.shape() {
        [_, _] if v.shape()[0] == 1 => Ok(e),
        [d] => {
            let d = *d;
            tape.reshape(e, &[1, d])
        }
        other => Err(Error::Shape {
            op: "embedding row",
            lhs: other.to_vec(),
            rhs: vec![1, 0],
        }),
    }
}

/// `K_R`, `V_R` as `m×d` token matrices.
pub fn project_style_on(tape: &mut Tape, e_r: Var, p: &SimVars) -> Result<(Var, Var)> {
    let row = as_row(tape, e_r)?;
    let d = tape.value(row).shape()[1];
    let k = tape.matmul(row, p.w_k)?;
    let v = tape.matmul(row, p.w_v)?;
    Ok((tape.reshape(k, &[p.m, d])?, tape.reshape(v, &[p.m, d])?))
}

/// `softmax(Q·Kᵀ/√d)·V`.
pub fn style_attention_on(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let (qs, ks) = (
        tape.value(q).shape().to_vec(),
        tape.value(k).shape().to_vec(),
    );
    if qs.len() != 2 || ks.len() != 2 || qs[1] != ks[1] {
        return Err(Error::Shape {
            op: "style_attention",
            lhs: qs,
            rhs: ks,
        });
    }
    let d = qs[1];
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    tape.matmul(weights, v)
}

/// Gate `g` as a `1×d` row.
pub fn compute_gate_on(
    tape: &mut Tape,
    e_c: Var,
    e_r: Var,
    p: &SimVars,
    cfg: &GateConfig,
) -> Result<Var> {
    let c = as_row(tape, e_c)?;
    let r = as_row(tape, e_r)?;
    let d = tape.value(r).shape()[1];
    match cfg.mode {
        GateMode::Learned => {
            let agreement = tape.mul(c, r)?;
            let z = tape.matmul(agreement, p.w_g)?;
            let z = tape.add_row(z, p.b_g)?;
            tape.sigmoid(z)
        }
        GateMode::FixedConstant(value) => {
            if tape.value(c).shape() != tape.value(r).shape() {
                return Err(Error::Shape {
                    op: "compute_gate",
                    lhs: tape.value(c).shape().to_vec(),
                    rhs: vec![1, d],
                });
            }
            Ok(tape.constant(Tensor::full(&[1, d], value)))
        }
    }
}

/// Output of one style injection, keeping the gate for the regularizer.
#[derive(Clone, Copy, Debug)]
pub struct SimOutput {
    pub features: Var,
    pub gate: Var,
    pub attention: Var,
}

/// `F_sim = α·A_R + (1−α)·Q + g`.
pub fn inject_style_on(
    tape: &mut Tape,
    q: Var,
    e_c: Var,
    e_r: Var,
    p: &SimVars,
    cfg: &GateConfig,
) -> Result<SimOutput> {
    let (k, v) = project_style_on(tape, e_r, p)?;
    let attention = style_attention_on(tape, q, k, v)?;
    let gate = compute_gate_on(tape, e_c, e_r, p, cfg)?;
    let styled = tape.scale(attention, cfg.alpha)?;
    let kept = tape.scale(q, 1.0 - cfg.alpha)?;
    let blended = tape.add(styled, kept)?;
    let features = tape.add_row(blended, gate)?;
    Ok(SimOutput {
        features,
        gate,
        attention,
    })
}

fn frozen(tape: &mut Tape, p: &SimParams) -> Result<SimVars> {
    p.validate()?;
    Ok(p.bind(tape, |_| false))
}

pub fn project_style(e_r: &Embedding, params: &SimParams) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let vars = frozen(&mut tape, params)?;
    let e = tape.constant(e_r.tensor().clone());
    let (k, v) = project_style_on(&mut tape, e, &vars)?;
    Ok((tape.value(k).clone(), tape.value(v).clone()))
}

pub fn style_attention(q: &Tensor, k_r: &Tensor, v_r: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (q, k, v) = (
        tape.constant(q.clone()),
        tape.constant(k_r.clone()),
        tape.constant(v_r.clone()),
    );
    let out = style_attention_on(&mut tape, q, k, v)?;
    Ok(tape.value(out).clone())
}

/// Gate as a `d`-vector.
pub fn compute_gate(
    e_c: &Embedding,
    e_r: &Embedding,
    params: &SimParams,
    cfg: &GateConfig,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = frozen(&mut tape, params)?;
    let (c, r) = (
        tape.constant(e_c.tensor().clone()),
        tape.constant(e_r.tensor().clone()),
    );
    let g = compute_gate_on(&mut tape, c, r, &vars, cfg)?;
    tape.value(g).reshape(&[e_r.width()])
}

pub fn inject_style(
    q: &Tensor,
    e_c: &Embedding,
    e_r: &Embedding,
    params: &SimParams,
    cfg: &GateConfig,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = frozen(&mut tape, params)?;
    let qv = tape.constant(q.clone());
    let (c, r) = (
        tape.constant(e_c.tensor().clone()),
        tape.constant(e_r.tensor().clone()),
    );
    let out = inject_style_on(&mut tape, qv, c, r, &vars, cfg)?;
    Ok(tape.value(out.features).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_params(d: usize, m: usize, seed: u64) -> SimParams {
        let mut r = rng(seed);
        SimParams {
            w_k: Tensor::randn(&[d, m * d], 0.5, &mut r),
            w_v: Tensor::randn(&[d, m * d], 0.5, &mut r),
            w_g: Tensor::randn(&[d, d], 0.5, &mut r),
            b_g: Tensor::randn(&[d], 0.5, &mut r),
            m,
        }
    }

    fn random_embedding(d: usize, r: &mut ChaCha8Rng) -> Embedding {
        Embedding::from_tensor(&Tensor::randn(&[d], 1.0, r)).unwrap()
    }

    #[test]
    fn zero_projection_gives_zero_tokens() {
        let mut p = random_params(4, 3, 1);
        p.w_k = Tensor::zeros(&[4, 12]);
        p.w_v = Tensor::zeros(&[4, 12]);
        let e = random_embedding(4, &mut rng(2));
        let (k, v) = project_style(&e, &p).unwrap();
        assert_eq!(k, Tensor::zeros(&[3, 4]));
        assert_eq!(v, Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn identity_projection_with_one_token() {
        let mut p = random_params(5, 1, 3);
        p.w_k = Tensor::eye(5);
        let e = random_embedding(5, &mut rng(4));
        let (k, _) = project_style(&e, &p).unwrap();
        assert_eq!(k.data(), e.values());
    }

    #[test]
    fn single_key_copies_values() {
        let mut r = rng(5);
        let q = Tensor::randn(&[6, 4], 2.0, &mut r);
        let k = Tensor::randn(&[1, 4], 1.0, &mut r);
        let v = Tensor::randn(&[1, 4], 1.0, &mut r);
        let a = style_attention(&q, &k, &v).unwrap();
        for i in 0..6 {
            assert_eq!(a.row(i), v.row(0));
        }
    }

    #[test]
    fn zero_query_averages_values() {
        let mut r = rng(6);
        let q = Tensor::zeros(&[3, 4]);
        let k = Tensor::randn(&[5, 4], 1.0, &mut r);
        let v = Tensor::randn(&[5, 4], 1.0, &mut r);
        let a = style_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            for c in 0..4 {
                let mean = (0..5).map(|j| v.at(j, c)).sum::<f64>() / 5.0;
                assert!((a.at(i, c) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gate_trivial_cases() {
        let mut r = rng(7);
        let (c, e) = (random_embedding(4, &mut r), random_embedding(4, &mut r));
        let mut p = random_params(4, 2, 8);
        p.w_g = Tensor::zeros(&[4, 4]);
        p.b_g = Tensor::zeros(&[4]);
        let g = compute_gate(&c, &e, &p, &GateConfig::default()).unwrap();
        assert_eq!(g, Tensor::full(&[4], 0.5));

        let fixed = GateConfig::new(0.5, GateMode::FixedConstant(1.0)).unwrap();
        assert_eq!(
            compute_gate(&c, &e, &p, &fixed).unwrap(),
            Tensor::ones(&[4])
        );

        p.b_g = Tensor::full(&[4], -20.0);
        let g = compute_gate(&c, &e, &p, &GateConfig::default()).unwrap();
        assert!(g.data().iter().all(|&x| x < 1e-8 && x > 0.0));
    }

    #[test]
    fn alpha_outside_unit_interval_rejected() {
        assert!(GateConfig::new(-0.1, GateMode::Learned).is_err());
        assert!(GateConfig::new(1.5, GateMode::Learned).is_err());
        assert!(GateConfig::new(1.0, GateMode::Learned).is_ok());
    }

    #[test]
    fn width_mismatch_is_error() {
        let p = random_params(4, 2, 9);
        let e = random_embedding(5, &mut rng(10));
        assert!(project_style(&e, &p).is_err());
        let q = Tensor::zeros(&[3, 5]);
        let e4 = random_embedding(4, &mut rng(11));
        assert!(inject_style(&q, &e4, &e4, &p, &GateConfig::default()).is_err());
    }

    #[test]
    fn interpolation_endpoints() {
        let mut r = rng(12);
        let q = Tensor::randn(&[5, 4], 1.0, &mut r);
        let (c, e) = (random_embedding(4, &mut r), random_embedding(4, &mut r));
        let mut p = random_params(4, 3, 13);

        let zero_gate = GateConfig::new(0.0, GateMode::FixedConstant(0.0)).unwrap();
        assert!(inject_style(&q, &c, &e, &p, &zero_gate).unwrap().bit_eq(&q));

        let full = GateConfig::new(1.0, GateMode::FixedConstant(0.0)).unwrap();
        let (k, v) = project_style(&e, &p).unwrap();
        let a = style_attention(&q, &k, &v).unwrap();
        assert!(inject_style(&q, &c, &e, &p, &full).unwrap().bit_eq(&a));

        p.w_g = Tensor::zeros(&[4, 4]);
        p.b_g = Tensor::zeros(&[4]);
        let learned = GateConfig::new(0.0, GateMode::Learned).unwrap();
        let out = inject_style(&q, &c, &e, &p, &learned).unwrap();
        assert_eq!(out, q.map(|x| x + 0.5));
    }

    #[test]
    fn gradients_reach_gate_but_not_frozen_projections() {
        let mut r = rng(14);
        let p = random_params(4, 2, 15);
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, |name| matches!(name, "w_g" | "b_g"));
        let q = tape.constant(Tensor::randn(&[3, 4], 1.0, &mut r));
        let c = tape.constant(Tensor::randn(&[4], 1.0, &mut r));
        let e = tape.constant(Tensor::randn(&[4], 1.0, &mut r));
        let out = inject_style_on(&mut tape, q, c, e, &vars, &GateConfig::default()).unwrap();
        let s = tape.sum(out.features).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(vars.w_k).is_none());
        assert!(g.get(vars.w_v).is_none());
        assert!(g.get(vars.w_g).unwrap().data().iter().all(|&x| x != 0.0));
        assert!(g.get(vars.b_g).unwrap().data().iter().all(|&x| x != 0.0));
    }
}
