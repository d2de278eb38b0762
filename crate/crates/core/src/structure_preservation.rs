//! Residual structure injection.
//!
//! A frozen structural feature map is pushed through a small per-cell
//! network `φ` and the result, scaled by `γ`, is added to backbone
//! features at the selected blocks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Structural feature map `H×W×d_s` with entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureCondition {
    feat: Tensor,
}

impl StructureCondition {
    pub fn new(feat: Tensor) -> Result<Self> {
        if feat.rank() != 3 {
            return Err(Error::Shape {
                op: "structure condition",
                lhs: feat.shape().to_vec(),
                rhs: vec![0, 0, 0],
            });
        }
        if feat.data().iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Config(
                "structure condition entries must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { feat })
    }

    pub fn feat(&self) -> &Tensor {
        &self.feat
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.feat.shape()[0], self.feat.shape()[1])
    }

    pub fn channels(&self) -> usize {
        self.feat.shape()[2]
    }

    /// Cells flattened row-major into a `(H·W) × d_s` matrix.
    pub fn cells(&self) -> Tensor {
        let (h, w) = self.grid();
        self.feat
            .reshape(&[h * w, self.channels()])
            .expect("same element count")
    }
}

/// The projection network `φ`: one sigmoid hidden layer per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SpmParams {
    pub phi_w1: Tensor,
    pub phi_b1: Tensor,
    pub phi_w2: Tensor,
    pub phi_b2: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct SpmVars {
    pub phi_w1: Var,
    pub phi_b1: Var,
    pub phi_w2: Var,
    pub phi_b2: Var,
}

impl SpmParams {
    /// Hidden width `2·d`; the output layer starts at zero so the
    /// residual is exactly zero before any update.
    pub fn init(d_s: usize, d: usize, rng: &mut impl Rng) -> Self {
        let d_h = 2 * d;
        Self {
            phi_w1: Tensor::randn(&[d_s, d_h], 1.0 / (d_s as f64).sqrt(), rng),
            phi_b1: Tensor::zeros(&[d_h]),
            phi_w2: Tensor::zeros(&[d_h, d]),
            phi_b2: Tensor::zeros(&[d]),
        }
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("phi_w1", &self.phi_w1),
            ("phi_b1", &self.phi_b1),
            ("phi_w2", &self.phi_w2),
            ("phi_b2", &self.phi_b2),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 4] {
        [
            ("phi_w1", &mut self.phi_w1),
            ("phi_b1", &mut self.phi_b1),
            ("phi_w2", &mut self.phi_w2),
            ("phi_b2", &mut self.phi_b2),
        ]
    }

    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(&str) -> bool) -> SpmVars {
        SpmVars {
            phi_w1: tape.leaf(self.phi_w1.clone(), trainable("phi_w1")),
            phi_b1: tape.leaf(self.phi_b1.clone(), trainable("phi_b1")),
            phi_w2: tape.leaf(self.phi_w2.clone(), trainable("phi_w2")),
            phi_b2: tape.leaf(self.phi_b2.clone(), trainable("phi_b2")),
        }
    }
}

/// Structure scale `γ ≥ 0`; zero disables injection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureScale {
    gamma: f64,
}

impl StructureScale {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma {gamma} must be finite and ≥ 0"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for StructureScale {
    fn default() -> Self {
        Self { gamma: 0.7 }
    }
}

/// `R_S = σ(F_S·W1 + b1)·W2 + b2`, cell by cell.
pub fn project_residual_on(tape: &mut Tape, cells: Var, p: &SpmVars) -> Result<Var> {
    let hidden = tape.matmul(cells, p.phi_w1)?;
    let hidden = tape.add_row(hidden, p.phi_b1)?;
    let hidden = tape.sigmoid(hidden)?;
    let out = tape.matmul(hidden, p.phi_w2)?;
    tape.add_row(out, p.phi_b2)
}

/// `F_unet + γ·R_S`; returns `F_unet` itself when `γ = 0`.
pub fn inject_structure_on(
    tape: &mut Tape,
    features: Var,
    residual: Var,
    scale: StructureScale,
) -> Result<Var> {
    let (f, r) = (tape.value(features), tape.value(residual));
    if f.shape() != r.shape() {
        return Err(Error::Shape {
            op: "inject_structure",
            lhs: f.shape().to_vec(),
            rhs: r.shape().to_vec(),
        });
    }
    if scale.gamma == 0.0 {
        return Ok(features);
    }
    let scaled = tape.scale(residual, scale.gamma)?;
    tape.add(features, scaled)
}

pub fn project_residual(cond: &StructureCondition, params: &SpmParams) -> Result<Tensor> {
    if cond.channels() != params.phi_w1.shape()[0] {
        return Err(Error::Shape {
            op: "project_residual",
            lhs: cond.feat().shape().to_vec(),
            rhs: params.phi_w1.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, |_| false);
    let cells = tape.constant(cond.cells());
    let out = project_residual_on(&mut tape, cells, &vars)?;
    Ok(tape.value(out).clone())
}

pub fn inject_structure(
    features: &Tensor,
    residual: &Tensor,
    scale: StructureScale,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (f, r) = (
        tape.constant(features.clone()),
        tape.constant(residual.clone()),
    );
    let out = inject_structure_on(&mut tape, f, r, scale)?;
    Ok(tape.value(out).clone())
}
