use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub gate_reg: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub mse: Var,
    pub gate_reg: Var,
}

impl LossVars {
    pub fn values(&self, tape: &Tape) -> LossParts {
        LossParts {
            total: tape.value(self.total).data()[0],
            mse: tape.value(self.mse).data()[0],
            gate_reg: tape.value(self.gate_reg).data()[0],
        }
    }
}

/// `mean_b MSE(ε̂_b, ε_b) + λ·mean_sites mean((g − 0.5)²)`.
pub fn denoising_loss_on(
    tape: &mut Tape,
    pairs: &[(Var, Var)],
    gates: &[Var],
    lambda_gate: f64,
) -> Result<LossVars> {
    if pairs.is_empty() {
        return Err(Error::Config("loss needs at least one sample".into()));
    }
    if !(lambda_gate >= 0.0 && lambda_gate.is_finite()) {
        return Err(Error::Config(format!(
            "lambda_gate must be ≥ 0, got {lambda_gate}"
        )));
    }
    let mut mse = None;
    for &(pred, target) in pairs {
        let diff = tape.sub(pred, target)?;
        let term = tape.mean_square(diff)?;
        mse = Some(match mse {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let mse = tape.scale(mse.expect("non-empty"), 1.0 / pairs.len() as f64)?;

    let mut reg = None;
    for &g in gates {
        let centred = tape.add_scalar(g, -0.5)?;
        let term = tape.mean_square(centred)?;
        reg = Some(match reg {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let gate_reg = match reg {
        Some(r) => tape.scale(r, 1.0 / gates.len() as f64)?,
        None => tape.constant(crate::numerics::Tensor::scalar(0.0)),
    };
    let weighted = tape.scale(gate_reg, lambda_gate)?;
    let total = tape.add(mse, weighted)?;
    Ok(LossVars {
        total,
        mse,
        gate_reg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn exact_prediction_without_regularizer_is_zero() {
        let mut tape = Tape::new();
        let e = Tensor::from_rows(&[&[0.3, -1.2], &[2.0, 0.1]]).unwrap();
        let (p, t) = (tape.constant(e.clone()), tape.constant(e));
        let g = tape.constant(Tensor::from_rows(&[&[0.9, 0.1]]).unwrap());
        let l = denoising_loss_on(&mut tape, &[(p, t)], &[g], 0.0)
            .unwrap()
            .values(&tape);
        assert_eq!(l.total, 0.0);
        assert_eq!(l.mse, 0.0);
        assert!((l.gate_reg - 0.16).abs() < 1e-15);
    }

    #[test]
    fn half_gates_cost_nothing() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
        let t = tape.constant(Tensor::from_rows(&[&[0.0, 0.0]]).unwrap());
        let g = tape.constant(Tensor::full(&[1, 2], 0.5));
        let l = denoising_loss_on(&mut tape, &[(p, t)], &[g, g], 0.7)
            .unwrap()
            .values(&tape);
        assert_eq!(l.gate_reg, 0.0);
        assert_eq!(l.total, 2.5);
    }

    #[test]
    fn batch_mean_and_weighting() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[1, 2]));
        let a = tape.constant(Tensor::from_rows(&[&[1.0, 1.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[&[3.0, 3.0]]).unwrap());
        let g = tape.constant(Tensor::full(&[1, 2], 1.0));
        let l = denoising_loss_on(&mut tape, &[(a, z), (b, z)], &[g], 0.1)
            .unwrap()
            .values(&tape);
        assert_eq!(l.mse, 5.0);
        assert_eq!(l.gate_reg, 0.25);
        assert!((l.total - 5.025).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_batch_and_negative_lambda() {
        let mut tape = Tape::new();
        assert!(denoising_loss_on(&mut tape, &[], &[], 0.0).is_err());
        let z = tape.constant(Tensor::zeros(&[1, 1]));
        assert!(denoising_loss_on(&mut tape, &[(z, z)], &[], -1.0).is_err());
    }
}
