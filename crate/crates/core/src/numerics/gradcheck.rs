//! Central finite-difference check of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so entries whose true
/// gradient is zero are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradParam {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

impl GradParam {
    pub fn new(name: impl Into<String>, value: Tensor, trainable: bool) -> Self {
        Self {
            name: name.into(),
            value,
            trainable,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamCheck {
    Checked {
        max_rel_err: f64,
        passed: bool,
    },
    /// Frozen parameter, excluded from the check.
    NoGradient,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub entries: Vec<(String, ParamCheck)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, c)| !matches!(c, ParamCheck::Checked { passed: false, .. }))
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|(_, c)| match c {
                ParamCheck::Checked { max_rel_err, .. } => Some(*max_rel_err),
                ParamCheck::NoGradient => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, c)| matches!(c, ParamCheck::Checked { passed: false, .. }))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn evaluate<F>(f: &F, values: &[&Tensor], trainable: &[bool]) -> Result<(Tape, Var, Vec<Var>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = values
        .iter()
        .zip(trainable)
        .map(|(v, &t)| tape.leaf((*v).clone(), t))
        .collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::Shape {
            op: "grad_check",
            lhs: value.shape().to_vec(),
            rhs: vec![1],
        });
    }
    if !value.is_finite() {
        return Err(Error::NonFinite {
            op: "grad_check objective".into(),
        });
    }
    Ok((tape, out, vars))
}

/// Compares tape gradients of a scalar objective against central
/// differences `(f(θ+h) − f(θ−h)) / 2h`, one entry at a time.
pub fn grad_check<F>(f: F, params: &[GradParam], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let trainable: Vec<bool> = params.iter().map(|p| p.trainable).collect();
    let base: Vec<&Tensor> = params.iter().map(|p| &p.value).collect();
    let (tape, out, vars) = evaluate(&f, &base, &trainable)?;
    let grads = tape.backward(out)?;
    drop(tape);

    let frozen = vec![false; params.len()];
    let probe = |idx: usize, flat: usize, delta: f64| -> Result<f64> {
        let mut shifted = params[idx].value.clone();
        shifted.data_mut()[flat] += delta;
        let values: Vec<&Tensor> = params
            .iter()
            .enumerate()
            .map(|(i, p)| if i == idx { &shifted } else { &p.value })
            .collect();
        let (tape, out, _) = evaluate(&f, &values, &frozen)?;
        Ok(tape.value(out).data()[0])
    };

    let mut entries = Vec::with_capacity(params.len());
    for (idx, param) in params.iter().enumerate() {
        let Some(analytic) = grads.get(vars[idx]) else {
            entries.push((param.name.clone(), ParamCheck::NoGradient));
            continue;
        };
        let mut worst = 0.0f64;
        for flat in 0..param.value.len() {
            let numeric = (probe(idx, flat, h)? - probe(idx, flat, -h)?) / (2.0 * h);
            worst = worst.max(relative_error(analytic.data()[flat], numeric));
        }
        entries.push((
            param.name.clone(),
            ParamCheck::Checked {
                max_rel_err: worst,
                passed: worst < tol,
            },
        ));
    }
    Ok(GradCheckReport { tol, entries })
}
