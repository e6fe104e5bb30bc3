use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::arg(format!("unknown optimizer `{s}` (expected sgd or adam)"))),
        }
    }
}

fn check_layout(params: &dyn Parameters, grads: &dyn Parameters) -> Result<()> {
    let (p, g) = (params.layout(), grads.layout());
    if p != g {
        return Err(Error::shape(
            "optimizer",
            format!("params {p:?}"),
            format!("grads {g:?}"),
        ));
    }
    Ok(())
}

/// `θ ← θ − lr·g`
pub fn sgd_step(params: &mut dyn Parameters, grads: &dyn Parameters, lr: f64) -> Result<()> {
    check_layout(params, grads)?;
    for (p, g) in params.params_mut().into_iter().zip(grads.params()) {
        for (x, d) in p.data.iter_mut().zip(g.data) {
            *x -= lr * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &dyn Parameters) -> Self {
        let zeros: Vec<Vec<f64>> = params.layout().into_iter().map(|n| vec![0.0; n]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Reorders the moments of a row-major tensor's columns (`new[:, j] =
    /// old[:, perm[j]]`); a single-row tensor is a plain vector.
    pub(crate) fn permute_columns(&mut self, tensor: usize, perm: &[usize]) {
        for buf in [&mut self.m[tensor], &mut self.v[tensor]] {
            let k = perm.len();
            let old = buf.clone();
            for (row_new, row_old) in buf.chunks_mut(k).zip(old.chunks(k)) {
                for (j, &p) in perm.iter().enumerate() {
                    row_new[j] = row_old[p];
                }
            }
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(
    params: &mut dyn Parameters,
    grads: &dyn Parameters,
    state: &mut AdamState,
    lr: f64,
    hyper: AdamHyper,
) -> Result<()> {
    check_layout(params, grads)?;
    let shape: Vec<usize> = state.m.iter().map(Vec::len).collect();
    if shape != params.layout() || state.v.iter().map(Vec::len).ne(shape.iter().copied()) {
        return Err(Error::shape(
            "adam_step",
            format!("params {:?}", params.layout()),
            format!("state {shape:?}"),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in params
        .params_mut()
        .into_iter()
        .zip(grads.params())
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut dyn Parameters, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
