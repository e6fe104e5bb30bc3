use super::optim::{adam_step, AdamHyper, AdamState};
use crate::error::{Error, Result};
use crate::kernel::{smoothness_penalty, smoothness_penalty_grad, GramMatrix, KernelDictionary};
use crate::math::Vector;

/// Outcome of fitting a single kernel activation to `(input, target)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationFit {
    pub coeffs: Vector,
    /// Mean squared error per epoch.
    pub mse: Vec<f64>,
    pub penalty: f64,
}

/// Full-batch Adam on `mean (σ(x) − y)² + λ αᵀGα`, starting from `α = 0`.
pub fn fit_activation(
    dict: &KernelDictionary,
    data: &[(f64, f64)],
    lambda_smooth: f64,
    lr: f64,
    epochs: usize,
) -> Result<ActivationFit> {
    if data.is_empty() {
        return Err(Error::arg("empty fitting set"));
    }
    if !(lambda_smooth >= 0.0) {
        return Err(Error::arg("λ_smooth must be non-negative"));
    }
    let k = dict.len();
    let gram = GramMatrix::new(dict);
    let kernels: Vec<Vector> = data
        .iter()
        .map(|(x, _)| {
            let mut row = vec![0.0; k];
            dict.kernel_values_into(*x, &mut row);
            row
        })
        .collect();
    let mut alpha = vec![0.0; k];
    let mut adam = AdamState::new(&alpha);
    let mut mse = Vec::with_capacity(epochs);
    let n = data.len() as f64;
    for _ in 0..epochs {
        let mut grad = vec![0.0; k];
        let mut err = 0.0;
        for (row, (_, y)) in kernels.iter().zip(data) {
            let r: f64 = row.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() - y;
            err += r * r;
            for (g, kv) in grad.iter_mut().zip(row) {
                *g += 2.0 * r * kv / n;
            }
        }
        for (g, p) in grad.iter_mut().zip(smoothness_penalty_grad(&alpha, &gram)?) {
            *g += lambda_smooth * p;
        }
        mse.push(err / n);
        adam_step(&mut alpha, &grad, &mut adam, lr, AdamHyper::default())?;
    }
    let penalty = smoothness_penalty(&alpha, &gram)?;
    Ok(ActivationFit {
        coeffs: alpha,
        mse,
        penalty,
    })
}
