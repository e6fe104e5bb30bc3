use serde::{Deserialize, Serialize};

use super::loss::softmax_cross_entropy;
use crate::cells::{Cell, CellGrads};
use crate::error::{Error, Result};
use crate::math::norm2;
use crate::model::{GradientSet, Model, Unroll};
use crate::params::{ParamKind, Parameters};

/// Penalty weights added to the classification loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Regularization {
    /// Weight of `Σ_units αᵀ G α`.
    pub lambda_smooth: f64,
    /// Weight of `Σ ‖W‖²` over connection weight matrices.
    pub lambda_w: f64,
}

#[derive(Debug, Clone)]
pub struct BpttOutput {
    /// Total loss including penalties.
    pub loss: f64,
    /// Cross-entropy part alone.
    pub data_loss: f64,
    pub grads: GradientSet,
    /// `‖∂L/∂h_t‖₂` for `t = 1..=T` (index `t - 1`).
    pub hidden_grad_norms: Vec<f64>,
    pub unroll: Unroll,
}

impl BpttOutput {
    pub fn correct(&self, label: usize) -> bool {
        crate::model::argmax(&self.unroll.logits) == label
    }
}

/// Loss and full gradient for one labelled sequence, read from the final
/// hidden state, including the smoothness and weight penalties.
pub fn bptt<X: AsRef<[f64]>>(model: &Model, xs: &[X], label: usize, reg: Regularization) -> Result<BpttOutput> {
    let mut out = bptt_data(model, xs, label)?;
    out.loss = out.data_loss + add_penalties(model, reg, &mut out.grads);
    Ok(out)
}

/// Cross-entropy term only.
pub(crate) fn bptt_data<X: AsRef<[f64]>>(model: &Model, xs: &[X], label: usize) -> Result<BpttOutput> {
    let unroll = model.unroll(xs)?;
    let (data_loss, grad_logits) = softmax_cross_entropy(&unroll.logits, label)?;
    let mut grads = model.zero_grads();
    let steps = &unroll.steps;
    let t_len = steps.len();

    let mut grad_h = model
        .readout
        .backward(unroll.final_hidden(), &grad_logits, &mut grads.readout);
    let mut grad_c = vec![
        0.0;
        if matches!(model.cell, Cell::Lstm(_)) {
            model.hidden_size()
        } else {
            0
        }
    ];
    let mut norms = vec![0.0; t_len];
    for t in (0..t_len).rev() {
        norms[t] = norm2(&grad_h);
        let (gh, gc) = model.cell.backward_step(&steps[t], &grad_h, &grad_c, &mut grads.cell);
        if gh.iter().chain(&gc).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { timestep: t + 1 });
        }
        grad_h = gh;
        grad_c = gc;
    }
    if !grads.all_finite() {
        return Err(Error::NonFiniteGradient { timestep: 1 });
    }
    Ok(BpttOutput {
        loss: data_loss,
        data_loss,
        grads,
        hidden_grad_norms: norms,
        unroll,
    })
}

/// Adds penalty gradients into `grads` and returns the penalty value.
pub(crate) fn add_penalties(model: &Model, reg: Regularization, grads: &mut GradientSet) -> f64 {
    let mut penalty = 0.0;
    if reg.lambda_smooth != 0.0 {
        if let (Cell::Kbrn(cell), CellGrads::Kbrn(g)) = (&model.cell, &mut grads.cell) {
            penalty += reg.lambda_smooth * cell.acts.penalty();
            cell.acts
                .accumulate_penalty(reg.lambda_smooth, &mut g.coeffs, g.centers.as_deref_mut());
        }
    }
    if reg.lambda_w != 0.0 {
        for (p, g) in model.params().iter().zip(grads.params_mut()) {
            if p.kind != ParamKind::Weight {
                continue;
            }
            for (w, gw) in p.data.iter().zip(g.data.iter_mut()) {
                penalty += reg.lambda_w * w * w;
                *gw += 2.0 * reg.lambda_w * w;
            }
        }
    }
    penalty
}

/// Total loss without gradients; the finite-difference target.
pub fn sequence_loss<X: AsRef<[f64]>>(model: &Model, xs: &[X], label: usize, reg: Regularization) -> Result<f64> {
    let unroll = model.unroll(xs)?;
    let (data, _) = softmax_cross_entropy(&unroll.logits, label)?;
    let mut penalty = 0.0;
    if let Cell::Kbrn(cell) = &model.cell {
        penalty += reg.lambda_smooth * cell.acts.penalty();
    }
    for p in model.params() {
        if p.kind == ParamKind::Weight {
            penalty += reg.lambda_w * p.data.iter().map(|w| w * w).sum::<f64>();
        }
    }
    Ok(data + penalty)
}
