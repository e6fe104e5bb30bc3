use serde::{Deserialize, Serialize};

use super::check_step_shapes;
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng, Vector};
use crate::params::{ParamKind, ParamView, ParamViewMut, Parameters};

/// Classic recurrent cell, `h_t = tanh(W_in x_t + W_rec h_{t-1} + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhRnnCell {
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub b: Vector,
}

#[derive(Debug, Clone)]
pub struct TanhStep {
    pub x: Vector,
    pub h_prev: Vector,
    pub a: Vector,
    pub h: Vector,
}

impl TanhStep {
    /// `tanh'(a_i) = 1 - h_i²`
    pub fn slopes(&self) -> Vector {
        self.h.iter().map(|h| 1.0 - h * h).collect()
    }
}

impl TanhRnnCell {
    pub fn new(w_in: Matrix, w_rec: Matrix, b: Vector) -> Result<Self> {
        let h = w_rec.rows();
        if w_rec.cols() != h || w_in.rows() != h || b.len() != h {
            return Err(Error::shape(
                "TanhRnnCell::new",
                format!("W_in {w_in}, W_rec {w_rec}"),
                format!("bias of length {}", b.len()),
            ));
        }
        Ok(TanhRnnCell { w_in, w_rec, b })
    }

    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let w_in = Matrix::gaussian(hidden, input, 1.0 / (input as f64).sqrt(), rng)?;
        let w_rec = Matrix::gaussian(hidden, hidden, 1.0 / (hidden as f64).sqrt(), rng)?;
        TanhRnnCell::new(w_in, w_rec, vec![0.0; hidden])
    }

    pub fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_in.cols()
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<TanhStep> {
        check_step_shapes("tanh_step", &self.w_in, x, h_prev)?;
        Ok(self.step_unchecked(x, h_prev))
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h_prev: &[f64]) -> TanhStep {
        let mut a = self.b.clone();
        self.w_in.mat_vec_acc(x, &mut a);
        self.w_rec.mat_vec_acc(h_prev, &mut a);
        let h = a.iter().map(|v| v.tanh()).collect();
        TanhStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            a,
            h,
        }
    }

    pub(crate) fn backward(&self, step: &TanhStep, grad_h: &[f64], grads: &mut TanhRnnCell) -> Vector {
        let grad_a: Vector = grad_h.iter().zip(&step.h).map(|(g, h)| g * (1.0 - h * h)).collect();
        grads.w_in.add_outer(&grad_a, &step.x);
        grads.w_rec.add_outer(&grad_a, &step.h_prev);
        for (gb, ga) in grads.b.iter_mut().zip(&grad_a) {
            *gb += ga;
        }
        let mut grad_prev = vec![0.0; self.hidden_size()];
        self.w_rec.mat_t_vec_acc(&grad_a, &mut grad_prev);
        grad_prev
    }

    /// `diag(1 - h_t²) · W_rec`
    pub fn jacobian(&self, step: &TanhStep) -> Matrix {
        let mut j = self.w_rec.clone();
        for (i, h) in step.h.iter().enumerate() {
            let s = 1.0 - h * h;
            j.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        j
    }

    /// Gradient buffers share the parameter layout.
    pub fn zero_grads(&self) -> TanhRnnCell {
        TanhRnnCell {
            w_in: self.w_in.zeros_like(),
            w_rec: self.w_rec.zeros_like(),
            b: vec![0.0; self.b.len()],
        }
    }
}

pub fn tanh_step(cell: &TanhRnnCell, x: &[f64], h_prev: &[f64]) -> Result<TanhStep> {
    cell.step(x, h_prev)
}

impl Parameters for TanhRnnCell {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                name: "w_in",
                kind: ParamKind::Weight,
                data: self.w_in.as_slice(),
            },
            ParamView {
                name: "w_rec",
                kind: ParamKind::Weight,
                data: self.w_rec.as_slice(),
            },
            ParamView {
                name: "b",
                kind: ParamKind::Bias,
                data: &self.b,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            ParamViewMut {
                name: "w_in",
                kind: ParamKind::Weight,
                data: self.w_in.as_mut_slice(),
            },
            ParamViewMut {
                name: "w_rec",
                kind: ParamKind::Weight,
                data: self.w_rec.as_mut_slice(),
            },
            ParamViewMut {
                name: "b",
                kind: ParamKind::Bias,
                data: &mut self.b,
            },
        ]
    }
}
