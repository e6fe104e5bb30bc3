use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Rng, Vector};
use crate::params::{ParamKind, ParamView, ParamViewMut, Parameters};

/// Linear classification head, `logits = W_out h + b_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub w: Matrix,
    pub b: Vector,
}

impl Readout {
    pub fn new(w: Matrix, b: Vector) -> Result<Self> {
        if w.rows() < 2 {
            return Err(Error::arg(format!(
                "readout needs at least 2 classes, got {}",
                w.rows()
            )));
        }
        if b.len() != w.rows() {
            return Err(Error::shape("Readout::new", &w, format!("bias of length {}", b.len())));
        }
        Ok(Readout { w, b })
    }

    pub fn init(hidden: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        let w = Matrix::gaussian(classes, hidden, 1.0 / (hidden as f64).sqrt(), rng)?;
        Readout::new(w, vec![0.0; classes])
    }

    pub fn num_classes(&self) -> usize {
        self.w.rows()
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vector> {
        let mut out = self.w.mat_vec(h)?;
        for (o, b) in out.iter_mut().zip(&self.b) {
            *o += b;
        }
        Ok(out)
    }

    /// Accumulates parameter gradients; returns `∂L/∂h`.
    pub(crate) fn backward(&self, h: &[f64], grad_logits: &[f64], grads: &mut Readout) -> Vector {
        grads.w.add_outer(grad_logits, h);
        for (b, g) in grads.b.iter_mut().zip(grad_logits) {
            *b += g;
        }
        let mut gh = vec![0.0; self.w.cols()];
        self.w.mat_t_vec_acc(grad_logits, &mut gh);
        gh
    }

    pub fn zero_grads(&self) -> Readout {
        Readout {
            w: self.w.zeros_like(),
            b: vec![0.0; self.b.len()],
        }
    }
}

pub fn readout_logits(r: &Readout, h: &[f64]) -> Result<Vector> {
    r.logits(h)
}

impl Parameters for Readout {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                name: "w_out",
                kind: ParamKind::Weight,
                data: self.w.as_slice(),
            },
            ParamView {
                name: "b_out",
                kind: ParamKind::Bias,
                data: &self.b,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            ParamViewMut {
                name: "w_out",
                kind: ParamKind::Weight,
                data: self.w.as_mut_slice(),
            },
            ParamViewMut {
                name: "b_out",
                kind: ParamKind::Bias,
                data: &mut self.b,
            },
        ]
    }
}
