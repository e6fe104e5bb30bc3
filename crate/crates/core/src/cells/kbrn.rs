use serde::{Deserialize, Serialize};

use super::activations::KernelActivations;
use super::check_step_shapes;
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng, Vector};
use crate::params::{ParamKind, ParamView, ParamViewMut, Parameters};

/// Kernel-based recurrent cell: `h_t,i = σ_i((W_in x_t + W_rec h_{t-1} + b)_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbrnCell {
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub b: Vector,
    pub acts: KernelActivations,
    /// Expose dictionary centers as trainable parameters.
    #[serde(default)]
    pub learn_centers: bool,
}

#[derive(Debug, Clone)]
pub struct KbrnStep {
    pub x: Vector,
    pub h_prev: Vector,
    pub a: Vector,
    pub h: Vector,
    /// `σ_i'(a_i)`
    pub slopes: Vector,
    pub(crate) kernels: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbrnGrads {
    pub w_in: Matrix,
    pub w_rec: Matrix,
    pub b: Vector,
    pub coeffs: Matrix,
    pub centers: Option<Vector>,
}

impl KbrnCell {
    pub fn new(w_in: Matrix, w_rec: Matrix, b: Vector, acts: KernelActivations) -> Result<Self> {
        let h = w_rec.rows();
        if w_rec.cols() != h || w_in.rows() != h || b.len() != h || acts.units() != h {
            return Err(Error::shape(
                "KbrnCell::new",
                format!("W_in {w_in}, W_rec {w_rec}, b {}", b.len()),
                format!("{} activations", acts.units()),
            ));
        }
        Ok(KbrnCell {
            w_in,
            w_rec,
            b,
            acts,
            learn_centers: false,
        })
    }

    /// Gaussian weights with std `1/sqrt(fan_in)` per matrix, zero bias.
    pub fn init(input: usize, acts: KernelActivations, rng: &mut Rng) -> Result<Self> {
        let h = acts.units();
        let w_in = Matrix::gaussian(h, input, 1.0 / (input as f64).sqrt(), rng)?;
        let w_rec = Matrix::gaussian(h, h, 1.0 / (h as f64).sqrt(), rng)?;
        KbrnCell::new(w_in, w_rec, vec![0.0; h], acts)
    }

    pub fn hidden_size(&self) -> usize {
        self.w_rec.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_in.cols()
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<KbrnStep> {
        check_step_shapes("kbrn_step", &self.w_in, x, h_prev)?;
        Ok(self.step_unchecked(x, h_prev))
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h_prev: &[f64]) -> KbrnStep {
        let n = self.hidden_size();
        let mut a = self.b.clone();
        self.w_in.mat_vec_acc(x, &mut a);
        self.w_rec.mat_vec_acc(h_prev, &mut a);
        let mut h = vec![0.0; n];
        let mut slopes = vec![0.0; n];
        let mut kernels = vec![0.0; n * self.acts.dict().len()];
        self.acts.forward(&a, &mut h, &mut slopes, &mut kernels);
        KbrnStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            a,
            h,
            slopes,
            kernels,
        }
    }

    /// Accumulates parameter gradients for one step; returns `∂L/∂h_{t-1}`.
    pub(crate) fn backward(&self, step: &KbrnStep, grad_h: &[f64], grads: &mut KbrnGrads) -> Vector {
        self.acts.accumulate(
            &step.a,
            grad_h,
            &step.kernels,
            &mut grads.coeffs,
            grads.centers.as_deref_mut(),
        );
        let grad_a: Vector = grad_h.iter().zip(&step.slopes).map(|(g, s)| g * s).collect();
        grads.w_in.add_outer(&grad_a, &step.x);
        grads.w_rec.add_outer(&grad_a, &step.h_prev);
        for (gb, ga) in grads.b.iter_mut().zip(&grad_a) {
            *gb += ga;
        }
        let mut grad_prev = vec![0.0; self.hidden_size()];
        self.w_rec.mat_t_vec_acc(&grad_a, &mut grad_prev);
        grad_prev
    }

    /// `diag(σ'(a_t)) · W_rec`
    pub fn jacobian(&self, step: &KbrnStep) -> Matrix {
        let mut j = self.w_rec.clone();
        for (i, s) in step.slopes.iter().enumerate() {
            j.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        j
    }

    pub fn zero_grads(&self) -> KbrnGrads {
        KbrnGrads {
            w_in: self.w_in.zeros_like(),
            w_rec: self.w_rec.zeros_like(),
            b: vec![0.0; self.b.len()],
            coeffs: self.acts.coeffs().zeros_like(),
            centers: self.learn_centers.then(|| vec![0.0; self.acts.dict().len()]),
        }
    }
}

pub fn kbrn_step(cell: &KbrnCell, x: &[f64], h_prev: &[f64]) -> Result<KbrnStep> {
    cell.step(x, h_prev)
}

impl Parameters for KbrnCell {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut v = vec![
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
            ParamView {
                name: "coeffs",
                kind: ParamKind::Coefficients,
                data: self.acts.coeffs().as_slice(),
            },
        ];
        if self.learn_centers {
            v.push(ParamView {
                name: "centers",
                kind: ParamKind::Centers,
                data: self.acts.dict().centers(),
            });
        }
        v
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let learn = self.learn_centers;
        let KbrnCell {
            w_in, w_rec, b, acts, ..
        } = self;
        let mut v = Vec::with_capacity(5);
        v.push(ParamViewMut {
            name: "w_in",
            kind: ParamKind::Weight,
            data: w_in.as_mut_slice(),
        });
        v.push(ParamViewMut {
            name: "w_rec",
            kind: ParamKind::Weight,
            data: w_rec.as_mut_slice(),
        });
        v.push(ParamViewMut {
            name: "b",
            kind: ParamKind::Bias,
            data: b.as_mut_slice(),
        });
        if learn {
            let (coeffs, centers) = acts.coeffs_and_centers_mut();
            v.push(ParamViewMut {
                name: "coeffs",
                kind: ParamKind::Coefficients,
                data: coeffs.as_mut_slice(),
            });
            v.push(ParamViewMut {
                name: "centers",
                kind: ParamKind::Centers,
                data: centers,
            });
        } else {
            v.push(ParamViewMut {
                name: "coeffs",
                kind: ParamKind::Coefficients,
                data: acts.coeffs_mut().as_mut_slice(),
            });
        }
        v
    }
}

impl Parameters for KbrnGrads {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut v = vec![
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
            ParamView {
                name: "coeffs",
                kind: ParamKind::Coefficients,
                data: self.coeffs.as_slice(),
            },
        ];
        if let Some(c) = &self.centers {
            v.push(ParamView {
                name: "centers",
                kind: ParamKind::Centers,
                data: c,
            });
        }
        v
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut v = vec![
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
            ParamViewMut {
                name: "coeffs",
                kind: ParamKind::Coefficients,
                data: self.coeffs.as_mut_slice(),
            },
        ];
        if let Some(c) = &mut self.centers {
            v.push(ParamViewMut {
                name: "centers",
                kind: ParamKind::Centers,
                data: c,
            });
        }
        v
    }
}
