use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Rng, Vector};
use crate::params::{ParamKind, ParamView, ParamViewMut, Parameters};

/// Forget-gate bias at initialization.
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// Standard LSTM cell. Every gate reads the concatenation `z = [x; h_prev]`.
///
/// ```text
/// i = σ(W_i z + b_i)   f = σ(W_f z + b_f)   o = σ(W_o z + b_o)
/// g = tanh(W_g z + b_g)
/// c = f ⊙ c_prev + i ⊙ g
/// h = o ⊙ tanh(c)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
    pub b_g: Vector,
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    /// `[x; h_prev]`
    pub z: Vector,
    pub c_prev: Vector,
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub g: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmCell {
    pub fn new([w_i, w_f, w_o, w_g]: [Matrix; 4], [b_i, b_f, b_o, b_g]: [Vector; 4]) -> Result<Self> {
        let h = w_i.rows();
        let cols = w_i.cols();
        if cols < h {
            return Err(Error::shape("LstmCell::new", &w_i, format!("hidden size {h}")));
        }
        for w in [&w_f, &w_o, &w_g] {
            if w.rows() != h || w.cols() != cols {
                return Err(Error::shape("LstmCell::new", &w_i, w));
            }
        }
        for b in [&b_i, &b_f, &b_o, &b_g] {
            if b.len() != h {
                return Err(Error::shape(
                    "LstmCell::new",
                    &w_i,
                    format!("bias of length {}", b.len()),
                ));
            }
        }
        Ok(LstmCell {
            w_i,
            w_f,
            w_o,
            w_g,
            b_i,
            b_f,
            b_o,
            b_g,
        })
    }

    /// Gaussian weights with std `1/sqrt(d + h)`, zero biases except the
    /// forget gate at [`FORGET_BIAS_INIT`].
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let fan_in = input + hidden;
        let std = 1.0 / (fan_in as f64).sqrt();
        let mut gate = || Matrix::gaussian(hidden, fan_in, std, rng);
        let ws = [gate()?, gate()?, gate()?, gate()?];
        LstmCell::new(
            ws,
            [
                vec![0.0; hidden],
                vec![FORGET_BIAS_INIT; hidden],
                vec![0.0; hidden],
                vec![0.0; hidden],
            ],
        )
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_i.cols() - self.w_i.rows()
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep> {
        let h = self.hidden_size();
        if x.len() != self.input_size() || h_prev.len() != h || c_prev.len() != h {
            return Err(Error::shape(
                "lstm_step",
                format!("input {} / hidden {h}", self.input_size()),
                format!("x {}, h_prev {}, c_prev {}", x.len(), h_prev.len(), c_prev.len()),
            ));
        }
        Ok(self.step_unchecked(x, h_prev, c_prev))
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let mut z = Vec::with_capacity(x.len() + h_prev.len());
        z.extend_from_slice(x);
        z.extend_from_slice(h_prev);
        let gate = |w: &Matrix, b: &Vector, f: fn(f64) -> f64| -> Vector {
            let mut a = b.clone();
            w.mat_vec_acc(&z, &mut a);
            a.into_iter().map(f).collect()
        };
        let i = gate(&self.w_i, &self.b_i, logistic);
        let f = gate(&self.w_f, &self.b_f, logistic);
        let o = gate(&self.w_o, &self.b_o, logistic);
        let g = gate(&self.w_g, &self.b_g, f64::tanh);
        let c: Vector = (0..i.len()).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let tanh_c: Vector = c.iter().map(|v| v.tanh()).collect();
        let h = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
        LstmStep {
            z,
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        }
    }

    /// Returns `(∂L/∂h_{t-1}, ∂L/∂c_{t-1})`.
    pub(crate) fn backward(
        &self,
        step: &LstmStep,
        grad_h: &[f64],
        grad_c: &[f64],
        grads: &mut LstmCell,
    ) -> (Vector, Vector) {
        let n = self.hidden_size();
        let mut da_i = vec![0.0; n];
        let mut da_f = vec![0.0; n];
        let mut da_o = vec![0.0; n];
        let mut da_g = vec![0.0; n];
        let mut grad_c_prev = vec![0.0; n];
        for j in 0..n {
            let (i, f, o, g, t) = (step.i[j], step.f[j], step.o[j], step.g[j], step.tanh_c[j]);
            let gc = grad_c[j] + grad_h[j] * o * (1.0 - t * t);
            da_o[j] = grad_h[j] * t * o * (1.0 - o);
            da_f[j] = gc * step.c_prev[j] * f * (1.0 - f);
            da_i[j] = gc * g * i * (1.0 - i);
            da_g[j] = gc * i * (1.0 - g * g);
            grad_c_prev[j] = gc * f;
        }
        let mut grad_z = vec![0.0; step.z.len()];
        for (w, gw, gb, da) in [
            (&self.w_i, &mut grads.w_i, &mut grads.b_i, &da_i),
            (&self.w_f, &mut grads.w_f, &mut grads.b_f, &da_f),
            (&self.w_o, &mut grads.w_o, &mut grads.b_o, &da_o),
            (&self.w_g, &mut grads.w_g, &mut grads.b_g, &da_g),
        ] {
            gw.add_outer(da, &step.z);
            for (b, d) in gb.iter_mut().zip(da) {
                *b += d;
            }
            w.mat_t_vec_acc(da, &mut grad_z);
        }
        let d = self.input_size();
        (grad_z.split_off(d), grad_c_prev)
    }

    /// `∂h_t/∂h_{t-1}` with `c_{t-1}` held fixed.
    pub fn jacobian(&self, step: &LstmStep) -> Matrix {
        let n = self.hidden_size();
        let d = self.input_size();
        let mut j = Matrix::zeros(n, n);
        for r in 0..n {
            let (i, f, o, g, t) = (step.i[r], step.f[r], step.o[r], step.g[r], step.tanh_c[r]);
            let dh_dc = o * (1.0 - t * t);
            let ko = t * o * (1.0 - o);
            let kf = dh_dc * step.c_prev[r] * f * (1.0 - f);
            let ki = dh_dc * g * i * (1.0 - i);
            let kg = dh_dc * i * (1.0 - g * g);
            for k in 0..n {
                j[(r, k)] = ko * self.w_o[(r, d + k)]
                    + kf * self.w_f[(r, d + k)]
                    + ki * self.w_i[(r, d + k)]
                    + kg * self.w_g[(r, d + k)];
            }
        }
        j
    }

    /// Gradient buffers share the parameter layout.
    pub fn zero_grads(&self) -> LstmCell {
        let n = self.hidden_size();
        LstmCell {
            w_i: self.w_i.zeros_like(),
            w_f: self.w_f.zeros_like(),
            w_o: self.w_o.zeros_like(),
            w_g: self.w_g.zeros_like(),
            b_i: vec![0.0; n],
            b_f: vec![0.0; n],
            b_o: vec![0.0; n],
            b_g: vec![0.0; n],
        }
    }
}

pub fn lstm_step(cell: &LstmCell, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep> {
    cell.step(x, h_prev, c_prev)
}

impl Parameters for LstmCell {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                name: "w_i",
                kind: ParamKind::Weight,
                data: self.w_i.as_slice(),
            },
            ParamView {
                name: "w_f",
                kind: ParamKind::Weight,
                data: self.w_f.as_slice(),
            },
            ParamView {
                name: "w_o",
                kind: ParamKind::Weight,
                data: self.w_o.as_slice(),
            },
            ParamView {
                name: "w_g",
                kind: ParamKind::Weight,
                data: self.w_g.as_slice(),
            },
            ParamView {
                name: "b_i",
                kind: ParamKind::Bias,
                data: &self.b_i,
            },
            ParamView {
                name: "b_f",
                kind: ParamKind::Bias,
                data: &self.b_f,
            },
            ParamView {
                name: "b_o",
                kind: ParamKind::Bias,
                data: &self.b_o,
            },
            ParamView {
                name: "b_g",
                kind: ParamKind::Bias,
                data: &self.b_g,
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            ParamViewMut {
                name: "w_i",
                kind: ParamKind::Weight,
                data: self.w_i.as_mut_slice(),
            },
            ParamViewMut {
                name: "w_f",
                kind: ParamKind::Weight,
                data: self.w_f.as_mut_slice(),
            },
            ParamViewMut {
                name: "w_o",
                kind: ParamKind::Weight,
                data: self.w_o.as_mut_slice(),
            },
            ParamViewMut {
                name: "w_g",
                kind: ParamKind::Weight,
                data: self.w_g.as_mut_slice(),
            },
            ParamViewMut {
                name: "b_i",
                kind: ParamKind::Bias,
                data: &mut self.b_i,
            },
            ParamViewMut {
                name: "b_f",
                kind: ParamKind::Bias,
                data: &mut self.b_f,
            },
            ParamViewMut {
                name: "b_o",
                kind: ParamKind::Bias,
                data: &mut self.b_o,
            },
            ParamViewMut {
                name: "b_g",
                kind: ParamKind::Bias,
                data: &mut self.b_g,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_cell(d: usize, h: usize) -> LstmCell {
        LstmCell::new(
            std::array::from_fn(|_| Matrix::zeros(h, d + h)),
            [vec![0.0; h], vec![FORGET_BIAS_INIT; h], vec![0.0; h], vec![0.0; h]],
        )
        .unwrap()
    }

    #[test]
    fn forget_bias_only_closed_form() {
        let cell = zero_cell(2, 2);
        let c_prev = [0.8, -1.5];
        let s = lstm_step(&cell, &[1.0, -1.0], &[0.3, 0.4], &c_prev).unwrap();
        let sig1 = 1.0 / (1.0 + (-1.0f64).exp());
        for j in 0..2 {
            assert_eq!(s.i[j], 0.5);
            assert_eq!(s.o[j], 0.5);
            assert_eq!(s.f[j], sig1);
            assert_eq!(s.g[j], 0.0);
            assert!((s.c[j] - sig1 * c_prev[j]).abs() < 1e-15);
            assert!((s.h[j] - 0.5 * (sig1 * c_prev[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_memory_and_candidate_stays_empty() {
        let mut rng = Rng::seed(2);
        let mut cell = LstmCell::init(3, 4, &mut rng).unwrap();
        cell.w_g = cell.w_g.zeros_like();
        let s = cell.step(&[0.2, -0.3, 1.0], &[0.1, 0.2, 0.3, 0.4], &[0.0; 4]).unwrap();
        assert_eq!(s.c, vec![0.0; 4]);
        assert_eq!(s.h, vec![0.0; 4]);
    }

    #[test]
    fn gates_are_in_unit_interval() {
        let mut rng = Rng::seed(9);
        let cell = LstmCell::init(3, 4, &mut rng).unwrap();
        let s = cell.step(&[5.0, -5.0, 3.0], &[1.0, -1.0, 0.5, 0.0], &[2.0; 4]).unwrap();
        for v in s.i.iter().chain(&s.f).chain(&s.o) {
            assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn init_sets_forget_bias() {
        let mut rng = Rng::seed(9);
        let cell = LstmCell::init(3, 4, &mut rng).unwrap();
        assert_eq!(cell.b_f, vec![1.0; 4]);
        assert_eq!(cell.b_i, vec![0.0; 4]);
        assert_eq!(cell.input_size(), 3);
    }

    #[test]
    fn shape_errors() {
        let cell = zero_cell(2, 2);
        assert!(cell.step(&[1.0], &[0.0; 2], &[0.0; 2]).is_err());
        assert!(cell.step(&[1.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }
}
