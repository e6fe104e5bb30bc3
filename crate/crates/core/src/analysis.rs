//! Recurrent dynamics diagnostics: step Jacobians, spectral norms, backward
//! gradient-norm traces and activation shape dumps.

use serde::Serialize;

use crate::cells::{Cell, KbrnCell, KernelActivations, Readout, State};
use crate::error::{Error, Result};
use crate::kernel::KernelDictionary;
use crate::math::{norm2, Matrix, Rng};
use crate::model::{Model, ModelConfig};
use crate::training::{bptt, Regularization};

pub const POWER_ITERS: usize = 100;
pub const POWER_TOL: f64 = 1e-9;
/// Seed for the power-iteration start vector.
pub const POWER_SEED: u64 = 0x5EED;

/// `∂h_t/∂h_{t-1}` at `(h_prev, c_prev, x)`. `c_prev` is ignored (and may be
/// empty) for cells without memory; LSTM holds it fixed.
pub fn recurrent_jacobian(cell: &Cell, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<Matrix> {
    let state = State {
        h: h_prev.to_vec(),
        c: if matches!(cell, Cell::Lstm(_)) {
            c_prev.to_vec()
        } else {
            Vec::new()
        },
    };
    let step = cell.step(x, &state)?;
    cell.jacobian(&step)
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn spectral_norm(m: &Matrix, iters: usize, tol: f64, rng: &mut Rng) -> f64 {
    let n = m.cols();
    if n == 0 || m.rows() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let norm = norm2(&v);
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    let mt = m.transpose();
    let mut est = 0.0;
    for _ in 0..iters {
        let mv = m.mat_vec(&v).expect("shapes agree");
        let next_est = norm2(&mv);
        let mut w = mt.mat_vec(&mv).expect("shapes agree");
        let wn = norm2(&w);
        if wn == 0.0 {
            return next_est;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
        let done = (next_est - est).abs() <= tol * next_est.max(f64::MIN_POSITIVE);
        est = next_est;
        if done {
            break;
        }
    }
    // Rayleigh-quotient estimate at the final vector
    est.max(norm2(&m.mat_vec(&v).expect("shapes agree")))
}

/// [`spectral_norm`] with the fixed iteration budget, tolerance and seed.
pub fn spectral_norm_default(m: &Matrix) -> f64 {
    spectral_norm(m, POWER_ITERS, POWER_TOL, &mut Rng::seed(POWER_SEED))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    /// 1-based timestep.
    pub t: usize,
    /// `‖∂L/∂h_t‖₂`
    pub grad_norm: f64,
    /// Spectral norm of the step Jacobian `∂h_t/∂h_{t-1}`.
    pub jacobian_norm: f64,
    /// Largest `|∂h_i/∂a_i|` over units at step `t`.
    pub max_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientTrace {
    pub steps: Vec<TraceStep>,
}

impl GradientTrace {
    /// `‖∂L/∂h_{t-1}‖ / ‖∂L/∂h_t‖` for `t = T..2`, indexed by `t`; NaN where
    /// the later norm is zero.
    pub fn backward_ratios(&self) -> Vec<(usize, f64)> {
        self.steps
            .windows(2)
            .rev()
            .map(|w| (w[1].t, w[0].grad_norm / w[1].grad_norm))
            .collect()
    }
}

/// Backward gradient norms, step Jacobian norms and unit slopes along one
/// labelled sequence (no regularization).
pub fn gradient_norm_trace<X: AsRef<[f64]>>(model: &Model, xs: &[X], label: usize) -> Result<GradientTrace> {
    let out = bptt(model, xs, label, Regularization::default())?;
    let mut steps = Vec::with_capacity(xs.len());
    for (i, cache) in out.unroll.steps.iter().enumerate() {
        let j = model.cell.jacobian(cache)?;
        steps.push(TraceStep {
            t: i + 1,
            grad_norm: out.hidden_grad_norms[i],
            jacobian_norm: spectral_norm_default(&j),
            max_slope: cache.max_unit_slope(),
        });
    }
    Ok(GradientTrace { steps })
}

/// Elementwise mean of equal-length traces.
pub fn mean_trace(traces: &[GradientTrace]) -> Result<GradientTrace> {
    let first = traces.first().ok_or_else(|| Error::arg("no traces to average"))?;
    let len = first.steps.len();
    if traces.iter().any(|t| t.steps.len() != len) {
        return Err(Error::arg("traces differ in length"));
    }
    let n = traces.len() as f64;
    let steps = (0..len)
        .map(|i| {
            let mut s = TraceStep {
                t: i + 1,
                grad_norm: 0.0,
                jacobian_norm: 0.0,
                max_slope: 0.0,
            };
            for tr in traces {
                s.grad_norm += tr.steps[i].grad_norm / n;
                s.jacobian_norm += tr.steps[i].jacobian_norm / n;
                s.max_slope += tr.steps[i].max_slope / n;
            }
            s
        })
        .collect();
    Ok(GradientTrace { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeRow {
    pub unit: usize,
    pub input: f64,
    pub output: f64,
    pub derivative: f64,
}

/// Every unit's nonlinearity on `n` evenly spaced points of `[lo, hi]`.
/// Tanh and LSTM units report `tanh`.
pub fn export_activation_shapes(model: &Model, lo: f64, hi: f64, n: usize) -> Result<Vec<ShapeRow>> {
    if n < 2 {
        return Err(Error::arg("shape grid needs n ≥ 2"));
    }
    if !(lo < hi) {
        return Err(Error::arg(format!("invalid grid [{lo}, {hi}]")));
    }
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut rows = Vec::with_capacity(model.hidden_size() * n);
    for u in 0..model.hidden_size() {
        for &a in &grid {
            let (output, derivative) = match model.cell.kernel_activations() {
                Some(acts) => {
                    let act = acts.unit(u);
                    (act.activate(a), act.grad_input(a))
                }
                None => (a.tanh(), 1.0 - a.tanh().powi(2)),
            };
            rows.push(ShapeRow {
                unit: u,
                input: a,
                output,
                derivative,
            });
        }
    }
    Ok(rows)
}

/// Scalar KBRN whose alternating-sign expansion makes `|σ′|·|W_rec|`
/// exceed 1 along its own zero-input orbit: centers `{-1, -½, 0, ½, 1}`,
/// `γ = 0.3`, `α = 0.6·(1, −1, 1, −1, 1)`, `W_rec = 1.5`, `W_in = b = 0`.
pub fn constructed_expansive_kbrn() -> Model {
    let dict = KernelDictionary::new(vec![-1.0, -0.5, 0.0, 0.5, 1.0], 0.3).expect("valid dictionary");
    let alpha = Matrix::from_rows(&[&[0.6, -0.6, 0.6, -0.6, 0.6]]).expect("one row");
    let acts = KernelActivations::new(dict, alpha).expect("matching shape");
    let cell = KbrnCell::new(Matrix::zeros(1, 1), Matrix::from_diag(&[1.5]), vec![0.0], acts).expect("scalar");
    let readout = Readout::new(Matrix::from_rows(&[&[1.0], &[-1.0]]).expect("2x1"), vec![0.0, 0.0]).expect("2 classes");
    let mut cfg = ModelConfig::new(crate::cells::CellKind::Kbrn, 1, 1, 2);
    cfg.num_centers = 5;
    Model::new(cfg, Cell::Kbrn(cell), readout).expect("consistent")
}
