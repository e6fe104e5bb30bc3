//! Network building blocks: the kernel-activation feedforward layer, the
//! kernel-based recurrent cell, and the tanh-RNN and LSTM baselines.

mod activations;
mod feedforward;
mod kbrn;
mod lstm;
mod readout;
mod tanh;

pub use activations::{KernelActivations, MIMIC_GRID, MIMIC_RIDGE};
pub use feedforward::{ff_backward, ff_forward, FeedforwardLayer, FfCache, FfGrads};
pub use kbrn::{kbrn_step, KbrnCell, KbrnGrads, KbrnStep};
pub use lstm::{lstm_step, LstmCell, LstmStep, FORGET_BIAS_INIT};
pub use readout::{readout_logits, Readout};
pub use tanh::{tanh_step, TanhRnnCell, TanhStep};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::params::{ParamView, ParamViewMut, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Kbrn,
    Tanh,
    Lstm,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Kbrn, CellKind::Tanh, CellKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Kbrn => "kbrn",
            CellKind::Tanh => "tanh",
            CellKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown cell type `{s}` (expected kbrn, tanh or lstm)")))
    }
}

/// Recurrent state. `c` is empty for cells without a memory cell.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h: Vector,
    pub c: Vector,
}

/// Any of the recurrent cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Cell {
    Kbrn(KbrnCell),
    Tanh(TanhRnnCell),
    Lstm(LstmCell),
}

/// Per-step values kept for the backward pass.
#[derive(Debug, Clone)]
pub enum StepCache {
    Kbrn(KbrnStep),
    Tanh(TanhStep),
    Lstm(LstmStep),
}

impl StepCache {
    pub fn h(&self) -> &[f64] {
        match self {
            StepCache::Kbrn(s) => &s.h,
            StepCache::Tanh(s) => &s.h,
            StepCache::Lstm(s) => &s.h,
        }
    }

    pub fn c(&self) -> &[f64] {
        match self {
            StepCache::Lstm(s) => &s.c,
            _ => &[],
        }
    }

    /// Pre-activations feeding the per-unit nonlinearity (the cell-state
    /// input to the output tanh for LSTM).
    pub fn pre_activations(&self) -> &[f64] {
        match self {
            StepCache::Kbrn(s) => &s.a,
            StepCache::Tanh(s) => &s.a,
            StepCache::Lstm(s) => &s.c,
        }
    }

    /// Largest `|∂h_i/∂a_i|` across units: `|σ_i'|` for KBRN, `1 - h²` for
    /// tanh, `o ⊙ (1 - tanh² c)` for LSTM.
    pub fn max_unit_slope(&self) -> f64 {
        let it: Box<dyn Iterator<Item = f64>> = match self {
            StepCache::Kbrn(s) => Box::new(s.slopes.iter().map(|v| v.abs())),
            StepCache::Tanh(s) => Box::new(s.h.iter().map(|h| 1.0 - h * h)),
            StepCache::Lstm(s) => Box::new(s.o.iter().zip(&s.tanh_c).map(|(o, t)| (o * (1.0 - t * t)).abs())),
        };
        it.fold(0.0, f64::max)
    }
}

/// Gradient buffers mirroring a [`Cell`].
#[derive(Debug, Clone, PartialEq)]
pub enum CellGrads {
    Kbrn(KbrnGrads),
    Tanh(TanhRnnCell),
    Lstm(LstmCell),
}

pub(crate) fn check_step_shapes(op: &'static str, w_in: &Matrix, x: &[f64], h_prev: &[f64]) -> Result<()> {
    if x.len() != w_in.cols() || h_prev.len() != w_in.rows() {
        return Err(Error::shape(
            op,
            format!("W_in {w_in}"),
            format!("x of length {}, h_prev of length {}", x.len(), h_prev.len()),
        ));
    }
    Ok(())
}

impl Cell {
    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Kbrn(_) => CellKind::Kbrn,
            Cell::Tanh(_) => CellKind::Tanh,
            Cell::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Cell::Kbrn(c) => c.hidden_size(),
            Cell::Tanh(c) => c.hidden_size(),
            Cell::Lstm(c) => c.hidden_size(),
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Cell::Kbrn(c) => c.input_size(),
            Cell::Tanh(c) => c.input_size(),
            Cell::Lstm(c) => c.input_size(),
        }
    }

    /// `h_0 = 0`, `c_0 = 0`.
    pub fn zero_state(&self) -> State {
        let h = self.hidden_size();
        State {
            h: vec![0.0; h],
            c: if matches!(self, Cell::Lstm(_)) {
                vec![0.0; h]
            } else {
                Vec::new()
            },
        }
    }

    pub fn step(&self, x: &[f64], state: &State) -> Result<StepCache> {
        Ok(match self {
            Cell::Kbrn(c) => StepCache::Kbrn(c.step(x, &state.h)?),
            Cell::Tanh(c) => StepCache::Tanh(c.step(x, &state.h)?),
            Cell::Lstm(c) => StepCache::Lstm(c.step(x, &state.h, &state.c)?),
        })
    }

    pub(crate) fn step_unchecked(&self, x: &[f64], h: &[f64], c: &[f64]) -> StepCache {
        match self {
            Cell::Kbrn(cell) => StepCache::Kbrn(cell.step_unchecked(x, h)),
            Cell::Tanh(cell) => StepCache::Tanh(cell.step_unchecked(x, h)),
            Cell::Lstm(cell) => StepCache::Lstm(cell.step_unchecked(x, h, c)),
        }
    }

    /// Backward through one step. `grad_c` is ignored for cells without memory.
    /// Returns `(∂L/∂h_{t-1}, ∂L/∂c_{t-1})`.
    pub(crate) fn backward_step(
        &self,
        cache: &StepCache,
        grad_h: &[f64],
        grad_c: &[f64],
        grads: &mut CellGrads,
    ) -> (Vector, Vector) {
        match (self, cache, grads) {
            (Cell::Kbrn(c), StepCache::Kbrn(s), CellGrads::Kbrn(g)) => (c.backward(s, grad_h, g), Vec::new()),
            (Cell::Tanh(c), StepCache::Tanh(s), CellGrads::Tanh(g)) => (c.backward(s, grad_h, g), Vec::new()),
            (Cell::Lstm(c), StepCache::Lstm(s), CellGrads::Lstm(g)) => c.backward(s, grad_h, grad_c, g),
            _ => panic!("cell, cache and gradient types disagree"),
        }
    }

    /// `∂h_t/∂h_{t-1}` at a cached step.
    pub fn jacobian(&self, cache: &StepCache) -> Result<Matrix> {
        match (self, cache) {
            (Cell::Kbrn(c), StepCache::Kbrn(s)) => Ok(c.jacobian(s)),
            (Cell::Tanh(c), StepCache::Tanh(s)) => Ok(c.jacobian(s)),
            (Cell::Lstm(c), StepCache::Lstm(s)) => Ok(c.jacobian(s)),
            _ => Err(Error::arg("step cache does not belong to this cell type")),
        }
    }

    pub fn recurrent_weights(&self) -> Option<&Matrix> {
        match self {
            Cell::Kbrn(c) => Some(&c.w_rec),
            Cell::Tanh(c) => Some(&c.w_rec),
            Cell::Lstm(_) => None,
        }
    }

    pub fn kernel_activations(&self) -> Option<&KernelActivations> {
        match self {
            Cell::Kbrn(c) => Some(&c.acts),
            _ => None,
        }
    }

    pub fn zero_grads(&self) -> CellGrads {
        match self {
            Cell::Kbrn(c) => CellGrads::Kbrn(c.zero_grads()),
            Cell::Tanh(c) => CellGrads::Tanh(c.zero_grads()),
            Cell::Lstm(c) => CellGrads::Lstm(c.zero_grads()),
        }
    }
}

impl Parameters for Cell {
    fn params(&self) -> Vec<ParamView<'_>> {
        match self {
            Cell::Kbrn(c) => c.params(),
            Cell::Tanh(c) => c.params(),
            Cell::Lstm(c) => c.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        match self {
            Cell::Kbrn(c) => c.params_mut(),
            Cell::Tanh(c) => c.params_mut(),
            Cell::Lstm(c) => c.params_mut(),
        }
    }
}

impl Parameters for CellGrads {
    fn params(&self) -> Vec<ParamView<'_>> {
        match self {
            CellGrads::Kbrn(c) => c.params(),
            CellGrads::Tanh(c) => c.params(),
            CellGrads::Lstm(c) => c.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        match self {
            CellGrads::Kbrn(c) => c.params_mut(),
            CellGrads::Tanh(c) => c.params_mut(),
            CellGrads::Lstm(c) => c.params_mut(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TargetFn;
    use crate::kernel::build_dictionary_uniform;
    use crate::math::Rng;

    #[test]
    fn mimic_kbrn_tracks_tanh_cell() {
        let mut rng = Rng::seed(21);
        let tanh = TanhRnnCell::init(3, 4, &mut rng).unwrap();
        let dict = build_dictionary_uniform(-3.0, 3.0, 15, 1.5 * 6.0 / 14.0).unwrap();
        let acts = KernelActivations::mimic(dict, 4, TargetFn::Tanh).unwrap();
        let kbrn = KbrnCell::new(tanh.w_in.clone(), tanh.w_rec.clone(), tanh.b.clone(), acts).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let t = tanh.step(&x, &h).unwrap();
            if t.a.iter().any(|a| a.abs() > 3.0) {
                continue;
            }
            let k = kbrn.step(&x, &h).unwrap();
            let dev = t.h.iter().zip(&k.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 0.02, "deviation {dev}");
        }
    }

    #[test]
    fn cell_kind_parsing() {
        for k in CellKind::ALL {
            assert_eq!(k.name().parse::<CellKind>().unwrap(), k);
        }
        assert!("gru".parse::<CellKind>().is_err());
    }

    #[test]
    fn zero_state_has_memory_only_for_lstm() {
        let mut rng = Rng::seed(1);
        let lstm = Cell::Lstm(LstmCell::init(2, 3, &mut rng).unwrap());
        let tanh = Cell::Tanh(TanhRnnCell::init(2, 3, &mut rng).unwrap());
        assert_eq!(lstm.zero_state().c.len(), 3);
        assert!(tanh.zero_state().c.is_empty());
    }
}
