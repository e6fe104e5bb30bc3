use serde::Serialize;

use super::bptt::{bptt, sequence_loss, Regularization};
use crate::cells::{Cell, CellKind, KernelActivations};
use crate::error::{Error, Result};
use crate::kernel::KernelDictionary;
use crate::math::{Matrix, Rng};
use crate::model::{Model, ModelConfig};
use crate::params::{ParamKind, Parameters};

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;
pub const GRADCHECK_INSTANCES: usize = 20;

/// Denominator floor for relative error. Central differences at ε = 1e-5
/// carry about 1e-11 of rounding noise, so exact zeros need a floor well
/// above that.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Central differences `(f(θ+ε) − f(θ−ε)) / 2ε` for every scalar, grouped
/// by tensor in listing order.
pub fn finite_diff_grad<P, F>(f: F, params: &P, eps: f64) -> Vec<Vec<f64>>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = params.clone();
    let layout = params.layout();
    let mut out = Vec::with_capacity(layout.len());
    for (t, &n) in layout.iter().enumerate() {
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = probe.params()[t].data[i];
            probe.params_mut()[t].data[i] = orig + eps;
            let plus = f(&probe);
            probe.params_mut()[t].data[i] = orig - eps;
            let minus = f(&probe);
            probe.params_mut()[t].data[i] = orig;
            g.push((plus - minus) / (2.0 * eps));
        }
        out.push(g);
    }
    out
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckInstance {
    pub seq_len: usize,
    pub hidden: usize,
    pub centers: usize,
    pub learn_centers: bool,
    pub max_rel_error: f64,
    /// Tensor holding the worst scalar.
    pub worst_tensor: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub cell: CellKind,
    pub seed: u64,
    pub instances: Vec<GradcheckInstance>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Draws a small random model and sequence: every parameter and input in
/// `[-1, 1]`, `T ≤ 6`, `h ≤ 4`, `K ≤ 5`, `d = 3`, two classes.
pub fn random_instance(kind: CellKind, rng: &mut Rng) -> Result<(Model, Vec<Vec<f64>>, usize)> {
    let d = 3;
    let h = 1 + rng.index(4);
    let t_len = 1 + rng.index(6);
    let mut cfg = ModelConfig::new(kind, d, h, 2);
    cfg.num_centers = 2 + rng.index(4);
    cfg.learn_centers = kind == CellKind::Kbrn && rng.index(2) == 1;
    let mut model = Model::init(&cfg, rng)?;
    if let Cell::Kbrn(cell) = &mut model.cell {
        let k = cfg.num_centers;
        // well separated so that ±ε never reorders them
        let mut centers: Vec<f64> = Vec::with_capacity(k);
        let mut c = rng.uniform(-1.5, -0.5);
        for _ in 0..k {
            centers.push(c);
            c += rng.uniform(0.3, 1.0);
        }
        let dict = KernelDictionary::new(centers, rng.uniform(0.3, 1.0))?;
        cell.acts = KernelActivations::new(dict, Matrix::zeros(h, k))?;
    }
    for p in model.params_mut() {
        if p.kind != ParamKind::Centers {
            p.data.iter_mut().for_each(|x| *x = rng.uniform(-1.0, 1.0));
        }
    }
    let xs = (0..t_len)
        .map(|_| (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    let label = rng.index(2);
    Ok((model, xs, label))
}

/// BPTT against central differences on one instance; returns the worst
/// relative error and its tensor name.
pub fn check_instance(
    model: &Model,
    xs: &[Vec<f64>],
    label: usize,
    reg: Regularization,
) -> Result<(f64, &'static str)> {
    let analytic = bptt(model, xs, label, reg)?.grads;
    let numeric = finite_diff_grad(
        |m: &Model| sequence_loss(m, xs, label, reg).unwrap_or(f64::NAN),
        model,
        GRADCHECK_EPS,
    );
    let mut worst = (0.0, "");
    for (a, n) in analytic.params().iter().zip(&numeric) {
        for (x, y) in a.data.iter().zip(n) {
            let e = relative_error(*x, *y);
            if !(e <= worst.0) {
                worst = (e, a.name);
            }
        }
    }
    if worst.0.is_nan() {
        return Err(Error::Invariant("finite-difference loss was not finite".into()));
    }
    Ok(worst)
}

/// The finite-difference suite for one cell type.
pub fn gradcheck_suite(kind: CellKind, seed: u64, instances: usize) -> Result<GradcheckReport> {
    let mut rng = Rng::seed(seed);
    let mut out = Vec::with_capacity(instances);
    for _ in 0..instances {
        let (model, xs, label) = random_instance(kind, &mut rng)?;
        let reg = Regularization {
            lambda_smooth: rng.uniform(0.0, 0.5),
            lambda_w: rng.uniform(0.0, 0.5),
        };
        let (err, tensor) = check_instance(&model, &xs, label, reg)?;
        let (centers, learn_centers) = match &model.cell {
            Cell::Kbrn(c) => (c.acts.dict().len(), c.learn_centers),
            _ => (0, false),
        };
        out.push(GradcheckInstance {
            seq_len: xs.len(),
            hidden: model.hidden_size(),
            centers,
            learn_centers,
            max_rel_error: err,
            worst_tensor: tensor,
        });
    }
    let max_rel_error = out.iter().map(|i| i.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        cell: kind,
        seed,
        instances: out,
        max_rel_error,
        tolerance: GRADCHECK_TOL,
    })
}
