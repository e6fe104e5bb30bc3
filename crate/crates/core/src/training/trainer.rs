use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bptt::{add_penalties, bptt_data, Regularization};
use super::optim::{adam_step, clip_global_norm, sgd_step, AdamHyper, AdamState, OptimizerKind};
use crate::cells::Cell;
use crate::error::{Error, Result};
use crate::functions::TargetFn;
use crate::kernel::build_dictionary_from_samples;
use crate::math::{Rng, Vector};
use crate::model::{GradientSet, Model, ModelConfig};
use crate::params::{ParamKind, Parameters};

/// Pre-activation samples kept for dictionary clustering.
pub const WARMUP_MAX_SAMPLES: usize = 10_000;
pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-9;

/// One labelled input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vector>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lambda_smooth")]
    pub lambda_smooth: f64,
    #[serde(default)]
    pub lambda_w: f64,
    /// Global-norm clip threshold; off when absent.
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Stop once validation accuracy reaches this value.
    #[serde(default)]
    pub target_accuracy: Option<f64>,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_lambda_smooth() -> f64 {
    1e-4
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: default_lr(),
            optimizer: default_optimizer(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            lambda_smooth: default_lambda_smooth(),
            lambda_w: 0.0,
            clip: None,
            seed: 0,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        if !(self.lambda_smooth >= 0.0 && self.lambda_w >= 0.0) {
            return Err(Error::arg("regularization weights must be non-negative"));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::arg("clip threshold must be positive"));
            }
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::arg("target accuracy must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            lambda_smooth: self.lambda_smooth,
            lambda_w: self.lambda_w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean regularized loss over the epoch's batches.
    pub train_loss: f64,
    /// Running accuracy of the pre-update forward passes.
    pub train_acc: f64,
    /// NaN without a validation set.
    pub val_acc: f64,
}

/// Per-epoch metrics. Wall-clock seconds are kept apart so that the metric
/// records stay reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First epoch whose validation accuracy reached `threshold`.
    pub fn epochs_to(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.val_acc >= threshold).map(|r| r.epoch)
    }
}

pub fn accuracy(model: &Model, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for s in data {
        if model.predict(&s.inputs)? == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

fn check_data(model: &Model, data: &[Sample]) -> Result<()> {
    for (i, s) in data.iter().enumerate() {
        if s.label >= model.num_classes() {
            return Err(Error::arg(format!("sample {i}: label {} out of range", s.label)));
        }
        if s.inputs.is_empty() {
            return Err(Error::arg(format!("sample {i}: empty sequence")));
        }
    }
    Ok(())
}

/// Forward pass over the training set with the initial tanh-like
/// activations; clusters the pre-activations into a new dictionary and
/// refits every unit to tanh on it.
pub fn warm_up_dictionary(model: &mut Model, data: &[Sample], rng: &mut Rng) -> Result<()> {
    let Cell::Kbrn(cell) = &model.cell else {
        return Ok(());
    };
    let mut samples = Vec::new();
    for s in data {
        for step in model.unroll(&s.inputs)?.steps {
            samples.extend_from_slice(step.pre_activations());
        }
    }
    if samples.len() > WARMUP_MAX_SAMPLES {
        rng.shuffle(&mut samples);
        samples.truncate(WARMUP_MAX_SAMPLES);
    }
    let k = cell.acts.dict().len();
    let dict = build_dictionary_from_samples(&samples, k, model.config.bandwidth_factor, KMEANS_MAX_ITER, KMEANS_TOL)?;
    if let Cell::Kbrn(cell) = &mut model.cell {
        cell.acts.rebuild(dict, TargetFn::Tanh)?;
    }
    Ok(())
}

/// Initializes a model from `model_cfg` and trains it.
pub fn train(
    model_cfg: &ModelConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    let mut rng = Rng::seed(cfg.seed);
    let model = Model::init(model_cfg, &mut rng)?;
    train_model(model, train_set, val_set, cfg, &mut rng)
}

/// Trains an existing model. KBRN models get the warm-up dictionary pass
/// first; `epochs = 0` returns the model untouched.
pub fn train_model(
    mut model: Model,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((model, history));
    }
    if train_set.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    check_data(&model, train_set)?;
    check_data(&model, val_set)?;
    warm_up_dictionary(&mut model, train_set, rng)?;

    let reg = cfg.regularization();
    let mut adam = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut last_good = None;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let diverged = || Error::Diverged {
            epoch,
            last_good_epoch: last_good,
        };
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads, correct) = match batch_gradient(&model, train_set, batch, reg) {
                Ok(v) => v,
                Err(Error::NonFiniteGradient { .. }) => return Err(diverged()),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(diverged());
            }
            loss_sum += loss;
            batches += 1;
            hits += correct;
            let mut grads = grads;
            if let Some(c) = cfg.clip {
                clip_global_norm(&mut grads, c);
            }
            match cfg.optimizer {
                OptimizerKind::Sgd => sgd_step(&mut model, &grads, cfg.lr)?,
                OptimizerKind::Adam => adam_step(&mut model, &grads, &mut adam, cfg.lr, AdamHyper::default())?,
            }
            if !model.all_finite() {
                return Err(diverged());
            }
        }
        if let Some(perm) = model.resort_centers()? {
            permute_adam_centers(&model, &mut adam, &perm);
        }
        let val_acc = accuracy(&model, val_set)?;
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_acc: hits as f64 / train_set.len() as f64,
            val_acc,
        });
        history.seconds.push(start.elapsed().as_secs_f64());
        last_good = Some(epoch);
        if cfg.target_accuracy.is_some_and(|t| val_acc >= t) {
            break;
        }
    }
    Ok((model, history))
}

/// Mean gradient over `batch`, summed in index order, plus the penalties
/// once. Returns the regularized loss and the number of correct predictions.
pub fn batch_gradient(
    model: &Model,
    data: &[Sample],
    batch: &[usize],
    reg: Regularization,
) -> Result<(f64, GradientSet, usize)> {
    let mut total = model.zero_grads();
    let mut loss = 0.0;
    let mut correct = 0;
    for &i in batch {
        let s = &data[i];
        let out = bptt_data(model, &s.inputs, s.label)?;
        loss += out.data_loss;
        correct += out.correct(s.label) as usize;
        total.add_assign_from(&out.grads);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    let penalty = add_penalties(model, reg, &mut total);
    Ok((loss / n + penalty, total, correct))
}

fn permute_adam_centers(model: &Model, adam: &mut AdamState, perm: &[usize]) {
    for (t, p) in model.params().iter().enumerate() {
        if matches!(p.kind, ParamKind::Coefficients | ParamKind::Centers) {
            adam.permute_columns(t, perm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellKind;
    use crate::training::bptt::bptt;

    fn separable(n: usize, rng: &mut Rng) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let label = i % 2;
                let sign = if label == 1 { 1.0 } else { -1.0 };
                let x = vec![sign * rng.uniform(0.2, 1.0), rng.uniform(-1.0, 1.0)];
                Sample { inputs: vec![x], label }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = ModelConfig::new(CellKind::Kbrn, 2, 3, 2);
        let tc = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (m, h) = train(&cfg, &[], &[], &tc).unwrap();
        assert!(h.is_empty());
        assert_eq!(m, Model::init(&cfg, &mut Rng::seed(0)).unwrap());
    }

    #[test]
    fn separable_t1_reaches_full_accuracy() {
        let mut rng = Rng::seed(2);
        let data = separable(200, &mut rng);
        for kind in CellKind::ALL {
            let cfg = ModelConfig::new(kind, 2, 4, 2);
            let tc = TrainConfig {
                lr: 0.01,
                epochs: 50,
                seed: 1,
                ..TrainConfig::default()
            };
            let (_, h) = train(&cfg, &data, &data, &tc).unwrap();
            let best = h.records.iter().map(|r| r.train_acc).fold(0.0, f64::max);
            assert_eq!(best, 1.0, "{kind}");
        }
    }

    #[test]
    fn same_seed_same_history() {
        let mut rng = Rng::seed(5);
        let data = separable(64, &mut rng);
        let cfg = ModelConfig::new(CellKind::Kbrn, 2, 3, 2);
        let tc = TrainConfig {
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let (m1, h1) = train(&cfg, &data, &data, &tc).unwrap();
        let (m2, h2) = train(&cfg, &data, &data, &tc).unwrap();
        assert_eq!(h1.records, h2.records);
        assert_eq!(m1.to_json(), m2.to_json());
    }

    #[test]
    fn batch_of_copies_equals_single() {
        let mut rng = Rng::seed(8);
        let cfg = ModelConfig::new(CellKind::Lstm, 2, 3, 2);
        let model = Model::init(&cfg, &mut rng).unwrap();
        let s = Sample {
            inputs: vec![vec![0.3, -0.2], vec![0.9, 0.1]],
            label: 1,
        };
        let data = vec![s.clone(); 4];
        let (l1, g1, _) = batch_gradient(&model, &data, &[0], Regularization::default()).unwrap();
        let (l4, g4, _) = batch_gradient(&model, &data, &[0, 1, 2, 3], Regularization::default()).unwrap();
        assert!((l1 - l4).abs() < 1e-15);
        for (a, b) in g1.params().iter().zip(g4.params()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_batch_matches_bptt() {
        let mut rng = Rng::seed(8);
        let cfg = ModelConfig::new(CellKind::Kbrn, 2, 3, 2);
        let model = Model::init(&cfg, &mut rng).unwrap();
        let s = Sample {
            inputs: vec![vec![0.3, -0.2]; 3],
            label: 0,
        };
        let reg = Regularization {
            lambda_smooth: 0.2,
            lambda_w: 0.1,
        };
        let (l, g, _) = batch_gradient(&model, &[s.clone()], &[0], reg).unwrap();
        let out = bptt(&model, &s.inputs, s.label, reg).unwrap();
        assert!((l - out.loss).abs() < 1e-12);
        assert_eq!(g.to_flat(), out.grads.to_flat());
    }

    #[test]
    fn divergence_reports_last_good_epoch() {
        let mut rng = Rng::seed(3);
        let data = separable(32, &mut rng);
        let cfg = ModelConfig::new(CellKind::Tanh, 2, 3, 2);
        // the first Adam step moves every weight by about 1e308; the second
        // epoch overflows
        let tc = TrainConfig {
            lr: 1e308,
            epochs: 5,
            batch_size: 32,
            ..TrainConfig::default()
        };
        match train(&cfg, &data, &data, &tc) {
            Err(Error::Diverged { epoch, last_good_epoch }) => {
                assert_eq!((epoch, last_good_epoch), (2, Some(1)));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn warm_up_moves_centers_to_data() {
        let mut rng = Rng::seed(4);
        let cfg = ModelConfig::new(CellKind::Kbrn, 2, 3, 2);
        let mut model = Model::init(&cfg, &mut rng).unwrap();
        let data = separable(50, &mut rng);
        warm_up_dictionary(&mut model, &data, &mut rng).unwrap();
        let acts = model.cell.kernel_activations().unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &data {
            for st in model.unroll(&s.inputs).unwrap().steps {
                for a in st.pre_activations() {
                    lo = lo.min(*a);
                    hi = hi.max(*a);
                }
            }
        }
        let c = acts.dict().centers();
        assert!(c[0] >= lo - 1e-12 && *c.last().unwrap() <= hi + 1e-12);
    }
}
