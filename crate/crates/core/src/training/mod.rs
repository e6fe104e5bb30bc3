//! Loss, backpropagation through time, optimizers, the training loop and
//! the finite-difference gradient oracle.

mod bptt;
mod fit;
mod gradcheck;
mod loss;
mod optim;
mod trainer;

pub use bptt::{bptt, sequence_loss, BpttOutput, Regularization};
pub use fit::{fit_activation, ActivationFit};
pub use gradcheck::{
    check_instance, finite_diff_grad, gradcheck_suite, random_instance, relative_error, GradcheckInstance,
    GradcheckReport, GRADCHECK_EPS, GRADCHECK_INSTANCES, GRADCHECK_TOL, RELATIVE_ERROR_FLOOR,
};
pub use loss::softmax_cross_entropy;
pub use optim::{adam_step, clip_global_norm, sgd_step, AdamHyper, AdamState, OptimizerKind};
pub use trainer::{
    accuracy, batch_gradient, train, train_model, warm_up_dictionary, EpochRecord, Sample, TrainConfig, TrainHistory,
    KMEANS_MAX_ITER, KMEANS_TOL, WARMUP_MAX_SAMPLES,
};
