use crate::error::{Error, Result};
use crate::math::Vector;

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// `softmax(logits) - onehot(label)`. The max logit is subtracted first.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vector)> {
    if label >= logits.len() {
        return Err(Error::arg(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vector = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let log_z = z.ln();
    let loss = log_z - (logits[label] - max);
    let mut grad: Vector = exps.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    #[test]
    fn uniform_logits() {
        let (loss, grad) = softmax_cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);
        assert_eq!(grad, vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_cross_entropy(&[1000.0, 0.0], 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = Rng::seed(4);
        for _ in 0..20 {
            let logits: Vec<f64> = (0..5).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let label = rng.index(5);
            let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
            for k in 0..5 {
                let eps = 1e-5;
                let mut p = logits.clone();
                p[k] += eps;
                let mut m = logits.clone();
                m[k] -= eps;
                let fd = (softmax_cross_entropy(&p, label).unwrap().0 - softmax_cross_entropy(&m, label).unwrap().0)
                    / (2.0 * eps);
                assert!((fd - grad[k]).abs() < 1e-7, "{fd} vs {}", grad[k]);
            }
        }
    }
}
