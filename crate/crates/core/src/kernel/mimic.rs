use super::KernelDictionary;
use crate::error::{Error, Result};
use crate::functions::TargetFn;
use crate::math::{cholesky_solve, Matrix, Vector};

/// Ridge fit of coefficients so the expansion approximates `target`.
///
/// Minimizes `Σ_i (σ(a_i) - target(a_i))² + ridge·‖α‖²` over `grid_n`
/// uniform points spanning `[c_1, c_K]` (`c ± 2γ` for a single center), via
/// the normal equations. The expansion decays to zero outside the centers,
/// so saturating targets are only matched on the center hull.
pub fn init_coeffs_mimic(dict: &KernelDictionary, target: TargetFn, grid_n: usize, ridge: f64) -> Result<Vector> {
    let k = dict.len();
    if grid_n < k || grid_n < 2 {
        return Err(Error::arg(format!(
            "mimic grid needs at least K = {k} (and 2) points, got {grid_n}"
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::arg(format!("ridge must be >= 0, got {ridge}")));
    }
    let (lo, hi) = mimic_range(dict);
    let step = (hi - lo) / (grid_n - 1) as f64;

    let mut normal = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    let mut phi = vec![0.0; k];
    for i in 0..grid_n {
        let a = lo + step * i as f64;
        let y = target.eval(a);
        dict.kernel_values_into(a, &mut phi);
        normal.add_outer(&phi, &phi);
        for (r, p) in rhs.iter_mut().zip(&phi) {
            *r += p * y;
        }
    }
    for j in 0..k {
        normal[(j, j)] += ridge;
    }
    if rhs.iter().all(|&r| r == 0.0) && ridge > 0.0 {
        return Ok(vec![0.0; k]);
    }
    cholesky_solve(&normal, &rhs).ok_or(Error::SingularSystem { ridge })
}

/// Interval covered by the mimic grid for a dictionary.
pub(crate) fn mimic_range(dict: &KernelDictionary) -> (f64, f64) {
    let c = dict.centers();
    if c.len() == 1 {
        let pad = 2.0 * dict.bandwidth();
        return (c[0] - pad, c[0] + pad);
    }
    (c[0], c[c.len() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_dictionary_uniform;
    use std::f64::consts::PI;

    fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn zero_target_gives_zero_coefficients() {
        let d = build_dictionary_uniform(-3.0, 3.0, 7, 1.0).unwrap();
        assert_eq!(init_coeffs_mimic(&d, TargetFn::Zero, 50, 1e-6).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn tanh_fit_max_deviation() {
        let spacing = 6.0 / 14.0;
        let d = build_dictionary_uniform(-3.0, 3.0, 15, 1.5 * spacing).unwrap();
        let alpha = init_coeffs_mimic(&d, TargetFn::Tanh, 200, 1e-6).unwrap();
        let act = d.activation(&alpha).unwrap();
        let (lo, hi) = mimic_range(&d);
        let worst = grid(lo, hi, 200)
            .map(|a| (act.activate(a) - a.tanh()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.01, "max deviation {worst}");
    }

    #[test]
    fn sin_fit_mse() {
        let spacing = 2.0 * PI / 14.0;
        let d = build_dictionary_uniform(-PI, PI, 15, 1.5 * spacing).unwrap();
        let alpha = init_coeffs_mimic(&d, TargetFn::Sin, 200, 1e-6).unwrap();
        let act = d.activation(&alpha).unwrap();
        let (lo, hi) = mimic_range(&d);
        let mse = grid(lo, hi, 200)
            .map(|a| (act.activate(a) - a.sin()).powi(2))
            .sum::<f64>()
            / 200.0;
        assert!(mse < 1e-3, "mse {mse}");
        // sin is also reachable at bandwidth = spacing
        let d = build_dictionary_uniform(-PI, PI, 15, spacing).unwrap();
        let alpha = init_coeffs_mimic(&d, TargetFn::Sin, 200, 1e-6).unwrap();
        let act = d.activation(&alpha).unwrap();
        let mse = grid(-PI, PI, 200)
            .map(|a| (act.activate(a) - a.sin()).powi(2))
            .sum::<f64>()
            / 200.0;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn fitted_bump_is_not_monotone() {
        let d = build_dictionary_uniform(-3.0, 3.0, 9, 0.75).unwrap();
        let alpha = init_coeffs_mimic(&d, TargetFn::Bump, 100, 1e-6).unwrap();
        let act = d.activation(&alpha).unwrap();
        assert!(act.grad_input(-1.0) > 0.0 && act.grad_input(1.0) < 0.0);
    }

    #[test]
    fn singular_system_is_reported() {
        // Two nearly coincident wide kernels with no ridge.
        let d = KernelDictionary::new(vec![0.0, 1e-12], 10.0).unwrap();
        assert_eq!(
            init_coeffs_mimic(&d, TargetFn::Tanh, 20, 0.0),
            Err(Error::SingularSystem { ridge: 0.0 })
        );
        assert!(init_coeffs_mimic(&d, TargetFn::Tanh, 20, 1e-3).is_ok());
    }

    #[test]
    fn grid_must_cover_dictionary() {
        let d = build_dictionary_uniform(-1.0, 1.0, 5, 0.5).unwrap();
        assert!(init_coeffs_mimic(&d, TargetFn::Tanh, 4, 1e-6).is_err());
        assert!(init_coeffs_mimic(&d, TargetFn::Tanh, 10, -1.0).is_err());
    }
}
