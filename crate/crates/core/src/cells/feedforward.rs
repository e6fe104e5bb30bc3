use serde::{Deserialize, Serialize};

use super::activations::KernelActivations;
use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::params::{ParamKind, ParamView, ParamViewMut, Parameters};

/// `h_i = σ_i((W x + b)_i)` with one learned kernel activation per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardLayer {
    pub w: Matrix,
    pub b: Vector,
    pub acts: KernelActivations,
}

#[derive(Debug, Clone)]
pub struct FfCache {
    pub x: Vector,
    pub a: Vector,
    pub h: Vector,
    pub slopes: Vector,
    kernels: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfGrads {
    pub x: Vector,
    pub w: Matrix,
    pub b: Vector,
    pub coeffs: Matrix,
}

impl FeedforwardLayer {
    pub fn new(w: Matrix, b: Vector, acts: KernelActivations) -> Result<Self> {
        if b.len() != w.rows() {
            return Err(Error::shape(
                "FeedforwardLayer::new",
                &w,
                format!("bias of length {}", b.len()),
            ));
        }
        if acts.units() != w.rows() {
            return Err(Error::shape(
                "FeedforwardLayer::new",
                &w,
                format!("{} activations", acts.units()),
            ));
        }
        Ok(FeedforwardLayer { w, b, acts })
    }

    pub fn forward(&self, x: &[f64]) -> Result<FfCache> {
        let mut a = self.w.mat_vec(x)?;
        for (ai, bi) in a.iter_mut().zip(&self.b) {
            *ai += bi;
        }
        let n = a.len();
        let mut h = vec![0.0; n];
        let mut slopes = vec![0.0; n];
        let mut kernels = vec![0.0; n * self.acts.dict().len()];
        self.acts.forward(&a, &mut h, &mut slopes, &mut kernels);
        Ok(FfCache {
            x: x.to_vec(),
            a,
            h,
            slopes,
            kernels,
        })
    }

    pub fn backward(&self, cache: &FfCache, grad_h: &[f64]) -> Result<FfGrads> {
        if grad_h.len() != self.w.rows() || cache.x.len() != self.w.cols() {
            return Err(Error::shape(
                "ff_backward",
                &self.w,
                format!("grad_h of length {}", grad_h.len()),
            ));
        }
        let mut coeffs = self.acts.coeffs().zeros_like();
        self.acts
            .accumulate(&cache.a, grad_h, &cache.kernels, &mut coeffs, None);
        let grad_a: Vector = grad_h.iter().zip(&cache.slopes).map(|(g, s)| g * s).collect();
        let mut w = self.w.zeros_like();
        w.add_outer(&grad_a, &cache.x);
        let mut x = vec![0.0; self.w.cols()];
        self.w.mat_t_vec_acc(&grad_a, &mut x);
        Ok(FfGrads {
            x,
            w,
            b: grad_a,
            coeffs,
        })
    }
}

pub fn ff_forward(layer: &FeedforwardLayer, x: &[f64]) -> Result<FfCache> {
    layer.forward(x)
}

pub fn ff_backward(layer: &FeedforwardLayer, cache: &FfCache, grad_h: &[f64]) -> Result<FfGrads> {
    layer.backward(cache, grad_h)
}

impl Parameters for FeedforwardLayer {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                name: "w",
                kind: ParamKind::Weight,
                data: self.w.as_slice(),
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
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            ParamViewMut {
                name: "w",
                kind: ParamKind::Weight,
                data: self.w.as_mut_slice(),
            },
            ParamViewMut {
                name: "b",
                kind: ParamKind::Bias,
                data: &mut self.b,
            },
            ParamViewMut {
                name: "coeffs",
                kind: ParamKind::Coefficients,
                data: self.acts.coeffs_mut().as_mut_slice(),
            },
        ]
    }
}

impl Parameters for FfGrads {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                name: "w",
                kind: ParamKind::Weight,
                data: self.w.as_slice(),
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
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![
            ParamViewMut {
                name: "w",
                kind: ParamKind::Weight,
                data: self.w.as_mut_slice(),
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
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::TargetFn;
    use crate::kernel::{build_dictionary_uniform, gaussian_kernel, KernelDictionary};
    use crate::math::Rng;

    fn random_layer(rng: &mut Rng, out: usize, inp: usize) -> FeedforwardLayer {
        let dict = build_dictionary_uniform(-2.0, 2.0, 5, 1.0).unwrap();
        let coeffs = Matrix::from_vec(out, 5, (0..out * 5).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let w = Matrix::from_vec(out, inp, (0..out * inp).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let b = (0..out).map(|_| rng.uniform(-1.0, 1.0)).collect();
        FeedforwardLayer::new(w, b, KernelActivations::new(dict, coeffs).unwrap()).unwrap()
    }

    #[test]
    fn zero_layer_outputs_zero() {
        let dict = build_dictionary_uniform(-1.0, 1.0, 3, 1.0).unwrap();
        let layer =
            FeedforwardLayer::new(Matrix::zeros(2, 3), vec![0.0; 2], KernelActivations::zeros(dict, 2)).unwrap();
        assert_eq!(layer.forward(&[1.0, -2.0, 3.0]).unwrap().h, vec![0.0, 0.0]);
    }

    #[test]
    fn mimic_tanh_layer_near_zero_at_origin() {
        let dict = build_dictionary_uniform(-3.0, 3.0, 15, 1.5 * 6.0 / 14.0).unwrap();
        let acts = KernelActivations::mimic(dict, 3, TargetFn::Tanh).unwrap();
        let layer = FeedforwardLayer::new(Matrix::identity(3), vec![0.0; 3], acts).unwrap();
        let h = layer.forward(&[0.0; 3]).unwrap().h;
        assert!(h.iter().all(|v| v.abs() < 0.01), "{h:?}");
    }

    #[test]
    fn forward_is_composition_of_affine_and_activation() {
        let mut rng = Rng::seed(4);
        let layer = random_layer(&mut rng, 3, 4);
        let x = [0.3, -0.7, 1.1, 0.2];
        let cache = layer.forward(&x).unwrap();
        for i in 0..3 {
            let a = crate::math::dot(layer.w.row(i), &x) + layer.b[i];
            assert_eq!(cache.a[i], a);
            assert!((cache.h[i] - layer.acts.unit(i).activate(a)).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = Rng::seed(4);
        let layer = random_layer(&mut rng, 3, 4);
        assert!(layer.forward(&[1.0; 3]).is_err());
        let cache = layer.forward(&[1.0; 4]).unwrap();
        assert!(layer.backward(&cache, &[1.0; 2]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::seed(4);
        let layer = random_layer(&mut rng, 3, 4);
        let cache = layer.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = layer.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.params().iter().all(|p| p.data.iter().all(|&v| v == 0.0)));
        assert!(g.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_unit_closed_form() {
        // L = h, h = α κ(w x + b, c): ∂L/∂α = κ, ∂L/∂w = α κ (c - a)/γ² · x.
        let (alpha, c, gamma, w, b, x) = (1.7, 0.4, 0.8, -0.6, 0.25, 1.3);
        let dict = KernelDictionary::new(vec![c], gamma).unwrap();
        let acts = KernelActivations::new(dict, Matrix::from_vec(1, 1, vec![alpha]).unwrap()).unwrap();
        let layer = FeedforwardLayer::new(Matrix::from_vec(1, 1, vec![w]).unwrap(), vec![b], acts).unwrap();
        let cache = layer.forward(&[x]).unwrap();
        let g = layer.backward(&cache, &[1.0]).unwrap();
        let a = w * x + b;
        let kap = gaussian_kernel(a, c, gamma);
        let slope = alpha * kap * (c - a) / (gamma * gamma);
        assert!((g.coeffs[(0, 0)] - kap).abs() < 1e-15);
        assert!((g.b[0] - slope).abs() < 1e-15);
        assert!((g.w[(0, 0)] - slope * x).abs() < 1e-15);
        assert!((g.x[0] - slope * w).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::seed(12);
        let layer = random_layer(&mut rng, 3, 4);
        let x = vec![0.5, -0.3, 0.9, -1.0];
        let upstream = [0.7, -1.2, 0.4];
        let loss = |l: &FeedforwardLayer, x: &[f64]| {
            let h = l.forward(x).unwrap().h;
            crate::math::dot(&h, &upstream)
        };
        let g = layer.backward(&layer.forward(&x).unwrap(), &upstream).unwrap();
        let eps = 1e-5;
        let fd = crate::training::finite_diff_grad(|l: &FeedforwardLayer| loss(l, &x), &layer, eps);
        for (an, num) in g.params().iter().zip(&fd) {
            for (a, n) in an.data.iter().zip(num) {
                assert!((a - n).abs() <= 1e-5 * a.abs().max(1.0), "{}: {a} vs {n}", an.name);
            }
        }
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let n = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps);
            assert!((g.x[i] - n).abs() <= 1e-5 * n.abs().max(1.0));
        }
    }
}
