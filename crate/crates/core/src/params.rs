//! Uniform flat view over parameter (and gradient) tensors.
//!
//! Models and their gradient sets list tensors in the same order, so
//! optimizers, clipping and finite differences can work tensor by tensor
//! without knowing the cell type.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Connection weights; subject to weight decay.
    Weight,
    Bias,
    /// Kernel expansion coefficients.
    Coefficients,
    /// Dictionary centers (only listed when center learning is on).
    Centers,
}

#[derive(Debug)]
pub struct ParamView<'a> {
    pub name: &'static str,
    pub kind: ParamKind,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct ParamViewMut<'a> {
    pub name: &'static str,
    pub kind: ParamKind,
    pub data: &'a mut [f64],
}

pub trait Parameters {
    fn params(&self) -> Vec<ParamView<'_>>;
    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>>;

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Tensor lengths in listing order.
    fn layout(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.data.len()).collect()
    }

    fn to_flat(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| p.data.to_vec()).collect()
    }

    fn global_norm(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|p| p.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.data.iter().all(|x| x.is_finite()))
    }

    fn scale(&mut self, s: f64) {
        for p in self.params_mut() {
            p.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn fill_zero(&mut self) {
        for p in self.params_mut() {
            p.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// `self += other`; layouts must match.
    fn add_assign_from(&mut self, other: &dyn Parameters) {
        let src = other.params();
        let dst = self.params_mut();
        assert_eq!(src.len(), dst.len(), "parameter layouts differ");
        for (d, s) in dst.into_iter().zip(src) {
            assert_eq!(d.data.len(), s.data.len(), "tensor `{}` differs", d.name);
            for (x, y) in d.data.iter_mut().zip(s.data) {
                *x += y;
            }
        }
    }
}

/// A bare scalar list, handy for checking optimizers and finite differences.
impl Parameters for Vec<f64> {
    fn params(&self) -> Vec<ParamView<'_>> {
        vec![ParamView {
            name: "theta",
            kind: ParamKind::Weight,
            data: self,
        }]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        vec![ParamViewMut {
            name: "theta",
            kind: ParamKind::Weight,
            data: self,
        }]
    }
}
