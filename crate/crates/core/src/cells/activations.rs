use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TargetFn;
use crate::kernel::{
    init_coeffs_mimic, smoothness_penalty, smoothness_penalty_grad, GramMatrix, KernelActivation, KernelDictionary,
};
use crate::math::Matrix;

/// Grid size and ridge used when mimic-initializing a bank of activations.
pub const MIMIC_GRID: usize = 200;
pub const MIMIC_RIDGE: f64 = 1e-6;

/// One layer's kernel activations: a shared dictionary and one coefficient
/// row per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelActivations {
    dict: KernelDictionary,
    /// units × K
    coeffs: Matrix,
}

impl KernelActivations {
    pub fn new(dict: KernelDictionary, coeffs: Matrix) -> Result<Self> {
        if coeffs.cols() != dict.len() {
            return Err(Error::shape(
                "KernelActivations::new",
                format!("{} centers", dict.len()),
                format!("coefficients {}", coeffs),
            ));
        }
        if !coeffs.is_finite() {
            return Err(Error::arg("activation coefficients must be finite"));
        }
        Ok(KernelActivations { dict, coeffs })
    }

    pub fn zeros(dict: KernelDictionary, units: usize) -> Self {
        let coeffs = Matrix::zeros(units, dict.len());
        KernelActivations { dict, coeffs }
    }

    /// Every unit starts as the same ridge fit of `target`.
    pub fn mimic(dict: KernelDictionary, units: usize, target: TargetFn) -> Result<Self> {
        let grid = MIMIC_GRID.max(dict.len());
        let alpha = init_coeffs_mimic(&dict, target, grid, MIMIC_RIDGE)?;
        let mut coeffs = Matrix::zeros(units, dict.len());
        for u in 0..units {
            coeffs.row_mut(u).copy_from_slice(&alpha);
        }
        Ok(KernelActivations { dict, coeffs })
    }

    pub fn units(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn dict(&self) -> &KernelDictionary {
        &self.dict
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Matrix {
        &mut self.coeffs
    }

    #[cfg(test)]
    pub(crate) fn centers_mut(&mut self) -> &mut [f64] {
        self.dict.centers_mut()
    }

    pub(crate) fn coeffs_and_centers_mut(&mut self) -> (&mut Matrix, &mut [f64]) {
        (&mut self.coeffs, self.dict.centers_mut())
    }

    pub fn unit(&self, i: usize) -> KernelActivation<'_> {
        KernelActivation::new(&self.dict, self.coeffs.row(i)).expect("row length equals K")
    }

    pub fn gram(&self) -> GramMatrix {
        self.dict.gram()
    }

    /// Evaluates every unit at its pre-activation.
    ///
    /// `kernels` receives the units × K kernel values for reuse in backward.
    pub(crate) fn forward(&self, a: &[f64], h: &mut [f64], slopes: &mut [f64], kernels: &mut [f64]) {
        let k = self.dict.len();
        for (u, &au) in a.iter().enumerate() {
            let kv = &mut kernels[u * k..(u + 1) * k];
            self.dict.kernel_values_into(au, kv);
            let (v, s) = self.dict.value_and_slope(self.coeffs.row(u), au, kv);
            h[u] = v;
            slopes[u] = s;
        }
    }

    /// Adds `∂L/∂α` (and `∂L/∂c` when requested) given `∂L/∂h` at one step.
    pub(crate) fn accumulate(
        &self,
        a: &[f64],
        grad_h: &[f64],
        kernels: &[f64],
        coeff_grad: &mut Matrix,
        center_grad: Option<&mut [f64]>,
    ) {
        let k = self.dict.len();
        for (u, &gh) in grad_h.iter().enumerate() {
            if gh == 0.0 {
                continue;
            }
            let kv = &kernels[u * k..(u + 1) * k];
            for (g, &kval) in coeff_grad.row_mut(u).iter_mut().zip(kv) {
                *g += gh * kval;
            }
        }
        if let Some(cg) = center_grad {
            let g2 = self.dict.bandwidth() * self.dict.bandwidth();
            let centers = self.dict.centers();
            for (u, &gh) in grad_h.iter().enumerate() {
                if gh == 0.0 {
                    continue;
                }
                let kv = &kernels[u * k..(u + 1) * k];
                let alpha = self.coeffs.row(u);
                for j in 0..k {
                    cg[j] += gh * alpha[j] * (a[u] - centers[j]) / g2 * kv[j];
                }
            }
        }
    }

    /// `Σ_units αᵀ G α`.
    pub fn penalty(&self) -> f64 {
        let gram = self.gram();
        (0..self.units())
            .map(|u| smoothness_penalty(self.coeffs.row(u), &gram).expect("shapes match"))
            .sum()
    }

    /// Adds `scale · ∂(Σ αᵀGα)` into the coefficient (and center) gradients.
    pub(crate) fn accumulate_penalty(&self, scale: f64, coeff_grad: &mut Matrix, mut center_grad: Option<&mut [f64]>) {
        let gram = self.gram();
        for u in 0..self.units() {
            let alpha = self.coeffs.row(u);
            let g = smoothness_penalty_grad(alpha, &gram).expect("shapes match");
            for (dst, v) in coeff_grad.row_mut(u).iter_mut().zip(g) {
                *dst += scale * v;
            }
            if let Some(cg) = center_grad.as_deref_mut() {
                let gc = crate::kernel::smoothness_penalty_grad_centers(alpha, &self.dict, &gram);
                for (dst, v) in cg.iter_mut().zip(gc) {
                    *dst += scale * v;
                }
            }
        }
    }

    /// Restores ascending center order, permuting coefficient columns to match.
    /// Returns the permutation when anything moved.
    pub(crate) fn resort(&mut self) -> Result<Option<Vec<usize>>> {
        let perm = self.dict.resort()?;
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(None);
        }
        permute_columns(&mut self.coeffs, &perm);
        Ok(Some(perm))
    }

    /// Swaps in a new dictionary and re-fits every unit to `target`.
    pub fn rebuild(&mut self, dict: KernelDictionary, target: TargetFn) -> Result<()> {
        *self = KernelActivations::mimic(dict, self.units(), target)?;
        Ok(())
    }
}

/// `new[:, i] = old[:, perm[i]]`
pub(crate) fn permute_columns(m: &mut Matrix, perm: &[usize]) {
    for r in 0..m.rows() {
        let row = m.row(r).to_vec();
        for (dst, &p) in m.row_mut(r).iter_mut().zip(perm) {
            *dst = row[p];
        }
    }
}
