//! Learnable activation functions represented as Gaussian kernel expansions
//! over a small set of 1-D centers.
//!
//! A layer shares one [`KernelDictionary`] (centers plus bandwidth); every
//! neuron owns a coefficient vector over it, so
//! `σ(a) = Σ_k α_k κ(a, c_k)` with `κ(a, c) = exp(-(a - c)² / 2γ²)`.

mod kmeans;
mod mimic;

pub use kmeans::{fit_centers_kmeans_1d, kmeans_objective, KMeansFit, Seeding};
pub use mimic::init_coeffs_mimic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};

/// `exp(-(a - c)² / (2γ²))`.
#[inline]
pub fn gaussian_kernel(a: f64, c: f64, gamma: f64) -> f64 {
    let d = a - c;
    (-d * d / (2.0 * gamma * gamma)).exp()
}

/// Sorted 1-D centers and a shared bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDictionary")]
pub struct KernelDictionary {
    centers: Vec<f64>,
    bandwidth: f64,
    #[serde(skip)]
    inv_two_gamma_sq: f64,
}

#[derive(Deserialize)]
struct RawDictionary {
    centers: Vec<f64>,
    bandwidth: f64,
}

impl TryFrom<RawDictionary> for KernelDictionary {
    type Error = Error;

    fn try_from(raw: RawDictionary) -> Result<Self> {
        KernelDictionary::new(raw.centers, raw.bandwidth)
    }
}

impl KernelDictionary {
    pub fn new(centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::arg("dictionary needs at least one center"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::arg(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::arg("dictionary centers must be finite"));
        }
        if centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::arg("dictionary centers must be strictly increasing"));
        }
        Ok(KernelDictionary {
            inv_two_gamma_sq: 1.0 / (2.0 * bandwidth * bandwidth),
            centers,
            bandwidth,
        })
    }

    /// Bandwidth from the mean adjacent spacing times `spread`.
    /// A single center gets bandwidth `spread`.
    pub fn with_spacing_bandwidth(centers: Vec<f64>, spread: f64) -> Result<Self> {
        let gamma = mean_spacing(&centers).unwrap_or(1.0) * spread;
        KernelDictionary::new(centers, gamma)
    }

    #[inline]
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    #[inline]
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn activation<'a>(&'a self, coeffs: &'a [f64]) -> Result<KernelActivation<'a>> {
        KernelActivation::new(self, coeffs)
    }

    /// Writes `κ(a, c_k)` for every center into `out`.
    #[inline]
    pub fn kernel_values_into(&self, a: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.centers.len());
        for (o, &c) in out.iter_mut().zip(&self.centers) {
            let d = a - c;
            *o = (-d * d * self.inv_two_gamma_sq).exp();
        }
    }

    /// `(σ(a), σ'(a))` given precomputed kernel values.
    #[inline]
    pub(crate) fn value_and_slope(&self, coeffs: &[f64], a: f64, kernels: &[f64]) -> (f64, f64) {
        let mut value = 0.0;
        let mut slope = 0.0;
        for ((&alpha, &k), &c) in coeffs.iter().zip(kernels).zip(&self.centers) {
            let w = alpha * k;
            value += w;
            slope += w * (c - a);
        }
        (value, slope / (self.bandwidth * self.bandwidth))
    }

    pub fn gram(&self) -> GramMatrix {
        GramMatrix::new(self)
    }

    /// Reorders centers into ascending order, returning the permutation applied
    /// (`new[i] = old[perm[i]]`). Fails if two centers coincide.
    pub(crate) fn resort(&mut self) -> Result<Vec<usize>> {
        let mut perm: Vec<usize> = (0..self.centers.len()).collect();
        perm.sort_by(|&i, &j| self.centers[i].total_cmp(&self.centers[j]));
        let sorted: Vec<f64> = perm.iter().map(|&i| self.centers[i]).collect();
        if sorted.iter().any(|c| !c.is_finite()) || sorted.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invariant("learned centers collided or became non-finite".into()));
        }
        self.centers = sorted;
        Ok(perm)
    }

    pub(crate) fn centers_mut(&mut self) -> &mut [f64] {
        &mut self.centers
    }
}

fn mean_spacing(centers: &[f64]) -> Option<f64> {
    if centers.len() < 2 {
        return None;
    }
    Some((centers[centers.len() - 1] - centers[0]) / (centers.len() - 1) as f64)
}

/// `K` equally spaced centers from `lo` to `hi` inclusive.
pub fn build_dictionary_uniform(lo: f64, hi: f64, k: usize, gamma: f64) -> Result<KernelDictionary> {
    if !(lo < hi) {
        return Err(Error::arg(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    if k < 2 {
        return Err(Error::arg(format!("uniform dictionary needs K >= 2, got {k}")));
    }
    let step = (hi - lo) / (k - 1) as f64;
    let mut centers: Vec<f64> = (0..k).map(|i| lo + step * i as f64).collect();
    centers[k - 1] = hi;
    KernelDictionary::new(centers, gamma)
}

/// Dictionary from pooled pre-activation samples.
///
/// Falls back to a uniform grid over `[min, max]` (or `[-1, 1]` when all
/// samples coincide) when there are fewer distinct values than `k`.
pub fn build_dictionary_from_samples(
    samples: &[f64],
    k: usize,
    spread: f64,
    max_iter: usize,
    tol: f64,
) -> Result<KernelDictionary> {
    if samples.is_empty() {
        return Err(Error::arg("no samples to build a dictionary from"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        let (lo, hi) = if sorted[0] == sorted[sorted.len() - 1] {
            (-1.0, 1.0)
        } else {
            (sorted[0], sorted[sorted.len() - 1])
        };
        let k = k.max(2);
        let gamma = (hi - lo) / (k - 1) as f64 * spread;
        return build_dictionary_uniform(lo, hi, k, gamma);
    }
    let fit = fit_centers_kmeans_1d(samples, k, max_iter, tol, Seeding::Optimal)?;
    KernelDictionary::with_spacing_bandwidth(fit.centers, spread)
}

/// One neuron's activation: a coefficient vector viewed against its dictionary.
#[derive(Debug, Clone, Copy)]
pub struct KernelActivation<'a> {
    dict: &'a KernelDictionary,
    coeffs: &'a [f64],
}

impl<'a> KernelActivation<'a> {
    pub fn new(dict: &'a KernelDictionary, coeffs: &'a [f64]) -> Result<Self> {
        if coeffs.len() != dict.len() {
            return Err(Error::shape(
                "KernelActivation::new",
                format!("{} centers", dict.len()),
                format!("{} coefficients", coeffs.len()),
            ));
        }
        Ok(KernelActivation { dict, coeffs })
    }

    pub fn dictionary(&self) -> &KernelDictionary {
        self.dict
    }

    pub fn coeffs(&self) -> &[f64] {
        self.coeffs
    }

    /// `σ(a) = Σ_k α_k κ(a, c_k)`.
    pub fn activate(&self, a: f64) -> f64 {
        let g = self.dict.bandwidth;
        self.coeffs
            .iter()
            .zip(&self.dict.centers)
            .map(|(&alpha, &c)| alpha * gaussian_kernel(a, c, g))
            .sum()
    }

    /// `σ'(a) = Σ_k α_k (c_k - a)/γ² κ(a, c_k)`.
    pub fn grad_input(&self, a: f64) -> f64 {
        let g = self.dict.bandwidth;
        self.coeffs
            .iter()
            .zip(&self.dict.centers)
            .map(|(&alpha, &c)| alpha * (c - a) / (g * g) * gaussian_kernel(a, c, g))
            .sum()
    }

    /// `∂σ(a)/∂α_k = κ(a, c_k)`.
    pub fn grad_coeffs(&self, a: f64) -> Vector {
        let mut out = vec![0.0; self.dict.len()];
        self.dict.kernel_values_into(a, &mut out);
        out
    }

    /// `∂σ(a)/∂c_k = α_k (a - c_k)/γ² κ(a, c_k)`.
    pub fn grad_centers(&self, a: f64) -> Vector {
        let g = self.dict.bandwidth;
        self.coeffs
            .iter()
            .zip(&self.dict.centers)
            .map(|(&alpha, &c)| alpha * (a - c) / (g * g) * gaussian_kernel(a, c, g))
            .collect()
    }

    pub fn smoothness_penalty(&self, gram: &GramMatrix) -> Result<f64> {
        smoothness_penalty(self.coeffs, gram)
    }
}

pub fn activate(act: &KernelActivation<'_>, a: f64) -> f64 {
    act.activate(a)
}

pub fn activate_grad_input(act: &KernelActivation<'_>, a: f64) -> f64 {
    act.grad_input(a)
}

pub fn activate_grad_coeffs(act: &KernelActivation<'_>, a: f64) -> Vector {
    act.grad_coeffs(a)
}

/// `G[j][k] = κ(c_j, c_k)` for a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Matrix,
}

impl GramMatrix {
    pub fn new(dict: &KernelDictionary) -> Self {
        let k = dict.len();
        let mut entries = Matrix::identity(k);
        for i in 0..k {
            for j in i + 1..k {
                let v = gaussian_kernel(dict.centers[i], dict.centers[j], dict.bandwidth);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        GramMatrix { entries }
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.rows()
    }
}

/// RKHS norm `αᵀ G α`.
pub fn smoothness_penalty(coeffs: &[f64], gram: &GramMatrix) -> Result<f64> {
    let g_alpha = gram.entries.mat_vec(coeffs)?;
    Ok(crate::math::dot(coeffs, &g_alpha))
}

/// `2 G α`.
pub fn smoothness_penalty_grad(coeffs: &[f64], gram: &GramMatrix) -> Result<Vector> {
    let mut g = gram.entries.mat_vec(coeffs)?;
    g.iter_mut().for_each(|x| *x *= 2.0);
    Ok(g)
}

/// Derivative of `αᵀ G α` with respect to the centers, bandwidth held fixed.
pub(crate) fn smoothness_penalty_grad_centers(coeffs: &[f64], dict: &KernelDictionary, gram: &GramMatrix) -> Vector {
    let c = dict.centers();
    let g2 = dict.bandwidth * dict.bandwidth;
    (0..c.len())
        .map(|j| {
            2.0 * coeffs[j]
                * (0..c.len())
                    .map(|k| coeffs[k] * gram.entries[(j, k)] * (c[k] - c[j]) / g2)
                    .sum::<f64>()
        })
        .collect()
}
