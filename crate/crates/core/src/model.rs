use crate::dataset::CategoricalDataset;
use crate::error::{MixError, Result};

/// Tolerance used when checking simplex constraints on user-supplied models.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A finite mixture of products of multinomials.
///
/// `theta` is stored flat: component `k` occupies `k * width .. (k + 1) * width`
/// where `width = Σ_l C_l`, and inside that block variable `l` starts at
/// `Σ_{j<l} C_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    categories: Vec<usize>,
    trials: Vec<u32>,
    alpha: Vec<f64>,
    theta: Vec<f64>,
    offsets: Vec<usize>,
}

fn offsets_of(categories: &[usize]) -> Vec<usize> {
    categories
        .iter()
        .scan(0, |acc, &c| {
            let off = *acc;
            *acc += c;
            Some(off)
        })
        .collect()
}

impl MixtureModel {
    /// Builds a model from `alpha` and per-component, per-variable probability
    /// vectors `theta[k][l]`.
    pub fn new(
        categories: Vec<usize>,
        trials: Vec<u32>,
        alpha: Vec<f64>,
        theta: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if theta.len() != alpha.len() {
            return Err(MixError::InvalidModel(format!(
                "{} mixing weights but {} components",
                alpha.len(),
                theta.len()
            )));
        }
        let mut flat = Vec::new();
        for (k, comp) in theta.iter().enumerate() {
            if comp.len() != categories.len() {
                return Err(MixError::InvalidModel(format!(
                    "component {k} has {} variables, expected {}",
                    comp.len(),
                    categories.len()
                )));
            }
            for (l, probs) in comp.iter().enumerate() {
                if probs.len() != categories[l] {
                    return Err(MixError::InvalidModel(format!(
                        "component {k}, variable {l}: {} probabilities, expected {}",
                        probs.len(),
                        categories[l]
                    )));
                }
                flat.extend_from_slice(probs);
            }
        }
        Self::from_flat(categories, trials, alpha, flat)
    }

    pub(crate) fn from_flat(
        categories: Vec<usize>,
        trials: Vec<u32>,
        alpha: Vec<f64>,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let model = Self {
            offsets: offsets_of(&categories),
            categories,
            trials,
            alpha,
            theta,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.alpha.is_empty() {
            return Err(MixError::InvalidModel("no components".into()));
        }
        if self.categories.len() != self.trials.len() {
            return Err(MixError::InvalidModel("categories/trials length mismatch".into()));
        }
        if self.theta.len() != self.alpha.len() * self.width() {
            return Err(MixError::InvalidModel("theta has wrong length".into()));
        }
        if self.alpha.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(MixError::InvalidModel("mixing weights must be finite and non-negative".into()));
        }
        let s: f64 = self.alpha.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(MixError::InvalidModel(format!("mixing weights sum to {s}")));
        }
        for k in 0..self.k() {
            for l in 0..self.num_vars() {
                let p = self.theta(k, l);
                if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                    return Err(MixError::InvalidModel(format!(
                        "component {k}, variable {l}: negative or non-finite probability"
                    )));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > SIMPLEX_TOL {
                    return Err(MixError::InvalidModel(format!(
                        "component {k}, variable {l}: probabilities sum to {s}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_vars(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    pub fn trials(&self) -> &[u32] {
        &self.trials
    }

    pub fn width(&self) -> usize {
        self.categories.iter().sum()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn theta(&self, k: usize, l: usize) -> &[f64] {
        let off = k * self.width() + self.offsets[l];
        &self.theta[off..off + self.categories[l]]
    }

    /// All category probabilities of component `k`, variables concatenated.
    pub fn component(&self, k: usize) -> &[f64] {
        let w = self.width();
        &self.theta[k * w..(k + 1) * w]
    }

    pub(crate) fn component_mut(&mut self, k: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.theta[k * w..(k + 1) * w]
    }

    pub(crate) fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    /// `M = Σ_l (C_l - 1)`.
    pub fn component_dim(&self) -> usize {
        self.categories.iter().map(|c| c - 1).sum()
    }

    /// `C = (K - 1) + K M`.
    pub fn num_params(&self) -> usize {
        num_params(self.k(), self.component_dim())
    }

    /// Number of components with strictly positive weight.
    pub fn nonzero_components(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }

    pub fn check_compatible(&self, data: &CategoricalDataset) -> Result<()> {
        if self.categories != data.categories() {
            return Err(MixError::DimensionMismatch(format!(
                "model categories {:?} vs dataset {:?}",
                self.categories,
                data.categories()
            )));
        }
        if self.trials != data.trials() {
            return Err(MixError::DimensionMismatch(format!(
                "model trials {:?} vs dataset {:?}",
                self.trials,
                data.trials()
            )));
        }
        Ok(())
    }

    /// Removes component `k` and rescales the remaining weights to sum to one.
    pub fn remove_component(&mut self, k: usize) {
        let w = self.width();
        self.alpha.remove(k);
        self.theta.drain(k * w..(k + 1) * w);
        self.normalize_alpha();
    }

    /// Drops every zero-weight component. The surviving weights are left
    /// untouched (their sum does not change).
    pub fn prune(&self) -> Self {
        let keep: Vec<usize> = (0..self.k()).filter(|&k| self.alpha[k] > 0.0).collect();
        Self {
            alpha: keep.iter().map(|&k| self.alpha[k]).collect(),
            theta: keep.iter().flat_map(|&k| self.component(k).iter().copied()).collect(),
            ..self.clone()
        }
    }

    /// Model with components reordered (or subset) by `order`; weights renormalized.
    pub fn select(&self, order: &[usize]) -> Self {
        let mut alpha: Vec<f64> = order.iter().map(|&k| self.alpha[k]).collect();
        let s: f64 = alpha.iter().sum();
        if s > 0.0 {
            alpha.iter_mut().for_each(|a| *a /= s);
        }
        let theta = order.iter().flat_map(|&k| self.component(k).iter().copied()).collect();
        Self {
            categories: self.categories.clone(),
            trials: self.trials.clone(),
            alpha,
            theta,
            offsets: self.offsets.clone(),
        }
    }

    pub(crate) fn normalize_alpha(&mut self) {
        let s: f64 = self.alpha.iter().sum();
        if s > 0.0 {
            self.alpha.iter_mut().for_each(|a| *a /= s);
        }
    }
}

pub fn num_params(k: usize, component_dim: usize) -> usize {
    (k - 1) + k * component_dim
}

/// Posterior membership probabilities, `n × K`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsibilityMatrix {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl ResponsibilityMatrix {
    /// Wraps raw values; rows must already be normalized.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        if k == 0 {
            return Err(MixError::InvalidModel("empty responsibility matrix".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * k);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(MixError::InvalidModel(format!("row {i} has {} columns, expected {k}", r.len())));
            }
            if r.iter().any(|&z| !(0.0..=1.0).contains(&z)) {
                return Err(MixError::InvalidModel(format!("row {i} has entries outside [0, 1]")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(MixError::InvalidModel(format!("row {i} sums to {s}")));
            }
            values.extend_from_slice(r);
        }
        Ok(Self { n: rows.len(), k, values })
    }

    pub(crate) fn from_raw(n: usize, k: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * k);
        Self { n, k, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.k + k]
    }

    /// Weighted column sums `Σ_i w_i z̄_ik`.
    pub fn column_mass(&self, weights: Option<&[f64]>) -> Vec<f64> {
        let mut s = vec![0.0; self.k];
        for i in 0..self.n {
            let w = weights.map_or(1.0, |w| w[i]);
            for (acc, &z) in s.iter_mut().zip(self.row(i)) {
                *acc += w * z;
            }
        }
        s
    }

    /// Soft-assignment entropy `-Σ_i w_i Σ_k z̄_ik ln z̄_ik`.
    pub fn entropy(&self, weights: Option<&[f64]>) -> f64 {
        let mut h = 0.0;
        for i in 0..self.n {
            let w = weights.map_or(1.0, |w| w[i]);
            h -= w * self
                .row(i)
                .iter()
                .filter(|&&z| z > 0.0)
                .map(|&z| z * z.ln())
                .sum::<f64>();
        }
        h
    }
}

/// Result of a classical EM fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: MixtureModel,
    pub responsibilities: ResponsibilityMatrix,
    /// Log-likelihood after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// 0-based argmax component per observation.
    pub hard_assignment: Vec<usize>,
}

impl FitReport {
    pub fn log_likelihood(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}
