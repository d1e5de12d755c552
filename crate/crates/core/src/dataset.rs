//! Categorical observations stored as per-variable category-count vectors.
//!
//! Each observation `i` carries, for every variable `l`, a vector of `C_l`
//! counts `y_ilc` summing to the variable's trial count `n_l`. Single-trial
//! data (`n_l = 1`) is the common one-hot case.

use crate::error::{MixError, Result};

/// Unvalidated observation table. Counts are signed so that negative input can
/// be reported rather than silently wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub categories: Vec<usize>,
    pub trials: Vec<u32>,
    /// One entry per observation, each of length `Σ_l C_l`.
    pub rows: Vec<Vec<i64>>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDataset {
    categories: Vec<usize>,
    trials: Vec<u32>,
    offsets: Vec<usize>,
    width: usize,
    counts: Vec<u32>,
    weights: Option<Vec<f64>>,
    log_coef: Vec<f64>,
    /// Non-zero cells per observation as `(cell, count)`, rows delimited by `nz_start`.
    nz: Vec<(usize, f64)>,
    nz_start: Vec<usize>,
}

/// Raised (non-fatally) when the smallest trial count cannot identify a
/// mixture with `k_max` components.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityWarning {
    pub min_trials: u32,
    pub k_max: usize,
}

impl std::fmt::Display for IdentifiabilityWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "minimum trial count {} is below 2*K-1 = {} for K = {}; mixture may not be identifiable",
            self.min_trials,
            2 * self.k_max - 1,
            self.k_max
        )
    }
}

#[derive(Debug, Clone)]
pub struct Validated {
    pub dataset: CategoricalDataset,
    pub warning: Option<IdentifiabilityWarning>,
}

/// Validates a raw table. When `k_max` is given, the identifiability
/// condition `min_l n_l >= 2 k_max - 1` is checked and reported as a warning.
pub fn validate_dataset(raw: &RawTable, k_max: Option<usize>) -> Result<Validated> {
    let dataset = CategoricalDataset::new(
        raw.categories.clone(),
        raw.trials.clone(),
        &raw.rows,
        raw.weights.clone(),
    )?;
    let warning = k_max.and_then(|k| dataset.identifiability_warning(k));
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(Validated { dataset, warning })
}

pub(crate) fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

impl CategoricalDataset {
    pub fn new(
        categories: Vec<usize>,
        trials: Vec<u32>,
        rows: &[Vec<i64>],
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        if categories.is_empty() {
            return Err(MixError::InvalidDataset("no variables".into()));
        }
        if categories.len() != trials.len() {
            return Err(MixError::InvalidDataset(format!(
                "{} category counts but {} trial counts",
                categories.len(),
                trials.len()
            )));
        }
        for (l, (&c, &t)) in categories.iter().zip(&trials).enumerate() {
            if c < 2 {
                return Err(MixError::InvalidDataset(format!(
                    "variable {l} has {c} categories; at least 2 required"
                )));
            }
            if t < 1 {
                return Err(MixError::InvalidDataset(format!("variable {l} has zero trials")));
            }
        }
        let mut offsets = Vec::with_capacity(categories.len());
        let mut width = 0;
        for &c in &categories {
            offsets.push(width);
            width += c;
        }
        if let Some(w) = &weights {
            if w.len() != rows.len() {
                return Err(MixError::InvalidDataset(format!(
                    "{} weights for {} observations",
                    w.len(),
                    rows.len()
                )));
            }
            if let Some(i) = w.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(MixError::InvalidDataset(format!(
                    "observation {i} has non-positive weight {}",
                    w[i]
                )));
            }
        }

        let mut counts = Vec::with_capacity(rows.len() * width);
        let mut log_coef = Vec::with_capacity(rows.len());
        let mut nz = Vec::new();
        let mut nz_start = vec![0];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(MixError::InvalidDataset(format!(
                    "observation {i} has {} count cells, expected {width}",
                    row.len()
                )));
            }
            let mut coef = 0.0;
            for (l, (&off, &c)) in offsets.iter().zip(&categories).enumerate() {
                let cells = &row[off..off + c];
                if let Some(&value) = cells.iter().find(|&&v| v < 0) {
                    return Err(MixError::NegativeCount { obs: i, var: l, value });
                }
                let sum: i64 = cells.iter().sum();
                if sum != trials[l] as i64 {
                    return Err(MixError::RowSum {
                        obs: i,
                        var: l,
                        sum,
                        expected: trials[l],
                    });
                }
                coef += ln_factorial(trials[l]);
                for (j, &v) in cells.iter().enumerate() {
                    coef -= ln_factorial(v as u32);
                    counts.push(v as u32);
                    if v > 0 {
                        nz.push((off + j, v as f64));
                    }
                }
            }
            log_coef.push(coef);
            nz_start.push(nz.len());
        }

        Ok(Self {
            categories,
            trials,
            offsets,
            width,
            counts,
            weights,
            log_coef,
            nz,
            nz_start,
        })
    }

    /// Single-trial data from 0-based category indices, one row per observation.
    pub fn from_categorical(categories: Vec<usize>, values: &[Vec<usize>]) -> Result<Self> {
        let width: usize = categories.iter().sum();
        let mut rows = Vec::with_capacity(values.len());
        for (i, obs) in values.iter().enumerate() {
            if obs.len() != categories.len() {
                return Err(MixError::InvalidDataset(format!(
                    "observation {i} has {} values, expected {}",
                    obs.len(),
                    categories.len()
                )));
            }
            let mut row = vec![0i64; width];
            let mut off = 0;
            for (l, (&v, &c)) in obs.iter().zip(&categories).enumerate() {
                if v >= c {
                    return Err(MixError::InvalidDataset(format!(
                        "observation {i}, variable {l}: category {v} out of range 0..{c}"
                    )));
                }
                row[off + v] = 1;
                off += c;
            }
            rows.push(row);
        }
        let trials = vec![1; categories.len()];
        Self::new(categories, trials, &rows, None)
    }

    pub fn n(&self) -> usize {
        self.log_coef.len()
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

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Total number of count cells per observation, `Σ_l C_l`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Per-component free-parameter dimension `M = Σ_l (C_l - 1)`.
    pub fn component_dim(&self) -> usize {
        self.categories.iter().map(|c| c - 1).sum()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.counts[i * self.width..(i + 1) * self.width]
    }

    /// Non-zero `(cell, count)` pairs of observation `i`.
    #[inline]
    pub(crate) fn nonzero(&self, i: usize) -> &[(usize, f64)] {
        &self.nz[self.nz_start[i]..self.nz_start[i + 1]]
    }

    pub fn counts(&self, i: usize, l: usize) -> &[u32] {
        let off = self.offsets[l];
        &self.row(i)[off..off + self.categories[l]]
    }

    /// `ln n_l! - Σ_c ln y_ilc!` summed over variables.
    pub fn log_coefficient(&self, i: usize) -> f64 {
        self.log_coef[i]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Effective sample size: `n`, or the total weight for weighted data.
    pub fn total_weight(&self) -> f64 {
        match &self.weights {
            Some(w) => w.iter().sum(),
            None => self.n() as f64,
        }
    }

    /// For single-trial variables, the observed category of `(i, l)`.
    pub fn category_of(&self, i: usize, l: usize) -> Option<usize> {
        let cells = self.counts(i, l);
        if self.trials[l] == 1 {
            cells.iter().position(|&v| v == 1)
        } else {
            None
        }
    }

    pub fn identifiability_warning(&self, k_max: usize) -> Option<IdentifiabilityWarning> {
        let min_trials = *self.trials.iter().min().expect("at least one variable");
        (k_max >= 1 && (min_trials as usize) < 2 * k_max - 1).then_some(IdentifiabilityWarning {
            min_trials,
            k_max,
        })
    }

    /// Drops the weight column, replicating each row `weight` times. Weights
    /// must be positive integers.
    pub fn replicate_by_weights(&self) -> Result<Self> {
        let Some(weights) = &self.weights else {
            return Ok(self.clone());
        };
        let mut rows = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            let times = w.round();
            if (w - times).abs() > 1e-9 || times < 1.0 {
                return Err(MixError::InvalidDataset(format!(
                    "observation {i}: replicate mode needs integer weights, got {w}"
                )));
            }
            let row: Vec<i64> = self.row(i).iter().map(|&v| v as i64).collect();
            for _ in 0..times as usize {
                rows.push(row.clone());
            }
        }
        Self::new(self.categories.clone(), self.trials.clone(), &rows, None)
    }

    /// Returns the raw table this dataset was built from.
    pub fn to_raw(&self) -> RawTable {
        RawTable {
            categories: self.categories.clone(),
            trials: self.trials.clone(),
            rows: (0..self.n())
                .map(|i| self.row(i).iter().map(|&v| v as i64).collect())
                .collect(),
            weights: self.weights.clone(),
        }
    }

    /// Keeps only the listed observations, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<i64>> = idx
            .iter()
            .map(|&i| self.row(i).iter().map(|&v| v as i64).collect())
            .collect();
        let weights = self.weights.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect());
        Self::new(self.categories.clone(), self.trials.clone(), &rows, weights)
    }
}
