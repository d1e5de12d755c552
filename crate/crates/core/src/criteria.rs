//! Penalized-likelihood criteria and sequential selection over a range of K.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CategoricalDataset;
use crate::em::{fit_em, EmConfig, InitSpec};
use crate::error::{MixError, Result};
use crate::model::{FitReport, MixtureModel, ResponsibilityMatrix};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Bic,
    Aic,
    Caic,
    /// AIC with a per-parameter penalty of 3.
    Maic,
    Icl,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Bic,
        Criterion::Aic,
        Criterion::Caic,
        Criterion::Maic,
        Criterion::Icl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Bic => "BIC",
            Criterion::Aic => "AIC",
            Criterion::Caic => "CAIC",
            Criterion::Maic => "MAIC",
            Criterion::Icl => "ICL",
        }
    }

    /// Criterion value from its ingredients. `entropy` only matters for ICL.
    pub fn value(&self, log_likelihood: f64, c_params: usize, n: f64, entropy: f64) -> f64 {
        let c = c_params as f64;
        let dev = -2.0 * log_likelihood;
        match self {
            Criterion::Bic => dev + c * n.ln(),
            Criterion::Aic => dev + 2.0 * c,
            Criterion::Caic => dev + c * (n.ln() + 1.0),
            Criterion::Maic => dev + 3.0 * c,
            Criterion::Icl => dev + c * n.ln() + 2.0 * entropy,
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Criterion {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MixError::Config(format!("unknown criterion '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionScore {
    pub criterion: Criterion,
    pub k: usize,
    pub value: f64,
    pub log_likelihood: f64,
    pub c_params: usize,
}

pub fn score(
    criterion: Criterion,
    data: &CategoricalDataset,
    model: &MixtureModel,
    resp: &ResponsibilityMatrix,
) -> Result<CriterionScore> {
    let ll = crate::em::log_likelihood(data, model)?;
    score_with_ll(criterion, data, model, resp, ll)
}

fn score_with_ll(
    criterion: Criterion,
    data: &CategoricalDataset,
    model: &MixtureModel,
    resp: &ResponsibilityMatrix,
    ll: f64,
) -> Result<CriterionScore> {
    if !ll.is_finite() {
        return Err(MixError::InvalidModel(format!("non-finite log-likelihood {ll}")));
    }
    let entropy = match criterion {
        Criterion::Icl => resp.entropy(data.weights()),
        _ => 0.0,
    };
    let c_params = model.num_params();
    Ok(CriterionScore {
        criterion,
        k: model.k(),
        value: criterion.value(ll, c_params, data.total_weight(), entropy),
        log_likelihood: ll,
        c_params,
    })
}

#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub k_range: std::ops::RangeInclusive<usize>,
    pub restarts: usize,
    pub em: EmConfig,
    pub seed: u64,
    /// Fit the candidate K values on the rayon pool.
    pub parallel: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k_range: 1..=10,
            restarts: 5,
            em: EmConfig::default(),
            seed: 0,
            parallel: false,
        }
    }
}

/// Best-of-restarts classical EM fit for each K. Failed K values are `None`.
#[derive(Debug, Clone)]
pub struct CandidateFits {
    pub fits: Vec<(usize, Option<FitReport>)>,
    pub restarts_used: usize,
}

fn fit_one_k(data: &CategoricalDataset, k: usize, config: &SelectionConfig) -> Option<FitReport> {
    let mut best: Option<FitReport> = None;
    for r in 0..config.restarts {
        let seed = derive_seed(config.seed, &[k as u64, r as u64]);
        match fit_em(data, k, &InitSpec::seeded(seed), &config.em) {
            Ok(fit) => {
                if best.as_ref().map_or(true, |b| fit.log_likelihood() > b.log_likelihood()) {
                    best = Some(fit);
                }
            }
            Err(e) => log::debug!("K={k} restart {r} failed: {e}"),
        }
    }
    if best.is_none() {
        log::warn!("every restart failed for K={k}; skipping");
    }
    best
}

/// Fits every K in the range once; criteria are then compared on the same fits.
pub fn fit_candidates(data: &CategoricalDataset, config: &SelectionConfig) -> Result<CandidateFits> {
    if config.k_range.is_empty() || *config.k_range.start() == 0 {
        return Err(MixError::Config(format!("bad K range {:?}", config.k_range)));
    }
    if config.restarts == 0 {
        return Err(MixError::Config("restarts must be at least 1".into()));
    }
    let ks: Vec<usize> = config.k_range.clone().collect();
    let fits: Vec<(usize, Option<FitReport>)> = if config.parallel {
        ks.par_iter().map(|&k| (k, fit_one_k(data, k, config))).collect()
    } else {
        ks.iter().map(|&k| (k, fit_one_k(data, k, config))).collect()
    };
    if fits.iter().all(|(_, f)| f.is_none()) {
        return Err(MixError::NoCandidate(format!(
            "no K in {:?} produced a fit",
            config.k_range
        )));
    }
    Ok(CandidateFits {
        fits,
        restarts_used: config.restarts,
    })
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub criterion: Criterion,
    pub best_k: usize,
    pub per_k_scores: Vec<CriterionScore>,
    pub per_k_models: Vec<MixtureModel>,
    pub restarts_used: usize,
    pub best: FitReport,
}

impl CandidateFits {
    /// Picks the K minimizing `criterion`; ties go to the smaller K.
    pub fn select(&self, data: &CategoricalDataset, criterion: Criterion) -> Result<SelectionResult> {
        let mut scores = Vec::new();
        let mut models = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        for (idx, (_, fit)) in self.fits.iter().enumerate() {
            let Some(fit) = fit else { continue };
            let s = score_with_ll(criterion, data, &fit.model, &fit.responsibilities, fit.log_likelihood())?;
            if best.map_or(true, |(_, v)| s.value < v) {
                best = Some((idx, s.value));
            }
            scores.push(s);
            models.push(fit.model.clone());
        }
        let (idx, _) = best.ok_or_else(|| MixError::NoCandidate("no fitted candidates".into()))?;
        let (best_k, fit) = &self.fits[idx];
        Ok(SelectionResult {
            criterion,
            best_k: *best_k,
            per_k_scores: scores,
            per_k_models: models,
            restarts_used: self.restarts_used,
            best: fit.clone().expect("selected fit exists"),
        })
    }
}

/// Sequential selection: fit classical EM for each K and keep the criterion minimizer.
pub fn select_by_criterion(
    criterion: Criterion,
    data: &CategoricalDataset,
    config: &SelectionConfig,
) -> Result<SelectionResult> {
    fit_candidates(data, config)?.select(data, criterion)
}
