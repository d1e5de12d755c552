//! EM-MML: estimation and selection of the number of components in one run.
//!
//! The objective is the message length
//!
//! ```text
//! (M/2) Σ_{k: α_k>0} ln(n α_k / 12) + (k_nz/2) ln(n/12) + k_nz (M+1)/2 - ln p(Y | Θ)
//! ```
//!
//! minimized by a component-wise EM whose mixing-weight update subtracts a
//! fixed penalty `M/2` from every responsibility mass and clamps at zero.
//! Components whose weight hits zero are annihilated on the spot. Once the
//! sweeps stop improving the likelihood, the state is scored, the weakest
//! component is forcibly removed, and the procedure restarts from the
//! smaller mixture until `K_min` is reached. The smallest message length seen
//! at a converged state wins.

use serde::Serialize;

use crate::dataset::CategoricalDataset;
use crate::em::{
    argmax_rows, component_log_density, initialize, log_density_columns, log_likelihood, posterior,
    relative_change, update_component_theta, InitSpec,
};
use crate::error::{MixError, Result};
use crate::model::{num_params, MixtureModel, ResponsibilityMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmlConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Relative log-likelihood improvement threshold for the sweep loop.
    pub delta: f64,
    /// Sweep budget per middle loop.
    pub max_inner_iter: usize,
    pub seed: u64,
    pub smoothing: f64,
}

impl Default for MmlConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 25,
            delta: 1e-6,
            max_inner_iter: 500,
            seed: 0,
            smoothing: 0.0,
        }
    }
}

impl MmlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min < 1 {
            return Err(MixError::Config("K_min must be at least 1".into()));
        }
        if self.k_min > self.k_max {
            return Err(MixError::Config(format!(
                "K_min ({}) exceeds K_max ({})",
                self.k_min, self.k_max
            )));
        }
        if !(self.delta > 0.0) {
            return Err(MixError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_inner_iter == 0 {
            return Err(MixError::Config("max_inner_iter must be positive".into()));
        }
        if !(self.smoothing >= 0.0) {
            return Err(MixError::Config("smoothing must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceEvent {
    /// State right after initialization; diagnostic only.
    Initial,
    InnerIteration,
    Annihilation,
    ForcedRemoval,
}

impl TraceEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceEvent::Initial => "initial",
            TraceEvent::InnerIteration => "inner-iteration",
            TraceEvent::Annihilation => "annihilation",
            TraceEvent::ForcedRemoval => "forced-removal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmlTraceEntry {
    pub k_nz: usize,
    pub log_likelihood: f64,
    pub message_length: f64,
    pub event: TraceEvent,
    /// Set on the last sweep of a middle loop; converged endpoints compete for
    /// the minimum.
    pub endpoint: bool,
    /// For endpoints, whether the sweep loop met the δ criterion (false when
    /// the sweep budget ran out).
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct MmlCandidate {
    pub k_nz: usize,
    pub model: MixtureModel,
    pub message_length: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct MmlResult {
    pub best_model: MixtureModel,
    pub best_message_length: f64,
    pub best_log_likelihood: f64,
    pub trace: Vec<MmlTraceEntry>,
    /// Best endpoint for each distinct `k_nz` visited, largest first.
    pub candidate_models: Vec<MmlCandidate>,
    pub responsibilities: ResponsibilityMatrix,
    pub hard_assignment: Vec<usize>,
    /// Total number of sweeps performed.
    pub sweeps: usize,
}

impl MmlResult {
    pub fn selected_k(&self) -> usize {
        self.best_model.k()
    }
}

/// Message length from its ingredients; `alpha` entries equal to zero are skipped.
pub fn message_length_value(n: f64, component_dim: usize, alpha: &[f64], log_likelihood: f64) -> f64 {
    let m = component_dim as f64;
    let k_nz = alpha.iter().filter(|&&a| a > 0.0).count() as f64;
    let weight_term: f64 = alpha
        .iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| (n * a / 12.0).ln())
        .sum();
    0.5 * m * weight_term + 0.5 * k_nz * (n / 12.0).ln() + 0.5 * k_nz * (m + 1.0) - log_likelihood
}

/// Message length (nats) of `model` on `data`. For weighted data `n` is the total weight.
pub fn message_length(data: &CategoricalDataset, model: &MixtureModel) -> Result<f64> {
    let ll = log_likelihood(data, model)?;
    Ok(message_length_value(data.total_weight(), model.component_dim(), model.alpha(), ll))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaUpdate {
    pub alpha: Vec<f64>,
    /// Indices whose weight was clamped to zero.
    pub annihilated: Vec<usize>,
}

/// Penalized mixing-weight update from responsibility masses:
/// `α_k ∝ max{0, mass_k - (C - K + 1) / (2K)}`.
pub fn mml_alpha_update(mass: &[f64], c_params: usize) -> Result<AlphaUpdate> {
    let k = mass.len();
    if k == 0 {
        return Err(MixError::Config("no components".into()));
    }
    let penalty = (c_params as f64 - k as f64 + 1.0) / (2.0 * k as f64);
    let clamped: Vec<f64> = mass.iter().map(|&s| (s - penalty).max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) {
        return Err(MixError::AllAnnihilated { components: k, penalty });
    }
    let annihilated = (0..k).filter(|&j| clamped[j] == 0.0).collect();
    Ok(AlphaUpdate {
        alpha: clamped.iter().map(|&a| a / total).collect(),
        annihilated,
    })
}

/// [`mml_alpha_update`] on the unweighted column sums of `resp`; `K` is the column count.
pub fn m_step_mml_alpha(resp: &ResponsibilityMatrix, c_params: usize) -> Result<AlphaUpdate> {
    mml_alpha_update(&resp.column_mass(None), c_params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnihilationEvent {
    /// Index of the removed component in the model as it stood before the sweep.
    pub original_index: usize,
    /// Mixing weights of the survivors right after removal.
    pub alpha_after: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub annihilations: Vec<AnnihilationEvent>,
}

/// Mutable EM-MML state: the surviving components and cached per-component
/// log densities, plus the responsibilities they imply.
struct Engine<'a> {
    data: &'a CategoricalDataset,
    model: MixtureModel,
    columns: Vec<Vec<f64>>,
    resp: ResponsibilityMatrix,
    ll: f64,
    /// Position of each surviving component in the initial model.
    ids: Vec<usize>,
    k_min: usize,
    smoothing: f64,
}

impl<'a> Engine<'a> {
    fn new(data: &'a CategoricalDataset, model: MixtureModel, k_min: usize, smoothing: f64) -> Result<Self> {
        model.check_compatible(data)?;
        let columns = log_density_columns(data, &model);
        let (resp, ll) = posterior(data, model.alpha(), &columns)?;
        let ids = (0..model.k()).collect();
        Ok(Self {
            data,
            model,
            columns,
            resp,
            ll,
            ids,
            k_min,
            smoothing,
        })
    }

    fn with_resp(
        data: &'a CategoricalDataset,
        model: MixtureModel,
        resp: ResponsibilityMatrix,
        k_min: usize,
        smoothing: f64,
    ) -> Result<Self> {
        let mut engine = Self::new(data, model, k_min, smoothing)?;
        if resp.n() != data.n() || resp.k() != engine.model.k() {
            return Err(MixError::DimensionMismatch(format!(
                "responsibilities are {}x{}, expected {}x{}",
                resp.n(),
                resp.k(),
                data.n(),
                engine.model.k()
            )));
        }
        engine.resp = resp;
        Ok(engine)
    }

    fn k(&self) -> usize {
        self.model.k()
    }

    fn message_length(&self) -> f64 {
        message_length_value(
            self.data.total_weight(),
            self.model.component_dim(),
            self.model.alpha(),
            self.ll,
        )
    }

    fn refresh_posterior(&mut self) -> Result<()> {
        let (resp, ll) = posterior(self.data, self.model.alpha(), &self.columns)?;
        self.resp = resp;
        self.ll = ll;
        Ok(())
    }

    fn remove(&mut self, pos: usize) {
        self.model.remove_component(pos);
        self.columns.remove(pos);
        self.ids.remove(pos);
    }

    /// One descending pass over the surviving components. At each turn the
    /// penalized weights are recomputed from the current responsibilities,
    /// zero-weight components are removed, the visited component's θ takes its
    /// weighted ML value, and the E-step is redone.
    fn sweep(&mut self) -> Result<SweepOutcome> {
        let mut outcome = SweepOutcome::default();
        let order: Vec<usize> = self.ids.iter().rev().copied().collect();
        let width = self.data.width();
        let mut theta_buf = vec![0.0; width];
        for id in order {
            let Some(pos) = self.ids.iter().position(|&x| x == id) else {
                continue;
            };
            let k = self.k();
            let mass = self.resp.column_mass(self.data.weights());
            let c_params = num_params(k, self.model.component_dim());
            let update = mml_alpha_update(&mass, c_params)?;

            let theta_mass =
                update_component_theta(self.data, &self.resp, pos, self.smoothing, &mut theta_buf);

            let survivors = k - update.annihilated.len();
            let removed: Vec<usize> = if survivors >= self.k_min {
                self.model.alpha_mut().copy_from_slice(&update.alpha);
                update.annihilated.clone()
            } else {
                // Clamping would leave fewer than K_min components: fall back
                // to the unpenalized weights for this turn.
                let total: f64 = mass.iter().sum();
                for (a, &s) in self.model.alpha_mut().iter_mut().zip(&mass) {
                    *a = s / total;
                }
                (0..k).filter(|&j| mass[j] == 0.0).take(k - self.k_min).collect()
            };

            let visited_survives = !removed.contains(&pos);
            if visited_survives && theta_mass > 0.0 {
                self.model.component_mut(pos).copy_from_slice(&theta_buf);
                self.columns[pos] = component_log_density(self.data, &theta_buf);
            }
            for &j in removed.iter().rev() {
                let original_index = self.ids[j];
                self.remove(j);
                outcome.annihilations.push(AnnihilationEvent {
                    original_index,
                    alpha_after: self.model.alpha().to_vec(),
                });
            }
            self.model.normalize_alpha();
            self.refresh_posterior()?;
        }
        Ok(outcome)
    }
}

/// One component-wise sweep starting from `model` with responsibilities
/// `resp`. Returns the updated model, its responsibilities, and what was
/// annihilated along the way.
pub fn component_annihilation_sweep(
    model: &MixtureModel,
    resp: &ResponsibilityMatrix,
    data: &CategoricalDataset,
) -> Result<(MixtureModel, ResponsibilityMatrix, SweepOutcome)> {
    let mut engine = Engine::with_resp(data, model.clone(), resp.clone(), 1, 0.0)?;
    let outcome = engine.sweep()?;
    Ok((engine.model, engine.resp, outcome))
}

/// Runs the full EM-MML procedure from a perturbed-empirical initialization
/// with `K_max` components.
pub fn fit_em_mml(data: &CategoricalDataset, config: &MmlConfig) -> Result<MmlResult> {
    config.validate()?;
    let init = initialize(data, config.k_max, &InitSpec::seeded(config.seed))?;
    fit_em_mml_from(data, init, config)
}

/// EM-MML from a caller-supplied initial mixture (its size plays the role of `K_max`).
pub fn fit_em_mml_from(data: &CategoricalDataset, init: MixtureModel, config: &MmlConfig) -> Result<MmlResult> {
    config.validate()?;
    if init.k() < config.k_min {
        return Err(MixError::Config(format!(
            "initial model has {} components, fewer than K_min = {}",
            init.k(),
            config.k_min
        )));
    }
    let mut engine = Engine::new(data, init.prune(), config.k_min, config.smoothing)?;
    let mut trace = vec![MmlTraceEntry {
        k_nz: engine.k(),
        log_likelihood: engine.ll,
        message_length: engine.message_length(),
        event: TraceEvent::Initial,
        endpoint: false,
        converged: false,
    }];

    let mut best: Option<(MixtureModel, f64, f64)> = None;
    let mut best_unconverged: Option<(MixtureModel, f64, f64)> = None;
    let mut candidates: Vec<MmlCandidate> = Vec::new();
    let mut sweeps = 0;

    loop {
        let mut prev_ll = engine.ll;
        let mut converged = false;
        for _ in 0..config.max_inner_iter {
            let outcome = engine.sweep()?;
            sweeps += 1;
            for _ in &outcome.annihilations {
                log::debug!("annihilation, k_nz now {}", engine.k());
            }
            if !outcome.annihilations.is_empty() {
                trace.push(MmlTraceEntry {
                    k_nz: engine.k(),
                    log_likelihood: engine.ll,
                    message_length: engine.message_length(),
                    event: TraceEvent::Annihilation,
                    endpoint: false,
                    converged: false,
                });
            }
            trace.push(MmlTraceEntry {
                k_nz: engine.k(),
                log_likelihood: engine.ll,
                message_length: engine.message_length(),
                event: TraceEvent::InnerIteration,
                endpoint: false,
                converged: false,
            });
            let change = relative_change(prev_ll, engine.ll);
            prev_ll = engine.ll;
            if outcome.annihilations.is_empty() && change < config.delta {
                converged = true;
                break;
            }
        }
        let last = trace.last_mut().expect("at least one sweep");
        last.endpoint = true;
        last.converged = converged;
        if !converged {
            log::warn!(
                "sweep loop did not converge within {} sweeps at k_nz = {}",
                config.max_inner_iter,
                engine.k()
            );
        }

        let ml = engine.message_length();
        let slot = if converged { &mut best } else { &mut best_unconverged };
        if slot.as_ref().map_or(true, |(_, b, _)| ml < *b) {
            *slot = Some((engine.model.clone(), ml, engine.ll));
        }
        match candidates.iter_mut().find(|c| c.k_nz == engine.k()) {
            Some(c) if ml < c.message_length => {
                c.model = engine.model.clone();
                c.message_length = ml;
                c.log_likelihood = engine.ll;
            }
            Some(_) => {}
            None => candidates.push(MmlCandidate {
                k_nz: engine.k(),
                model: engine.model.clone(),
                message_length: ml,
                log_likelihood: engine.ll,
            }),
        }

        if engine.k() <= config.k_min {
            break;
        }
        let alpha = engine.model.alpha();
        let weakest = (0..alpha.len())
            .min_by(|&a, &b| alpha[a].total_cmp(&alpha[b]))
            .expect("non-empty");
        engine.remove(weakest);
        engine.refresh_posterior()?;
        trace.push(MmlTraceEntry {
            k_nz: engine.k(),
            log_likelihood: engine.ll,
            message_length: engine.message_length(),
            event: TraceEvent::ForcedRemoval,
            endpoint: false,
            converged: false,
        });
    }

    if best.is_none() {
        log::warn!("no sweep loop converged; reporting the best unconverged state");
    }
    let (best_model, best_message_length, best_log_likelihood) =
        best.or(best_unconverged).expect("at least one endpoint");
    let columns = log_density_columns(data, &best_model);
    let (responsibilities, _) = posterior(data, best_model.alpha(), &columns)?;
    let hard_assignment = argmax_rows(&responsibilities);
    Ok(MmlResult {
        best_model,
        best_message_length,
        best_log_likelihood,
        trace,
        candidate_models: candidates,
        responsibilities,
        hard_assignment,
        sweeps,
    })
}
