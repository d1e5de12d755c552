//! Log-likelihood, E and M steps, and the classical EM loop.

use rand::Rng as _;

use crate::dataset::CategoricalDataset;
use crate::error::{MixError, Result};
use crate::model::{FitReport, MixtureModel, ResponsibilityMatrix};
use crate::rng::rng_from_seed;

/// How initial components are drawn around the empirical distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub seed: u64,
    /// Each empirical frequency is multiplied by a factor drawn uniformly
    /// from this range before renormalizing.
    pub perturbation: (f64, f64),
}

impl InitSpec {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            perturbation: (0.5, 1.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Relative log-likelihood improvement below which iteration stops.
    pub delta: f64,
    pub max_iter: usize,
    /// Laplace pseudo-count added to every category in the θ update.
    pub smoothing: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_iter: 500,
            smoothing: 0.0,
        }
    }
}

/// `|cur - prev| / (|prev| + 1e-10)`.
pub fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / (prev.abs() + 1e-10)
}

/// Weighted per-variable category frequencies, concatenated over variables.
pub fn empirical_frequencies(data: &CategoricalDataset) -> Vec<f64> {
    let mut freq = vec![0.0; data.width()];
    for i in 0..data.n() {
        let w = data.weight(i);
        for (f, &y) in freq.iter_mut().zip(data.row(i)) {
            *f += w * y as f64;
        }
    }
    let total = data.total_weight();
    for (l, &off) in data.offsets().iter().enumerate() {
        let denom = total * data.trials()[l] as f64;
        for f in &mut freq[off..off + data.categories()[l]] {
            *f /= denom;
        }
    }
    freq
}

/// Draws `k` components by perturbing the empirical distribution; weights are uniform.
pub fn initialize(data: &CategoricalDataset, k: usize, init: &InitSpec) -> Result<MixtureModel> {
    if k == 0 {
        return Err(MixError::Config("K must be at least 1".into()));
    }
    let (lo, hi) = init.perturbation;
    if !(0.0 < lo && lo <= hi) {
        return Err(MixError::Config(format!("bad perturbation range [{lo}, {hi}]")));
    }
    let freq = empirical_frequencies(data);
    let mut rng = rng_from_seed(init.seed);
    let mut theta = Vec::with_capacity(k * data.width());
    for _ in 0..k {
        for (l, &off) in data.offsets().iter().enumerate() {
            let cells = &freq[off..off + data.categories()[l]];
            let raw: Vec<f64> = cells
                .iter()
                .map(|&f| f * if hi > lo { rng.gen_range(lo..hi) } else { lo })
                .collect();
            let s: f64 = raw.iter().sum();
            theta.extend(raw.iter().map(|&x| x / s));
        }
    }
    MixtureModel::from_flat(
        data.categories().to_vec(),
        data.trials().to_vec(),
        vec![1.0 / k as f64; k],
        theta,
    )
}

/// `ln f(y_i | θ_k)` for every observation, multinomial coefficients included.
pub(crate) fn component_log_density(data: &CategoricalDataset, theta_k: &[f64]) -> Vec<f64> {
    let log_theta: Vec<f64> = theta_k.iter().map(|&t| t.ln()).collect();
    (0..data.n())
        .map(|i| {
            data.nonzero(i)
                .iter()
                .fold(data.log_coefficient(i), |s, &(cell, y)| s + y * log_theta[cell])
        })
        .collect()
}

/// Column-per-component log densities.
pub(crate) fn log_density_columns(data: &CategoricalDataset, model: &MixtureModel) -> Vec<Vec<f64>> {
    (0..model.k())
        .map(|k| component_log_density(data, model.component(k)))
        .collect()
}

/// Normalizes `ln α_k + ln f_ik` row-wise with max-subtraction. Returns the
/// responsibilities and the weighted log-likelihood.
pub(crate) fn posterior(
    data: &CategoricalDataset,
    alpha: &[f64],
    columns: &[Vec<f64>],
) -> Result<(ResponsibilityMatrix, f64)> {
    let n = data.n();
    let k = alpha.len();
    let log_alpha: Vec<f64> = alpha.iter().map(|&a| a.ln()).collect();
    let mut values = vec![0.0; n * k];
    let mut ll = 0.0;
    for i in 0..n {
        let row = &mut values[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for (j, r) in row.iter_mut().enumerate() {
            *r = log_alpha[j] + columns[j][i];
            if *r > max {
                max = *r;
            }
        }
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(MixError::DegenerateLikelihood { obs: i });
        }
        let mut s = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            s += *r;
        }
        for r in row.iter_mut() {
            *r /= s;
        }
        ll += data.weight(i) * (max + s.ln());
    }
    Ok((ResponsibilityMatrix::from_raw(n, k, values), ll))
}

/// Observed-data log-likelihood in nats (weighted by observation weights).
pub fn log_likelihood(data: &CategoricalDataset, model: &MixtureModel) -> Result<f64> {
    model.check_compatible(data)?;
    let columns = log_density_columns(data, model);
    posterior(data, model.alpha(), &columns).map(|(_, ll)| ll)
}

pub fn e_step(data: &CategoricalDataset, model: &MixtureModel) -> Result<ResponsibilityMatrix> {
    model.check_compatible(data)?;
    let columns = log_density_columns(data, model);
    posterior(data, model.alpha(), &columns).map(|(r, _)| r)
}

/// Weighted ML update of one component's θ from responsibility column `col`,
/// with optional Laplace pseudo-count. Returns the column mass `Σ_i w_i z̄_ik`.
pub(crate) fn update_component_theta(
    data: &CategoricalDataset,
    resp: &ResponsibilityMatrix,
    col: usize,
    smoothing: f64,
    out: &mut [f64],
) -> f64 {
    out.iter_mut().for_each(|x| *x = 0.0);
    let mut mass = 0.0;
    for i in 0..data.n() {
        let z = data.weight(i) * resp.get(i, col);
        if z == 0.0 {
            continue;
        }
        mass += z;
        for &(cell, y) in data.nonzero(i) {
            out[cell] += z * y;
        }
    }
    for (l, &off) in data.offsets().iter().enumerate() {
        let c = data.categories()[l];
        let cells = &mut out[off..off + c];
        let denom = data.trials()[l] as f64 * mass + c as f64 * smoothing;
        for x in cells.iter_mut() {
            *x = (*x + smoothing) / denom;
        }
        // absorb rounding so each block is a simplex to machine precision
        let s: f64 = cells.iter().sum();
        if s > 0.0 {
            cells.iter_mut().for_each(|x| *x /= s);
        }
    }
    mass
}

pub fn m_step_ml(data: &CategoricalDataset, resp: &ResponsibilityMatrix) -> Result<MixtureModel> {
    m_step_ml_smoothed(data, resp, 0.0)
}

pub fn m_step_ml_smoothed(
    data: &CategoricalDataset,
    resp: &ResponsibilityMatrix,
    smoothing: f64,
) -> Result<MixtureModel> {
    if resp.n() != data.n() {
        return Err(MixError::DimensionMismatch(format!(
            "{} responsibility rows for {} observations",
            resp.n(),
            data.n()
        )));
    }
    let k = resp.k();
    let width = data.width();
    let mut theta = vec![0.0; k * width];
    let mut alpha = Vec::with_capacity(k);
    for col in 0..k {
        let mass = update_component_theta(data, resp, col, smoothing, &mut theta[col * width..(col + 1) * width]);
        if mass <= 0.0 {
            return Err(MixError::EmptyComponent { component: col });
        }
        alpha.push(mass);
    }
    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);
    MixtureModel::from_flat(data.categories().to_vec(), data.trials().to_vec(), alpha, theta)
}

pub(crate) fn argmax_rows(resp: &ResponsibilityMatrix) -> Vec<usize> {
    (0..resp.n())
        .map(|i| {
            let row = resp.row(i);
            let mut best = 0;
            for (k, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Classical EM from a perturbed-empirical initialization.
pub fn fit_em(data: &CategoricalDataset, k: usize, init: &InitSpec, config: &EmConfig) -> Result<FitReport> {
    let model = initialize(data, k, init)?;
    fit_em_from(data, model, config)
}

/// Classical EM starting from a given model.
pub fn fit_em_from(data: &CategoricalDataset, mut model: MixtureModel, config: &EmConfig) -> Result<FitReport> {
    if !(config.delta > 0.0) {
        return Err(MixError::Config(format!("delta must be positive, got {}", config.delta)));
    }
    model.check_compatible(data)?;
    let columns = log_density_columns(data, &model);
    let (mut resp, mut ll) = posterior(data, model.alpha(), &columns)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        model = m_step_ml_smoothed(data, &resp, config.smoothing)?;
        let columns = log_density_columns(data, &model);
        let (r, next) = posterior(data, model.alpha(), &columns)?;
        resp = r;
        iterations += 1;
        trace.push(next);
        let change = relative_change(ll, next);
        ll = next;
        if change < config.delta {
            converged = true;
            break;
        }
    }
    let hard_assignment = argmax_rows(&resp);
    Ok(FitReport {
        model,
        responsibilities: resp,
        objective_trace: trace,
        iterations,
        converged,
        hard_assignment,
    })
}
