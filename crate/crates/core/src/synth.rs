//! Planted multinomial mixtures with controlled separation.

use rand::Rng as _;

use crate::dataset::CategoricalDataset;
use crate::error::{MixError, Result};
use crate::model::MixtureModel;
use crate::rng::{rng_from_seed, Rng};

/// Floor applied to every Dirichlet draw before renormalizing, keeping all
/// divergences finite.
pub const THETA_FLOOR: f64 = 1e-6;

/// Default number of ground-truth draws before giving up.
pub const DEFAULT_BUDGET: usize = 10_000;

/// Kullback-Leibler divergence between components `a` and `b`, summed over variables.
pub fn component_kl(model: &MixtureModel, a: usize, b: usize) -> Result<f64> {
    let mut d = 0.0;
    for l in 0..model.num_vars() {
        for (c, (&p, &q)) in model.theta(a, l).iter().zip(model.theta(b, l)).enumerate() {
            if p == 0.0 {
                continue;
            }
            if q == 0.0 {
                return Err(MixError::InfiniteDivergence {
                    from: a,
                    to: b,
                    var: l,
                    category: c,
                });
            }
            d += p * (p / q).ln();
        }
    }
    Ok(d)
}

/// Average symmetrized KL divergence over all ordered pairs of components:
/// `2/(K(K-1)) Σ_{k≠k'} ½ [D(k;k') + D(k';k)]`.
pub fn separation(model: &MixtureModel) -> Result<f64> {
    let k = model.k();
    if k < 2 {
        return Err(MixError::UndefinedSeparation);
    }
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            if a != b {
                total += 0.5 * (component_kl(model, a, b)? + component_kl(model, b, a)?);
            }
        }
    }
    Ok(2.0 / (k * (k - 1)) as f64 * total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub k_true: usize,
    pub categories: Vec<usize>,
    pub trials: Vec<u32>,
    pub n: usize,
    /// Accepted separation interval `[lo, hi]`.
    pub target_separation: (f64, f64),
    pub alpha_true: Vec<f64>,
    pub seed: u64,
    pub budget: usize,
}

impl GenSpec {
    /// `L` binary single-trial variables with equal mixing weights.
    pub fn binary(k_true: usize, vars: usize, n: usize, target: (f64, f64), seed: u64) -> Self {
        Self {
            k_true,
            categories: vec![2; vars],
            trials: vec![1; vars],
            n,
            target_separation: target,
            alpha_true: vec![1.0 / k_true as f64; k_true],
            seed,
            budget: DEFAULT_BUDGET,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.target_separation;
        if !(lo >= 0.0 && lo <= hi) {
            return Err(MixError::Config(format!("bad separation interval [{lo}, {hi}]")));
        }
        if self.k_true < 1 || self.alpha_true.len() != self.k_true {
            return Err(MixError::Config(format!(
                "K_true = {} but {} mixing weights",
                self.k_true,
                self.alpha_true.len()
            )));
        }
        let s: f64 = self.alpha_true.iter().sum();
        if self.alpha_true.iter().any(|&a| a < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(MixError::Config("mixing weights must be a probability vector".into()));
        }
        if self.categories.len() != self.trials.len() || self.categories.is_empty() {
            return Err(MixError::Config("categories and trials must be non-empty and equal length".into()));
        }
        if self.categories.iter().any(|&c| c < 2) || self.trials.iter().any(|&t| t < 1) {
            return Err(MixError::Config("need C_l >= 2 and n_l >= 1".into()));
        }
        if self.budget == 0 {
            return Err(MixError::Config("rejection budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMixture {
    pub model: MixtureModel,
    /// 0-based true component per observation.
    pub labels: Vec<usize>,
    /// Separation of the planted model; `0` for a single component.
    pub separation: f64,
}

fn dirichlet_flat(rng: &mut Rng, c: usize, out: &mut Vec<f64>) {
    let draws: Vec<f64> = (0..c).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = draws.iter().sum();
    let floored: Vec<f64> = draws.iter().map(|&x| (x / s).max(THETA_FLOOR)).collect();
    let s: f64 = floored.iter().sum();
    out.extend(floored.iter().map(|&x| x / s));
}

fn shrunk(center: &[f64], raw: &[f64], k: usize, t: f64) -> Vec<f64> {
    let w = center.len();
    (0..k * w)
        .map(|j| (1.0 - t) * center[j % w] + t * raw[j])
        .collect()
}

/// Draws a ground-truth model whose separation lies in the target interval.
///
/// Each draw takes a uniform-Dirichlet center and `K` uniform-Dirichlet
/// component vectors, then pulls every component toward the center by a
/// common factor `t ∈ (0, 1]`. Separation grows monotonically in `t`, so the
/// factor is found by bisection; draws that cannot reach the interval are
/// rejected.
fn draw_planted_model(spec: &GenSpec, rng: &mut Rng) -> Result<(MixtureModel, f64)> {
    let (lo, hi) = spec.target_separation;
    let k = spec.k_true;
    let width: usize = spec.categories.iter().sum();
    let build = |theta: Vec<f64>| {
        MixtureModel::from_flat(
            spec.categories.clone(),
            spec.trials.clone(),
            spec.alpha_true.clone(),
            theta,
        )
    };

    if k == 1 {
        let mut theta = Vec::with_capacity(width);
        for &c in &spec.categories {
            dirichlet_flat(rng, c, &mut theta);
        }
        return Ok((build(theta)?, 0.0));
    }

    let mut min_seen = f64::INFINITY;
    let mut max_seen = f64::NEG_INFINITY;
    for _ in 0..spec.budget {
        let mut center = Vec::with_capacity(width);
        for &c in &spec.categories {
            dirichlet_flat(rng, c, &mut center);
        }
        let mut raw = Vec::with_capacity(k * width);
        for _ in 0..k {
            for &c in &spec.categories {
                dirichlet_flat(rng, c, &mut raw);
            }
        }
        let target = lo + (hi - lo) * rng.gen::<f64>();
        let (mut t_lo, mut t_hi) = (0.0f64, 1.0f64);
        let mut t = 1.0;
        for _ in 0..20 {
            let model = build(shrunk(&center, &raw, k, t))?;
            let s = separation(&model)?;
            min_seen = min_seen.min(s);
            max_seen = max_seen.max(s);
            if s >= lo && s <= hi && t > 0.0 {
                return Ok((model, s));
            }
            if t == 1.0 && s < lo {
                break;
            }
            if s > target {
                t_hi = t;
            } else {
                t_lo = t;
            }
            t = 0.5 * (t_lo + t_hi);
        }
    }
    Err(MixError::RejectionBudget {
        budget: spec.budget,
        lo,
        hi,
        min_seen,
        max_seen,
    })
}

fn sample_index(rng: &mut Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed in the rounding gap above the cumulative sum: take the last
    // category with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Samples `n` observations from `model`, returning the dataset and true labels.
pub fn sample_from(model: &MixtureModel, n: usize, rng: &mut Rng) -> Result<(CategoricalDataset, Vec<usize>)> {
    let width = model.width();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = sample_index(rng, model.alpha());
        labels.push(k);
        let mut row = vec![0i64; width];
        let mut off = 0;
        for l in 0..model.num_vars() {
            let probs = model.theta(k, l);
            for _ in 0..model.trials()[l] {
                row[off + sample_index(rng, probs)] += 1;
            }
            off += probs.len();
        }
        rows.push(row);
    }
    let data = CategoricalDataset::new(model.categories().to_vec(), model.trials().to_vec(), &rows, None)?;
    Ok((data, labels))
}

pub fn generate(spec: &GenSpec) -> Result<(CategoricalDataset, PlantedMixture)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let (model, separation) = draw_planted_model(spec, &mut rng)?;
    let (data, labels) = sample_from(&model, spec.n, &mut rng)?;
    Ok((
        data,
        PlantedMixture {
            model,
            labels,
            separation,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    pub component: usize,
    /// Total weight of observations carrying this label.
    pub count: f64,
    /// `None` when no observation carries the label.
    pub max_abs_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub components: Vec<ComponentCheck>,
    pub max_abs_deviation: Option<f64>,
}

/// Per-label category frequencies, `[component][cell]`; rows for labels
/// without observations are all zero.
pub fn frequencies_by_label(data: &CategoricalDataset, labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut sums = vec![vec![0.0; data.width()]; k];
    let mut counts = vec![0.0; k];
    for i in 0..data.n() {
        let w = data.weight(i);
        counts[labels[i]] += w;
        for (s, &y) in sums[labels[i]].iter_mut().zip(data.row(i)) {
            *s += w * y as f64;
        }
    }
    for (comp, &cnt) in sums.iter_mut().zip(&counts) {
        if cnt == 0.0 {
            continue;
        }
        let mut off = 0;
        for (&c, &t) in data.categories().iter().zip(data.trials()) {
            for x in &mut comp[off..off + c] {
                *x /= cnt * t as f64;
            }
            off += c;
        }
    }
    (sums, counts)
}

/// Compares per-label empirical frequencies with the planted θ.
pub fn empirical_check(data: &CategoricalDataset, planted: &PlantedMixture) -> Result<EmpiricalReport> {
    planted.model.check_compatible(data)?;
    if planted.labels.len() != data.n() {
        return Err(MixError::DimensionMismatch(format!(
            "{} labels for {} observations",
            planted.labels.len(),
            data.n()
        )));
    }
    let k = planted.model.k();
    if let Some(&bad) = planted.labels.iter().find(|&&x| x >= k) {
        return Err(MixError::DimensionMismatch(format!("label {bad} out of range for K = {k}")));
    }
    let (freq, counts) = frequencies_by_label(data, &planted.labels, k);
    let components: Vec<ComponentCheck> = (0..k)
        .map(|j| ComponentCheck {
            component: j,
            count: counts[j],
            max_abs_deviation: (counts[j] > 0.0).then(|| {
                freq[j]
                    .iter()
                    .zip(planted.model.component(j))
                    .map(|(f, t)| (f - t).abs())
                    .fold(0.0, f64::max)
            }),
        })
        .collect();
    let max_abs_deviation = components
        .iter()
        .filter_map(|c| c.max_abs_deviation)
        .reduce(f64::max);
    Ok(EmpiricalReport {
        components,
        max_abs_deviation,
    })
}
