//! Evaluation: hard assignment, Cramér's V profiling, selection-rate
//! experiments and paired timing.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{fit_candidates, Criterion, SelectionConfig};
use crate::dataset::CategoricalDataset;
use crate::em::{argmax_rows, EmConfig};
use crate::error::{MixError, Result};
use crate::mml::{fit_em_mml, MmlConfig};
use crate::model::ResponsibilityMatrix;
use crate::rng::derive_seed;
use crate::synth::{generate, GenSpec};

/// 0-based argmax label per row; ties go to the smallest index.
pub fn hard_assign(resp: &ResponsibilityMatrix) -> Vec<usize> {
    argmax_rows(resp)
}

/// Cramér's V of a contingency table (rows: clusters, columns: categories).
/// All-zero rows and columns are dropped first.
pub fn cramers_v_table(table: &[Vec<f64>]) -> Result<f64> {
    let cols = table.first().map_or(0, |r| r.len());
    if table.iter().any(|r| r.len() != cols) {
        return Err(MixError::UndefinedAssociation("ragged contingency table".into()));
    }
    if table.iter().flatten().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(MixError::UndefinedAssociation("negative or non-finite cell".into()));
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let rows_kept: Vec<usize> = (0..table.len()).filter(|&i| row_sums[i] > 0.0).collect();
    let cols_kept: Vec<usize> = (0..cols).filter(|&j| col_sums[j] > 0.0).collect();
    let (r, c) = (rows_kept.len(), cols_kept.len());
    if r < 2 || c < 2 {
        return Err(MixError::UndefinedAssociation(format!(
            "table reduces to {r} x {c}; need at least 2 x 2"
        )));
    }
    let n: f64 = row_sums.iter().sum();
    let mut chi2 = 0.0;
    for &i in &rows_kept {
        for &j in &cols_kept {
            let expected = row_sums[i] * col_sums[j] / n;
            let d = table[i][j] - expected;
            chi2 += d * d / expected;
        }
    }
    let v = (chi2 / (n * (r.min(c) - 1) as f64)).sqrt();
    Ok(v.min(1.0))
}

/// Cramér's V between cluster labels and a categorical variable.
pub fn cramers_v(labels: &[usize], values: &[usize]) -> Result<f64> {
    if labels.len() != values.len() {
        return Err(MixError::UndefinedAssociation(format!(
            "{} labels but {} values",
            labels.len(),
            values.len()
        )));
    }
    let rows = labels.iter().max().map_or(0, |m| m + 1);
    let cols = values.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0.0; cols]; rows];
    for (&a, &b) in labels.iter().zip(values) {
        table[a][b] += 1.0;
    }
    cramers_v_table(&table)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationProfile {
    /// Per variable; `None` when the table is degenerate.
    pub per_variable: Vec<Option<f64>>,
    pub sum_v: f64,
}

/// Cramér's V of every variable against `labels`. Multi-trial variables
/// contribute each category count to its cell; observation weights scale the
/// contributions.
pub fn association_profile(data: &CategoricalDataset, labels: &[usize]) -> Result<AssociationProfile> {
    if labels.len() != data.n() {
        return Err(MixError::DimensionMismatch(format!(
            "{} labels for {} observations",
            labels.len(),
            data.n()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let per_variable: Vec<Option<f64>> = (0..data.num_vars())
        .map(|l| {
            let mut table = vec![vec![0.0; data.categories()[l]]; k];
            for (i, &lab) in labels.iter().enumerate() {
                let w = data.weight(i);
                for (cell, &y) in table[lab].iter_mut().zip(data.counts(i, l)) {
                    *cell += w * y as f64;
                }
            }
            cramers_v_table(&table).ok()
        })
        .collect();
    let sum_v = per_variable.iter().flatten().sum();
    Ok(AssociationProfile { per_variable, sum_v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    #[serde(rename = "EM-MML")]
    EmMml,
    #[serde(untagged)]
    Criterion(Criterion),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::EmMml,
        Method::Criterion(Criterion::Bic),
        Method::Criterion(Criterion::Aic),
        Method::Criterion(Criterion::Caic),
        Method::Criterion(Criterion::Maic),
        Method::Criterion(Criterion::Icl),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::EmMml => "EM-MML",
            Method::Criterion(c) => c.name(),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("em-mml") || t.eq_ignore_ascii_case("mml") {
            Ok(Method::EmMml)
        } else {
            t.parse().map(Method::Criterion)
        }
    }
}

/// Fitting settings shared by every method in an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub delta: f64,
    pub max_iter: usize,
    pub smoothing: f64,
    /// Run (scenario, run) jobs on the rayon pool.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 10,
            restarts: 5,
            delta: 1e-6,
            max_iter: 500,
            smoothing: 0.0,
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    fn mml(&self, seed: u64) -> MmlConfig {
        MmlConfig {
            k_min: self.k_min,
            k_max: self.k_max,
            delta: self.delta,
            max_inner_iter: self.max_iter,
            seed,
            smoothing: self.smoothing,
        }
    }

    fn selection(&self, seed: u64) -> SelectionConfig {
        SelectionConfig {
            k_range: self.k_min..=self.k_max,
            restarts: self.restarts,
            em: EmConfig {
                delta: self.delta,
                max_iter: self.max_iter,
                smoothing: self.smoothing,
            },
            seed,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub scenario: usize,
    pub run: usize,
    pub method: Method,
    pub selected_k: usize,
    pub true_k: usize,
    pub separation: f64,
    /// Wall time of the fit(s) behind this selection. Information criteria
    /// share one set of candidate fits, so they report the same time.
    pub wall_time_ms: f64,
    pub seed: u64,
}

impl ExperimentResult {
    pub fn correct(&self) -> bool {
        self.selected_k == self.true_k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub scenario: usize,
    pub run: usize,
    /// `None` when data generation itself failed.
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRate {
    pub scenario: usize,
    pub method: Method,
    pub true_k: usize,
    pub runs: usize,
    pub correct: usize,
    pub failed: usize,
    pub rate: f64,
    pub mean_separation: f64,
}

/// Seed of the generated dataset for one (scenario, run).
pub fn run_seed(master: u64, scenario: usize, run: usize) -> u64 {
    derive_seed(master, &[scenario as u64, run as u64])
}

fn run_once(
    scenario_idx: usize,
    scenario: &GenSpec,
    run: usize,
    methods: &[Method],
    master_seed: u64,
    config: &ExperimentConfig,
) -> ExperimentOutput {
    let mut out = ExperimentOutput::default();
    let seed = run_seed(master_seed, scenario_idx, run);
    let spec = GenSpec {
        seed,
        ..scenario.clone()
    };
    let (data, planted) = match generate(&spec) {
        Ok(x) => x,
        Err(e) => {
            out.failures.push(RunFailure {
                scenario: scenario_idx,
                run,
                method: None,
                message: e.to_string(),
            });
            return out;
        }
    };
    let fit_seed = derive_seed(seed, &[1]);
    let record = |method: Method, selected_k: usize, wall_time_ms: f64| ExperimentResult {
        scenario: scenario_idx,
        run,
        method,
        selected_k,
        true_k: scenario.k_true,
        separation: planted.separation,
        wall_time_ms,
        seed,
    };

    for &method in methods {
        if method == Method::EmMml {
            let start = Instant::now();
            match fit_em_mml(&data, &config.mml(fit_seed)) {
                Ok(r) => out
                    .results
                    .push(record(method, r.selected_k(), start.elapsed().as_secs_f64() * 1e3)),
                Err(e) => out.failures.push(RunFailure {
                    scenario: scenario_idx,
                    run,
                    method: Some(method),
                    message: e.to_string(),
                }),
            }
        }
    }

    let criteria: Vec<Criterion> = methods
        .iter()
        .filter_map(|m| match m {
            Method::Criterion(c) => Some(*c),
            Method::EmMml => None,
        })
        .collect();
    if !criteria.is_empty() {
        let start = Instant::now();
        let fits = fit_candidates(&data, &config.selection(fit_seed));
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        for c in criteria {
            let method = Method::Criterion(c);
            match fits.as_ref().map_err(|e| e.to_string()).and_then(|f| {
                f.select(&data, c).map_err(|e| e.to_string())
            }) {
                Ok(sel) => out.results.push(record(method, sel.best_k, elapsed)),
                Err(message) => out.failures.push(RunFailure {
                    scenario: scenario_idx,
                    run,
                    method: Some(method),
                    message,
                }),
            }
        }
    }
    out
}

/// Generates `runs_per_cell` datasets per scenario (seeds derived from
/// `master_seed`), runs every method on each, and records the selected K.
pub fn selection_rate_experiment(
    scenarios: &[GenSpec],
    methods: &[Method],
    runs_per_cell: usize,
    master_seed: u64,
    config: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    if runs_per_cell == 0 {
        return Err(MixError::Config("runs_per_cell must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(MixError::Config("no methods requested".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..runs_per_cell).map(move |r| (s, r)))
        .collect();
    let run = |&(s, r): &(usize, usize)| run_once(s, &scenarios[s], r, methods, master_seed, config);
    let parts: Vec<ExperimentOutput> = if config.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let mut out = ExperimentOutput::default();
    for p in parts {
        out.results.extend(p.results);
        out.failures.extend(p.failures);
    }
    Ok(out)
}

/// Correct-selection rate per (scenario, method), over successful runs.
pub fn selection_rates(output: &ExperimentOutput, scenarios: &[GenSpec], methods: &[Method]) -> Vec<CellRate> {
    let mut cells = Vec::new();
    for (s, spec) in scenarios.iter().enumerate() {
        for &m in methods {
            let rs: Vec<&ExperimentResult> = output
                .results
                .iter()
                .filter(|r| r.scenario == s && r.method == m)
                .collect();
            let failed = output
                .failures
                .iter()
                .filter(|f| f.scenario == s && (f.method == Some(m) || f.method.is_none()))
                .count();
            let correct = rs.iter().filter(|r| r.correct()).count();
            let runs = rs.len();
            cells.push(CellRate {
                scenario: s,
                method: m,
                true_k: spec.k_true,
                runs,
                correct,
                failed,
                rate: if runs > 0 { correct as f64 / runs as f64 } else { f64::NAN },
                mean_separation: if runs > 0 {
                    rs.iter().map(|r| r.separation).sum::<f64>() / runs as f64
                } else {
                    f64::NAN
                },
            });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingPair {
    pub run: usize,
    pub seed: u64,
    pub separation: f64,
    pub mml_ms: f64,
    pub bic_ms: f64,
    pub mml_k: usize,
    pub bic_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingSummary {
    pub pairs: Vec<TimingPair>,
    pub mean_mml_ms: f64,
    pub mean_bic_ms: f64,
    /// Mean over pairs of `mml_ms / bic_ms`.
    pub mean_ratio: f64,
    pub ratio_of_means: f64,
}

/// Times one EM-MML run against one full sequential-BIC selection on each of
/// `runs` generated datasets. Both start from the same seed. Pairs run
/// sequentially so the two timings in a pair see the same machine load.
pub fn paired_timing(spec: &GenSpec, runs: usize, master_seed: u64, config: &ExperimentConfig) -> Result<TimingSummary> {
    if runs < 2 {
        return Err(MixError::Config("paired timing needs at least 2 runs".into()));
    }
    let mut pairs = Vec::with_capacity(runs);
    for run in 0..runs {
        let seed = run_seed(master_seed, 0, run);
        let (data, planted) = generate(&GenSpec {
            seed,
            ..spec.clone()
        })?;
        let fit_seed = derive_seed(seed, &[1]);

        let start = Instant::now();
        let mml = fit_em_mml(&data, &config.mml(fit_seed))?;
        let mml_ms = start.elapsed().as_secs_f64() * 1e3;

        let start = Instant::now();
        let bic = fit_candidates(&data, &config.selection(fit_seed))?.select(&data, Criterion::Bic)?;
        let bic_ms = start.elapsed().as_secs_f64() * 1e3;

        pairs.push(TimingPair {
            run,
            seed,
            separation: planted.separation,
            mml_ms,
            bic_ms,
            mml_k: mml.selected_k(),
            bic_k: bic.best_k,
        });
    }
    let n = pairs.len() as f64;
    let mean_mml_ms = pairs.iter().map(|p| p.mml_ms).sum::<f64>() / n;
    let mean_bic_ms = pairs.iter().map(|p| p.bic_ms).sum::<f64>() / n;
    let mean_ratio = pairs.iter().map(|p| p.mml_ms / p.bic_ms).sum::<f64>() / n;
    Ok(TimingSummary {
        pairs,
        mean_mml_ms,
        mean_bic_ms,
        mean_ratio,
        ratio_of_means: mean_mml_ms / mean_bic_ms,
    })
}
