//! Dataset CSV files, JSON model files and CSV reports.
//!
//! Dataset layout: a header row, one row per observation, `#` comment lines
//! allowed. Single-trial variables take one column holding the category
//! string. Multi-trial variables use one integer column per category, headed
//! `variable[category]`. Optional special columns hold planted labels and
//! observation weights.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::{CandidateFits, Criterion};
use crate::dataset::{validate_dataset, CategoricalDataset, RawTable};
use crate::error::{MixError, Result};
use crate::eval::{AssociationProfile, CellRate, ExperimentOutput, TimingSummary};
use crate::mml::MmlTraceEntry;
use crate::model::MixtureModel;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Formats with 6 significant digits.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..15).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDict {
    pub name: String,
    pub categories: Vec<String>,
}

/// Category names per variable, in index order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dictionary {
    pub variables: Vec<VariableDict>,
}

impl Dictionary {
    /// `v1..vL` with categories `c1..cC`.
    pub fn generic(categories: &[usize]) -> Self {
        Self {
            variables: categories
                .iter()
                .enumerate()
                .map(|(l, &c)| VariableDict {
                    name: format!("v{}", l + 1),
                    categories: (1..=c).map(|j| format!("c{j}")).collect(),
                })
                .collect(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightsMode {
    /// Each row counts `weight` times in every sum over observations.
    #[default]
    Fractional,
    /// Each row is duplicated `weight` times (integer weights only).
    Replicate,
}

impl std::str::FromStr for WeightsMode {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fractional" => Ok(Self::Fractional),
            "replicate" => Ok(Self::Replicate),
            other => Err(MixError::Config(format!(
                "unknown weights mode '{other}' (expected fractional or replicate)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub label_column: String,
    pub weight_column: String,
    /// Fixed category dictionary; unknown values become parse errors.
    pub dictionary: Option<Dictionary>,
    pub weights_mode: WeightsMode,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            weight_column: "weight".into(),
            dictionary: None,
            weights_mode: WeightsMode::Fractional,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: CategoricalDataset,
    pub dictionary: Dictionary,
    /// 0-based planted labels, when the file had a label column.
    pub labels: Option<Vec<usize>>,
}

enum Column {
    Categorical { var: usize },
    Count { var: usize, cat: usize },
    Label,
    Weight,
}

fn split_count_header(h: &str) -> Option<(&str, &str)> {
    let open = h.find('[')?;
    h.ends_with(']').then(|| (&h[..open], &h[open + 1..h.len() - 1]))
}

pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<LoadedDataset> {
    let file = File::open(path)?;
    load_dataset_from(file, options)
}

pub fn load_dataset_from<R: std::io::Read>(reader: R, options: &LoadOptions) -> Result<LoadedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    // Resolve columns: variables keep header order.
    let mut var_names: Vec<String> = Vec::new();
    let mut var_is_count: Vec<bool> = Vec::new();
    let mut count_cats: Vec<Vec<String>> = Vec::new();
    let mut columns = Vec::with_capacity(headers.len());
    for h in &headers {
        if *h == options.label_column {
            columns.push(Column::Label);
            continue;
        }
        if *h == options.weight_column {
            columns.push(Column::Weight);
            continue;
        }
        if let Some((name, cat)) = split_count_header(h) {
            let var = match var_names.iter().position(|v| v == name) {
                Some(v) if var_is_count[v] => v,
                Some(_) => {
                    return Err(MixError::Parse {
                        row: 0,
                        column: h.clone(),
                        message: format!("variable '{name}' appears in both layouts"),
                    })
                }
                None => {
                    var_names.push(name.to_string());
                    var_is_count.push(true);
                    count_cats.push(Vec::new());
                    var_names.len() - 1
                }
            };
            count_cats[var].push(cat.to_string());
            columns.push(Column::Count {
                var,
                cat: count_cats[var].len() - 1,
            });
        } else {
            if var_names.contains(h) {
                return Err(MixError::Parse {
                    row: 0,
                    column: h.clone(),
                    message: "duplicate column".into(),
                });
            }
            var_names.push(h.clone());
            var_is_count.push(false);
            count_cats.push(Vec::new());
            columns.push(Column::Categorical { var: var_names.len() - 1 });
        }
    }
    let num_vars = var_names.len();
    if num_vars == 0 {
        return Err(MixError::InvalidDataset("no variable columns".into()));
    }

    // Category dictionaries: fixed, or grown by first appearance.
    let fixed = options.dictionary.is_some();
    let mut dicts: Vec<Vec<String>> = match &options.dictionary {
        Some(d) => var_names
            .iter()
            .map(|name| {
                d.variables
                    .iter()
                    .find(|v| &v.name == name)
                    .map(|v| v.categories.clone())
                    .ok_or_else(|| MixError::Parse {
                        row: 0,
                        column: name.clone(),
                        message: "variable missing from dictionary".into(),
                    })
            })
            .collect::<Result<_>>()?,
        None => count_cats.clone(),
    };
    let mut lookup: Vec<HashMap<String, usize>> = dicts
        .iter()
        .map(|d| d.iter().enumerate().map(|(j, c)| (c.clone(), j)).collect())
        .collect();
    // counts-layout header categories must exist in a fixed dictionary
    let mut count_col_index: Vec<Vec<usize>> = vec![Vec::new(); num_vars];
    for (v, cats) in count_cats.iter().enumerate() {
        for cat in cats {
            let j = *lookup[v].get(cat).ok_or_else(|| MixError::Parse {
                row: 0,
                column: format!("{}[{}]", var_names[v], cat),
                message: "category not in dictionary".into(),
            })?;
            count_col_index[v].push(j);
        }
    }

    // Parse records into per-variable sparse counts.
    let mut parsed: Vec<Vec<Vec<(usize, i64)>>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let has_weight = columns.iter().any(|c| matches!(c, Column::Weight));
    let has_label = columns.iter().any(|c| matches!(c, Column::Label));
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row_idx + 1;
        if rec.len() != headers.len() {
            return Err(MixError::Parse {
                row,
                column: String::new(),
                message: format!("{} fields, expected {}", rec.len(), headers.len()),
            });
        }
        let mut obs: Vec<Vec<(usize, i64)>> = vec![Vec::new(); num_vars];
        for ((cell, col), header) in rec.iter().zip(&columns).zip(&headers) {
            match col {
                Column::Label => raw_labels.push(cell.to_string()),
                Column::Weight => weights.push(cell.parse::<f64>().map_err(|_| MixError::Parse {
                    row,
                    column: header.clone(),
                    message: format!("bad weight '{cell}'"),
                })?),
                Column::Categorical { var } => {
                    let var = *var;
                    if cell.is_empty() {
                        return Err(MixError::Parse {
                            row,
                            column: header.clone(),
                            message: "missing value".into(),
                        });
                    }
                    let j = match lookup[var].get(cell) {
                        Some(&j) => j,
                        None if !fixed => {
                            dicts[var].push(cell.to_string());
                            lookup[var].insert(cell.to_string(), dicts[var].len() - 1);
                            dicts[var].len() - 1
                        }
                        None => {
                            return Err(MixError::Parse {
                                row,
                                column: header.clone(),
                                message: format!("unknown category '{cell}'"),
                            })
                        }
                    };
                    obs[var].push((j, 1));
                }
                Column::Count { var, cat } => {
                    let v = cell.parse::<i64>().map_err(|_| MixError::Parse {
                        row,
                        column: header.clone(),
                        message: format!("bad count '{cell}'"),
                    })?;
                    obs[*var].push((count_col_index[*var][*cat], v));
                }
            }
        }
        parsed.push(obs);
    }
    if parsed.is_empty() {
        return Err(MixError::InvalidDataset("no observations".into()));
    }

    for (v, d) in dicts.iter().enumerate() {
        if d.len() < 2 {
            return Err(MixError::InvalidDataset(format!(
                "variable '{}' takes a single value; at least 2 categories required",
                var_names[v]
            )));
        }
    }
    let categories: Vec<usize> = dicts.iter().map(Vec::len).collect();
    // Trial counts: 1 for categorical columns, the first row's total otherwise.
    let trials: Vec<u32> = (0..num_vars)
        .map(|v| {
            if var_is_count[v] {
                parsed[0][v].iter().map(|&(_, c)| c).sum::<i64>().max(0) as u32
            } else {
                1
            }
        })
        .collect();
    let width: usize = categories.iter().sum();
    let offsets: Vec<usize> = categories
        .iter()
        .scan(0, |acc, &c| {
            let o = *acc;
            *acc += c;
            Some(o)
        })
        .collect();
    let rows: Vec<Vec<i64>> = parsed
        .iter()
        .map(|obs| {
            let mut row = vec![0i64; width];
            for (v, cells) in obs.iter().enumerate() {
                for &(j, c) in cells {
                    row[offsets[v] + j] += c;
                }
            }
            row
        })
        .collect();
    let raw = RawTable {
        categories,
        trials,
        rows,
        weights: has_weight.then_some(weights),
    };
    let mut dataset = validate_dataset(&raw, None)?.dataset;
    if options.weights_mode == WeightsMode::Replicate && dataset.weights().is_some() {
        dataset = dataset.replicate_by_weights()?;
    }

    let labels = if has_label {
        let parsed_labels = parse_labels(&raw_labels)?;
        if options.weights_mode == WeightsMode::Replicate {
            if let Some(w) = raw.weights.as_ref() {
                let expanded = parsed_labels
                    .iter()
                    .zip(w)
                    .flat_map(|(&l, &w)| std::iter::repeat_n(l, w.round() as usize))
                    .collect();
                Some(expanded)
            } else {
                Some(parsed_labels)
            }
        } else {
            Some(parsed_labels)
        }
    } else {
        None
    };

    let dictionary = Dictionary {
        variables: var_names
            .into_iter()
            .zip(dicts)
            .map(|(name, categories)| VariableDict { name, categories })
            .collect(),
    };
    Ok(LoadedDataset {
        dataset,
        dictionary,
        labels,
    })
}

/// Positive integers map to `value - 1`; anything else maps by first appearance.
fn parse_labels(raw: &[String]) -> Result<Vec<usize>> {
    let numeric: Option<Vec<usize>> = raw
        .iter()
        .map(|s| s.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
        .collect();
    if let Some(v) = numeric {
        return Ok(v);
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    Ok(raw
        .iter()
        .map(|s| {
            let next = seen.len();
            *seen.entry(s.as_str()).or_insert(next)
        })
        .collect())
}

/// Writes a dataset in the CSV layout read by [`load_dataset`]. A single-trial
/// variable uses the categorical layout when reading it back reproduces the
/// same category order (every category present, in first-appearance order);
/// every other variable uses the counts layout.
pub fn save_dataset(
    path: &Path,
    data: &CategoricalDataset,
    dictionary: &Dictionary,
    labels: Option<&[usize]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    write_dataset(&mut w, data, dictionary, labels)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(
    w: &mut csv::Writer<W>,
    data: &CategoricalDataset,
    dictionary: &Dictionary,
    labels: Option<&[usize]>,
) -> Result<()> {
    if dictionary.variables.len() != data.num_vars()
        || dictionary
            .variables
            .iter()
            .zip(data.categories())
            .any(|(v, &c)| v.categories.len() != c)
    {
        return Err(MixError::DimensionMismatch("dictionary does not match dataset".into()));
    }
    let categorical: Vec<bool> = (0..data.num_vars())
        .map(|l| {
            if data.trials()[l] != 1 {
                return false;
            }
            let mut next = 0;
            for i in 0..data.n() {
                let j = data.category_of(i, l).expect("single trial");
                if j > next {
                    return false;
                }
                if j == next {
                    next += 1;
                }
            }
            next == data.categories()[l]
        })
        .collect();
    let mut header: Vec<String> = Vec::new();
    for (l, v) in dictionary.variables.iter().enumerate() {
        if categorical[l] {
            header.push(v.name.clone());
        } else {
            header.extend(v.categories.iter().map(|c| format!("{}[{}]", v.name, c)));
        }
    }
    if data.weights().is_some() {
        header.push("weight".into());
    }
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for (l, v) in dictionary.variables.iter().enumerate() {
            let counts = data.counts(i, l);
            if categorical[l] {
                let j = counts.iter().position(|&y| y == 1).expect("single trial");
                rec.push(v.categories[j].clone());
            } else {
                rec.extend(counts.iter().map(|y| y.to_string()));
            }
        }
        if let Some(ws) = data.weights() {
            rec.push(ws[i].to_string());
        }
        if let Some(ls) = labels {
            rec.push((ls[i] + 1).to_string());
        }
        w.write_record(&rec)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitMetadata {
    pub algorithm: String,
    pub seed: u64,
    /// Name of the objective (`message_length`, `BIC`, ...).
    pub objective: String,
    pub objective_value: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<Vec<VariableDict>>,
}

/// On-disk model: mixing weights and θ as `[k][l][c]`, plus fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub k: usize,
    pub l: usize,
    pub categories: Vec<usize>,
    pub trials: Vec<u32>,
    pub alpha: Vec<f64>,
    pub theta: Vec<Vec<Vec<f64>>>,
    pub metadata: FitMetadata,
}

impl ModelFile {
    /// Zero-weight components are dropped.
    pub fn new(model: &MixtureModel, metadata: FitMetadata) -> Self {
        let model = model.prune();
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            k: model.k(),
            l: model.num_vars(),
            categories: model.categories().to_vec(),
            trials: model.trials().to_vec(),
            alpha: model.alpha().to_vec(),
            theta: (0..model.k())
                .map(|k| (0..model.num_vars()).map(|l| model.theta(k, l).to_vec()).collect())
                .collect(),
            metadata,
        }
    }

    pub fn model(&self) -> Result<MixtureModel> {
        if self.k != self.alpha.len() || self.l != self.categories.len() {
            return Err(MixError::InvalidModel("declared K or L disagrees with arrays".into()));
        }
        MixtureModel::new(
            self.categories.clone(),
            self.trials.clone(),
            self.alpha.clone(),
            self.theta.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| MixError::InvalidModel("missing schema_version".into()))? as u32;
        if found != MODEL_SCHEMA_VERSION {
            return Err(MixError::SchemaVersion {
                found,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        file.model()?;
        Ok(file)
    }
}

pub fn save_model(path: &Path, model: &MixtureModel, metadata: FitMetadata) -> Result<()> {
    std::fs::write(path, ModelFile::new(model, metadata).to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(MixtureModel, FitMetadata)> {
    let file = ModelFile::from_json(&std::fs::read_to_string(path)?)?;
    Ok((file.model()?, file.metadata))
}

pub fn write_trace<W: Write>(w: W, trace: &[MmlTraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["step", "event", "k_nz", "log_likelihood", "message_length", "endpoint", "converged"])?;
    for (i, e) in trace.iter().enumerate() {
        w.write_record([
            i.to_string(),
            e.event.as_str().to_string(),
            e.k_nz.to_string(),
            e.log_likelihood.to_string(),
            e.message_length.to_string(),
            e.endpoint.to_string(),
            e.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-segment category percentages: one row per (variable, category), one
/// column per segment, preceded by a segment-size row.
pub fn write_segment_profile<W: Write>(w: W, model: &MixtureModel, dictionary: &Dictionary) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let k = model.k();
    let mut header = vec!["variable".to_string(), "category".to_string()];
    header.extend((1..=k).map(|j| format!("segment_{j}")));
    w.write_record(&header)?;
    let mut size = vec!["segment size".to_string(), String::new()];
    size.extend(model.alpha().iter().map(|a| fmt6(100.0 * a)));
    w.write_record(&size)?;
    for (l, v) in dictionary.variables.iter().enumerate() {
        for (c, cat) in v.categories.iter().enumerate() {
            let mut rec = vec![v.name.clone(), cat.clone()];
            rec.extend((0..k).map(|j| fmt6(100.0 * model.theta(j, l)[c])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-K log-likelihood, parameter count and every criterion value.
pub fn write_scores<W: Write>(w: W, data: &CategoricalDataset, fits: &CandidateFits) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string(), "log_likelihood".into(), "c_params".into()];
    header.extend(Criterion::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for (k, fit) in &fits.fits {
        let Some(fit) = fit else {
            let mut rec = vec![k.to_string(), "failed".into(), String::new()];
            rec.extend(Criterion::ALL.iter().map(|_| String::new()));
            w.write_record(&rec)?;
            continue;
        };
        let ll = fit.log_likelihood();
        let c = fit.model.num_params();
        let entropy = fit.responsibilities.entropy(data.weights());
        let mut rec = vec![k.to_string(), ll.to_string(), c.to_string()];
        rec.extend(
            Criterion::ALL
                .iter()
                .map(|crit| crit.value(ll, c, data.total_weight(), entropy).to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Cramér's V per variable plus a `Sum` row.
pub fn write_association<W: Write>(w: W, profile: &AssociationProfile, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["variable", "cramers_v"])?;
    for (name, v) in names.iter().zip(&profile.per_variable) {
        w.write_record([name.clone(), v.map_or_else(|| "NA".into(), fmt6)])?;
    }
    w.write_record(["Sum".to_string(), fmt6(profile.sum_v)])?;
    w.flush()?;
    Ok(())
}

/// One row per (scenario, run, method); wall times are excluded so the file
/// is reproducible from the seed.
pub fn write_results<W: Write>(w: W, out: &ExperimentOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["scenario", "run", "method", "true_k", "selected_k", "correct", "separation", "seed"])?;
    for r in &out.results {
        w.write_record([
            r.scenario.to_string(),
            r.run.to_string(),
            r.method.name().to_string(),
            r.true_k.to_string(),
            r.selected_k.to_string(),
            r.correct().to_string(),
            fmt6(r.separation),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_result_timings<W: Write>(w: W, out: &ExperimentOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["scenario", "run", "method", "wall_time_ms"])?;
    for r in &out.results {
        w.write_record([
            r.scenario.to_string(),
            r.run.to_string(),
            r.method.name().to_string(),
            fmt6(r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures<W: Write>(w: W, out: &ExperimentOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["scenario", "run", "method", "message"])?;
    for f in &out.failures {
        w.write_record([
            f.scenario.to_string(),
            f.run.to_string(),
            f.method.map_or_else(|| "generate".into(), |m| m.name().to_string()),
            f.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rate-versus-separation table, one row per (scenario, method).
pub fn write_rates<W: Write>(w: W, rates: &[CellRate], targets: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "scenario", "true_k", "sep_lo", "sep_hi", "mean_separation", "method", "runs", "correct", "failed", "rate",
    ])?;
    for c in rates {
        let (lo, hi) = targets[c.scenario];
        w.write_record([
            c.scenario.to_string(),
            c.true_k.to_string(),
            fmt6(lo),
            fmt6(hi),
            fmt6(c.mean_separation),
            c.method.name().to_string(),
            c.runs.to_string(),
            c.correct.to_string(),
            c.failed.to_string(),
            fmt6(c.rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Paired wall times, one row per dataset.
pub fn write_timing_pairs<W: Write>(w: W, summary: &TimingSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["run", "seed", "separation", "mml_ms", "bic_ms", "ratio"])?;
    for p in &summary.pairs {
        w.write_record([
            p.run.to_string(),
            p.seed.to_string(),
            fmt6(p.separation),
            fmt6(p.mml_ms),
            fmt6(p.bic_ms),
            fmt6(p.mml_ms / p.bic_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The seed-determined half of a timing run: which K each method picked.
pub fn write_timing_selection<W: Write>(w: W, summary: &TimingSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["run", "seed", "separation", "mml_k", "bic_k"])?;
    for p in &summary.pairs {
        w.write_record([
            p.run.to_string(),
            p.seed.to_string(),
            fmt6(p.separation),
            p.mml_k.to_string(),
            p.bic_k.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Convenience: write any report to a file path.
pub fn to_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(BufWriter<File>) -> Result<()>,
{
    f(BufWriter::new(File::create(path)?))
}
