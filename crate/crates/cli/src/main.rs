//! `catmix` — clustering categorical data with multinomial mixtures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use catmix::criteria::{fit_candidates, SelectionConfig};
use catmix::em::EmConfig;
use catmix::eval::{paired_timing, selection_rate_experiment, selection_rates, ExperimentConfig};
use catmix::io::{
    load_dataset, load_model, save_dataset, save_model, to_file, write_association, write_failures, write_rates,
    write_result_timings, write_results, write_scores, write_segment_profile, write_timing_pairs,
    write_timing_selection, write_trace, Dictionary, FitMetadata, LoadOptions, LoadedDataset, WeightsMode,
};
use catmix::mml::{fit_em_mml, MmlConfig};
use catmix::synth::{generate, GenSpec, DEFAULT_BUDGET};
use catmix::eval::association_profile;
use catmix::{e_step, hard_assign, Criterion, Method, MixError};

#[derive(Parser)]
#[command(name = "catmix", version, about = "Finite mixtures of multinomials for categorical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit EM-MML: estimate parameters and the number of segments in one run.
    FitMml(FitMmlArgs),
    /// Fit classical EM for each K and select by an information criterion.
    FitCriterion(FitCriterionArgs),
    /// Sample a dataset from a planted mixture with controlled separation.
    Generate(GenerateArgs),
    /// Correct-selection rates across separation bins, per method.
    BenchSelect(BenchSelectArgs),
    /// Paired wall-time comparison of EM-MML against sequential BIC.
    BenchTime(BenchTimeArgs),
    /// Cramér's V of every variable against a fitted model's hard assignment.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset (categorical or `var[cat]` counts layout).
    #[arg(long)]
    data: PathBuf,
    /// JSON category dictionary; values outside it are rejected.
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long, default_value = "weight")]
    weight_column: String,
    /// How the weight column is applied: fractional or replicate.
    #[arg(long, default_value = "fractional")]
    weights_mode: WeightsMode,
}

impl DataArgs {
    fn load(&self, fixed: Option<Dictionary>) -> anyhow::Result<LoadedDataset> {
        let dictionary = match (&self.dictionary, fixed) {
            (Some(p), _) => Some(Dictionary::load(p).with_context(|| format!("reading {}", p.display()))?),
            (None, d) => d,
        };
        let options = LoadOptions {
            label_column: self.label_column.clone(),
            weight_column: self.weight_column.clone(),
            dictionary,
            weights_mode: self.weights_mode,
        };
        load_dataset(&self.data, &options).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long)]
    k_max: Option<usize>,
    /// Relative log-likelihood improvement threshold.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Laplace pseudo-count in the θ update.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
}

#[derive(Args)]
struct FitMmlArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitCriterionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value = "bic")]
    criterion: Criterion,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ShapeArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Number of variables.
    #[arg(long, default_value_t = 7)]
    vars: usize,
    #[arg(long, default_value_t = 2)]
    categories: usize,
    #[arg(long, default_value_t = 1)]
    trials: u32,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 2)]
    k_true: usize,
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 0.04)]
    sep_lo: f64,
    #[arg(long, default_value_t = 0.06)]
    sep_hi: f64,
    /// Comma-separated mixing weights (default: equal).
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
    /// Master seed; every dataset and fit seed derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ExperimentArgs {
    fn config(&self, parallel: bool) -> ExperimentConfig {
        ExperimentConfig {
            k_min: self.k_min,
            k_max: self.k_max,
            restarts: self.restarts,
            delta: self.delta,
            max_iter: self.max_iter,
            smoothing: self.smoothing,
            parallel,
        }
    }
}

#[derive(Args)]
struct BenchSelectArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated true component counts.
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    k_true: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    sep_lo: f64,
    #[arg(long, default_value_t = 0.17)]
    sep_hi: f64,
    /// Width of each separation bin.
    #[arg(long, default_value_t = 0.02)]
    bin_width: f64,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    /// Restrict to these methods (comma-separated; default all).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchTimeArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value_t = 2)]
    k_true: usize,
    #[arg(long, default_value_t = 0.05)]
    sep_lo: f64,
    #[arg(long, default_value_t = 0.17)]
    sep_hi: f64,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn init_pool(jobs: Option<usize>) -> anyhow::Result<bool> {
    match jobs {
        Some(0) => bail!(MixError::Config("--jobs must be at least 1".into())),
        Some(j) => {
            rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
            Ok(j > 1)
        }
        None => Ok(rayon::current_num_threads() > 1),
    }
}

fn print_json(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
}

fn fit_mml(args: FitMmlArgs) -> anyhow::Result<()> {
    let loaded = args.data.load(None)?;
    let data = &loaded.dataset;
    let config = MmlConfig {
        k_min: args.fit.k_min,
        k_max: args.fit.k_max.unwrap_or(MmlConfig::default().k_max),
        delta: args.fit.delta,
        max_inner_iter: args.fit.max_iter,
        seed: args.fit.seed,
        smoothing: args.fit.smoothing,
    };
    config.validate()?;
    if let Some(w) = data.identifiability_warning(config.k_max) {
        log::warn!("{w}");
    }
    let result = fit_em_mml(data, &config)?;
    prepare_dir(&args.out)?;
    let meta = FitMetadata {
        algorithm: "em-mml".into(),
        seed: config.seed,
        objective: "message_length".into(),
        objective_value: result.best_message_length,
        log_likelihood: result.best_log_likelihood,
        iterations: result.sweeps,
        variables: Some(loaded.dictionary.variables.clone()),
    };
    save_model(&args.out.join("model.json"), &result.best_model, meta)?;
    to_file(&args.out.join("trace.csv"), |w| write_trace(w, &result.trace))?;
    to_file(&args.out.join("profile.csv"), |w| {
        write_segment_profile(w, &result.best_model, &loaded.dictionary)
    })?;
    loaded.dictionary.save(&args.out.join("dictionary.json"))?;
    print_json(serde_json::json!({
        "k": result.selected_k(),
        "message_length": result.best_message_length,
        "log_likelihood": result.best_log_likelihood,
        "alpha": result.best_model.alpha(),
        "sweeps": result.sweeps,
    }));
    Ok(())
}

fn fit_criterion(args: FitCriterionArgs) -> anyhow::Result<()> {
    let parallel = init_pool(args.jobs)?;
    let loaded = args.data.load(None)?;
    let data = &loaded.dataset;
    let k_max = args.fit.k_max.unwrap_or(10);
    if args.fit.k_min < 1 || args.fit.k_min > k_max {
        bail!(MixError::Config(format!(
            "--k-min ({}) must be between 1 and --k-max ({k_max})",
            args.fit.k_min
        )));
    }
    let config = SelectionConfig {
        k_range: args.fit.k_min..=k_max,
        restarts: args.restarts,
        em: EmConfig {
            delta: args.fit.delta,
            max_iter: args.fit.max_iter,
            smoothing: args.fit.smoothing,
        },
        seed: args.fit.seed,
        parallel,
    };
    let fits = fit_candidates(data, &config)?;
    let sel = fits.select(data, args.criterion)?;
    prepare_dir(&args.out)?;
    to_file(&args.out.join("scores.csv"), |w| write_scores(w, data, &fits))?;
    let best_score = sel
        .per_k_scores
        .iter()
        .find(|s| s.k == sel.best_k)
        .map(|s| s.value)
        .unwrap_or(f64::NAN);
    let meta = FitMetadata {
        algorithm: "em".into(),
        seed: config.seed,
        objective: args.criterion.name().into(),
        objective_value: best_score,
        log_likelihood: sel.best.log_likelihood(),
        iterations: sel.best.iterations,
        variables: Some(loaded.dictionary.variables.clone()),
    };
    save_model(&args.out.join("model.json"), &sel.best.model, meta)?;
    to_file(&args.out.join("profile.csv"), |w| {
        write_segment_profile(w, &sel.best.model, &loaded.dictionary)
    })?;
    loaded.dictionary.save(&args.out.join("dictionary.json"))?;
    print_json(serde_json::json!({
        "criterion": args.criterion.name(),
        "k": sel.best_k,
        "value": best_score,
        "log_likelihood": sel.best.log_likelihood(),
    }));
    Ok(())
}

fn gen_spec(k_true: usize, shape: &ShapeArgs, lo: f64, hi: f64, seed: u64) -> GenSpec {
    GenSpec {
        categories: vec![shape.categories; shape.vars],
        trials: vec![shape.trials; shape.vars],
        ..GenSpec::binary(k_true, shape.vars, shape.n, (lo, hi), seed)
    }
}

fn generate_cmd(args: GenerateArgs) -> anyhow::Result<()> {
    let mut spec = gen_spec(args.k_true, &args.shape, args.sep_lo, args.sep_hi, args.seed);
    if let Some(alpha) = args.alpha {
        spec.alpha_true = alpha;
    }
    spec.budget = args.budget;
    let (data, planted) = generate(&spec)?;
    prepare_dir(&args.out)?;
    let dictionary = Dictionary::generic(data.categories());
    save_dataset(&args.out.join("data.csv"), &data, &dictionary, Some(&planted.labels))?;
    let meta = FitMetadata {
        algorithm: "planted".into(),
        seed: args.seed,
        objective: "separation".into(),
        objective_value: planted.separation,
        log_likelihood: catmix::log_likelihood(&data, &planted.model)?,
        iterations: 0,
        variables: Some(dictionary.variables.clone()),
    };
    save_model(&args.out.join("planted.json"), &planted.model, meta)?;
    dictionary.save(&args.out.join("dictionary.json"))?;
    print_json(serde_json::json!({
        "n": data.n(),
        "k_true": args.k_true,
        "separation": planted.separation,
    }));
    Ok(())
}

fn bench_select(args: BenchSelectArgs) -> anyhow::Result<()> {
    let parallel = init_pool(args.jobs)?;
    if !(args.bin_width > 0.0) || args.sep_hi < args.sep_lo {
        bail!(MixError::Config("need --bin-width > 0 and --sep-lo <= --sep-hi".into()));
    }
    let bins = (((args.sep_hi - args.sep_lo) / args.bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut scenarios = Vec::new();
    let mut targets = Vec::new();
    for &k in &args.k_true {
        for b in 0..bins {
            let lo = args.sep_lo + b as f64 * args.bin_width;
            let hi = (lo + args.bin_width).min(args.sep_hi);
            scenarios.push(gen_spec(k, &args.shape, lo, hi, 0));
            targets.push((lo, hi));
        }
    }
    let methods = args.methods.unwrap_or_else(|| Method::ALL.to_vec());
    let out = selection_rate_experiment(&scenarios, &methods, args.runs, args.exp.seed, &args.exp.config(parallel))?;
    let rates = selection_rates(&out, &scenarios, &methods);
    prepare_dir(&args.out)?;
    to_file(&args.out.join("results.csv"), |w| write_results(w, &out))?;
    to_file(&args.out.join("rates.csv"), |w| write_rates(w, &rates, &targets))?;
    to_file(&args.out.join("failures.csv"), |w| write_failures(w, &out))?;
    to_file(&args.out.join("timings.csv"), |w| write_result_timings(w, &out))?;
    print_json(serde_json::json!({
        "scenarios": scenarios.len(),
        "runs": out.results.len(),
        "failures": out.failures.len(),
    }));
    Ok(())
}

fn bench_time(args: BenchTimeArgs) -> anyhow::Result<()> {
    let spec = gen_spec(args.k_true, &args.shape, args.sep_lo, args.sep_hi, 0);
    let summary = paired_timing(&spec, args.runs, args.exp.seed, &args.exp.config(false))?;
    prepare_dir(&args.out)?;
    to_file(&args.out.join("timing_pairs.csv"), |w| write_timing_pairs(w, &summary))?;
    to_file(&args.out.join("timing_selection.csv"), |w| write_timing_selection(w, &summary))?;
    print_json(serde_json::json!({
        "runs": summary.pairs.len(),
        "mean_mml_ms": summary.mean_mml_ms,
        "mean_bic_ms": summary.mean_bic_ms,
        "mean_ratio": summary.mean_ratio,
        "ratio_of_means": summary.ratio_of_means,
    }));
    Ok(())
}

fn profile(args: ProfileArgs) -> anyhow::Result<()> {
    let (model, meta) = load_model(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let fixed = meta.variables.map(|variables| Dictionary { variables });
    let loaded = args.data.load(fixed)?;
    let resp = e_step(&loaded.dataset, &model)?;
    let labels = hard_assign(&resp);
    let profile = association_profile(&loaded.dataset, &labels)?;
    let names = loaded.dictionary.names();
    match &args.out {
        Some(p) => to_file(p, |w| write_association(w, &profile, &names))?,
        None => write_association(std::io::stdout().lock(), &profile, &names)?,
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::FitMml(a) => fit_mml(a),
        Command::FitCriterion(a) => fit_criterion(a),
        Command::Generate(a) => generate_cmd(a),
        Command::BenchSelect(a) => bench_select(a),
        Command::BenchTime(a) => bench_time(a),
        Command::Profile(a) => profile(a),
    }
}

fn error_record(kind: &str, message: String) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses and runs one command line, returning the exit code and, on
/// failure, the JSON error record destined for stderr.
fn execute<I, T>(args: I) -> (u8, Option<String>)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return (0, None);
        }
        Err(e) => return (2, Some(error_record("usage", e.to_string().trim_end().to_string()))),
    };
    match run(cli) {
        Ok(()) => (0, None),
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<MixError>())
                .map_or("error", MixError::kind);
            (1, Some(error_record(kind, format!("{e:#}"))))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (code, error) = execute(std::env::args_os());
    if let Some(record) = error {
        eprintln!("{record}");
    }
    ExitCode::from(code)
}
