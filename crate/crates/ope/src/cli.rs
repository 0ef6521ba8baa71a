//! Command-line front end. Every subcommand reads files, calls the core
//! library and writes files; nothing numeric is printed that is not also
//! written to an artifact.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ope_core::binning::{make_binning, BinningScheme, DEFAULT_NUM_BINS};
use ope_core::estimators::{
    evaluate_all, fit_reward_model_with, BehaviorSource, DensitySource, EvaluationCell, EvaluationInputs, EstimatorKind,
    KernelObjective, MetricModels, RewardModelParams, RewardPredictions,
};
use ope_core::exec::{derive_seed, Executor};
use ope_core::experiments::ScenarioConfig;
use ope_core::learn::{
    counterfactual_test, initial_network, train_optpal_with_retries, tune_continuous, CounterfactualOutcome, ProfitObjective,
    TuneCase, TuneConfig, TuneOutcome,
};
use ope_core::math::mean;
use ope_core::models::{ForestParams, KdeDensity, KernelKind, KernelSpec};
use ope_core::policy::{BehaviorDensity, BinPolicy, ProxyPolicy};
use ope_core::sim::{expected_policy_value_with, run_ab_test_with, PolicySpec, PolicyValue};
use ope_core::types::{LoggedDataset, Metric, Side};
use serde::{Deserialize, Serialize};

use crate::config::{read_toml_or_default, to_toml, LearnConfig, SimulateConfig};
use crate::dataset::{read_dataset_auto, read_json, write_dataset, write_json, DataFormat};
use crate::error::{OpeError, Result};
use crate::manifest::{csv_bytes, ArtifactWriter, RunStatus};
use crate::model::{load_model, save_model, LoadedPolicy};
use crate::parallel::Rayon;
use crate::plan::{run_plan, ExperimentPlan, Scenario};
use crate::report::report;

#[derive(Debug, Parser)]
#[command(name = "ope", version, about = "Off-policy evaluation and learning for auction payment policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one A/B test and write both logs with their oracle values.
    Simulate(SimulateArgs),
    /// Fit a proxy policy (bin classifier and payment regressor) on a log.
    FitProxy(FitProxyArgs),
    /// Evaluate a policy on a log with every requested estimator.
    Evaluate(EvaluateArgs),
    /// Tune the continuous estimator's kernel and bandwidth.
    Tune(TuneArgs),
    /// Replace one side of an A/B test with an off-policy estimate.
    Counterfactual(CounterfactualArgs),
    /// Learn a payment network by maximizing estimated profit.
    LearnOptimal(LearnArgs),
    /// Summarize a run manifest into Markdown and CSV.
    Report(ReportArgs),
    /// Run an experiment scenario and write its artifact manifest.
    RunPlan(RunPlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Control,
    Treatment,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Control => Side::Control,
            SideArg::Treatment => Side::Treatment,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `[auction]`, `[policy.control]`, `[policy.treatment]`; defaults to X vs Y.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Records per side.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Log format; `json` writes JSON Lines.
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct FitProxyArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Number of quantile payment bins.
    #[arg(long, default_value_t = DEFAULT_NUM_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Forest parameters as TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also fit a behavior density model on the log and write it here.
    #[arg(long)]
    pub density: Option<PathBuf>,
}

/// Per-metric kernel settings shared by `evaluate` and `counterfactual`.
#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_parser = parse_kernel, default_value = "gaussian")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 0.2)]
    pub bandwidth: f64,
    /// Tuned kernel files; each overrides the kernel of its own metric.
    #[arg(long)]
    pub tuned: Vec<PathBuf>,
}

impl KernelArgs {
    fn kernels(&self) -> Result<[KernelSpec; 4]> {
        let base = KernelSpec::new(self.kernel, self.bandwidth)?;
        let mut out = [base; 4];
        for path in &self.tuned {
            let t: TuneOutcome = load_model(path)?;
            out[t.metric.index()] = t.best;
        }
        Ok(out)
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub policy_eval: PathBuf,
    /// Behavior policy model; without it the logged propensities are used.
    #[arg(long)]
    pub policy_behavior: Option<PathBuf>,
    /// `all` or a comma-separated list of ipw, snipw, dm, dr, sndr, continuous.
    #[arg(long, default_value = "all")]
    pub estimators: String,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Behavior density model for the continuous estimator.
    #[arg(long)]
    pub kde: Option<PathBuf>,
    /// Bins used when neither policy carries a binning.
    #[arg(long, default_value_t = DEFAULT_NUM_BINS)]
    pub bins: usize,
    /// Importance weight cap.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Take discrete behavior probabilities from the log where present.
    #[arg(long)]
    pub logged_propensities: bool,
    /// Reward model parameters as TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Directory holding the logs named in the cases file.
    #[arg(long)]
    pub logs: PathBuf,
    /// Tuning cases with oracle values, as written by `simulate`.
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Metric,
    /// Search settings as TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum)]
    pub replace_side: SideArg,
    /// Policy put in place of the replaced side.
    #[arg(long = "with")]
    pub with_policy: PathBuf,
    #[arg(long, value_parser = parse_estimator, default_value = "sndr")]
    pub estimator: EstimatorKind,
    /// Behavior policy of the replaced side; defaults to the one `simulate` wrote.
    #[arg(long)]
    pub behavior: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long, default_value_t = DEFAULT_NUM_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss per iteration as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for `summary.md` and `summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunPlanArgs {
    /// Plan file; overrides the scenario flags.
    #[arg(long, conflicts_with = "scenario")]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "plan")]
    pub scenario: Option<Scenario>,
    /// Repeatable.
    #[arg(long, default_values_t = [1u64])]
    pub seed: Vec<u64>,
    /// Scenario configuration as TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "plan")]
    pub out: Option<PathBuf>,
}

fn parse_kernel(s: &str) -> std::result::Result<KernelKind, String> {
    KernelKind::parse(s).ok_or_else(|| format!("unknown kernel {s:?}"))
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    Metric::parse(s).ok_or_else(|| format!("unknown metric {s:?}"))
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorKind, String> {
    EstimatorKind::parse(s).ok_or_else(|| format!("unknown estimator {s:?}"))
}

fn parse_estimators(s: &str) -> Result<Vec<EstimatorKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(EstimatorKind::ALL.to_vec());
    }
    s.split(',').map(|p| parse_estimator(p.trim()).map_err(OpeError::Config)).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| OpeError::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| OpeError::io(path, e))
}

/// One evaluation target in `tune_cases.json`: the policy in `target`
/// evaluated on the log in `log`, scored against the oracle `truth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneCaseFile {
    pub log: String,
    pub target: String,
    pub truth: PolicyValue,
}

pub const TUNE_CASES: &str = "tune_cases.json";

#[derive(Serialize)]
struct OracleFile<'a> {
    control: &'a PolicyValue,
    treatment: &'a PolicyValue,
}

fn simulate<E: Executor>(args: &SimulateArgs, exec: &E) -> Result<()> {
    let cfg: SimulateConfig = read_toml_or_default(args.config.as_deref())?;
    let format = match args.format {
        OutputFormat::Json => DataFormat::Jsonl,
        OutputFormat::Csv => DataFormat::Csv,
    };
    let (control, treatment) = (&cfg.policy.control, &cfg.policy.treatment);
    let outcome = run_ab_test_with(&cfg.auction, control, treatment, args.n, args.seed, exec)?;
    let oracle = |p: &PolicySpec| expected_policy_value_with(&cfg.auction, p, cfg.oracle_contexts, derive_seed(args.seed, 7), exec);
    let (oc, ot) = (oracle(control)?, oracle(treatment)?);

    let mut w = ArtifactWriter::create(&args.out, Some(crate::report::SIMULATE.into()), vec![args.seed])?;
    w.write_bytes("config.toml", to_toml(&cfg)?.as_bytes())?;
    let mut log_names = Vec::new();
    for (side, log) in [("control", &outcome.control), ("treatment", &outcome.treatment)] {
        let name = format!("{side}.{}", format.extension());
        write_dataset(log, &w.path(&name), format)?;
        w.record(&name)?;
        w.record(&format!("{name}.meta.json"))?;
        log_names.push(name);
    }
    for (side, spec) in [("control", control), ("treatment", treatment)] {
        let name = format!("policy_{side}.json");
        save_model(&w.path(&name), spec)?;
        w.record(&name)?;
    }
    w.write_json("lifts.json", &outcome.lifts)?;
    w.write_json("oracle.json", &OracleFile { control: &oc, treatment: &ot })?;
    let cases = [
        TuneCaseFile { log: log_names[0].clone(), target: "policy_treatment.json".into(), truth: ot.clone() },
        TuneCaseFile { log: log_names[1].clone(), target: "policy_control.json".into(), truth: oc.clone() },
    ];
    w.write_json(TUNE_CASES, &cases)?;
    w.finish(RunStatus::Complete)?;
    Ok(())
}

fn fit_proxy<E: Executor>(args: &FitProxyArgs, exec: &E) -> Result<()> {
    let log = read_dataset_auto(&args.log)?;
    let params: ForestParams = read_toml_or_default(args.config.as_deref())?;
    let params = ForestParams { rng_seed: args.seed, ..params };
    let binning = make_binning(&log, args.bins)?;
    let proxy = ProxyPolicy::fit(&log, binning, &params, exec)?;
    create_parent(&args.out)?;
    save_model(&args.out, &proxy)?;
    if let Some(path) = &args.density {
        create_parent(path)?;
        save_model(path, &KdeDensity::fit(&log, KernelKind::Gaussian)?)?;
    }
    Ok(())
}

/// Evaluation and behavior policies resolved into estimator inputs.
struct Resolved {
    binning: BinningScheme,
    eval: LoadedPolicy,
    behavior: Option<LoadedPolicy>,
    kde: Option<KdeDensity>,
}

impl Resolved {
    fn load(eval: &Path, behavior: Option<&Path>, kde: Option<&Path>, log: &LoggedDataset, bins: usize) -> Result<Self> {
        let eval = LoadedPolicy::load(eval)?;
        let behavior = behavior.map(LoadedPolicy::load).transpose()?;
        let kde = kde.map(load_model::<KdeDensity>).transpose()?;
        let binning = match behavior.as_ref().and_then(LoadedPolicy::binning).or_else(|| eval.binning()) {
            Some(b) => b,
            None => make_binning(log, bins)?,
        };
        Ok(Self { binning, eval, behavior, kde })
    }
}

/// Cross-fitted reward models for every metric, or none when no requested
/// estimator needs one.
fn reward_models<E: Executor>(
    log: &LoggedDataset,
    binning: &BinningScheme,
    params: &RewardModelParams,
    seed: u64,
    needed: bool,
    exec: &E,
) -> Result<Option<Vec<RewardPredictions>>> {
    if !needed {
        return Ok(None);
    }
    Metric::ALL
        .iter()
        .map(|&m| {
            let p = RewardModelParams {
                forest: ForestParams { rng_seed: derive_seed(seed, m.index() as u64), ..params.forest },
                ..params.clone()
            };
            Ok(fit_reward_model_with(log, binning, m, &p, exec)?)
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Builds estimator inputs over `r` and runs `f` with them.
fn with_inputs<T>(
    r: &Resolved,
    models: Option<&[RewardPredictions]>,
    kernels: [KernelSpec; 4],
    clip: Option<f64>,
    logged_bins: bool,
    f: impl FnOnce(&EvaluationInputs<'_>) -> Result<T>,
) -> Result<T> {
    let eval_bins = r.eval.bins(&r.binning);
    let behavior_bins: Option<Box<dyn BinPolicy + '_>> = r.behavior.as_ref().map(|b| b.bins(&r.binning));
    let behavior_bins = match (&behavior_bins, logged_bins) {
        (Some(b), true) => BehaviorSource::LoggedOrModel(b.as_ref()),
        (Some(b), false) => BehaviorSource::Model(b.as_ref()),
        (None, _) => BehaviorSource::Logged,
    };
    let exact: Option<Box<dyn BehaviorDensity + '_>> = r.behavior.as_ref().and_then(LoadedPolicy::density);
    let behavior_density = match (&exact, &r.kde) {
        (Some(d), _) => DensitySource::Model(d.as_ref()),
        (None, Some(k)) => DensitySource::LoggedOrModel(k),
        (None, None) => DensitySource::Logged,
    };
    let metrics: [MetricModels<'_>; 4] = std::array::from_fn(|m| MetricModels {
        reward_model: models.map(|v| &v[m]),
        kernel: kernels[m],
    });
    f(&EvaluationInputs {
        binning: &r.binning,
        behavior_bins,
        evaluation_bins: eval_bins.as_ref(),
        behavior_density,
        evaluation_payment: r.eval.payment(),
        metrics,
        clip_lambda: clip,
    })
}

#[derive(Serialize)]
struct EvaluateEcho<'a> {
    log: &'a Path,
    policy_eval: &'a Path,
    policy_behavior: Option<&'a Path>,
    estimators: Vec<&'static str>,
    kernels: [KernelSpec; 4],
    bin_edges: &'a [f64],
    clip_lambda: Option<f64>,
    logged_propensities: bool,
    reward_model: &'a RewardModelParams,
    seed: u64,
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    config: EvaluateEcho<'a>,
    cells: Vec<EvaluationCell>,
}

fn evaluate<E: Executor>(args: &EvaluateArgs, exec: &E) -> Result<()> {
    let log = read_dataset_auto(&args.log)?;
    let kinds = parse_estimators(&args.estimators)?;
    let kernels = args.kernel.kernels()?;
    let params: ScenarioConfig = read_toml_or_default(args.config.as_deref())?;
    let r = Resolved::load(&args.policy_eval, args.policy_behavior.as_deref(), args.kde.as_deref(), &log, args.bins)?;
    let needs_model = kinds.iter().any(|k| k.needs_reward_model());
    let models = reward_models(&log, &r.binning, &params.reward_model, args.seed, needs_model, exec)?;
    let cells = with_inputs(&r, models.as_deref(), kernels, args.clip, args.logged_propensities, |inputs| {
        Ok(evaluate_all(&log, inputs, exec))
    })?;
    let cells: Vec<EvaluationCell> = cells
        .into_iter()
        .filter(|c| kinds.contains(&c.estimator) && (models.is_some() || !c.estimator.needs_reward_model()))
        .collect();
    match args.format {
        OutputFormat::Json => {
            let config = EvaluateEcho {
                log: &args.log,
                policy_eval: &args.policy_eval,
                policy_behavior: args.policy_behavior.as_deref(),
                estimators: kinds.iter().map(|k| k.name()).collect(),
                kernels,
                bin_edges: r.binning.edges(),
                clip_lambda: args.clip,
                logged_propensities: args.logged_propensities,
                reward_model: &params.reward_model,
                seed: args.seed,
            };
            create_parent(&args.out)?;
            write_json(&args.out, &EvaluateOutput { config, cells })
        }
        OutputFormat::Csv => {
            let header = ["estimator", "metric", "value", "std_error", "effective_sample_size", "clipped_fraction", "n", "error"];
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    let mut row = vec![c.estimator.name().to_string(), c.metric.name().to_string()];
                    match &c.report {
                        Some(r) => row.extend([
                            r.value.to_string(),
                            r.std_error.to_string(),
                            r.effective_sample_size.to_string(),
                            r.clipped_fraction.to_string(),
                            r.n.to_string(),
                            String::new(),
                        ]),
                        None => {
                            row.extend(std::iter::repeat_n(String::new(), 5));
                            row.push(c.error.clone().unwrap_or_default());
                        }
                    }
                    row
                })
                .collect();
            write_bytes(&args.out, &csv_bytes(&header, &rows))
        }
    }
}

fn tune<E: Executor>(args: &TuneArgs, exec: &E) -> Result<()> {
    let files: Vec<TuneCaseFile> = read_json(&args.oracle)?;
    if files.is_empty() {
        return Err(OpeError::Config(format!("{}: no tuning cases", args.oracle.display())));
    }
    let mut config: TuneConfig = read_toml_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    let mut cases = Vec::with_capacity(files.len());
    for f in &files {
        let log = read_dataset_auto(&args.logs.join(&f.log))?;
        let target = LoadedPolicy::load(&args.logs.join(&f.target))?;
        cases.push(TuneCase::new(&log, DensitySource::Logged, target.payment(), args.metric, f.truth.get(args.metric))?);
    }
    let outcome = tune_continuous(&cases, &config, args.metric, exec)?;
    create_parent(&args.out)?;
    save_model(&args.out, &outcome)
}

#[derive(Serialize)]
struct CounterfactualOutput<'a> {
    test: &'a Path,
    with: &'a Path,
    kernels: [KernelSpec; 4],
    outcome: CounterfactualOutcome,
}

fn counterfactual<E: Executor>(args: &CounterfactualArgs, exec: &E) -> Result<()> {
    let side: Side = args.replace_side.into();
    let meta_log = |s: Side| -> Result<LoggedDataset> {
        for ext in ["jsonl", "csv"] {
            let p = args.test.join(format!("{}.{ext}", s.name()));
            if p.exists() {
                return read_dataset_auto(&p);
            }
        }
        Err(OpeError::MissingArtifact(args.test.join(format!("{}.jsonl", s.name()))))
    };
    let control = meta_log(Side::Control)?;
    let treatment = meta_log(Side::Treatment)?;
    let replaced = if side == Side::Control { &control } else { &treatment };
    let behavior_path = args.behavior.clone().unwrap_or_else(|| args.test.join(format!("policy_{}.json", side.name())));
    let r = Resolved::load(&args.with_policy, Some(&behavior_path), None, replaced, args.bins)?;
    let params: ScenarioConfig = read_toml_or_default(args.config.as_deref())?;
    let models = reward_models(replaced, &r.binning, &params.reward_model, args.seed, args.estimator.needs_reward_model(), exec)?;
    let kernels = args.kernel.kernels()?;
    let outcome = with_inputs(&r, models.as_deref(), kernels, args.clip, false, |inputs| {
        Ok(counterfactual_test(&control, &treatment, side, args.estimator, inputs, ope_core::sim::AB_TEST_ALPHA)?)
    })?;
    create_parent(&args.out)?;
    write_json(&args.out, &CounterfactualOutput { test: &args.test, with: &args.with_policy, kernels, outcome })
}

fn learn_optimal<E: Executor>(args: &LearnArgs, exec: &E) -> Result<()> {
    let log = read_dataset_auto(&args.log)?;
    let cfg: LearnConfig = read_toml_or_default(args.config.as_deref())?;
    let kernel = KernelSpec::gaussian(cfg.bandwidth)?;
    let cost = KernelObjective::new(&log, DensitySource::Logged, kernel, Metric::Cost)?;
    let returns = KernelObjective::new(&log, DensitySource::Logged, kernel, Metric::Returns)?;
    let contexts = log.context_matrix();
    let objective = ProfitObjective { contexts: &contexts, cost: &cost, returns: &returns };
    let start = cfg.initial_payment.unwrap_or_else(|| mean(&log.actions()));
    let mlp = initial_network(log.dimension(), args.seed, Some(start))?;
    let config = ope_core::learn::OptPalConfig { rng_seed: args.seed, ..cfg.optpal };
    let outcome = train_optpal_with_retries(&objective, mlp, &config, exec)?;
    create_parent(&args.out)?;
    save_model(&args.out, &outcome.policy)?;
    if let Some(path) = &args.trace {
        let rows: Vec<Vec<String>> =
            outcome.trace.iter().enumerate().map(|(i, l)| vec![i.to_string(), l.to_string()]).collect();
        write_bytes(path, &csv_bytes(&["iteration", "loss"], &rows))?;
    }
    Ok(())
}

fn run_plan_cmd<E: Executor>(args: &RunPlanArgs, exec: &E) -> Result<()> {
    let plan = match &args.plan {
        Some(path) => ExperimentPlan::load(path)?,
        None => ExperimentPlan {
            scenario: args.scenario.expect("clap requires a scenario without a plan"),
            config: args.config.clone(),
            seeds: args.seed.clone(),
            output: args.out.clone().expect("clap requires an output without a plan"),
        },
    };
    run_plan(&plan, exec).map(|_| ()).map_err(|(e, _)| e)
}

/// Runs one parsed command on the worker pool from `OPE_THREADS`.
pub fn run(cli: &Cli) -> Result<()> {
    let exec = Rayon::from_env()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &exec),
        Command::FitProxy(a) => fit_proxy(a, &exec),
        Command::Evaluate(a) => evaluate(a, &exec),
        Command::Tune(a) => tune(a, &exec),
        Command::Counterfactual(a) => counterfactual(a, &exec),
        Command::LearnOptimal(a) => learn_optimal(a, &exec),
        Command::Report(a) => report(&a.manifest, &a.out).map(|_| ()),
        Command::RunPlan(a) => run_plan_cmd(a, &exec),
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

/// Structured error line for stderr.
pub fn error_json(e: &OpeError) -> String {
    serde_json::to_string(&ErrorReport { error: e.kind(), message: e.to_string(), exit_code: e.exit_code() })
        .expect("error report serializes")
}
