//! Experiment plans: one scenario over a list of seeds, every output file
//! recorded in a manifest.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ope_core::exec::Executor;
use ope_core::experiments::{
    counterfactual_yz, discrete_vs_continuous, optpal_experiment, oracle_values, simulate_tests, CounterfactualYz,
    DiscreteVsContinuous, Family, ScenarioConfig,
};
use ope_core::learn::CounterfactualOutcome;
use ope_core::stats::LiftResult;
use ope_core::types::Metric;
use serde::{Deserialize, Serialize};

use crate::config::read_toml;
use crate::dataset::{write_dataset, DataFormat};
use crate::error::{OpeError, Result};
use crate::manifest::{ArtifactWriter, Manifest, RunStatus};
use crate::model::save_model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    AbTest,
    DiscreteVsContinuous,
    EstimatorComparison,
    CounterfactualYz,
    OptPal,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::AbTest => "ab_test",
            Scenario::DiscreteVsContinuous => "discrete_vs_continuous",
            Scenario::EstimatorComparison => "estimator_comparison",
            Scenario::CounterfactualYz => "counterfactual_yz",
            Scenario::OptPal => "opt_pal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::value_variants().iter().copied().find(|v| v.name() == s)
    }
}

/// A plan as written in TOML; relative paths resolve against the plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    /// Scenario configuration; defaults apply when absent.
    #[serde(default)]
    pub config: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let mut plan: ExperimentPlan = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        plan.config = plan.config.map(|c| base.join(c));
        plan.output = base.join(&plan.output);
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(OpeError::Config("plan lists no seeds".into()));
        }
        if let Some(c) = &self.config {
            if !c.exists() {
                return Err(OpeError::Config(format!("config {} does not exist", c.display())));
            }
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = match &self.config {
            Some(c) => read_toml(c)?,
            None => ScenarioConfig::default(),
        };
        cfg.validate().map_err(|e| OpeError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

// Rows of the CSV artifacts; the report reads them back with the same types.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub seed: u64,
    pub test: String,
    pub metric: Metric,
    pub lift_percent: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMapeRow {
    pub seed: u64,
    pub metric: Metric,
    pub best_estimator: String,
    pub mape: f64,
    pub mean_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMapeRow {
    pub seed: u64,
    pub family: Family,
    pub estimator: String,
    pub metric: Metric,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCsvRow {
    pub seed: u64,
    pub task: String,
    pub family: Family,
    pub estimator: String,
    pub metric: Metric,
    pub value: f64,
    pub std_error: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRow {
    pub seed: u64,
    pub estimator: String,
    pub metric: Metric,
    pub estimated_lift: f64,
    pub estimated_ci_low: f64,
    pub estimated_ci_high: f64,
    pub actual_lift: f64,
    pub actual_ci_low: f64,
    pub actual_ci_high: f64,
    pub signs_agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueRow {
    pub seed: u64,
    pub policy: String,
    /// A metric name or `profit`.
    pub metric: String,
    pub oracle_value: f64,
    pub oracle_std_error: f64,
    pub estimated: Option<f64>,
}

pub const AB_LIFTS: &str = "ab_lifts.csv";
pub const MAPE_DISCRETE: &str = "mape_discrete.csv";
pub const MAPE_CONTINUOUS: &str = "mape_continuous.csv";
pub const ESTIMATOR_MAPE: &str = "estimator_mape.csv";
pub const ESTIMATES: &str = "estimates.csv";
pub const COUNTERFACTUAL_LIFTS: &str = "counterfactual_yz.csv";
pub const OPTPAL_TRACE: &str = "optpal_trace.csv";
pub const OPTPAL_VALUES: &str = "optpal_values.csv";

fn write_rows<T: Serialize>(w: &mut ArtifactWriter, name: &str, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    for r in rows {
        out.serialize(r).map_err(|e| OpeError::Config(format!("{name}: {e}")))?;
    }
    let bytes = out.into_inner().map_err(|e| OpeError::Config(format!("{name}: {e}")))?;
    w.write_bytes(name, &bytes)
}

/// Runs `plan`; the manifest is written even when a step fails.
#[allow(clippy::result_large_err)]
pub fn run_plan<E: Executor>(plan: &ExperimentPlan, exec: &E) -> std::result::Result<Manifest, (OpeError, Option<Manifest>)> {
    plan.validate().map_err(|e| (e, None))?;
    let cfg = plan.scenario_config().map_err(|e| (e, None))?;
    let mut w = ArtifactWriter::create(&plan.output, Some(plan.scenario.name().to_string()), plan.seeds.clone())
        .map_err(|e| (e, None))?;
    match execute(plan, &cfg, &mut w, exec) {
        Ok(()) => w.finish(RunStatus::Complete).map_err(|e| (e, None)),
        Err(e) => {
            let status = RunStatus::Failed { kind: e.kind().to_string(), message: e.to_string(), exit_code: e.exit_code() };
            let partial = w.finish(status).ok();
            Err((e, partial))
        }
    }
}

fn execute<E: Executor>(plan: &ExperimentPlan, cfg: &ScenarioConfig, w: &mut ArtifactWriter, exec: &E) -> Result<()> {
    w.write_bytes("scenario.toml", crate::config::to_toml(cfg)?.as_bytes())?;
    match plan.scenario {
        Scenario::AbTest => ab_test(cfg, &plan.seeds, w, exec),
        Scenario::DiscreteVsContinuous => comparison(cfg, &plan.seeds, w, exec, false),
        Scenario::EstimatorComparison => comparison(cfg, &plan.seeds, w, exec, true),
        Scenario::CounterfactualYz => counterfactual(cfg, &plan.seeds, w, exec),
        Scenario::OptPal => optpal(cfg, &plan.seeds, w, exec),
    }
}

fn lift_row(seed: u64, test: &str, l: &LiftResult) -> LiftRow {
    LiftRow {
        seed,
        test: test.to_string(),
        metric: l.metric,
        lift_percent: l.lift_percent,
        ci_low: l.ci_low,
        ci_high: l.ci_high,
        p_value: l.p_value,
    }
}

fn ab_test<E: Executor>(cfg: &ScenarioConfig, seeds: &[u64], w: &mut ArtifactWriter, exec: &E) -> Result<()> {
    w.write_json("oracle.json", &oracle_values(cfg, exec)?)?;
    let mut lifts = Vec::new();
    for &seed in seeds {
        let tests = simulate_tests(cfg, seed, exec)?;
        for (name, t) in [("test1", &tests.test1), ("test2", &tests.test2), ("test3", &tests.test3)] {
            for (side, log) in [("control", &t.control), ("treatment", &t.treatment)] {
                let name = format!("seed_{seed}/{name}_{side}.jsonl");
                let path = w.path(&name);
                std::fs::create_dir_all(path.parent().expect("artifact paths have a parent"))
                    .map_err(|e| OpeError::io(&path, e))?;
                write_dataset(log, &path, DataFormat::Jsonl)?;
                w.record(&name)?;
                w.record(&format!("{name}.meta.json"))?;
            }
            lifts.extend(t.lifts.iter().map(|l| lift_row(seed, name, l)));
        }
    }
    write_rows(w, AB_LIFTS, &lifts)
}

fn comparison<E: Executor>(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    w: &mut ArtifactWriter,
    exec: &E,
    per_estimator: bool,
) -> Result<()> {
    let mut discrete = Vec::new();
    let mut continuous = Vec::new();
    let mut estimators = Vec::new();
    let mut estimates = Vec::new();
    let mut kernels = Vec::new();
    for &seed in seeds {
        let DiscreteVsContinuous { kernels: k, estimates: e, comparison } = discrete_vs_continuous(cfg, seed, exec)?;
        for b in &comparison.best {
            let row = FamilyMapeRow {
                seed,
                metric: b.metric,
                best_estimator: b.estimator.clone(),
                mape: b.mape,
                mean_mape: b.mean_mape,
            };
            match b.family {
                Family::Discrete => discrete.push(row),
                Family::Continuous => continuous.push(row),
            }
        }
        estimators.extend(comparison.rows.iter().map(|r| EstimatorMapeRow {
            seed,
            family: r.family,
            estimator: r.estimator.clone(),
            metric: r.metric,
            mape: r.mape,
        }));
        estimates.extend(e.into_iter().map(|r| EstimateCsvRow {
            seed,
            task: r.task,
            family: r.family,
            estimator: r.estimator,
            metric: r.metric,
            value: r.value,
            std_error: r.std_error,
            truth: r.truth,
        }));
        kernels.push((seed, k));
    }
    if per_estimator {
        write_rows(w, ESTIMATOR_MAPE, &estimators)?;
    } else {
        write_rows(w, MAPE_DISCRETE, &discrete)?;
        write_rows(w, MAPE_CONTINUOUS, &continuous)?;
    }
    write_rows(w, ESTIMATES, &estimates)?;
    w.write_json("tuned_kernels.json", &kernels)
}

fn counterfactual_rows(seed: u64, name: &str, est: &CounterfactualOutcome, actual: &[LiftResult]) -> Vec<CounterfactualRow> {
    est.lifts
        .iter()
        .zip(actual)
        .map(|(e, a)| CounterfactualRow {
            seed,
            estimator: name.to_string(),
            metric: e.metric,
            estimated_lift: e.lift_percent,
            estimated_ci_low: e.ci_low,
            estimated_ci_high: e.ci_high,
            actual_lift: a.lift_percent,
            actual_ci_low: a.ci_low,
            actual_ci_high: a.ci_high,
            signs_agree: e.lift_percent.signum() == a.lift_percent.signum(),
        })
        .collect()
}

fn counterfactual<E: Executor>(cfg: &ScenarioConfig, seeds: &[u64], w: &mut ArtifactWriter, exec: &E) -> Result<()> {
    let oracle = oracle_values(cfg, exec)?;
    let mut rows = Vec::new();
    let mut details: Vec<(u64, CounterfactualYz)> = Vec::new();
    for &seed in seeds {
        let tests = simulate_tests(cfg, seed, exec)?;
        let kernels = ope_core::experiments::tune_kernels(cfg, &oracle, seed, exec)?;
        let cf = counterfactual_yz(cfg, &tests, &kernels, seed, exec)?;
        rows.extend(counterfactual_rows(seed, "continuous", &cf.continuous, &cf.actual));
        rows.extend(counterfactual_rows(seed, "sndr", &cf.sndr, &cf.actual));
        details.push((seed, cf));
    }
    write_rows(w, COUNTERFACTUAL_LIFTS, &rows)?;
    w.write_json("counterfactual_yz.json", &details)
}

fn optpal<E: Executor>(cfg: &ScenarioConfig, seeds: &[u64], w: &mut ArtifactWriter, exec: &E) -> Result<()> {
    let mut trace = Vec::new();
    let mut values = Vec::new();
    let mut runs = Vec::new();
    for &seed in seeds {
        let tests = simulate_tests(cfg, seed, exec)?;
        let r = optpal_experiment(cfg, &tests, seed, exec)?;
        trace.extend(r.outcome.trace.iter().enumerate().map(|(iteration, &loss)| TraceRow { seed, iteration, loss }));
        for (policy, v, est) in
            [("W", &r.learned_oracle, r.learned_estimated_profit), ("X", &r.behavior_oracle, r.behavior_estimated_profit)]
        {
            for m in Metric::ALL {
                values.push(PolicyValueRow {
                    seed,
                    policy: policy.to_string(),
                    metric: m.name().to_string(),
                    oracle_value: v.get(m),
                    oracle_std_error: v.std_error.get(m),
                    estimated: None,
                });
            }
            values.push(PolicyValueRow {
                seed,
                policy: policy.to_string(),
                metric: "profit".to_string(),
                oracle_value: v.profit,
                oracle_std_error: v.profit_std_error,
                estimated: Some(est),
            });
        }
        let name = format!("policy_w_seed_{seed}.json");
        let path = w.path(&name);
        save_model(&path, &r.outcome.policy)?;
        w.record(&name)?;
        runs.push(serde_json::json!({
            "seed": seed,
            "iterations": r.outcome.trace.len(),
            "converged": r.outcome.converged,
            "retries": r.outcome.retries,
            "learning_rate": r.outcome.learning_rate,
            "initial_loss": r.outcome.initial_loss(),
            "final_loss": r.outcome.final_loss(),
        }));
    }
    write_rows(w, OPTPAL_TRACE, &trace)?;
    write_rows(w, OPTPAL_VALUES, &values)?;
    w.write_json("optpal_runs.json", &runs)
}
