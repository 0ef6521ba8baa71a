//! Consolidated summaries built only from the files a manifest lists.

use std::fs;
use std::path::Path;

use ope_core::math::{mean, sample_variance, student_t_quantile};
use ope_core::sim::PolicyValue;
use ope_core::stats::{compute_lift, LiftResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::read_json;
use crate::error::{OpeError, Result};
use crate::manifest::{csv_bytes, verify, Manifest};
use crate::plan::{
    CounterfactualRow, EstimatorMapeRow, FamilyMapeRow, LiftRow, PolicyValueRow, Scenario, AB_LIFTS, COUNTERFACTUAL_LIFTS,
    ESTIMATOR_MAPE, MAPE_CONTINUOUS, MAPE_DISCRETE, OPTPAL_VALUES,
};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_MD: &str = "summary.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub metric: String,
    pub estimator: String,
    pub value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

fn read_rows<T: DeserializeOwned>(root: &Path, manifest: &Manifest, name: &str) -> Result<Vec<T>> {
    if manifest.find(name).is_none() {
        return Err(OpeError::MissingArtifact(root.join(name)));
    }
    let path = root.join(name);
    let mut reader = csv::Reader::from_path(&path).map_err(|_| OpeError::MissingArtifact(path.clone()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| OpeError::Parse { path: path.clone(), line: i + 2, message: e.to_string() }))
        .collect()
}

/// Groups `items` by key in first-appearance order.
fn grouped<T, K: PartialEq>(items: impl IntoIterator<Item = T>, key: impl Fn(&T) -> K) -> Vec<(K, Vec<T>)> {
    let mut out: Vec<(K, Vec<T>)> = Vec::new();
    for item in items {
        let k = key(&item);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(item),
            None => out.push((k, vec![item])),
        }
    }
    out
}

/// Mean with a 95% t-interval over seeds; no interval for a single seed.
fn mean_with_ci(values: &[f64]) -> (f64, Option<f64>, Option<f64>) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, None, None);
    }
    let half = student_t_quantile(0.975, (values.len() - 1) as f64) * (sample_variance(values) / values.len() as f64).sqrt();
    (m, Some(m - half), Some(m + half))
}

fn family_rows(scenario: &str, family: &str, rows: Vec<FamilyMapeRow>) -> Vec<SummaryRow> {
    grouped(rows, |r| r.metric)
        .into_iter()
        .map(|(metric, g)| {
            let (value, ci_low, ci_high) = mean_with_ci(&g.iter().map(|r| r.mape).collect::<Vec<_>>());
            SummaryRow { scenario: scenario.into(), metric: metric.name().into(), estimator: family.into(), value, ci_low, ci_high, truth: None }
        })
        .collect()
}

fn scenario_rows(root: &Path, manifest: &Manifest, scenario: Scenario) -> Result<Vec<SummaryRow>> {
    let name = scenario.name();
    let row = |metric: String, estimator: String, value, ci_low, ci_high, truth| SummaryRow {
        scenario: name.to_string(),
        metric,
        estimator,
        value,
        ci_low,
        ci_high,
        truth,
    };
    Ok(match scenario {
        Scenario::AbTest => {
            let lifts: Vec<LiftRow> = read_rows(root, manifest, AB_LIFTS)?;
            grouped(lifts, |r| (r.test.clone(), r.metric))
                .into_iter()
                .map(|((test, metric), g)| {
                    let avg = |f: fn(&LiftRow) -> f64| mean(&g.iter().map(f).collect::<Vec<_>>());
                    row(metric.name().into(), test, avg(|r| r.lift_percent), Some(avg(|r| r.ci_low)), Some(avg(|r| r.ci_high)), None)
                })
                .collect()
        }
        Scenario::DiscreteVsContinuous => {
            let mut rows = family_rows(name, "discrete", read_rows(root, manifest, MAPE_DISCRETE)?);
            rows.extend(family_rows(name, "continuous", read_rows(root, manifest, MAPE_CONTINUOUS)?));
            rows
        }
        Scenario::EstimatorComparison => {
            let mapes: Vec<EstimatorMapeRow> = read_rows(root, manifest, ESTIMATOR_MAPE)?;
            grouped(mapes, |r| (r.estimator.clone(), r.metric))
                .into_iter()
                .map(|((estimator, metric), g)| {
                    let (v, lo, hi) = mean_with_ci(&g.iter().map(|r| r.mape).collect::<Vec<_>>());
                    row(metric.name().into(), estimator, v, lo, hi, None)
                })
                .collect()
        }
        Scenario::CounterfactualYz => {
            let lifts: Vec<CounterfactualRow> = read_rows(root, manifest, COUNTERFACTUAL_LIFTS)?;
            grouped(lifts, |r| (r.estimator.clone(), r.metric))
                .into_iter()
                .map(|((estimator, metric), g)| {
                    let avg = |f: fn(&CounterfactualRow) -> f64| mean(&g.iter().map(f).collect::<Vec<_>>());
                    row(
                        metric.name().into(),
                        estimator,
                        avg(|r| r.estimated_lift),
                        Some(avg(|r| r.estimated_ci_low)),
                        Some(avg(|r| r.estimated_ci_high)),
                        Some(avg(|r| r.actual_lift)),
                    )
                })
                .collect()
        }
        Scenario::OptPal => {
            let values: Vec<PolicyValueRow> = read_rows(root, manifest, OPTPAL_VALUES)?;
            grouped(values, |r| (r.policy.clone(), r.metric.clone()))
                .into_iter()
                .map(|((policy, metric), g)| {
                    let (v, lo, hi) = mean_with_ci(&g.iter().map(|r| r.oracle_value).collect::<Vec<_>>());
                    row(metric, policy, v, lo, hi, None)
                })
                .collect()
        }
    })
}

/// Scenario label of manifests written by `simulate`.
pub const SIMULATE: &str = "simulate";

#[derive(Deserialize)]
struct SimulatedOracle {
    control: PolicyValue,
    treatment: PolicyValue,
}

fn read_listed<T: DeserializeOwned>(root: &Path, manifest: &Manifest, name: &str) -> Result<T> {
    if manifest.find(name).is_none() {
        return Err(OpeError::MissingArtifact(root.join(name)));
    }
    read_json(&root.join(name))
}

/// Observed lifts of one simulated test, with the oracle lift as truth.
fn simulate_rows(root: &Path, manifest: &Manifest) -> Result<Vec<SummaryRow>> {
    let lifts: Vec<LiftResult> = read_listed(root, manifest, "lifts.json")?;
    let oracle: SimulatedOracle = read_listed(root, manifest, "oracle.json")?;
    lifts
        .iter()
        .map(|l| {
            let truth = compute_lift(oracle.treatment.get(l.metric), oracle.control.get(l.metric))?;
            Ok(SummaryRow {
                scenario: SIMULATE.into(),
                metric: l.metric.name().into(),
                estimator: "observed".into(),
                value: l.lift_percent,
                ci_low: Some(l.ci_low),
                ci_high: Some(l.ci_high),
                truth: Some(truth),
            })
        })
        .collect()
}

/// Verifies the manifest's hashes, then summarizes its scenario.
pub fn summarize(manifest_path: &Path) -> Result<Summary> {
    let manifest = verify(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let Some(name) = manifest.scenario.as_deref() else {
        return Ok(Summary::default());
    };
    if manifest.files.is_empty() {
        return Ok(Summary::default());
    }
    if name == SIMULATE {
        return Ok(Summary { rows: simulate_rows(root, &manifest)? });
    }
    let scenario = Scenario::parse(name).ok_or_else(|| OpeError::Config(format!("unknown scenario {name:?} in manifest")))?;
    Ok(Summary { rows: scenario_rows(root, &manifest, scenario)? })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

impl Summary {
    pub fn csv(&self) -> Vec<u8> {
        let header = ["scenario", "metric", "estimator", "value", "ci_low", "ci_high", "truth"];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                vec![r.scenario.clone(), r.metric.clone(), r.estimator.clone(), r.value.to_string(), opt(r.ci_low), opt(r.ci_high), opt(r.truth)]
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    /// One table per scenario.
    pub fn markdown(&self) -> String {
        if self.rows.is_empty() {
            return "# Summary\n\nNo artifacts.\n".to_string();
        }
        let mut out = String::from("# Summary\n");
        for (scenario, rows) in grouped(self.rows.iter(), |r| r.scenario.clone()) {
            out.push_str(&format!("\n## {scenario}\n\n| metric | estimator | value | ci_low | ci_high | truth |\n|---|---|---:|---:|---:|---:|\n"));
            for r in rows {
                out.push_str(&format!(
                    "| {} | {} | {:.4} | {} | {} | {} |\n",
                    r.metric,
                    r.estimator,
                    r.value,
                    cell(r.ci_low),
                    cell(r.ci_high),
                    cell(r.truth)
                ));
            }
        }
        out
    }
}

/// Writes `summary.md` and `summary.csv` into `out_dir`.
pub fn report(manifest_path: &Path, out_dir: &Path) -> Result<Summary> {
    let summary = summarize(manifest_path)?;
    fs::create_dir_all(out_dir).map_err(|e| OpeError::io(out_dir, e))?;
    let md = out_dir.join(SUMMARY_MD);
    fs::write(&md, summary.markdown()).map_err(|e| OpeError::io(&md, e))?;
    let csv = out_dir.join(SUMMARY_CSV);
    fs::write(&csv, summary.csv()).map_err(|e| OpeError::io(&csv, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_json;
    use crate::manifest::{ArtifactWriter, RunStatus, MANIFEST_FILE};

    #[test]
    fn empty_manifest_gives_empty_summary() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join(MANIFEST_FILE);
        write_json(&m, &Manifest::empty()).unwrap();
        let s = report(&m, dir.path()).unwrap();
        assert!(s.rows.is_empty());
        let csv = fs::read_to_string(dir.path().join(SUMMARY_CSV)).unwrap();
        assert_eq!(csv.trim(), "scenario,metric,estimator,value,ci_low,ci_high,truth");
    }

    #[test]
    fn listed_but_absent_artifact_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::create(dir.path(), Some("discrete_vs_continuous".into()), vec![1]).unwrap();
        w.write_bytes("scenario.toml", b"").unwrap();
        w.finish(RunStatus::Complete).unwrap();
        match summarize(&dir.path().join(MANIFEST_FILE)) {
            Err(OpeError::MissingArtifact(p)) => assert!(p.ends_with(MAPE_DISCRETE)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_interval_brackets_the_mean() {
        let (m, lo, hi) = mean_with_ci(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!(lo.unwrap() < m && m < hi.unwrap());
        assert_eq!(mean_with_ci(&[4.0]), (4.0, None, None));
    }
}
