//! Logged datasets on disk: JSONL or CSV records plus a `.meta.json` sidecar
//! holding the policy label and side.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ope_core::types::{Context, LoggedDataset, LoggedRecord, RewardVector, Side};
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// `.csv` is CSV; everything else is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Jsonl => "jsonl",
            DataFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonRecord {
    context: Vec<f64>,
    action: f64,
    cost: f64,
    reach: f64,
    resources: f64,
    returns: f64,
    #[serde(default)]
    propensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub policy_id: String,
    pub side: Side,
    pub dimension: usize,
    pub records: usize,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn record(path: &Path, line: usize, context: Vec<f64>, values: [f64; 5], propensity: Option<f64>) -> Result<LoggedRecord> {
    let parse = |message: String| OpeError::Parse { path: path.to_path_buf(), line, message };
    let context = Context::new(context).map_err(|e| parse(e.to_string()))?;
    let [action, cost, reach, resources, returns] = values;
    let rewards = RewardVector::new(cost, reach, resources, returns).map_err(|e| parse(e.to_string()))?;
    LoggedRecord::new(context, action, rewards, propensity).map_err(|e| parse(e.to_string()))
}

fn read_jsonl(path: &Path) -> Result<Vec<LoggedRecord>> {
    let file = fs::File::open(path).map_err(|e| OpeError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| OpeError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: JsonRecord = serde_json::from_str(&line)
            .map_err(|e| OpeError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        out.push(record(path, i + 1, r.context, [r.action, r.cost, r.reach, r.resources, r.returns], r.propensity)?);
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<LoggedRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mut context_columns = Vec::new();
    while let Some(c) = column(&format!("x{}", context_columns.len())) {
        context_columns.push(c);
    }
    let mut missing = Vec::new();
    if context_columns.is_empty() {
        missing.push("x0".to_string());
    }
    let mut value_columns = [0usize; 5];
    for (slot, name) in value_columns.iter_mut().zip(["action", "cost", "reach", "resources", "returns"]) {
        match column(name) {
            Some(c) => *slot = c,
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(OpeError::Schema { path: path.to_path_buf(), missing });
    }
    let propensity_column = column("propensity");
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let row = row.map_err(|e| csv_error(path, e))?;
        let number = |c: usize| -> Result<f64> {
            let cell = row.get(c).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| OpeError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("column {:?}: {cell:?} is not a number", &headers[c]),
            })
        };
        let context = context_columns.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        let mut values = [0.0; 5];
        for (v, &c) in values.iter_mut().zip(&value_columns) {
            *v = number(c)?;
        }
        let propensity = match propensity_column {
            Some(c) if !row.get(c).unwrap_or("").trim().is_empty() => Some(number(c)?),
            _ => None,
        };
        out.push(record(path, line, context, values, propensity)?);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> OpeError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OpeError::io(path, io),
        kind => OpeError::Parse { path: path.to_path_buf(), line, message: format!("{kind:?}") },
    }
}

/// Reads a dataset; labels come from the sidecar when present, otherwise
/// the file stem labels a control-side log.
pub fn read_dataset(path: &Path, format: DataFormat) -> Result<LoggedDataset> {
    let records = match format {
        DataFormat::Jsonl => read_jsonl(path)?,
        DataFormat::Csv => read_csv(path)?,
    };
    let meta = meta_path(path);
    let (policy_id, side) = if meta.exists() {
        let m: DatasetMeta = read_json(&meta)?;
        (m.policy_id, m.side)
    } else {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("log").to_string();
        (stem, Side::Control)
    };
    if records.is_empty() {
        return Err(OpeError::Parse { path: path.to_path_buf(), line: 0, message: "no records".into() });
    }
    Ok(LoggedDataset::new(records, policy_id, side)?)
}

/// [`read_dataset`] with the format taken from the extension.
pub fn read_dataset_auto(path: &Path) -> Result<LoggedDataset> {
    read_dataset(path, DataFormat::from_path(path))
}

/// Writes the records and the sidecar; returns both paths.
pub fn write_dataset(dataset: &LoggedDataset, path: &Path, format: DataFormat) -> Result<[PathBuf; 2]> {
    let file = fs::File::create(path).map_err(|e| OpeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| OpeError::io(path, e);
    match format {
        DataFormat::Jsonl => {
            for r in dataset.records() {
                let j = JsonRecord {
                    context: r.context.features().to_vec(),
                    action: r.action,
                    cost: r.rewards.cost,
                    reach: r.rewards.reach,
                    resources: r.rewards.resources,
                    returns: r.rewards.returns,
                    propensity: r.logged_propensity,
                };
                serde_json::to_writer(&mut w, &j).map_err(|e| OpeError::io(path, e.into()))?;
                w.write_all(b"\n").map_err(io)?;
            }
        }
        DataFormat::Csv => {
            let d = dataset.dimension();
            let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
            header.extend(["action", "cost", "reach", "resources", "returns", "propensity"].map(String::from));
            writeln!(w, "{}", header.join(",")).map_err(io)?;
            for r in dataset.records() {
                let mut cells: Vec<String> = r.context.features().iter().map(|v| v.to_string()).collect();
                let v = &r.rewards;
                cells.extend([r.action, v.cost, v.reach, v.resources, v.returns].iter().map(|x| x.to_string()));
                cells.push(r.logged_propensity.map(|p| p.to_string()).unwrap_or_default());
                writeln!(w, "{}", cells.join(",")).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    let meta = meta_path(path);
    let m = DatasetMeta {
        policy_id: dataset.policy_id().to_string(),
        side: dataset.side(),
        dimension: dataset.dimension(),
        records: dataset.len(),
    };
    write_json(&meta, &m)?;
    Ok([path.to_path_buf(), meta])
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| OpeError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| OpeError::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| OpeError::io(path, e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| OpeError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ope_core::sim::{generate_log, presets};
    use proptest::prelude::*;

    fn sample(n: usize, seed: u64) -> LoggedDataset {
        generate_log(&presets::default_auction(), &presets::policy_z(), n, seed).unwrap().with_labels("z", Side::Treatment)
    }

    #[test]
    fn round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample(50, 1);
        for format in [DataFormat::Jsonl, DataFormat::Csv] {
            let path = dir.path().join(format!("log.{}", format.extension()));
            write_dataset(&d, &path, format).unwrap();
            assert_eq!(read_dataset(&path, format).unwrap(), d);
        }
    }

    #[test]
    fn csv_without_action_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x0,cost,reach,resources,returns,propensity\n1,0,0,0,0,\n").unwrap();
        match read_dataset(&path, DataFormat::Csv) {
            Err(OpeError::Schema { missing, .. }) => assert_eq!(missing, vec!["action".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_jsonl_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        fs::write(&path, r#"{"context":[0.5,-1.0],"action":1.2,"cost":1.2,"reach":1,"resources":2,"returns":3.5,"propensity":null}"#)
            .unwrap();
        let d = read_dataset(&path, DataFormat::Jsonl).unwrap();
        assert_eq!((d.len(), d.dimension()), (1, 2));
        assert_eq!(d.policy_id(), "one");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.jsonl");
        let good = r#"{"context":[0.5],"action":1.0,"cost":1.0,"reach":1,"resources":0,"returns":0}"#;
        fs::write(&path, format!("{good}\n{good}\n{{\"context\":[0.5],\"action\":\n")).unwrap();
        match read_dataset(&path, DataFormat::Jsonl) {
            Err(OpeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let path = dir.path().join("broken.csv");
        fs::write(&path, "x0,action,cost,reach,resources,returns,propensity\n1,1,1,1,0,0,\n1,abc,1,1,0,0,\n").unwrap();
        match read_dataset(&path, DataFormat::Csv) {
            Err(OpeError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_action_is_rejected_with_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.jsonl");
        fs::write(&path, r#"{"context":[0.5],"action":-1.0,"cost":0,"reach":0,"resources":0,"returns":0}"#).unwrap();
        assert!(matches!(read_dataset(&path, DataFormat::Jsonl), Err(OpeError::Parse { line: 1, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_exact(seed in any::<u64>(), n in 1usize..40, csv in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let format = if csv { DataFormat::Csv } else { DataFormat::Jsonl };
            let path = dir.path().join(format!("p.{}", format.extension()));
            let d = sample(n, seed);
            write_dataset(&d, &path, format).unwrap();
            prop_assert_eq!(read_dataset(&path, format).unwrap(), d);
        }
    }
}
