//! On-disk layout of a pipeline run.
//!
//! ```text
//! <run>/config.json
//! <run>/manifest.json
//! <run>/selection.json
//! <run>/metrics.csv
//! <run>/checkpoints/{baseline,regularized}.json
//! <run>/audit/{baseline,regularized}_{val,test}.{json,csv}
//! ```
//!
//! Nothing time-dependent is written, so rerunning a command with the same
//! inputs reproduces every file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::AuditReport;
use crate::data::{write_csv, Dataset};
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::trainer::{LambdaTrial, MetricRow, RunArtifacts, TrainConfig};

pub const RUN_FORMAT: &str = "w2reg-run";
pub const RUN_VERSION: u32 = 1;
pub const NO_CLASS_MARKER: &str = "no class exceeded tau";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub software_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: Option<String>,
    pub retrained: bool,
    pub extra_forwards: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub tau: f64,
    pub min_support: usize,
    pub selected: Vec<String>,
    pub flagged_excluded: Vec<String>,
    pub lambda_trials: Vec<LambdaTrial>,
    pub chosen_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash(config: &TrainConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(config)?)))
}

/// Hex SHA-256 of the dataset's CSV serialization.
pub fn dataset_hash(dataset: &Dataset) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(dataset, &mut buf)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

fn write(dir: &Path, rel: &str, contents: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(rel.to_string());
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// `phase,epoch,split,accuracy,f1_macro,f1_weighted,tpr_gap_<class>...`
pub fn metrics_csv(rows: &[MetricRow], class_names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["phase", "epoch", "split", "accuracy", "f1_macro", "f1_weighted"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(class_names.iter().map(|c| format!("tpr_gap_{c}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.phase.clone(),
            r.epoch.to_string(),
            r.split.clone(),
            r.accuracy.to_string(),
            r.f1_macro.to_string(),
            r.f1_weighted.to_string(),
        ];
        rec.extend(r.tpr_gap.iter().map(|g| g.map(|g| g.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Persists `run` under `dir`, creating it if needed.
pub fn write_run(run: &RunArtifacts, dataset: Option<&Dataset>, dir: &Path) -> Result<RunManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let names = &run.class_names;
    let seed = run.seed();

    write(dir, "config.json", &pretty(&run.config)?, &mut files)?;
    write(
        dir,
        "checkpoints/baseline.json",
        &(Checkpoint::new(&run.baseline, seed).to_json()? + "\n"),
        &mut files,
    )?;
    let mut audits: Vec<(&str, &AuditReport)> =
        vec![("baseline_val", &run.baseline_val), ("baseline_test", &run.baseline_test)];
    if let Some(reg) = &run.regularized {
        write(
            dir,
            "checkpoints/regularized.json",
            &(Checkpoint::new(&reg.params, seed).to_json()? + "\n"),
            &mut files,
        )?;
        audits.push(("regularized_val", &reg.val));
        audits.push(("regularized_test", &reg.test));
    } else {
        for stale in [
            "checkpoints/regularized.json",
            "audit/regularized_val.json",
            "audit/regularized_val.csv",
            "audit/regularized_test.json",
            "audit/regularized_test.csv",
        ] {
            let _ = fs::remove_file(dir.join(stale));
        }
    }
    for (name, report) in audits {
        write(dir, &format!("audit/{name}.json"), &(report.to_json()? + "\n"), &mut files)?;
        write(dir, &format!("audit/{name}.csv"), &report.to_csv()?, &mut files)?;
    }
    write(dir, "metrics.csv", &metrics_csv(&run.metrics, names)?, &mut files)?;

    let selection = SelectionRecord {
        tau: run.config.tau,
        min_support: run.config.min_support,
        selected: run.selection.selected.iter().map(|&c| names[c].clone()).collect(),
        flagged_excluded: run.selection.flagged_excluded.iter().map(|&c| names[c].clone()).collect(),
        lambda_trials: run.lambda_trials.clone(),
        chosen_lambda: run.chosen_lambda,
        note: run.selection.is_empty().then(|| NO_CLASS_MARKER.to_string()),
    };
    write(dir, "selection.json", &pretty(&selection)?, &mut files)?;

    let manifest = RunManifest {
        format: RUN_FORMAT.into(),
        version: RUN_VERSION,
        software_version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config_hash: config_hash(&run.config)?,
        dataset_hash: dataset.map(dataset_hash).transpose()?,
        retrained: run.regularized.is_some(),
        extra_forwards: run.costs.iter().map(|c| c.extra_forwards).sum(),
        files,
    };
    let mut unused = Vec::new();
    write(dir, "manifest.json", &pretty(&manifest)?, &mut unused)?;
    Ok(manifest)
}

/// What the exporters need from a run directory.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub name: String,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub selection: SelectionRecord,
    pub baseline_test: AuditReport,
    pub regularized_test: Option<AuditReport>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_run(dir: &Path) -> Result<RunRecord> {
    let manifest: RunManifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != RUN_FORMAT || manifest.version != RUN_VERSION {
        return Err(Error::Input(format!(
            "{}: unsupported run format {} v{}",
            dir.display(),
            manifest.format,
            manifest.version
        )));
    }
    let regularized_test = if manifest.retrained {
        Some(read_json(&dir.join("audit/regularized_test.json"))?)
    } else {
        None
    };
    Ok(RunRecord {
        name: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
        dir: dir.to_path_buf(),
        selection: read_json(&dir.join("selection.json"))?,
        baseline_test: read_json(&dir.join("audit/baseline_test.json"))?,
        regularized_test,
        manifest,
    })
}

/// True when `dir` looks like a run directory.
pub fn is_run_dir(dir: &Path) -> bool {
    dir.join("manifest.json").is_file()
}
