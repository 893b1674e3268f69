//! Plot-ready tables built from one or more run directories.
//!
//! Every table starts with `#` comment lines, one per run, carrying the run's
//! seed and config hash so each number can be traced back to its manifest.

use std::fs;
use std::path::Path;

use crate::audit::AuditReport;
use crate::error::{Error, Result};
use crate::run::RunRecord;

pub const ACCURACY_FILE: &str = "accuracy_f1.csv";
pub const TPR_GAP_FILE: &str = "tpr_gaps.csv";
pub const CONFUSION_DIFF_FILE: &str = "confusion_diff.csv";
pub const GAIN_FILE: &str = "gain_matrix.csv";

/// `|base diff| − |treated diff|` entry by entry; positive means the bias shrank.
/// Rows undefined in either report stay `None`.
pub fn export_gain_matrix(
    base: &AuditReport,
    treated: &AuditReport,
) -> Result<Vec<Option<Vec<f64>>>> {
    if base.class_names != treated.class_names {
        return Err(Error::Input(format!(
            "class lists differ: {:?} vs {:?}",
            base.class_names, treated.class_names
        )));
    }
    let k = base.num_classes();
    if base.confusion_diff.len() != k || treated.confusion_diff.len() != k {
        return Err(Error::Input("confusion difference has the wrong number of rows".into()));
    }
    base.confusion_diff
        .iter()
        .zip(&treated.confusion_diff)
        .map(|(b, t)| match (b, t) {
            (Some(b), Some(t)) => {
                if b.len() != k || t.len() != k {
                    return Err(Error::Input("confusion difference row has the wrong length".into()));
                }
                Ok(Some(b.iter().zip(t).map(|(b, t)| b.abs() - t.abs()).collect()))
            }
            _ => Ok(None),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportBundle {
    pub accuracy_f1: String,
    pub tpr_gaps: String,
    pub confusion_diff: String,
    pub gain: String,
}

impl ExportBundle {
    pub fn files(&self) -> [(&'static str, &str); 4] {
        [
            (ACCURACY_FILE, &self.accuracy_f1),
            (TPR_GAP_FILE, &self.tpr_gaps),
            (CONFUSION_DIFF_FILE, &self.confusion_diff),
            (GAIN_FILE, &self.gain),
        ]
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.files() {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

struct Table {
    out: String,
}

impl Table {
    fn new(runs: &[RunRecord], header: &[String]) -> Self {
        let mut out = String::new();
        for r in runs {
            out.push_str(&format!(
                "# run={} seed={} config_hash={}\n",
                r.name, r.manifest.seed, r.manifest.config_hash
            ));
        }
        let mut t = Self { out };
        t.row(header.iter().cloned());
        t
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let fields: Vec<String> = fields.into_iter().collect();
        w.write_record(&fields).expect("in-memory write");
        let bytes = w.into_inner().expect("in-memory write");
        self.out.push_str(std::str::from_utf8(&bytes).expect("utf-8"));
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn header(fixed: &[&str], classes: &[String]) -> Vec<String> {
    fixed.iter().map(|s| s.to_string()).chain(classes.iter().cloned()).collect()
}

/// Builds all four tables from test-split audits of `runs`.
pub fn build_bundle(runs: &[RunRecord]) -> Result<ExportBundle> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Input("no run to export".into()))?;
    let classes = first.baseline_test.class_names.clone();
    if let Some(r) = runs.iter().find(|r| r.baseline_test.class_names != classes) {
        return Err(Error::Input(format!("run {} has a different class list", r.name)));
    }

    let models = |r: &RunRecord| {
        let mut m = vec![("baseline", r.baseline_test.clone())];
        if let Some(t) = &r.regularized_test {
            m.push(("regularized", t.clone()));
        }
        m
    };

    let mut acc = Table::new(
        runs,
        &header(&["run", "seed", "model", "accuracy", "f1_macro", "f1_weighted"], &[]),
    );
    let mut gaps = Table::new(
        runs,
        &header(&["run", "seed", "model", "class", "tpr_gap", "regularized"], &[]),
    );
    let mut diff = Table::new(runs, &header(&["run", "seed", "model", "class"], &classes));
    let mut gain = Table::new(runs, &header(&["run", "seed", "class"], &classes));

    for r in runs {
        let seed = r.manifest.seed.to_string();
        for (model, report) in models(r) {
            acc.row([
                r.name.clone(),
                seed.clone(),
                model.into(),
                report.accuracy.to_string(),
                report.f1_macro.to_string(),
                report.f1_weighted.to_string(),
            ]);
            for (k, name) in classes.iter().enumerate() {
                gaps.row([
                    r.name.clone(),
                    seed.clone(),
                    model.into(),
                    name.clone(),
                    opt(report.tpr_gap[k]),
                    r.selection.selected.contains(name).to_string(),
                ]);
                let mut row = vec![r.name.clone(), seed.clone(), model.into(), name.clone()];
                match &report.confusion_diff[k] {
                    Some(v) => row.extend(v.iter().map(f64::to_string)),
                    None => row.extend(std::iter::repeat(String::new()).take(classes.len())),
                }
                diff.row(row);
            }
        }
        if let Some(treated) = &r.regularized_test {
            let g = export_gain_matrix(&r.baseline_test, treated)?;
            for (name, row) in classes.iter().zip(g) {
                let mut out = vec![r.name.clone(), seed.clone(), name.clone()];
                match row {
                    Some(v) => out.extend(v.iter().map(f64::to_string)),
                    None => out.extend(std::iter::repeat(String::new()).take(classes.len())),
                }
                gain.row(out);
            }
        }
    }
    Ok(ExportBundle {
        accuracy_f1: acc.out,
        tpr_gaps: gaps.out,
        confusion_diff: diff.out,
        gain: gain.out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::audit;
    use crate::data::Group;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("class_{i}")).collect()
    }

    fn report(preds: &[usize], labels: &[usize], groups: &[Group], k: usize) -> AuditReport {
        audit(preds, labels, groups, &names(k)).unwrap()
    }

    #[test]
    fn gain_of_identical_reports_is_zero() {
        use Group::*;
        let r = report(&[0, 1, 1, 0], &[0, 1, 0, 1], &[Zero, Zero, One, One], 2);
        let g = export_gain_matrix(&r, &r).unwrap();
        assert!(g.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn gain_of_removed_bias() {
        use Group::*;
        // Class 0: group 0 always right, group 1 right 8 times in 10 → diff (0,0) = −0.2.
        let labels = vec![0; 20];
        let groups: Vec<Group> = (0..20).map(|i| if i < 10 { Zero } else { One }).collect();
        let mut biased = vec![0; 20];
        biased[18] = 1;
        biased[19] = 1;
        let base = report(&biased, &labels, &groups, 2);
        let fair = report(&vec![0; 20], &labels, &groups, 2);
        let g = export_gain_matrix(&base, &fair).unwrap();
        let row = g[0].as_ref().unwrap();
        assert!((row[0] - 0.2).abs() < 1e-12);
        assert!((row[1] - 0.2).abs() < 1e-12);
        assert!(g[1].is_none());
    }

    #[test]
    fn gain_shape_mismatch() {
        use Group::*;
        let a = report(&[0, 1], &[0, 1], &[Zero, One], 2);
        let b = report(&[0, 1], &[0, 1], &[Zero, One], 3);
        assert!(matches!(export_gain_matrix(&a, &b), Err(Error::Input(_))));
    }
}
