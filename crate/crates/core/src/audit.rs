//! Group fairness audit of a classifier's hard predictions.
//!
//! Gaps follow the group1 − group0 convention: a positive TPR gap favours group 1.

use serde::{Deserialize, Serialize};

use crate::data::{Group, SupportTable};
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_MIN_SUPPORT: usize = 100;

/// Row-normalized confusion matrices (rows = true class) for each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub matrix0: Vec<Vec<f64>>,
    pub matrix1: Vec<Vec<f64>>,
    pub support0: Vec<usize>,
    pub support1: Vec<usize>,
}

impl GroupConfusion {
    pub fn num_classes(&self) -> usize {
        self.support0.len()
    }

    pub fn matrix(&self, group: Group) -> &[Vec<f64>] {
        match group {
            Group::Zero => &self.matrix0,
            Group::One => &self.matrix1,
        }
    }

    pub fn support(&self, group: Group) -> &[usize] {
        match group {
            Group::Zero => &self.support0,
            Group::One => &self.support1,
        }
    }

    /// Row `k` is defined for both groups.
    pub fn row_defined(&self, k: usize) -> bool {
        self.support0[k] > 0 && self.support1[k] > 0
    }

    /// `matrix1 − matrix0`, with `None` for rows lacking support in either group.
    pub fn difference(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.num_classes())
            .map(|k| {
                self.row_defined(k).then(|| {
                    self.matrix1[k]
                        .iter()
                        .zip(&self.matrix0[k])
                        .map(|(a, b)| a - b)
                        .collect()
                })
            })
            .collect()
    }
}

fn check_lengths(preds: &[usize], labels: &[usize], k: usize) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(c) = preds.iter().chain(labels).find(|&&c| c >= k) {
        return Err(Error::Input(format!("class id {c} outside 0..{k}")));
    }
    Ok(())
}

pub fn confusion_by_group(
    preds: &[usize],
    labels: &[usize],
    groups: &[Group],
    num_classes: usize,
) -> Result<GroupConfusion> {
    check_lengths(preds, labels, num_classes)?;
    if groups.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} groups for {} labels",
            groups.len(),
            labels.len()
        )));
    }
    let k = num_classes;
    let mut counts = [vec![vec![0usize; k]; k], vec![vec![0usize; k]; k]];
    let mut support = [vec![0usize; k], vec![0usize; k]];
    for ((&p, &y), &g) in preds.iter().zip(labels).zip(groups) {
        counts[g.index()][y][p] += 1;
        support[g.index()][y] += 1;
    }
    let normalize = |counts: &Vec<Vec<usize>>, support: &Vec<usize>| -> Vec<Vec<f64>> {
        counts
            .iter()
            .zip(support)
            .map(|(row, &n)| {
                if n == 0 {
                    vec![0.0; k]
                } else {
                    row.iter().map(|&c| c as f64 / n as f64).collect()
                }
            })
            .collect()
    };
    let [c0, c1] = &counts;
    let [s0, s1] = support;
    Ok(GroupConfusion {
        matrix0: normalize(c0, &s0),
        matrix1: normalize(c1, &s1),
        support0: s0,
        support1: s1,
    })
}

/// `P(ŷ=k | y=k, S=1) − P(ŷ=k | y=k, S=0)`; `None` when either group lacks class `k`.
pub fn tpr_gaps(confusion: &GroupConfusion) -> Vec<Option<f64>> {
    (0..confusion.num_classes())
        .map(|k| {
            confusion
                .row_defined(k)
                .then(|| confusion.matrix1[k][k] - confusion.matrix0[k][k])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
}

/// Per-class F1 (precision of a never-predicted class counts as 0) and true support.
fn per_class_f1(preds: &[usize], labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut tp = vec![0usize; k];
    let mut predicted = vec![0usize; k];
    let mut support = vec![0usize; k];
    for (&p, &y) in preds.iter().zip(labels) {
        predicted[p] += 1;
        support[y] += 1;
        if p == y {
            tp[y] += 1;
        }
    }
    let f1 = (0..k)
        .map(|c| {
            let denom = predicted[c] + support[c];
            if tp[c] == 0 || denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    (f1, support)
}

/// Accuracy plus macro F1 (mean over classes present in `labels`) and
/// support-weighted F1.
pub fn accuracy_f1(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<Scores> {
    check_lengths(preds, labels, num_classes)?;
    if labels.is_empty() {
        return Ok(Scores {
            accuracy: 0.0,
            f1_macro: 0.0,
            f1_weighted: 0.0,
        });
    }
    let n = labels.len() as f64;
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    let (f1, support) = per_class_f1(preds, labels, num_classes);
    let present: Vec<usize> = (0..num_classes).filter(|&c| support[c] > 0).collect();
    let f1_macro = present.iter().map(|&c| f1[c]).sum::<f64>() / present.len() as f64;
    let f1_weighted = present
        .iter()
        .map(|&c| f1[c] * support[c] as f64)
        .sum::<f64>()
        / n;
    Ok(Scores {
        accuracy: correct as f64 / n,
        f1_macro,
        f1_weighted,
    })
}

/// Everything measured about one classifier on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub format_version: u32,
    pub class_names: Vec<String>,
    pub n: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    /// Per class; `null` when a group has no examples of the class.
    pub tpr_gap: Vec<Option<f64>>,
    pub per_class_f1: Vec<f64>,
    /// Per class `[group 0, group 1]` true counts.
    pub support: SupportTable,
    pub confusion: GroupConfusion,
    /// `matrix1 − matrix0`; `null` rows where the gap is undefined.
    pub confusion_diff: Vec<Option<Vec<f64>>>,
}

impl AuditReport {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per class:
    /// `class,support_group0,support_group1,tpr_group0,tpr_group1,tpr_gap,f1`.
    /// Undefined values are left empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "class",
            "support_group0",
            "support_group1",
            "tpr_group0",
            "tpr_group1",
            "tpr_gap",
            "f1",
        ])?;
        let fmt = |present: bool, v: f64| if present { v.to_string() } else { String::new() };
        for k in 0..self.num_classes() {
            let [s0, s1] = self.support[k];
            w.write_record([
                self.class_names[k].clone(),
                s0.to_string(),
                s1.to_string(),
                fmt(s0 > 0, self.confusion.matrix0[k][k]),
                fmt(s1 > 0, self.confusion.matrix1[k][k]),
                self.tpr_gap[k].map(|g| g.to_string()).unwrap_or_default(),
                self.per_class_f1[k].to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn audit(
    preds: &[usize],
    labels: &[usize],
    groups: &[Group],
    class_names: &[String],
) -> Result<AuditReport> {
    let k = class_names.len();
    let confusion = confusion_by_group(preds, labels, groups, k)?;
    let scores = accuracy_f1(preds, labels, k)?;
    let (f1, _) = per_class_f1(preds, labels, k);
    let support = confusion
        .support0
        .iter()
        .zip(&confusion.support1)
        .map(|(&a, &b)| [a, b])
        .collect();
    Ok(AuditReport {
        format_version: 1,
        class_names: class_names.to_vec(),
        n: labels.len(),
        accuracy: scores.accuracy,
        f1_macro: scores.f1_macro,
        f1_weighted: scores.f1_weighted,
        tpr_gap: tpr_gaps(&confusion),
        per_class_f1: f1,
        support,
        confusion_diff: confusion.difference(),
        confusion,
    })
}

/// Which classes get regularized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    /// Gaps with `|gap| > tau` are unacceptable.
    pub tau: f64,
    /// Minimum number of true examples required in *each* group.
    pub min_support: usize,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau = {} outside (0, 1]", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Selection {
    /// Classes to regularize, by decreasing `|gap|`.
    pub selected: Vec<usize>,
    /// Classes above the threshold but lacking support; not regularized.
    pub flagged_excluded: Vec<usize>,
}

impl Selection {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Applies `rule` using the report's own support counts.
pub fn select_classes(report: &AuditReport, rule: &SelectionRule) -> Selection {
    select_classes_with_support(report, &report.support, rule)
}

/// Applies `rule` with support counts taken from elsewhere (typically the training split).
pub fn select_classes_with_support(
    report: &AuditReport,
    support: &SupportTable,
    rule: &SelectionRule,
) -> Selection {
    let mut over: Vec<(usize, f64)> = report
        .tpr_gap
        .iter()
        .enumerate()
        .filter_map(|(k, g)| g.filter(|g| g.abs() > rule.tau).map(|g| (k, g.abs())))
        .collect();
    over.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (selected, excluded): (Vec<_>, Vec<_>) = over.into_iter().partition(|&(k, _)| {
        support
            .get(k)
            .is_some_and(|s| s[0] >= rule.min_support && s[1] >= rule.min_support)
    });
    Selection {
        selected: selected.into_iter().map(|(k, _)| k).collect(),
        flagged_excluded: excluded.into_iter().map(|(k, _)| k).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    fn report_with_gaps(gaps: &[Option<f64>], support: usize) -> AuditReport {
        let k = gaps.len();
        let mut r = audit(&vec![0; 0], &vec![0; 0], &[], &names(k)).unwrap();
        r.tpr_gap = gaps.to_vec();
        r.support = vec![[support, support]; k];
        r
    }

    #[test]
    fn perfect_predictor_has_identity_confusion() {
        let labels = vec![0, 1, 2, 2, 1, 0];
        let groups = vec![Group::Zero, Group::One, Group::Zero, Group::One, Group::Zero, Group::One];
        let c = confusion_by_group(&labels, &labels, &groups, 3).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_eq!(c.matrix0[k][j], expect);
                assert_eq!(c.matrix1[k][j], expect);
            }
        }
        assert!(tpr_gaps(&c).iter().all(|g| *g == Some(0.0)));
    }

    #[test]
    fn single_misclassified_example() {
        let c = confusion_by_group(&[2], &[1], &[Group::Zero], 3).unwrap();
        assert_eq!(c.matrix0[1], vec![0.0, 0.0, 1.0]);
        assert!(c.matrix1.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(tpr_gaps(&c), vec![None, None, None]);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            confusion_by_group(&[0, 1], &[0], &[Group::Zero], 2),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            confusion_by_group(&[3], &[0], &[Group::Zero], 2),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            confusion_by_group(&[0], &[0], &[], 2),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn gap_arithmetic() {
        let c = GroupConfusion {
            matrix0: vec![vec![0.7, 0.3], vec![0.0, 1.0]],
            matrix1: vec![vec![0.9, 0.1], vec![0.0, 1.0]],
            support0: vec![10, 4],
            support1: vec![10, 4],
        };
        let gaps = tpr_gaps(&c);
        assert_abs_diff_eq!(gaps[0].unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(gaps[1], Some(0.0));
    }

    #[test]
    fn selection_rule() {
        let none = report_with_gaps(&[Some(0.0); 3], 500);
        assert!(select_classes(&none, &SelectionRule::default()).is_empty());

        let r = report_with_gaps(&[Some(0.05), Some(0.25), Some(-0.12)], 500);
        let s = select_classes(&r, &SelectionRule { tau: 0.1, min_support: 100 });
        assert_eq!(s.selected, vec![1, 2]);
        assert!(s.flagged_excluded.is_empty());
    }

    #[test]
    fn under_supported_class_is_flagged() {
        let mut r = report_with_gaps(&[Some(0.3), Some(0.0)], 500);
        r.support[0] = [500, 40];
        let s = select_classes(&r, &SelectionRule::default());
        assert!(s.selected.is_empty());
        assert_eq!(s.flagged_excluded, vec![0]);
    }

    #[test]
    fn f1_scores() {
        let labels = vec![0, 1, 2, 2];
        assert_eq!(
            accuracy_f1(&labels, &labels, 3).unwrap(),
            Scores { accuracy: 1.0, f1_macro: 1.0, f1_weighted: 1.0 }
        );
        let wrong = accuracy_f1(&[1, 2, 0, 0], &labels, 3).unwrap();
        assert_eq!(wrong.accuracy, 0.0);

        // Per-class F1: class 0 → 1, class 1 → 2·1/(3 + 1) = 0.5, class 2 → 0.
        let s = accuracy_f1(&[0, 1, 1, 1], &labels, 3).unwrap();
        assert_abs_diff_eq!(s.accuracy, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f1_macro, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.f1_weighted, 0.375, epsilon = 1e-12);
    }

    #[test]
    fn macro_f1_skips_absent_classes() {
        let s = accuracy_f1(&[0, 1], &[0, 1], 4).unwrap();
        assert_eq!(s.f1_macro, 1.0);
    }

    #[test]
    fn csv_has_one_row_per_class() {
        let labels = vec![0, 1, 1, 0];
        let groups = vec![Group::Zero, Group::Zero, Group::One, Group::One];
        let r = audit(&[0, 1, 0, 0], &labels, &groups, &names(2)).unwrap();
        let csv = r.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "c1,1,1,1,0,-1,0.6666666666666666");
    }

    fn random_stream() -> impl Strategy<Value = (usize, Vec<(usize, usize, bool)>)> {
        (2usize..6).prop_flat_map(|k| {
            (Just(k), proptest::collection::vec((0..k, 0..k, proptest::bool::ANY), 1..300))
        })
    }

    fn unpack(rows: &[(usize, usize, bool)]) -> (Vec<usize>, Vec<usize>, Vec<Group>) {
        let preds = rows.iter().map(|r| r.0).collect();
        let labels = rows.iter().map(|r| r.1).collect();
        let groups = rows
            .iter()
            .map(|r| if r.2 { Group::One } else { Group::Zero })
            .collect();
        (preds, labels, groups)
    }

    proptest! {
        #[test]
        fn gap_is_diagonal_of_difference((k, rows) in random_stream()) {
            let (p, y, g) = unpack(&rows);
            let r = audit(&p, &y, &g, &names(k)).unwrap();
            for c in 0..k {
                match (r.tpr_gap[c], &r.confusion_diff[c]) {
                    (Some(gap), Some(row)) => prop_assert!((gap - row[c]).abs() <= 1e-9),
                    (None, None) => {}
                    other => prop_assert!(false, "inconsistent {other:?}"),
                }
            }
        }

        #[test]
        fn supported_rows_sum_to_one((k, rows) in random_stream()) {
            let (p, y, g) = unpack(&rows);
            let c = confusion_by_group(&p, &y, &g, k).unwrap();
            for grp in Group::BOTH {
                for (row, &n) in c.matrix(grp).iter().zip(c.support(grp)) {
                    let sum: f64 = row.iter().sum();
                    if n > 0 {
                        prop_assert!((sum - 1.0).abs() <= 1e-9);
                    } else {
                        prop_assert_eq!(sum, 0.0);
                    }
                }
            }
        }

        #[test]
        fn swapping_groups_negates_gaps((k, rows) in random_stream()) {
            let (p, y, g) = unpack(&rows);
            let swapped: Vec<Group> = g.iter().map(|x| x.other()).collect();
            let a = tpr_gaps(&confusion_by_group(&p, &y, &g, k).unwrap());
            let b = tpr_gaps(&confusion_by_group(&p, &y, &swapped, k).unwrap());
            for (x, z) in a.iter().zip(&b) {
                prop_assert_eq!(x.map(|v| -v), *z);
            }
        }

        #[test]
        fn order_does_not_matter((k, rows) in random_stream(), seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p, y, g) = unpack(&rows);
            let (ps, ys, gs) = unpack(&shuffled);
            let a = audit(&p, &y, &g, &names(k)).unwrap();
            let b = audit(&ps, &ys, &gs, &names(k)).unwrap();
            prop_assert_eq!(a.support, b.support);
            prop_assert_eq!(a.tpr_gap, b.tpr_gap);
            prop_assert_eq!(a.confusion, b.confusion);
            prop_assert!((a.f1_macro - b.f1_macro).abs() <= 1e-12);
            prop_assert!((a.f1_weighted - b.f1_weighted).abs() <= 1e-12);
            prop_assert_eq!(a.accuracy, b.accuracy);
        }

        #[test]
        fn raising_tau_never_adds_classes(
            gaps in proptest::collection::vec(proptest::option::of(-1.0f64..=1.0), 1..12),
            t1 in 0.01f64..=1.0,
            t2 in 0.01f64..=1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let r = report_with_gaps(&gaps, 200);
            let a = select_classes(&r, &SelectionRule { tau: lo, min_support: 100 });
            let b = select_classes(&r, &SelectionRule { tau: hi, min_support: 100 });
            prop_assert!(b.selected.iter().all(|c| a.selected.contains(c)));
        }
    }
}
