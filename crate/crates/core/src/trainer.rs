//! Baseline training, audit-driven class selection and W2-regularized retraining.
//!
//! Every random choice derives from `TrainConfig::seed` through separate ChaCha
//! streams (initialization, epoch shuffling, reference draws), so a regularized
//! run with every λ at zero follows exactly the baseline trajectory.

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{audit, select_classes_with_support, AuditReport, Selection, SelectionRule};
use crate::data::{split, Dataset, Group, Splits, StratumIndex};
use crate::error::{Error, Result};
use crate::model::{
    backward, cross_entropy_grad, forward, predict, step, ModelParams, OptimizerConfig,
    OptimizerState,
};
use crate::regularizer::{draw_reference, pseudo_grad, GroupCdfPair};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_REFERENCE: u64 = 3;

const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub hidden: Vec<usize>,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    /// Steps of the output grid used for the per-batch CDFs.
    pub grid_steps: usize,
    /// Reference examples drawn per group and regularized class at each batch.
    pub reference_m: usize,
    /// Shared regularization weight.
    pub lambda: f64,
    /// Per-class overrides of `lambda`, keyed by 0-based class id.
    pub class_lambda: BTreeMap<usize, f64>,
    /// Candidate shared weights; when non-empty the pipeline retrains once per
    /// value and keeps one according to `lambda_selection`.
    pub lambda_grid: Vec<f64>,
    /// Split whose metrics decide among `lambda_grid` candidates.
    pub lambda_selection: SelectionSplit,
    /// Largest accuracy loss tolerated when choosing from `lambda_grid`.
    pub max_accuracy_drop: f64,
    pub tau: f64,
    pub min_support: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerConfig::adam(1e-3),
            hidden: vec![64, 64],
            split: [0.7, 0.1, 0.2],
            grid_steps: 100,
            reference_m: 16,
            lambda: 40.0,
            class_lambda: BTreeMap::new(),
            lambda_grid: Vec::new(),
            lambda_selection: SelectionSplit::Train,
            max_accuracy_drop: 0.03,
            tau: crate::audit::DEFAULT_TAU,
            min_support: crate::audit::DEFAULT_MIN_SUPPORT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.reference_m == 0 {
            return bad("reference_m must be at least 1".into());
        }
        if self.grid_steps < 2 {
            return bad(format!("grid_steps = {} (need ≥ 2)", self.grid_steps));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad(format!("hidden layer sizes must be positive: {:?}", self.hidden));
        }
        let lambda_ok = |l: f64| l >= 0.0 && l.is_finite();
        if !lambda_ok(self.lambda) {
            return bad(format!("lambda = {} (need ≥ 0)", self.lambda));
        }
        if let Some((c, l)) = self.class_lambda.iter().find(|(_, &l)| !lambda_ok(l)) {
            return bad(format!("class_lambda[{c}] = {l} (need ≥ 0)"));
        }
        if let Some(l) = self.lambda_grid.iter().find(|&&l| !lambda_ok(l)) {
            return bad(format!("lambda_grid contains {l} (need ≥ 0)"));
        }
        if !(self.max_accuracy_drop >= 0.0) {
            return bad("max_accuracy_drop must be ≥ 0".into());
        }
        crate::data::validate_fractions(self.split)?;
        self.optimizer.validate()?;
        self.selection_rule().validate()
    }

    pub fn selection_rule(&self) -> SelectionRule {
        SelectionRule {
            tau: self.tau,
            min_support: self.min_support,
        }
    }

    /// Weight applied to `class` when the shared weight is `shared`.
    pub fn lambda_for(&self, class: usize, shared: f64) -> f64 {
        self.class_lambda.get(&class).copied().unwrap_or(shared)
    }

    pub fn layer_sizes(&self, num_features: usize, num_classes: usize) -> Vec<usize> {
        let mut s = vec![num_features];
        s.extend(&self.hidden);
        s.push(num_classes);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionSplit {
    Train,
    Val,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Extra work done for the regularizer in one mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCost {
    pub epoch: usize,
    pub batch: usize,
    /// Regularized classes (with non-zero weight) present in the batch.
    pub classes_present: usize,
    /// Forward passes run on reference examples.
    pub extra_forwards: usize,
}

/// One line of the per-epoch metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub phase: String,
    pub epoch: usize,
    pub split: String,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub tpr_gap: Vec<Option<f64>>,
}

impl MetricRow {
    fn new(phase: &str, epoch: usize, split: &str, report: &AuditReport) -> Self {
        Self {
            phase: phase.into(),
            epoch,
            split: split.into(),
            accuracy: report.accuracy,
            f1_macro: report.f1_macro,
            f1_weighted: report.f1_weighted,
            tpr_gap: report.tpr_gap.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Audit on the validation split after the last epoch.
    pub val_audit: AuditReport,
    pub log: Vec<MetricRow>,
    pub costs: Vec<BatchCost>,
}

/// Runs the model on every example and audits the predictions.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<AuditReport> {
    let mut preds = Vec::with_capacity(dataset.len());
    let all: Vec<usize> = (0..dataset.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let x = dataset.features_of(chunk);
        preds.extend(predict(&forward(params, x.view())?));
    }
    audit(&preds, &dataset.labels(), &dataset.groups(), dataset.class_names())
}

fn check_splits(splits: &Splits) -> Result<()> {
    let support = splits.train.support();
    if let Some(c) = support.iter().position(|s| s[0] + s[1] == 0) {
        return Err(Error::Config(format!(
            "class {} ({}) is absent from the training split",
            c, splits.train.class_names()[c]
        )));
    }
    if splits.val.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    Ok(())
}

/// Mini-batch training on cross-entropy only.
pub fn train_baseline(splits: &Splits, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    check_splits(splits)?;
    train_loop(splits, config, &BTreeMap::new(), "baseline")
}

/// Retraining with a W2 penalty on each class of `classes`, weighted by
/// `config.lambda_for(class, config.lambda)`.
pub fn train_regularized(
    splits: &Splits,
    config: &TrainConfig,
    classes: &[usize],
) -> Result<TrainedModel> {
    let lambdas = class_weights(config, classes, config.lambda, splits.train.num_classes())?;
    config.validate()?;
    check_splits(splits)?;
    train_loop(splits, config, &lambdas, "regularized")
}

fn class_weights(
    config: &TrainConfig,
    classes: &[usize],
    shared: f64,
    num_classes: usize,
) -> Result<BTreeMap<usize, f64>> {
    if classes.is_empty() {
        return Err(Error::Precondition("no class to regularize".into()));
    }
    if let Some(c) = classes.iter().find(|&&c| c >= num_classes) {
        return Err(Error::Precondition(format!(
            "class {c} out of range for {num_classes} classes"
        )));
    }
    Ok(classes.iter().map(|&c| (c, config.lambda_for(c, shared))).collect())
}

fn train_loop(
    splits: &Splits,
    config: &TrainConfig,
    lambdas: &BTreeMap<usize, f64>,
    phase: &str,
) -> Result<TrainedModel> {
    let train = &splits.train;
    let (k, p) = (train.num_classes(), train.num_features());
    let mut params = ModelParams::init(&config.layer_sizes(p, k), &mut stream(config.seed, STREAM_INIT))?;
    let mut optimizer = OptimizerState::new(config.optimizer);
    let mut shuffle_rng = stream(config.seed, STREAM_SHUFFLE);
    let mut reference_rng = stream(config.seed, STREAM_REFERENCE);

    let active: Vec<(usize, f64)> = lambdas
        .iter()
        .filter(|(_, &l)| l != 0.0)
        .map(|(&c, &l)| (c, l))
        .collect();
    let strata = StratumIndex::new(train);
    let labels = train.labels();
    let groups = train.groups();

    let mut log = Vec::new();
    let mut costs = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut warned: HashSet<(usize, Group)> = HashSet::new();
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let x = train.features_of(batch);
            let trace = forward(&params, x.view())?;
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let mut grad = cross_entropy_grad(trace.probs.view(), &batch_labels)?;

            let mut cost = BatchCost {
                epoch,
                batch: b,
                classes_present: 0,
                extra_forwards: 0,
            };
            if !active.is_empty() {
                let in_batch: HashSet<usize> = batch.iter().copied().collect();
                for &(class, lambda) in &active {
                    let members: Vec<usize> =
                        (0..batch.len()).filter(|&r| batch_labels[r] == class).collect();
                    if members.is_empty() {
                        continue;
                    }
                    cost.classes_present += 1;
                    let mut samples: [Vec<f64>; 2] = Default::default();
                    for group in Group::BOTH {
                        let refs = draw_reference(
                            &strata,
                            class,
                            group,
                            config.reference_m,
                            &in_batch,
                            &mut reference_rng,
                        );
                        cost.extra_forwards += refs.len();
                        let s = &mut samples[group.index()];
                        if !refs.is_empty() {
                            let out = forward(&params, train.features_of(&refs).view())?;
                            s.extend(out.probs.column(class).iter());
                        }
                        s.extend(
                            members
                                .iter()
                                .filter(|&&r| groups[batch[r]] == group)
                                .map(|&r| trace.probs[[r, class]]),
                        );
                    }
                    if let Some(g) = Group::BOTH.into_iter().find(|g| samples[g.index()].is_empty()) {
                        if warned.insert((class, g)) {
                            log::warn!(
                                "epoch {epoch}: no group-{g} output for class {class}; \
                                 skipping its penalty"
                            );
                        }
                        continue;
                    }
                    let cdfs = GroupCdfPair::from_samples(
                        &samples[0],
                        &samples[1],
                        config.grid_steps,
                        strata.count(class, Group::Zero),
                        strata.count(class, Group::One),
                    )?;
                    for &r in &members {
                        let g = pseudo_grad(trace.probs[[r, class]], groups[batch[r]], &cdfs, 1.0);
                        grad[[r, class]] += lambda * g.value();
                    }
                }
            }
            costs.push(cost);

            let grads = backward(&params, &trace, grad.view())?;
            step(&mut params, &grads, &mut optimizer)?;
        }
        if !params.all_finite() {
            return Err(Error::Domain(format!("parameters diverged in epoch {epoch}")));
        }
        let train_report = evaluate(&params, train)?;
        let val_report = evaluate(&params, &splits.val)?;
        log::info!(
            "{phase} epoch {epoch}: train acc {:.4}, val acc {:.4}",
            train_report.accuracy,
            val_report.accuracy
        );
        log.push(MetricRow::new(phase, epoch, "train", &train_report));
        log.push(MetricRow::new(phase, epoch, "val", &val_report));
    }
    let val_audit = evaluate(&params, &splits.val)?;
    Ok(TrainedModel {
        params,
        val_audit,
        log,
        costs,
    })
}

/// Outcome of one candidate shared λ on the selection split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub accuracy: f64,
    /// Largest `|gap|` over the regularized classes.
    pub max_gap: f64,
}

/// Picks the trial with the smallest worst gap among those losing at most
/// `max_drop` accuracy; falls back to the first trial.
pub fn choose_lambda(trials: &[LambdaTrial], baseline_accuracy: f64, max_drop: f64) -> Option<usize> {
    let admissible = trials
        .iter()
        .enumerate()
        .filter(|(_, t)| t.accuracy >= baseline_accuracy - max_drop);
    admissible
        .min_by(|a, b| a.1.max_gap.total_cmp(&b.1.max_gap).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .or(if trials.is_empty() { None } else { Some(0) })
}

fn max_gap(report: &AuditReport, classes: &[usize]) -> f64 {
    classes
        .iter()
        .filter_map(|&c| report.tpr_gap[c])
        .fold(0.0, |m, g| m.max(g.abs()))
}

/// Everything produced by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    pub class_names: Vec<String>,
    pub baseline: ModelParams,
    pub baseline_val: AuditReport,
    pub baseline_test: AuditReport,
    pub selection: Selection,
    pub lambda_trials: Vec<LambdaTrial>,
    /// Shared λ used for the retained regularized model.
    pub chosen_lambda: Option<f64>,
    /// `None` when no class exceeded the threshold.
    pub regularized: Option<RegularizedOutcome>,
    pub metrics: Vec<MetricRow>,
    pub costs: Vec<BatchCost>,
}

#[derive(Debug, Clone)]
pub struct RegularizedOutcome {
    pub params: ModelParams,
    pub val: AuditReport,
    pub test: AuditReport,
}

impl RunArtifacts {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Parameters of the final model: regularized when retraining happened.
    pub fn final_params(&self) -> &ModelParams {
        self.regularized.as_ref().map_or(&self.baseline, |r| &r.params)
    }
}

/// Split, train the baseline, select classes on validation, retrain with the
/// penalty and audit both models on validation and test.
pub fn run_pipeline(dataset: &Dataset, config: &TrainConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let splits = split(dataset, config.split, config.seed)?;
    run_pipeline_on_splits(&splits, config)
}

pub fn run_pipeline_on_splits(splits: &Splits, config: &TrainConfig) -> Result<RunArtifacts> {
    pipeline(splits, config, true)
}

/// Baseline training, audits and selection only; the selection is recorded
/// but no retraining happens.
pub fn run_baseline_only(dataset: &Dataset, config: &TrainConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let splits = split(dataset, config.split, config.seed)?;
    pipeline(&splits, config, false)
}

fn pipeline(splits: &Splits, config: &TrainConfig, retrain: bool) -> Result<RunArtifacts> {
    config.validate()?;
    let base = train_baseline(splits, config)?;
    let baseline_test = evaluate(&base.params, &splits.test)?;
    let selection = select_classes_with_support(
        &base.val_audit,
        &splits.train.support(),
        &config.selection_rule(),
    );
    for &c in &selection.flagged_excluded {
        log::warn!("class {c} exceeds tau but lacks support; not regularized");
    }
    let mut metrics = base.log.clone();
    let mut costs = base.costs.clone();

    let mut lambda_trials = Vec::new();
    let mut chosen_lambda = None;
    let mut regularized = None;
    if selection.is_empty() {
        log::info!("no class exceeded tau = {}; skipping retraining", config.tau);
    } else if retrain {
        let grid = if config.lambda_grid.is_empty() {
            vec![config.lambda]
        } else {
            config.lambda_grid.clone()
        };
        let k = splits.train.num_classes();
        let judge = |params: &ModelParams, val: &AuditReport| match config.lambda_selection {
            SelectionSplit::Val => Ok(val.clone()),
            SelectionSplit::Train => evaluate(params, &splits.train),
        };
        let base_judged = judge(&base.params, &base.val_audit)?;
        let mut candidates = Vec::with_capacity(grid.len());
        for &shared in &grid {
            let weights = class_weights(config, &selection.selected, shared, k)?;
            let model = train_loop(splits, config, &weights, "regularized")?;
            let judged = judge(&model.params, &model.val_audit)?;
            lambda_trials.push(LambdaTrial {
                lambda: shared,
                accuracy: judged.accuracy,
                max_gap: max_gap(&judged, &selection.selected),
            });
            candidates.push(model);
        }
        let best = choose_lambda(&lambda_trials, base_judged.accuracy, config.max_accuracy_drop)
            .expect("at least one trial");
        chosen_lambda = Some(grid[best]);
        let model = candidates.swap_remove(best);
        metrics.extend(model.log);
        costs.extend(model.costs);
        regularized = Some(RegularizedOutcome {
            test: evaluate(&model.params, &splits.test)?,
            val: model.val_audit,
            params: model.params,
        });
    }

    Ok(RunArtifacts {
        config: config.clone(),
        class_names: splits.train.class_names().to_vec(),
        baseline: base.params,
        baseline_val: base.val_audit,
        baseline_test,
        selection,
        lambda_trials,
        chosen_lambda,
        regularized,
        metrics,
        costs,
    })
}

/// Convenience for callers holding a feature matrix.
pub fn predict_matrix(params: &ModelParams, x: &Array2<f64>) -> Result<Vec<usize>> {
    Ok(predict(&forward(params, x.view())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec};
    use crate::model::Checkpoint;

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            epochs: 3,
            hidden: vec![16],
            ..TrainConfig::default()
        }
    }

    fn small_splits(seed: u64) -> Splits {
        let data = generate(&SyntheticSpec::balanced(3, 4, 60, seed)).unwrap();
        split(&data, [0.7, 0.1, 0.2], seed).unwrap()
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"seed": 9, "class_lambda": {"2": 5.0}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.split, [0.7, 0.1, 0.2]);
        assert_eq!(cfg.lambda_for(2, 1.0), 5.0);
        assert_eq!(cfg.lambda_for(1, 1.0), 1.0);
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { reference_m: 0, ..ok.clone() },
            TrainConfig { lambda: -1.0, ..ok.clone() },
            TrainConfig { split: [0.5, 0.5, 0.0], ..ok.clone() },
            TrainConfig { split: [0.7, 0.2, 0.2], ..ok.clone() },
            TrainConfig { tau: 0.0, ..ok.clone() },
            TrainConfig { lambda_grid: vec![1.0, f64::NAN], ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let splits = small_splits(1);
        let cfg = TrainConfig { epochs: 0, ..small_config(4) };
        let model = train_baseline(&splits, &cfg).unwrap();
        let init = ModelParams::init(&cfg.layer_sizes(4, 3), &mut stream(4, STREAM_INIT)).unwrap();
        assert_eq!(model.params, init);
        assert!(model.log.is_empty() && model.costs.is_empty());
    }

    #[test]
    fn baseline_is_deterministic() {
        let splits = small_splits(2);
        let a = train_baseline(&splits, &small_config(5)).unwrap();
        let b = train_baseline(&splits, &small_config(5)).unwrap();
        assert_eq!(a.params, b.params);
        let c = train_baseline(&splits, &small_config(6)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn separable_data_is_learned() {
        let mut spec = SyntheticSpec::balanced(3, 4, 150, 3);
        spec.separation = 8.0;
        let data = generate(&spec).unwrap();
        let splits = split(&data, [0.7, 0.1, 0.2], 3).unwrap();
        let cfg = TrainConfig { epochs: 20, ..small_config(3) };
        let model = train_baseline(&splits, &cfg).unwrap();
        assert!(model.val_audit.accuracy >= 0.95, "{}", model.val_audit.accuracy);
    }

    #[test]
    fn zero_lambda_matches_baseline_bitwise() {
        let splits = small_splits(7);
        let cfg = TrainConfig { lambda: 0.0, ..small_config(8) };
        let base = train_baseline(&splits, &cfg).unwrap();
        let reg = train_regularized(&splits, &cfg, &[0, 2]).unwrap();
        assert_eq!(
            Checkpoint::new(&base.params, 8).to_json().unwrap(),
            Checkpoint::new(&reg.params, 8).to_json().unwrap()
        );
        assert!(reg.costs.iter().all(|c| c.extra_forwards == 0));
    }

    #[test]
    fn regularization_changes_training_and_respects_budget() {
        let splits = small_splits(9);
        let cfg = TrainConfig { lambda: 50.0, ..small_config(10) };
        let base = train_baseline(&splits, &cfg).unwrap();
        let reg = train_regularized(&splits, &cfg, &[1]).unwrap();
        assert_ne!(base.params, reg.params);
        assert!(reg.costs.iter().any(|c| c.extra_forwards > 0));
        for c in &reg.costs {
            assert!(c.extra_forwards <= 2 * cfg.reference_m * c.classes_present);
            if c.classes_present == 0 {
                assert_eq!(c.extra_forwards, 0);
            }
        }
    }

    #[test]
    fn regularized_preconditions() {
        let splits = small_splits(11);
        let cfg = small_config(1);
        assert!(matches!(train_regularized(&splits, &cfg, &[]), Err(Error::Precondition(_))));
        assert!(matches!(train_regularized(&splits, &cfg, &[3]), Err(Error::Precondition(_))));
    }

    #[test]
    fn class_missing_from_training_is_a_config_error() {
        let splits = small_splits(12);
        let keep: Vec<usize> = (0..splits.train.len())
            .filter(|&i| splits.train.examples()[i].label != 1)
            .collect();
        let broken = Splits {
            train: splits.train.subset(&keep),
            ..splits
        };
        let err = train_baseline(&broken, &small_config(1)).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("class 1")), "{err}");
    }

    #[test]
    fn choose_lambda_prefers_admissible_smallest_gap() {
        let t = |lambda, accuracy, max_gap| LambdaTrial {
            lambda,
            accuracy,
            max_gap,
        };
        let trials = [t(1.0, 0.90, 0.20), t(10.0, 0.89, 0.08), t(100.0, 0.80, 0.01)];
        assert_eq!(choose_lambda(&trials, 0.90, 0.03), Some(1));
        assert_eq!(choose_lambda(&trials, 0.99, 0.03), Some(0));
        assert_eq!(choose_lambda(&[], 0.9, 0.03), None);
        let tied = [t(1.0, 0.9, 0.1), t(2.0, 0.9, 0.1)];
        assert_eq!(choose_lambda(&tied, 0.9, 0.0), Some(0));
    }

    #[test]
    fn unbiased_pipeline_skips_retraining() {
        let data = generate(&SyntheticSpec::balanced(3, 4, 400, 13)).unwrap();
        let cfg = TrainConfig { epochs: 5, lambda: 10.0, ..small_config(13) };
        let run = run_pipeline(&data, &cfg).unwrap();
        assert!(run.selection.is_empty(), "{:?}", run.baseline_val.tpr_gap);
        assert!(run.regularized.is_none());
        assert_eq!(run.final_params(), &run.baseline);
        assert!(run.metrics.iter().all(|m| m.phase == "baseline"));
    }
}
