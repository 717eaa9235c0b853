use serde::{Deserialize, Serialize};

use super::loss::{uniform_alpha, validate_alpha, FactWeights, Gradient};
use super::model::{forward_patches, Model, Patches};
use crate::error::{MiattError, Result};
use crate::image::{Instance, ProbabilityMap};
use crate::labeling::{assess_miatts, check_dims, MiattSet};
use crate::laf::{evaluate, logical_assessment_metric_build, ConfusionCounts, LafParams, MetricSet};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// One weight per target; `None` means uniform `1/N` for every set.
    pub alpha: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub stop_liou_min: f64,
    pub stop_lerrors_max: u64,
    pub prob_clamp_epsilon: f64,
    pub patch_radius: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            learning_rate: 0.1,
            momentum: 0.9,
            max_epochs: 2000,
            eval_every: 10,
            stop_liou_min: 0.999,
            stop_lerrors_max: 100,
            prob_clamp_epsilon: 1e-7,
            patch_radius: 3,
            hidden_width: 16,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MiattError::InvalidParams(msg));
        if let Some(alpha) = &self.alpha {
            validate_alpha(alpha, alpha.len())?;
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.max_epochs == 0 || self.eval_every == 0 {
            return bad("max_epochs and eval_every must be positive".into());
        }
        if !(self.prob_clamp_epsilon > 0.0 && self.prob_clamp_epsilon < 0.5) {
            return bad(format!("clamp epsilon {} outside (0, 0.5)", self.prob_clamp_epsilon));
        }
        if self.hidden_width == 0 {
            return bad("hidden width must be positive".into());
        }
        Ok(())
    }

    pub fn alpha_for(&self, n: usize) -> Result<Vec<f64>> {
        match &self.alpha {
            Some(alpha) => {
                validate_alpha(alpha, n)?;
                Ok(alpha.clone())
            }
            None => Ok(uniform_alpha(n)),
        }
    }

    fn is_eval_epoch(&self, epoch: usize) -> bool {
        epoch == 1 || epoch.is_multiple_of(self.eval_every) || epoch == self.max_epochs
    }
}

/// Stop criteria: LIoU defined and strictly above `stop_liou_min`, LErrors
/// strictly below `stop_lerrors_max`.
pub fn check_stop(ms: &MetricSet, cfg: &TrainConfig) -> bool {
    match (ms.liou, ms.lerrors) {
        (Some(liou), Some(errors)) => liou > cfg.stop_liou_min && errors < cfg.stop_lerrors_max,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub loss: f64,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    pub per_instance: Vec<InstanceEval>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
    pub selected_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn selected(&self) -> Option<&HistoryRecord> {
        let epoch = self.selected_epoch?;
        self.records.iter().find(|r| r.epoch == epoch)
    }
}

/// Progress notification passed to the observer after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct TrainProgress<'a> {
    pub epoch: usize,
    pub max_epochs: usize,
    pub record: Option<&'a HistoryRecord>,
}

/// An instance with its MIATTs, precomputed for repeated evaluation.
struct Prepared<'a> {
    instance: &'a Instance,
    set: &'a MiattSet,
    patches: Patches,
    weights: FactWeights,
}

/// Evaluation of `model` over a dataset: the surrogate loss plus LAF counts
/// summed across instances before metrics are built.
pub fn evaluate_dataset(
    model: &Model,
    dataset: &[(Instance, MiattSet)],
    cfg: &TrainConfig,
    laf: &LafParams,
) -> Result<(f64, ConfusionCounts, MetricSet, Vec<InstanceEval>)> {
    let prepared = prepare(dataset, cfg)?;
    eval_prepared(model, &prepared, cfg, laf)
}

fn prepare<'a>(dataset: &'a [(Instance, MiattSet)], cfg: &TrainConfig) -> Result<Vec<Prepared<'a>>> {
    if dataset.is_empty() {
        return Err(MiattError::InvalidParams("training dataset is empty".into()));
    }
    dataset
        .iter()
        .map(|(instance, set)| {
            let report = assess_miatts(set)?;
            if !report.passed {
                return Err(MiattError::AssessmentFailed(Box::new(report)));
            }
            let (w, h) = set.shape().expect("assessed set is non-empty");
            check_dims(w, h, instance.width(), instance.height())?;
            let alpha = cfg.alpha_for(set.len())?;
            Ok(Prepared {
                instance,
                set,
                patches: Patches::extract(instance, cfg.patch_radius),
                weights: FactWeights::new(set, &alpha)?,
            })
        })
        .collect()
}

fn eval_prepared(
    model: &Model,
    prepared: &[Prepared<'_>],
    cfg: &TrainConfig,
    laf: &LafParams,
) -> Result<(f64, ConfusionCounts, MetricSet, Vec<InstanceEval>)> {
    let mut loss = 0.0;
    let mut per_instance = Vec::with_capacity(prepared.len());
    for p in prepared {
        let probs: ProbabilityMap =
            forward_patches(model, &p.patches, p.instance.width(), p.instance.height());
        loss += p.weights.loss(&probs, cfg.prob_clamp_epsilon);
        let (counts, metrics) = evaluate(&probs, p.set, laf)?;
        per_instance.push(InstanceEval { counts, metrics });
    }
    let counts: ConfusionCounts = per_instance.iter().map(|e| e.counts).sum();
    let metrics = logical_assessment_metric_build(&counts, laf);
    Ok((loss, counts, metrics, per_instance))
}

/// Trains with the default logical assessment parameters and no observer.
pub fn train_uttl(dataset: &[(Instance, MiattSet)], cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    train_uttl_with(dataset, cfg, &LafParams::default(), |_| {})
}

/// Full-batch gradient descent with classical momentum on the summed
/// surrogate loss of every instance.
///
/// The dataset is evaluated at epoch 1, every `eval_every` epochs and at the
/// last epoch. Training stops at the first evaluated epoch meeting
/// [`check_stop`] and returns that epoch's parameters; otherwise the
/// evaluated epoch with the fewest logical errors is returned (ties go to
/// higher LIoU, then the earlier epoch).
pub fn train_uttl_with(
    dataset: &[(Instance, MiattSet)],
    cfg: &TrainConfig,
    laf: &LafParams,
    mut observer: impl FnMut(TrainProgress<'_>),
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    laf.validate()?;
    let prepared = prepare(dataset, cfg)?;

    let mut rng = SplitMix64::new(cfg.seed);
    let mut model = Model::init(cfg.patch_radius, cfg.hidden_width, &mut rng);
    let mut params = model.flatten();
    let mut velocity = vec![0.0; params.len()];
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, Model)> = None;

    for epoch in 1..=cfg.max_epochs {
        let mut total = Gradient::zeros_like(&model);
        let mut loss = 0.0;
        for p in &prepared {
            let (l, g) = p.weights.loss_and_grad(&model, &p.patches, cfg.prob_clamp_epsilon);
            loss += l;
            total.add_assign(&g);
        }
        if !loss.is_finite() {
            return Err(MiattError::NonFiniteLoss { epoch });
        }
        for ((theta, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(total.flatten()) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *theta += *v;
        }
        model.set_flat(&params);

        if !cfg.is_eval_epoch(epoch) {
            observer(TrainProgress { epoch, max_epochs: cfg.max_epochs, record: None });
            continue;
        }
        let (loss, counts, metrics, per_instance) = eval_prepared(&model, &prepared, cfg, laf)?;
        if !loss.is_finite() {
            return Err(MiattError::NonFiniteLoss { epoch });
        }
        history.records.push(HistoryRecord { epoch, loss, counts, metrics, per_instance });
        let record = history.records.last().expect("just pushed");
        observer(TrainProgress { epoch, max_epochs: cfg.max_epochs, record: Some(record) });

        if check_stop(&record.metrics, cfg) {
            history.selected_epoch = Some(epoch);
            return Ok((model, history));
        }
        let better = match &best {
            None => true,
            Some((i, _)) => better_checkpoint(record, &history.records[*i]),
        };
        if better {
            best = Some((history.records.len() - 1, model.clone()));
        }
    }

    let (index, best_model) = best.expect("the last epoch is always evaluated");
    history.selected_epoch = Some(history.records[index].epoch);
    Ok((best_model, history))
}

/// Fewer errors wins, then higher LIoU (undefined ranks lowest); equal
/// records keep the earlier one.
fn better_checkpoint(candidate: &HistoryRecord, incumbent: &HistoryRecord) -> bool {
    let errors = |r: &HistoryRecord| r.metrics.lerrors.unwrap_or(u64::MAX);
    let liou = |r: &HistoryRecord| r.metrics.liou.unwrap_or(f64::NEG_INFINITY);
    match errors(candidate).cmp(&errors(incumbent)) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => liou(candidate) > liou(incumbent),
    }
}

/// Trailing window means of the LIoU curve over the first half of the
/// records (undefined LIoU counts as 0).
pub fn smoothed_liou(history: &TrainHistory, window: usize) -> Vec<f64> {
    let half = history.records.len() / 2;
    let liou: Vec<f64> = history.records[..half]
        .iter()
        .map(|r| r.metrics.liou.unwrap_or(0.0))
        .collect();
    liou.windows(window.max(1))
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect()
}
