//! Logical assessment: narrate the facts of a MIATTs set into the logical
//! true target, count how a binarized prediction agrees with those facts, and
//! build the six logical segmentation metrics from the counts.
//!
//! Pixels the logical true target leaves undetermined never enter any count
//! used by a metric.

use serde::{Deserialize, Serialize};

use crate::error::{MiattError, Result};
use crate::image::{binarize, ProbabilityMap};
use crate::labeling::{derive_ltt, CellState, MiattSet, PartialLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricName {
    LPrecision,
    LRecall,
    LF1,
    LAccuracy,
    LIoU,
    LErrors,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::LPrecision,
        MetricName::LRecall,
        MetricName::LF1,
        MetricName::LAccuracy,
        MetricName::LIoU,
        MetricName::LErrors,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroDivisionPolicy {
    /// Metrics with a zero denominator are reported as undefined.
    #[default]
    Undefined,
    /// Metrics with a zero denominator are reported as 0.
    ZeroFill,
}

/// Parameters of fact narration. Narration is plain LTT derivation, so there
/// is nothing to configure yet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrationParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LafParams {
    pub binarize_threshold: f64,
    pub zero_division_policy: ZeroDivisionPolicy,
    pub metric_selection: Vec<MetricName>,
    pub narration: NarrationParams,
}

impl Default for LafParams {
    fn default() -> Self {
        Self {
            binarize_threshold: 0.5,
            zero_division_policy: ZeroDivisionPolicy::Undefined,
            metric_selection: MetricName::ALL.to_vec(),
            narration: NarrationParams::default(),
        }
    }
}

impl LafParams {
    pub fn validate(&self) -> Result<()> {
        let t = self.binarize_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(MiattError::InvalidParams(format!(
                "binarize threshold {t} outside (0, 1)"
            )));
        }
        Ok(())
    }

    fn selects(&self, name: MetricName) -> bool {
        self.metric_selection.contains(&name)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub ltp: u64,
    pub lfp: u64,
    pub ltn: u64,
    pub lfn: u64,
    pub undetermined: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.ltp + self.lfp + self.ltn + self.lfn + self.undetermined
    }

    pub fn errors(&self) -> u64 {
        self.lfp + self.lfn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, rhs: Self) -> Self {
        ConfusionCounts {
            ltp: self.ltp + rhs.ltp,
            lfp: self.lfp + rhs.lfp,
            ltn: self.ltn + rhs.ltn,
            lfn: self.lfn + rhs.lfn,
            undetermined: self.undetermined + rhs.undetermined,
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

/// Logical metrics. `None` marks a metric that is undefined (zero
/// denominator) or was not selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(rename = "LPrecision")]
    pub lprecision: Option<f64>,
    #[serde(rename = "LRecall")]
    pub lrecall: Option<f64>,
    #[serde(rename = "LF1")]
    pub lf1: Option<f64>,
    #[serde(rename = "LAccuracy")]
    pub laccuracy: Option<f64>,
    #[serde(rename = "LIoU")]
    pub liou: Option<f64>,
    #[serde(rename = "LErrors")]
    pub lerrors: Option<u64>,
}

/// The narrated logical facts: the LTT of the set.
pub fn logical_fact_narrate(m: &MiattSet, _p: &LafParams) -> Result<PartialLabeling> {
    derive_ltt(m)
}

pub fn logical_consistency_estimate(
    pred: &PartialLabeling,
    lf: &PartialLabeling,
    _p: &LafParams,
) -> Result<ConfusionCounts> {
    lf.check_shape(pred)?;
    let indeterminate = pred.len() - pred.fact_count();
    if indeterminate > 0 {
        return Err(MiattError::IndeterminatePrediction { count: indeterminate });
    }
    let mut c = ConfusionCounts::default();
    for (&fact, &guess) in lf.cells().iter().zip(pred.cells()) {
        use CellState::*;
        match (fact, guess) {
            (Object, Object) => c.ltp += 1,
            (NonObject, Object) => c.lfp += 1,
            (NonObject, NonObject) => c.ltn += 1,
            (Object, NonObject) => c.lfn += 1,
            (Unknown, _) => c.undetermined += 1,
            (_, Unknown) => unreachable!("prediction checked fully determined"),
        }
    }
    Ok(c)
}

pub fn logical_assessment_metric_build(c: &ConfusionCounts, p: &LafParams) -> MetricSet {
    let ratio = |num: u64, den: u64| -> Option<f64> {
        if den == 0 {
            match p.zero_division_policy {
                ZeroDivisionPolicy::Undefined => None,
                ZeroDivisionPolicy::ZeroFill => Some(0.0),
            }
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let lprecision = ratio(c.ltp, c.ltp + c.lfp);
    let lrecall = ratio(c.ltp, c.ltp + c.lfn);
    let lf1 = match (lprecision, lrecall) {
        (Some(pr), Some(re)) if pr + re > 0.0 => Some(2.0 * (pr * re) / (pr + re)),
        (Some(_), Some(_)) => ratio(0, 0),
        _ => None,
    };
    let laccuracy = ratio(c.ltp + c.ltn, c.ltp + c.lfp + c.ltn + c.lfn);
    let liou = ratio(c.ltp, c.ltp + c.lfp + c.lfn);

    let keep = |name, v: Option<f64>| if p.selects(name) { v } else { None };
    MetricSet {
        lprecision: keep(MetricName::LPrecision, lprecision),
        lrecall: keep(MetricName::LRecall, lrecall),
        lf1: keep(MetricName::LF1, lf1),
        laccuracy: keep(MetricName::LAccuracy, laccuracy),
        liou: keep(MetricName::LIoU, liou),
        lerrors: p.selects(MetricName::LErrors).then(|| c.errors()),
    }
}

/// A prediction handed to [`evaluate`]: either raw probabilities or an
/// already binarized labeling.
#[derive(Debug, Clone, Copy)]
pub enum Prediction<'a> {
    Probabilities(&'a ProbabilityMap),
    Labels(&'a PartialLabeling),
}

impl<'a> From<&'a ProbabilityMap> for Prediction<'a> {
    fn from(p: &'a ProbabilityMap) -> Self {
        Prediction::Probabilities(p)
    }
}

impl<'a> From<&'a PartialLabeling> for Prediction<'a> {
    fn from(p: &'a PartialLabeling) -> Self {
        Prediction::Labels(p)
    }
}

/// Full logical assessment of one prediction against one MIATTs set.
pub fn evaluate<'a>(
    pred: impl Into<Prediction<'a>>,
    m: &MiattSet,
    p: &LafParams,
) -> Result<(ConfusionCounts, MetricSet)> {
    p.validate()?;
    let lf = logical_fact_narrate(m, p)?;
    let counts = match pred.into() {
        Prediction::Probabilities(probs) => {
            let labels = binarize(probs, p.binarize_threshold)?;
            logical_consistency_estimate(&labels, &lf, p)?
        }
        Prediction::Labels(labels) => logical_consistency_estimate(labels, &lf, p)?,
    };
    Ok((counts, logical_assessment_metric_build(&counts, p)))
}
