//! Weighted multi-target surrogate loss.
//!
//! For targets `t_1..t_N` with weights `alpha_i` (summing to one) the loss is
//!
//! ```text
//! L = sum_i alpha_i / |SF(t_i)| * sum_{p in SF(t_i)} BCE(clamp(prob(p), eps, 1 - eps), label_i(p))
//! ```
//!
//! Collapsing the targets gives per-pixel object and non-object weights, so
//! the loss and its gradient need one model evaluation per asserted pixel.

use serde::{Deserialize, Serialize};

use super::model::{forward_patches, sigmoid, Model, Patches};
use crate::error::{MiattError, Result};
use crate::image::{Instance, ProbabilityMap};
use crate::labeling::{check_dims, CellState, MiattSet};

/// Tolerance on `|sum(alpha) - 1|`.
pub const ALPHA_SUM_TOLERANCE: f64 = 1e-9;

/// Gradient with the same layout as [`Model`]'s parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub weights_in: Vec<f64>,
    pub bias_in: Vec<f64>,
    pub weights_out: Vec<f64>,
    pub bias_out: f64,
}

impl Gradient {
    pub fn zeros_like(f: &Model) -> Self {
        Self {
            weights_in: vec![0.0; f.weights_in.len()],
            bias_in: vec![0.0; f.bias_in.len()],
            weights_out: vec![0.0; f.weights_out.len()],
            bias_out: 0.0,
        }
    }

    /// Same order as [`Model::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weights_in.len() + 2 * self.bias_in.len() + 1);
        out.extend_from_slice(&self.weights_in);
        out.extend_from_slice(&self.bias_in);
        out.extend_from_slice(&self.weights_out);
        out.push(self.bias_out);
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Gradient) {
        let pairs = self
            .weights_in
            .iter_mut()
            .zip(&other.weights_in)
            .chain(self.bias_in.iter_mut().zip(&other.bias_in))
            .chain(self.weights_out.iter_mut().zip(&other.weights_out));
        for (a, b) in pairs {
            *a += b;
        }
        self.bias_out += other.bias_out;
    }
}

/// Checks `alpha` against a set of `n` targets.
pub fn validate_alpha(alpha: &[f64], n: usize) -> Result<()> {
    if alpha.len() != n {
        return Err(MiattError::WeightMismatch(format!(
            "{} weights for {n} targets",
            alpha.len()
        )));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(MiattError::WeightMismatch(format!("weight {a} is not positive")));
    }
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
        return Err(MiattError::WeightMismatch(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

pub fn uniform_alpha(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Per-pixel object / non-object weights of the collapsed objective.
#[derive(Debug, Clone)]
pub(crate) struct FactWeights {
    object: Vec<f64>,
    non_object: Vec<f64>,
    active: Vec<usize>,
}

impl FactWeights {
    pub fn new(m: &MiattSet, alpha: &[f64]) -> Result<Self> {
        let (w, h) = m.shape().ok_or(MiattError::EmptySet)?;
        validate_alpha(alpha, m.len())?;
        let domain = w * h;
        let mut object = vec![0.0; domain];
        let mut non_object = vec![0.0; domain];
        for (i, (t, a)) in m.targets().iter().zip(alpha).enumerate() {
            let facts = t.fact_count();
            if facts == 0 {
                return Err(MiattError::EmptyFacts { target: i });
            }
            let weight = a / facts as f64;
            for (px, label) in t.facts() {
                match label {
                    CellState::Object => object[px] += weight,
                    CellState::NonObject => non_object[px] += weight,
                    CellState::Unknown => unreachable!(),
                }
            }
        }
        let active = (0..domain).filter(|&p| object[p] > 0.0 || non_object[p] > 0.0).collect();
        Ok(Self { object, non_object, active })
    }

    /// Loss of a finished probability map.
    pub fn loss(&self, t: &ProbabilityMap, epsilon: f64) -> f64 {
        let probs = t.probs();
        self.active
            .iter()
            .map(|&px| self.pixel_loss(px, probs[px].clamp(epsilon, 1.0 - epsilon)))
            .sum()
    }

    fn pixel_loss(&self, px: usize, q: f64) -> f64 {
        let mut l = 0.0;
        if self.object[px] > 0.0 {
            l -= self.object[px] * q.ln();
        }
        if self.non_object[px] > 0.0 {
            l -= self.non_object[px] * (1.0 - q).ln();
        }
        l
    }

    /// Loss and exact gradient, backpropagated through the output sigmoid,
    /// the hidden tanh layer and the clamp (zero slope where clamped).
    pub fn loss_and_grad(&self, f: &Model, patches: &Patches, epsilon: f64) -> (f64, Gradient) {
        let k = patches.patch_len;
        let mut grad = Gradient::zeros_like(f);
        let mut hidden = vec![0.0; f.hidden_width];
        let mut loss = 0.0;
        for &px in &self.active {
            let patch = patches.patch(px);
            let p = sigmoid(f.logit(patch, &mut hidden));
            let q = p.clamp(epsilon, 1.0 - epsilon);
            loss += self.pixel_loss(px, q);
            if p < epsilon || p > 1.0 - epsilon {
                continue;
            }
            // d/dz of -ln(sigmoid) is p - 1, of -ln(1 - sigmoid) is p.
            let dz = self.object[px] * (p - 1.0) + self.non_object[px] * p;
            grad.bias_out += dz;
            for (j, &h) in hidden.iter().enumerate() {
                grad.weights_out[j] += dz * h;
                let da = dz * f.weights_out[j] * (1.0 - h * h);
                grad.bias_in[j] += da;
                let row = &mut grad.weights_in[j * k..(j + 1) * k];
                for (g, x) in row.iter_mut().zip(patch) {
                    *g += da * x;
                }
            }
        }
        (loss, grad)
    }
}

/// Surrogate loss of `f` on instance `d` against the MIATTs `m`, and its
/// gradient with respect to every model parameter.
pub fn surrogate_loss_and_grad(
    f: &Model,
    d: &Instance,
    m: &MiattSet,
    alpha: &[f64],
    epsilon: f64,
) -> Result<(f64, Gradient)> {
    let (w, h) = m.shape().ok_or(MiattError::EmptySet)?;
    check_dims(w, h, d.width(), d.height())?;
    let weights = FactWeights::new(m, alpha)?;
    let patches = Patches::extract(d, f.patch_radius);
    Ok(weights.loss_and_grad(f, &patches, epsilon))
}

/// Loss only, from a full forward pass.
pub fn surrogate_loss(
    f: &Model,
    d: &Instance,
    m: &MiattSet,
    alpha: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let (w, h) = m.shape().ok_or(MiattError::EmptySet)?;
    check_dims(w, h, d.width(), d.height())?;
    let weights = FactWeights::new(m, alpha)?;
    let patches = Patches::extract(d, f.patch_radius);
    Ok(weights.loss(&forward_patches(f, &patches, w, h), epsilon))
}
