use serde::{Deserialize, Serialize};

use crate::error::{MiattError, Result};
use crate::image::{Instance, ProbabilityMap};
use crate::rng::SplitMix64;

/// Per-pixel patch classifier: a `(2r+1)^2` replicate-padded patch around
/// each pixel feeds one tanh hidden layer and a sigmoid output unit.
///
/// `weights_in` is row-major `hidden_width x patch_len`, patch cells ordered
/// by row offset then column offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub patch_radius: usize,
    pub hidden_width: usize,
    pub weights_in: Vec<f64>,
    pub bias_in: Vec<f64>,
    pub weights_out: Vec<f64>,
    pub bias_out: f64,
}

impl Model {
    pub fn zeros(patch_radius: usize, hidden_width: usize) -> Self {
        let patch_len = patch_len(patch_radius);
        Self {
            patch_radius,
            hidden_width,
            weights_in: vec![0.0; hidden_width * patch_len],
            bias_in: vec![0.0; hidden_width],
            weights_out: vec![0.0; hidden_width],
            bias_out: 0.0,
        }
    }

    /// Every parameter drawn uniformly from `±1/sqrt(fan_in)` of its layer.
    pub fn init(patch_radius: usize, hidden_width: usize, rng: &mut SplitMix64) -> Self {
        let mut model = Self::zeros(patch_radius, hidden_width);
        let bound_in = 1.0 / (model.patch_len() as f64).sqrt();
        let bound_out = 1.0 / (hidden_width as f64).sqrt();
        for w in model.weights_in.iter_mut().chain(model.bias_in.iter_mut()) {
            *w = rng.uniform(-bound_in, bound_in);
        }
        for w in model.weights_out.iter_mut() {
            *w = rng.uniform(-bound_out, bound_out);
        }
        model.bias_out = rng.uniform(-bound_out, bound_out);
        model
    }

    pub fn patch_len(&self) -> usize {
        patch_len(self.patch_radius)
    }

    pub fn param_count(&self) -> usize {
        self.weights_in.len() + self.bias_in.len() + self.weights_out.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(MiattError::InvalidParams("hidden width must be positive".into()));
        }
        let h = self.hidden_width;
        if self.weights_in.len() != h * self.patch_len()
            || self.bias_in.len() != h
            || self.weights_out.len() != h
        {
            return Err(MiattError::InvalidParams(format!(
                "parameter shapes do not match radius {} and hidden width {h}",
                self.patch_radius
            )));
        }
        if !self.flatten().iter().all(|v| v.is_finite()) {
            return Err(MiattError::InvalidParams("model has non-finite parameters".into()));
        }
        Ok(())
    }

    /// Parameters in the fixed order weights_in, bias_in, weights_out, bias_out.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.weights_in);
        out.extend_from_slice(&self.bias_in);
        out.extend_from_slice(&self.weights_out);
        out.push(self.bias_out);
        out
    }

    pub fn set_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "flat parameter length");
        let (a, rest) = params.split_at(self.weights_in.len());
        let (b, rest) = rest.split_at(self.bias_in.len());
        let (c, rest) = rest.split_at(self.weights_out.len());
        self.weights_in.copy_from_slice(a);
        self.bias_in.copy_from_slice(b);
        self.weights_out.copy_from_slice(c);
        self.bias_out = rest[0];
    }

    /// Output logit and hidden activations for one extracted patch.
    pub(crate) fn logit(&self, patch: &[f64], hidden: &mut [f64]) -> f64 {
        let k = patch.len();
        let mut z = self.bias_out;
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.weights_in[j * k..(j + 1) * k];
            let a = self.bias_in[j] + dot(row, patch);
            *h = a.tanh();
            z += self.weights_out[j] * *h;
        }
        z
    }
}

pub fn patch_len(radius: usize) -> usize {
    (2 * radius + 1).pow(2)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Row-major patches for every pixel of an instance.
#[derive(Debug, Clone)]
pub(crate) struct Patches {
    pub patch_len: usize,
    pub data: Vec<f64>,
}

impl Patches {
    pub fn extract(d: &Instance, radius: usize) -> Self {
        let r = radius as isize;
        let patch_len = patch_len(radius);
        let mut data = Vec::with_capacity(d.len() * patch_len);
        for y in 0..d.height() as isize {
            for x in 0..d.width() as isize {
                for dy in -r..=r {
                    for dx in -r..=r {
                        data.push(d.at_clamped(x + dx, y + dy));
                    }
                }
            }
        }
        Self { patch_len, data }
    }

    pub fn patch(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.patch_len..(pixel + 1) * self.patch_len]
    }
}

/// Object probability `t = f(d)` at every pixel.
pub fn forward(f: &Model, d: &Instance) -> ProbabilityMap {
    let patches = Patches::extract(d, f.patch_radius);
    forward_patches(f, &patches, d.width(), d.height())
}

pub(crate) fn forward_patches(f: &Model, patches: &Patches, width: usize, height: usize) -> ProbabilityMap {
    let mut hidden = vec![0.0; f.hidden_width];
    let probs = (0..width * height)
        .map(|px| sigmoid(f.logit(patches.patch(px), &mut hidden)))
        .collect();
    ProbabilityMap::new(width, height, probs).expect("sigmoid output lies in [0, 1]")
}
