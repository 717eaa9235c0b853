use serde::{Deserialize, Serialize};

use crate::error::{MiattError, Result};
use crate::labeling::{CellState, PartialLabeling};

/// Grayscale input image with row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Instance {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        check_grid(width, height, &pixels, "instance")?;
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Intensity at `(x, y)` with coordinates clamped to the image, which
    /// gives replicate padding outside the borders.
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }
}

/// Per-pixel object probability predicted by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, probs: Vec<f64>) -> Result<Self> {
        check_grid(width, height, &probs, "probability map")?;
        Ok(Self { width, height, probs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Object iff the probability is strictly above `threshold`.
pub fn binarize(t: &ProbabilityMap, threshold: f64) -> Result<PartialLabeling> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MiattError::InvalidParams(format!(
            "binarize threshold {threshold} outside (0, 1)"
        )));
    }
    let cells = t
        .probs
        .iter()
        .map(|&p| if p > threshold { CellState::Object } else { CellState::NonObject })
        .collect();
    PartialLabeling::new(t.width, t.height, cells)
}

fn check_grid(width: usize, height: usize, values: &[f64], what: &str) -> Result<()> {
    if width == 0 || height == 0 || values.len() != width * height {
        return Err(MiattError::InvalidParams(format!(
            "{what} of {} values does not fit {width}x{height}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MiattError::InvalidParams(format!("{what} value {v} outside [0, 1]")));
    }
    Ok(())
}
