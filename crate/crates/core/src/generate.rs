//! Synthetic lane scenes and abductive MIATTs generation.
//!
//! Each generated target is one consistent hypothesis about a reference
//! labeling: a handful of connected blobs per class, grown breadth-first from
//! random seeds, asserting exactly the reference label on the pixels they
//! cover and nothing elsewhere.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{MiattError, Result};
use crate::image::Instance;
use crate::labeling::{assess_miatts, CellState, MiattSet, PartialLabeling};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub lane_half_width: f64,
    pub lane_angle: f64,
    pub lane_offset: f64,
    pub lane_intensity: f64,
    pub background_intensity: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            lane_half_width: 4.0,
            lane_angle: 0.35,
            lane_offset: 32.0,
            lane_intensity: 0.8,
            background_intensity: 0.2,
            noise_sigma: 0.05,
            seed: 7,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MiattError::InvalidParams(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("scene size {}x{} must be positive", self.width, self.height));
        }
        if !(self.lane_half_width > 0.0 && self.lane_half_width.is_finite()) {
            return bad(format!("lane half-width {} must be positive", self.lane_half_width));
        }
        if !self.lane_angle.is_finite() || !self.lane_offset.is_finite() {
            return bad("lane angle and offset must be finite".into());
        }
        for (name, v) in [
            ("lane intensity", self.lane_intensity),
            ("background intensity", self.background_intensity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        Ok(())
    }

    /// Whether the pixel at `(x, y)` lies on the lane ribbon. Distances are
    /// measured from pixel centres; the ribbon's centre line runs at
    /// `lane_angle` to the x axis and sits `lane_offset` pixels from the top
    /// edge when measured through the image centre.
    pub fn on_lane(&self, x: usize, y: usize) -> bool {
        let cx = self.width as f64 / 2.0;
        let cy = self.height as f64 / 2.0;
        let px = x as f64 + 0.5 - cx;
        let py = y as f64 + 0.5 - cy;
        let (sin, cos) = self.lane_angle.sin_cos();
        let dist = py * cos - px * sin - (self.lane_offset - cy);
        dist.abs() <= self.lane_half_width
    }
}

/// Draws a straight lane ribbon over a flat background with clamped Gaussian
/// noise. Intensities are quantized to multiples of 1/255 so the instance
/// survives an 8-bit PGM round trip unchanged.
pub fn generate_synthetic_scene(p: &SceneParams) -> Result<(Instance, PartialLabeling)> {
    p.validate()?;
    let mut rng = SplitMix64::new(p.seed);
    let total = p.width * p.height;
    let mut pixels = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(total);
    for y in 0..p.height {
        for x in 0..p.width {
            let lane = p.on_lane(x, y);
            let base = if lane { p.lane_intensity } else { p.background_intensity };
            let noisy = if p.noise_sigma > 0.0 {
                (base + p.noise_sigma * rng.normal()).clamp(0.0, 1.0)
            } else {
                base
            };
            pixels.push((noisy * 255.0).round() / 255.0);
            cells.push(if lane { CellState::Object } else { CellState::NonObject });
        }
    }
    let object_pixels = cells.iter().filter(|&&c| c == CellState::Object).count();
    if object_pixels == 0 || object_pixels == total {
        return Err(MiattError::DegenerateScene { object_pixels, total_pixels: total });
    }
    Ok((
        Instance::new(p.width, p.height, pixels)?,
        PartialLabeling::new(p.width, p.height, cells)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub n_targets: usize,
    pub object_coverage_range: (f64, f64),
    pub nonobject_coverage_range: (f64, f64),
    pub blob_seeds_per_target: usize,
    pub target_collective_coverage: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_targets: 4,
            object_coverage_range: (0.3, 0.6),
            nonobject_coverage_range: (0.2, 0.4),
            blob_seeds_per_target: 3,
            target_collective_coverage: 0.95,
            seed: 7,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MiattError::InvalidParams(msg));
        if self.n_targets < 2 {
            return bad(format!(
                "a MIATTs set needs N >= 2 inaccurate true targets, got {}",
                self.n_targets
            ));
        }
        for (name, (lo, hi)) in [
            ("object coverage range", self.object_coverage_range),
            ("non-object coverage range", self.nonobject_coverage_range),
        ] {
            if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
                return bad(format!("{name} ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"));
            }
        }
        if self.blob_seeds_per_target == 0 {
            return bad("blob seeds per target must be positive".into());
        }
        let c = self.target_collective_coverage;
        if !(c > 0.0 && c <= 1.0) {
            return bad(format!("target collective coverage {c} outside (0, 1]"));
        }
        Ok(())
    }
}

/// Generates `p.n_targets` strictly partial, mutually consistent targets
/// whose facts are all copied from `reference`, topping up their union until
/// it covers at least `p.target_collective_coverage` of the grid.
pub fn generate_miatts_abductive(reference: &PartialLabeling, p: &GenParams) -> Result<MiattSet> {
    p.validate()?;
    if !reference.is_fully_determined() {
        return Err(MiattError::InvalidParams("reference must be fully determined".into()));
    }
    let classes = [CellState::Object, CellState::NonObject];
    let class_pixels: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| reference.facts().filter(|&(_, l)| l == c).map(|(i, _)| i).collect())
        .collect();
    if class_pixels.iter().any(Vec::is_empty) {
        return Err(MiattError::InvalidParams("reference must contain both classes".into()));
    }

    let domain = reference.len();
    let mut rng = SplitMix64::new(p.seed);
    let mut targets = Vec::with_capacity(p.n_targets);
    let mut fact_counts = Vec::with_capacity(p.n_targets);
    for _ in 0..p.n_targets {
        let mut target_rng = rng.split();
        let mut selected = vec![false; domain];
        let mut order = Vec::new();
        for (k, pixels) in class_pixels.iter().enumerate() {
            let (lo, hi) = if k == 0 { p.object_coverage_range } else { p.nonobject_coverage_range };
            let fraction = target_rng.uniform(lo, hi);
            let quota = ((fraction * pixels.len() as f64).ceil() as usize).clamp(1, pixels.len());
            grow_blobs(
                reference,
                pixels,
                quota,
                p.blob_seeds_per_target,
                &mut target_rng,
                &mut selected,
                &mut order,
            );
        }
        if order.len() == domain {
            let last = order.pop().expect("non-empty domain");
            selected[last] = false;
        }
        let mut target = PartialLabeling::unknown(reference.width(), reference.height())?;
        for &pixel in &order {
            target.set(pixel, reference.get(pixel));
        }
        fact_counts.push(order.len());
        targets.push(target);
    }

    top_up_coverage(reference, p, &mut rng, &mut targets, &mut fact_counts)?;

    let set = MiattSet::new(targets)?;
    debug_assert!(assess_miatts(&set).map(|r| r.passed).unwrap_or(false));
    Ok(set)
}

fn grow_blobs(
    reference: &PartialLabeling,
    class_pixels: &[usize],
    quota: usize,
    seeds: usize,
    rng: &mut SplitMix64,
    selected: &mut [bool],
    order: &mut Vec<usize>,
) {
    let (w, h) = (reference.width(), reference.height());
    let class = reference.get(class_pixels[0]);
    let mut queue = VecDeque::new();
    let mut taken = 0;
    for _ in 0..seeds.min(quota) {
        queue.push_back(class_pixels[rng.below(class_pixels.len())]);
    }
    while taken < quota {
        let pixel = match queue.pop_front() {
            Some(p) => p,
            None => {
                // Blob exhausted its component: reseed at a random free pixel.
                let free = class_pixels.iter().filter(|&&i| !selected[i]).count();
                let k = rng.below(free);
                *class_pixels.iter().filter(|&&i| !selected[i]).nth(k).expect("free pixel")
            }
        };
        if selected[pixel] {
            continue;
        }
        selected[pixel] = true;
        order.push(pixel);
        taken += 1;
        let (x, y) = (pixel % w, pixel / w);
        let neighbours = [
            (x > 0).then(|| pixel - 1),
            (x + 1 < w).then(|| pixel + 1),
            (y > 0).then(|| pixel - w),
            (y + 1 < h).then(|| pixel + w),
        ];
        for n in neighbours.into_iter().flatten() {
            if !selected[n] && reference.get(n) == class {
                queue.push_back(n);
            }
        }
    }
}

fn top_up_coverage(
    reference: &PartialLabeling,
    p: &GenParams,
    rng: &mut SplitMix64,
    targets: &mut [PartialLabeling],
    fact_counts: &mut [usize],
) -> Result<()> {
    let domain = reference.len();
    let n = targets.len();
    let required = ((p.target_collective_coverage * domain as f64).ceil() as usize).min(domain);
    let mut cover_count = vec![0usize; domain];
    for t in targets.iter() {
        for (pixel, _) in t.facts() {
            cover_count[pixel] += 1;
        }
    }
    let mut uncovered: Vec<usize> = (0..domain).filter(|&i| cover_count[i] == 0).collect();
    let mut covered = domain - uncovered.len();
    if covered >= required {
        return Ok(());
    }
    rng.shuffle(&mut uncovered);

    let mut next = 0;
    for pixel in uncovered {
        if covered >= required {
            break;
        }
        let with_room = (0..n).map(|k| (next + k) % n).find(|&t| fact_counts[t] + 1 < domain);
        let chosen = match with_room {
            Some(t) => {
                fact_counts[t] += 1;
                t
            }
            None => {
                // Every target is one fact short of complete: trade a fact
                // that another target also asserts for the uncovered one.
                let swap = (0..n).map(|k| (next + k) % n).find_map(|t| {
                    targets[t]
                        .facts()
                        .find(|&(q, _)| cover_count[q] >= 2)
                        .map(|(q, _)| (t, q))
                });
                let (t, q) = swap.ok_or(MiattError::InfeasibleCoverage { required })?;
                targets[t].set(q, CellState::Unknown);
                cover_count[q] -= 1;
                t
            }
        };
        targets[chosen].set(pixel, reference.get(pixel));
        cover_count[pixel] += 1;
        covered += 1;
        next = (chosen + 1) % n;
    }
    if covered < required {
        return Err(MiattError::InfeasibleCoverage { required });
    }
    Ok(())
}

/// Flips the label of `n_flips` distinct multiply-asserted pixels in one of
/// the targets asserting each, so every flipped pixel becomes a conflict.
pub fn inject_conflicts(m: &MiattSet, n_flips: usize, seed: u64) -> Result<MiattSet> {
    if n_flips == 0 {
        return Err(MiattError::InvalidParams("n_flips must be positive".into()));
    }
    let domain = m.targets().first().ok_or(MiattError::EmptySet)?.len();
    let mut overlap: Vec<usize> = (0..domain)
        .filter(|&px| m.targets().iter().filter(|t| t.get(px).is_determined()).count() >= 2)
        .collect();
    if overlap.is_empty() {
        return Err(MiattError::NoOverlap);
    }
    if n_flips > overlap.len() {
        return Err(MiattError::InvalidParams(format!(
            "{n_flips} flips requested but only {} pixels are asserted by two or more targets",
            overlap.len()
        )));
    }
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut overlap);
    let mut targets = m.targets().to_vec();
    for &pixel in &overlap[..n_flips] {
        let owners: Vec<usize> = (0..targets.len())
            .filter(|&t| targets[t].get(pixel).is_determined())
            .collect();
        let t = owners[rng.below(owners.len())];
        let flipped = targets[t].get(pixel).flipped();
        targets[t].set(pixel, flipped);
    }
    MiattSet::new(targets)
}
