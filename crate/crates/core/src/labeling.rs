//! Partial pixel labelings, MIATTs sets and their Boolean assessment.
//!
//! A labeling cell either asserts a fact about its pixel (`Object` or
//! `NonObject`) or asserts nothing (`Unknown`). The fact set of a labeling is
//! the set of its determined `(pixel, label)` pairs. A set of targets is
//! consistent when no pixel carries two different determined labels, and the
//! logical true target (LTT) is the union of all facts of a consistent set.

use serde::{Deserialize, Serialize};

use crate::error::{MiattError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Object,
    NonObject,
    Unknown,
}

impl CellState {
    pub fn is_determined(self) -> bool {
        !matches!(self, CellState::Unknown)
    }

    /// The opposite determined label; `Unknown` maps to itself.
    pub fn flipped(self) -> Self {
        match self {
            CellState::Object => CellState::NonObject,
            CellState::NonObject => CellState::Object,
            CellState::Unknown => CellState::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialLabeling {
    width: usize,
    height: usize,
    cells: Vec<CellState>,
}

impl PartialLabeling {
    pub fn new(width: usize, height: usize, cells: Vec<CellState>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(MiattError::InvalidParams(format!(
                "labeling dimensions must be positive, got {width}x{height}"
            )));
        }
        if cells.len() != width * height {
            return Err(MiattError::InvalidParams(format!(
                "{} cells supplied for a {width}x{height} labeling",
                cells.len()
            )));
        }
        Ok(Self { width, height, cells })
    }

    pub fn filled(width: usize, height: usize, state: CellState) -> Result<Self> {
        Self::new(width, height, vec![state; width * height])
    }

    pub fn unknown(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, CellState::Unknown)
    }

    /// Builds a labeling from sparse `(pixel, label)` facts over an otherwise
    /// unknown grid.
    pub fn from_facts(
        width: usize,
        height: usize,
        facts: impl IntoIterator<Item = (usize, CellState)>,
    ) -> Result<Self> {
        let mut labeling = Self::unknown(width, height)?;
        for (pixel, state) in facts {
            if pixel >= labeling.len() {
                return Err(MiattError::InvalidParams(format!(
                    "pixel {pixel} outside a {width}x{height} grid"
                )));
            }
            labeling.cells[pixel] = state;
        }
        Ok(labeling)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn get(&self, pixel: usize) -> CellState {
        self.cells[pixel]
    }

    pub fn set(&mut self, pixel: usize, state: CellState) {
        self.cells[pixel] = state;
    }

    pub fn same_shape(&self, other: &PartialLabeling) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &PartialLabeling) -> Result<()> {
        check_dims(self.width, self.height, other.width, other.height)
    }

    /// Number of determined cells, i.e. the size of the labeling's fact set.
    pub fn fact_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_determined()).count()
    }

    pub fn is_fully_determined(&self) -> bool {
        self.cells.iter().all(|c| c.is_determined())
    }

    /// Iterator over the determined `(pixel, label)` pairs.
    pub fn facts(&self) -> impl Iterator<Item = (usize, CellState)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_determined())
            .map(|(i, &c)| (i, c))
    }

    /// Copy of `self` with every pixel that `mask` leaves unknown set to
    /// unknown.
    pub fn restrict(&self, mask: &PartialLabeling) -> Result<PartialLabeling> {
        self.check_shape(mask)?;
        let cells = self
            .cells
            .iter()
            .zip(&mask.cells)
            .map(|(&c, m)| if m.is_determined() { c } else { CellState::Unknown })
            .collect();
        Ok(PartialLabeling { width: self.width, height: self.height, cells })
    }
}

pub(crate) fn check_dims(ew: usize, eh: usize, fw: usize, fh: usize) -> Result<()> {
    if ew == fw && eh == fh {
        Ok(())
    } else {
        Err(MiattError::ShapeMismatch {
            expected_width: ew,
            expected_height: eh,
            found_width: fw,
            found_height: fh,
        })
    }
}

/// Size of the fact set of `t`.
pub fn fact_count(t: &PartialLabeling) -> usize {
    t.fact_count()
}

/// Ordered collection of inaccurate true targets over one grid.
///
/// The `N >= 2` requirement is checked by [`assess_miatts`] rather than here
/// so undersized sets can still be diagnosed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiattSet {
    targets: Vec<PartialLabeling>,
}

impl MiattSet {
    pub fn new(targets: Vec<PartialLabeling>) -> Result<Self> {
        if let Some(first) = targets.first() {
            for t in &targets[1..] {
                first.check_shape(t)?;
            }
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[PartialLabeling] {
        &self.targets
    }

    pub fn into_targets(self) -> Vec<PartialLabeling> {
        self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `(width, height)` shared by all targets, if any.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.targets.first().map(|t| (t.width, t.height))
    }

    pub fn push(&mut self, target: PartialLabeling) -> Result<()> {
        if let Some(first) = self.targets.first() {
            first.check_shape(&target)?;
        }
        self.targets.push(target);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conflict {
    pub pixel: usize,
    pub first: usize,
    pub second: usize,
}

/// Number of pixels determined by at least one target over the domain size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub determined: usize,
    pub domain: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.determined as f64 / self.domain as f64
    }

    /// `determined / domain >= fraction`, evaluated without rounding on the
    /// left-hand side.
    pub fn at_least(&self, fraction: f64) -> bool {
        self.determined as f64 >= fraction * self.domain as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub count_ok: bool,
    pub partial_flags: Vec<bool>,
    pub consistent: bool,
    pub conflicts: Vec<Conflict>,
    pub coverage: Coverage,
    pub passed: bool,
}

/// Boolean assessment of a MIATTs set: size, strict partiality of every
/// target, and pairwise consistency at every pixel.
///
/// Every conflicting pixel is reported once, with the lexicographically
/// lowest pair of targets that disagree there.
pub fn assess_miatts(m: &MiattSet) -> Result<AssessmentReport> {
    let first = m.targets.first().ok_or(MiattError::EmptySet)?;
    let domain = first.len();
    let partial_flags: Vec<bool> = m.targets.iter().map(|t| t.fact_count() < domain).collect();

    let mut conflicts = Vec::new();
    let mut determined = 0;
    for pixel in 0..domain {
        // Index of the first target asserting something here, and its label.
        let mut anchor: Option<(usize, CellState)> = None;
        for (n, t) in m.targets.iter().enumerate() {
            let c = t.cells[pixel];
            if !c.is_determined() {
                continue;
            }
            match anchor {
                None => anchor = Some((n, c)),
                Some((a, label)) if label != c => {
                    conflicts.push(Conflict { pixel, first: a, second: n });
                    break;
                }
                Some(_) => {}
            }
        }
        if anchor.is_some() {
            determined += 1;
        }
    }

    let count_ok = m.targets.len() >= 2;
    let consistent = conflicts.is_empty();
    let passed = count_ok && consistent && partial_flags.iter().all(|&p| p);
    Ok(AssessmentReport {
        count_ok,
        partial_flags,
        consistent,
        conflicts,
        coverage: Coverage { determined, domain },
        passed,
    })
}

/// Merges the facts of a passing MIATTs set into the logical true target.
pub fn derive_ltt(m: &MiattSet) -> Result<PartialLabeling> {
    let report = assess_miatts(m)?;
    if !report.passed {
        return Err(MiattError::AssessmentFailed(Box::new(report)));
    }
    Ok(merge_facts(m))
}

/// Union of the facts of all targets, first assertion wins. Only meaningful
/// for consistent sets.
pub(crate) fn merge_facts(m: &MiattSet) -> PartialLabeling {
    let first = &m.targets[0];
    let mut merged = PartialLabeling {
        width: first.width,
        height: first.height,
        cells: vec![CellState::Unknown; first.len()],
    };
    for t in &m.targets {
        for (out, &c) in merged.cells.iter_mut().zip(&t.cells) {
            if !out.is_determined() {
                *out = c;
            }
        }
    }
    merged
}

/// `full` masked to the pixels `ltt` determines.
pub fn restrict(full: &PartialLabeling, ltt: &PartialLabeling) -> Result<PartialLabeling> {
    if !full.is_fully_determined() {
        return Err(MiattError::InvalidParams(
            "restrict expects a fully determined labeling".into(),
        ));
    }
    full.restrict(ltt)
}
