//! File-level pipeline stages shared by the subcommands and the tests.
//!
//! A run directory holds:
//!
//! | file | content |
//! |---|---|
//! | `manifest.json` | [`RunManifest`] |
//! | `instance.pgm` | the scene image |
//! | `reference.mlab` | hidden full labeling the targets were drawn from |
//! | `miatt_<i>.mlab` | the inaccurate true targets, `i = 0..N` |
//! | `history.csv`, `model.json`, `selected.json` | training outputs |
//! | `metrics.json` | `eval` output |
//! | `overlay_ltt.ppm`, `overlay_miatt_<i>.ppm`, `compare_summary.json` | `compare` output |

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use miatt_forge::formats::{parse_mlab, parse_pgm, parse_probability_pgm, parse_ppm, write_mlab, write_pgm, write_ppm};
use miatt_forge::uttl::{check_stop, forward, train_uttl_with, Model, TrainHistory, TrainProgress};
use miatt_forge::{
    agreement_map, assess_miatts, binarize, derive_ltt, evaluate, generate_miatts_abductive,
    generate_synthetic_scene, inject_conflicts, AgreementClass, AgreementCounts, AssessmentReport,
    ConfusionCounts, GenParams, Instance, LafParams, MetricSet, MiattSet, PartialLabeling,
};
use serde::{Deserialize, Serialize};

use crate::history::write_history;
use crate::manifest::{ConflictInjection, RunManifest, MANIFEST_FILE};

pub const INSTANCE_FILE: &str = "instance.pgm";
pub const REFERENCE_FILE: &str = "reference.mlab";
pub const HISTORY_FILE: &str = "history.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SELECTED_FILE: &str = "selected.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const LTT_OVERLAY_FILE: &str = "overlay_ltt.ppm";
pub const COMPARE_SUMMARY_FILE: &str = "compare_summary.json";
pub const PREDICTION_FILE: &str = "prediction.mlab";

pub fn target_file(i: usize) -> String {
    format!("miatt_{i}.mlab")
}

pub fn target_overlay_file(i: usize) -> String {
    format!("overlay_miatt_{i}.ppm")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_mlab(path: &Path) -> Result<PartialLabeling> {
    parse_mlab(&read_text(path)?).with_context(|| format!("{}: invalid .mlab mask", path.display()))
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    parse_pgm(&read_text(path)?).with_context(|| format!("{}: invalid PGM instance", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("{}: invalid JSON", path.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

/// Target files `miatt_0.mlab, miatt_1.mlab, ...` present in `dir`, in index
/// order, stopping at the first gap.
pub fn target_paths(dir: &Path) -> Vec<PathBuf> {
    (0..).map(|i| dir.join(target_file(i))).take_while(|p| p.is_file()).collect()
}

pub fn read_miatts(dir: &Path) -> Result<MiattSet> {
    let paths = target_paths(dir);
    if paths.is_empty() {
        bail!("{}: no {} files", dir.display(), target_file(0));
    }
    let targets = paths.iter().map(|p| read_mlab(p)).collect::<Result<Vec<_>>>()?;
    MiattSet::new(targets).with_context(|| format!("{}: targets differ in size", dir.display()))
}

fn remove_targets(dir: &Path) -> Result<()> {
    for path in target_paths(dir) {
        fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
    }
    Ok(())
}

fn write_targets(dir: &Path, m: &MiattSet) -> Result<()> {
    remove_targets(dir)?;
    for (i, t) in m.targets().iter().enumerate() {
        write_file(&dir.join(target_file(i)), &write_mlab(t))?;
    }
    Ok(())
}

/// Draws the targets for `reference` and applies the manifest's conflict
/// injection, if any.
pub fn build_miatts(
    reference: &PartialLabeling,
    gen: &GenParams,
    injection: Option<&ConflictInjection>,
) -> Result<MiattSet> {
    let m = generate_miatts_abductive(reference, gen)?;
    Ok(match injection {
        Some(inj) => inject_conflicts(&m, inj.n_flips, inj.seed)?,
        None => m,
    })
}

/// Generates a complete run directory from `manifest`.
pub fn generate_run(manifest: &RunManifest, out: &Path) -> Result<AssessmentReport> {
    manifest.validate()?;
    let (instance, reference) = generate_synthetic_scene(&manifest.scene_params)?;
    let m = build_miatts(&reference, &manifest.gen_params, manifest.conflict_injection.as_ref())?;
    write_file(&out.join(INSTANCE_FILE), &write_pgm(&instance))?;
    write_file(&out.join(REFERENCE_FILE), &write_mlab(&reference))?;
    write_targets(out, &m)?;
    write_file(&out.join(MANIFEST_FILE), &manifest.to_json())?;
    Ok(assess_miatts(&m)?)
}

/// Redraws the targets of `out` from a reference mask.
pub fn regenerate_miatts(
    reference: &PartialLabeling,
    gen: &GenParams,
    injection: Option<&ConflictInjection>,
    out: &Path,
) -> Result<AssessmentReport> {
    let m = build_miatts(reference, gen, injection)?;
    write_targets(out, &m)?;
    Ok(assess_miatts(&m)?)
}

pub fn assessment_summary(report: &AssessmentReport, n: usize) -> String {
    let mut s = format!(
        "targets: {n} (N >= 2: {})\nstrictly partial: {}\nconsistent: {}\ncoverage: {}/{} ({:.4})\n",
        yes_no(report.count_ok),
        report.partial_flags.iter().map(|&f| if f { "yes" } else { "no" }).collect::<Vec<_>>().join(" "),
        yes_no(report.consistent),
        report.coverage.determined,
        report.coverage.domain,
        report.coverage.fraction(),
    );
    if !report.conflicts.is_empty() {
        s.push_str(&format!("conflicts: {}\n", report.conflicts.len()));
    }
    s.push_str(if report.passed { "assessment: PASS\n" } else { "assessment: FAIL\n" });
    s
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// One line per conflict: `pixel <p> (x=<x>, y=<y>): miatt_<a> vs miatt_<b>`.
pub fn conflict_lines(report: &AssessmentReport, width: usize) -> Vec<String> {
    report
        .conflicts
        .iter()
        .map(|c| {
            format!(
                "pixel {} (x={}, y={}): miatt_{} vs miatt_{}",
                c.pixel,
                c.pixel % width,
                c.pixel / width,
                c.first,
                c.second
            )
        })
        .collect()
}

/// A prediction source for `eval` and `compare`.
pub enum PredictionSource<'a> {
    /// A `.mlab` labeling or a probability `.pgm`.
    File(&'a Path),
    /// A checkpoint applied to the run's instance.
    Model { model: &'a Path, instance: &'a Path },
}

/// The binarized labeling of a prediction, or the labels read verbatim.
pub fn load_prediction(src: &PredictionSource<'_>, laf: &LafParams) -> Result<PartialLabeling> {
    match src {
        PredictionSource::File(path) => {
            let text = read_text(path)?;
            if path.extension().is_some_and(|e| e == "pgm") {
                let probs = parse_probability_pgm(&text)
                    .with_context(|| format!("{}: invalid probability PGM", path.display()))?;
                Ok(binarize(&probs, laf.binarize_threshold)?)
            } else {
                read_mlab(path)
            }
        }
        PredictionSource::Model { model: path, instance } => {
            let model: Model = read_json(path)?;
            model.validate().with_context(|| format!("{}: invalid checkpoint", path.display()))?;
            let d = read_instance(instance)?;
            Ok(binarize(&forward(&model, &d), laf.binarize_threshold)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub laf_params: LafParams,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
}

pub fn eval_prediction(pred: &PartialLabeling, m: &MiattSet, laf: &LafParams) -> Result<EvalOutput> {
    let (counts, metrics) = evaluate(pred, m, laf)?;
    Ok(EvalOutput { laf_params: laf.clone(), counts, metrics })
}

/// Written to `selected.json` after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSummary {
    pub epoch: usize,
    pub loss: f64,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    pub stop_criteria_met: bool,
}

/// Trains on the runs in `runs` with the configuration of `manifest`, writing
/// the history, checkpoint, selection and effective manifest into `out`.
pub fn train_runs(
    runs: &[PathBuf],
    manifest: &RunManifest,
    out: &Path,
    observer: impl FnMut(TrainProgress<'_>),
) -> Result<(Model, TrainHistory)> {
    manifest.validate()?;
    let mut dataset = Vec::with_capacity(runs.len());
    for run in runs {
        let instance = read_instance(&run.join(INSTANCE_FILE))?;
        let m = read_miatts(run)?;
        let report = assess_miatts(&m)?;
        if !report.passed {
            let mut msg = format!("{}: MIATTs set fails assessment\n{}", run.display(), assessment_summary(&report, m.len()));
            for line in conflict_lines(&report, instance.width()) {
                msg.push_str(&line);
                msg.push('\n');
            }
            bail!(msg.trim_end().to_string());
        }
        dataset.push((instance, m));
    }
    let (model, history) = train_uttl_with(&dataset, &manifest.train_config, &manifest.laf_params, observer)?;
    let selected = history.selected().context("training produced no evaluated epoch")?;
    let summary = SelectedSummary {
        epoch: selected.epoch,
        loss: selected.loss,
        counts: selected.counts,
        metrics: selected.metrics,
        stop_criteria_met: check_stop(&selected.metrics, &manifest.train_config),
    };
    write_file(&out.join(HISTORY_FILE), &write_history(&history)?)?;
    write_file(&out.join(MODEL_FILE), &to_json(&model))?;
    write_file(&out.join(SELECTED_FILE), &to_json(&summary))?;
    write_file(&out.join(MANIFEST_FILE), &manifest.to_json())?;
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub ltt: AgreementCounts,
    pub targets: Vec<AgreementCounts>,
}

fn overlay(classes: &[AgreementClass]) -> Vec<[u8; 3]> {
    classes.iter().map(|c| c.rgb()).collect()
}

/// Writes the prediction, one overlay against the LTT and one per target,
/// and a per-overlay class count summary.
pub fn compare_run(pred: &PartialLabeling, m: &MiattSet, out: &Path) -> Result<CompareSummary> {
    let ltt = derive_ltt(m)?;
    let (w, h) = (pred.width(), pred.height());
    let ltt_classes = agreement_map(pred, &ltt)?;
    write_file(&out.join(PREDICTION_FILE), &write_mlab(pred))?;
    write_file(&out.join(LTT_OVERLAY_FILE), &write_ppm(w, h, &overlay(&ltt_classes)))?;
    let mut targets = Vec::with_capacity(m.len());
    for (i, t) in m.targets().iter().enumerate() {
        let classes = agreement_map(pred, t)?;
        write_file(&out.join(target_overlay_file(i)), &write_ppm(w, h, &overlay(&classes)))?;
        targets.push(AgreementCounts::tally(&classes));
    }
    let summary = CompareSummary { ltt: AgreementCounts::tally(&ltt_classes), targets };
    write_file(&out.join(COMPARE_SUMMARY_FILE), &to_json(&summary))?;
    Ok(summary)
}

/// Agreement classes decoded from an overlay file.
pub fn read_overlay(path: &Path) -> Result<(usize, usize, Vec<AgreementClass>)> {
    let (w, h, pixels) = parse_ppm(&read_text(path)?).with_context(|| format!("{}: invalid PPM", path.display()))?;
    let classes = pixels
        .iter()
        .enumerate()
        .map(|(i, &rgb)| {
            AgreementClass::from_rgb(rgb).with_context(|| format!("{}: pixel {i} has no overlay colour", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((w, h, classes))
}
