//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Every check compares library output against an oracle written here from
//! the definitions, not against the library's own helpers.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use miatt_forge::uttl::*;
use miatt_forge::*;

const FORMULA_CASES: usize = 1000;
const RESTRICTION_CASES: usize = 200;
const SOUNDNESS_SEEDS: u64 = 100;
const UNION_CASES: usize = 100;
const GRADIENT_CASES: u64 = 100;
const GRADIENT_STEP: f64 = 1e-5;
const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_FLOOR: f64 = 1e-6;
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const TRAINING_BUDGET: Duration = Duration::from_secs(300);
const EPOCH_BUDGET: usize = 2000;
const SMOOTHING_WINDOW: usize = 5;

type Criterion = (&'static str, fn() -> Result<String>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric formulas exact on 1000 random count vectors", formula_exactness),
        ("logical counts equal reference counts restricted to the LTT", restriction_equivalence),
        ("generated sets pass, conflict-injected sets fail at the right pixels", assessment_soundness),
        ("LTT facts are the union of target facts", ltt_union),
        ("analytic gradient matches central differences", gradient_check),
        ("default synthetic task meets the stop criteria", end_to_end),
        ("reruns from one manifest are byte-identical", determinism),
        ("check_stop truth table", check_stop_table),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(anyhow::anyhow!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} [{detail}; {secs:.1}s]"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e:#} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn all_metrics() -> LafParams {
    LafParams::default()
}

fn zero_fill() -> LafParams {
    LafParams { zero_division_policy: ZeroDivisionPolicy::ZeroFill, ..LafParams::default() }
}

/// The six table formulas, evaluated directly from the four counts.
fn table_metrics(ltp: u64, lfp: u64, ltn: u64, lfn: u64, fill: bool) -> [Option<f64>; 5] {
    let div = |num: u64, den: u64| {
        if den == 0 {
            fill.then_some(0.0)
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let precision = div(ltp, ltp + lfp);
    let recall = div(ltp, ltp + lfn);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r != 0.0 => Some(2.0 * (p * r) / (p + r)),
        _ => fill.then_some(0.0),
    };
    let accuracy = div(ltp + ltn, ltp + lfp + ltn + lfn);
    let iou = div(ltp, ltp + lfp + lfn);
    [precision, recall, f1, accuracy, iou]
}

/// Whether `f` is the correctly rounded value of `num / den`, checked with
/// integer arithmetic. Requires `0 < num <= den < 2^32`.
fn is_correctly_rounded(f: f64, num: u64, den: u64) -> bool {
    let bits = f.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = (bits & ((1 << 52) - 1)) | (1 << 52);
    // f = mantissa * 2^(exp - 1075); shift = 1075 - exp.
    let shift = 1075 - exp;
    if !(0..=100).contains(&shift) {
        return false;
    }
    let scaled = (num as u128) << shift;
    let approx = mantissa as u128 * den as u128;
    2 * scaled.abs_diff(approx) <= den as u128
}

fn bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

fn metric_vector(m: &MetricSet) -> [Option<f64>; 5] {
    [m.lprecision, m.lrecall, m.lf1, m.laccuracy, m.liou]
}

fn random_count(rng: &mut SplitMix64) -> u64 {
    if rng.next_f64() < 0.25 {
        0
    } else {
        let scale = 10u64.pow(1 + rng.below(9) as u32);
        rng.below(scale as usize) as u64
    }
}

/// Random fully determined labeling containing both classes.
fn random_reference(rng: &mut SplitMix64, w: usize, h: usize) -> PartialLabeling {
    loop {
        let cells: Vec<CellState> = (0..w * h)
            .map(|_| if rng.next_f64() < 0.4 { CellState::Object } else { CellState::NonObject })
            .collect();
        let objects = cells.iter().filter(|&&c| c == CellState::Object).count();
        if objects > 0 && objects < w * h {
            return PartialLabeling::new(w, h, cells).unwrap();
        }
    }
}

fn random_prediction(rng: &mut SplitMix64, w: usize, h: usize) -> PartialLabeling {
    let cells = (0..w * h)
        .map(|_| if rng.next_f64() < 0.5 { CellState::Object } else { CellState::NonObject })
        .collect();
    PartialLabeling::new(w, h, cells).unwrap()
}

fn random_gen_params(rng: &mut SplitMix64, collective: f64) -> GenParams {
    let lo = rng.uniform(0.05, 0.5);
    let lo2 = rng.uniform(0.05, 0.5);
    GenParams {
        n_targets: 2 + rng.below(4),
        object_coverage_range: (lo, rng.uniform(lo, 0.9)),
        nonobject_coverage_range: (lo2, rng.uniform(lo2, 0.9)),
        blob_seeds_per_target: 1 + rng.below(3),
        target_collective_coverage: collective,
        seed: rng.next_u64(),
    }
}

fn small_dims(rng: &mut SplitMix64) -> (usize, usize) {
    loop {
        let (w, h) = (1 + rng.below(8), 1 + rng.below(8));
        if w * h >= 2 {
            return (w, h);
        }
    }
}

/// Draws generator outputs until one succeeds; infeasible coverage on tiny
/// grids is a generator outcome, not an evaluation one.
fn generated_triple(rng: &mut SplitMix64, collective: f64) -> (PartialLabeling, MiattSet, PartialLabeling) {
    loop {
        let (w, h) = small_dims(rng);
        let reference = random_reference(rng, w, h);
        let c = if collective > 0.0 { collective } else { rng.uniform(0.1, 1.0) };
        if let Ok(m) = generate_miatts_abductive(&reference, &random_gen_params(rng, c)) {
            let pred = random_prediction(rng, w, h);
            return (reference, m, pred);
        }
    }
}

/// Every pixel where two targets assert different labels.
fn brute_force_conflicts(m: &MiattSet) -> Vec<usize> {
    let t = m.targets();
    (0..t[0].len())
        .filter(|&px| {
            (0..t.len()).any(|i| {
                (i + 1..t.len()).any(|j| {
                    let (a, b) = (t[i].get(px), t[j].get(px));
                    a != CellState::Unknown && b != CellState::Unknown && a != b
                })
            })
        })
        .collect()
}

/// Membership rules checked directly: at least two targets, each with a
/// strict subset of the pixels determined, and no pairwise conflict.
fn brute_force_passes(m: &MiattSet) -> bool {
    let t = m.targets();
    let strictly_partial = t.iter().all(|ti| ti.cells().contains(&CellState::Unknown));
    t.len() >= 2 && strictly_partial && brute_force_conflicts(m).is_empty()
}

/// Conventional counts of `pred` against `reference` over the pixels that
/// `keep` admits: `[tp, fp, tn, fn]`.
fn conventional_counts(pred: &PartialLabeling, reference: &PartialLabeling, keep: impl Fn(usize) -> bool) -> [u64; 4] {
    let mut c = [0u64; 4];
    for px in (0..pred.len()).filter(|&px| keep(px)) {
        let truth = reference.get(px) == CellState::Object;
        let guess = pred.get(px) == CellState::Object;
        c[match (truth, guess) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        }] += 1;
    }
    c
}

fn formula_exactness() -> Result<String> {
    let mut rng = SplitMix64::new(0x7AB1E4);
    let mut cases: Vec<[u64; 4]> = vec![[0; 4], [0, 0, 5, 0], [0, 3, 0, 0], [0, 0, 0, 4], [7, 0, 0, 0], [0, 2, 0, 2]];
    while cases.len() < FORMULA_CASES {
        cases.push([(); 4].map(|_| random_count(&mut rng)));
    }
    let mut undefined_seen = 0;
    for &[ltp, lfp, ltn, lfn] in &cases {
        let c = ConfusionCounts { ltp, lfp, ltn, lfn, undetermined: rng.below(100) as u64 };
        for (params, fill) in [(all_metrics(), false), (zero_fill(), true)] {
            let got = logical_assessment_metric_build(&c, &params);
            let want = table_metrics(ltp, lfp, ltn, lfn, fill);
            let got_v = metric_vector(&got);
            for (i, name) in ["LPrecision", "LRecall", "LF1", "LAccuracy", "LIoU"].iter().enumerate() {
                ensure!(
                    bits(got_v[i]) == bits(want[i]),
                    "{name} for {c:?} (zero-fill {fill}): got {:?}, want {:?}",
                    got_v[i],
                    want[i]
                );
            }
            ensure!(got.lerrors == Some(lfp + lfn), "LErrors for {c:?}: got {:?}", got.lerrors);
            undefined_seen += got_v.iter().filter(|v| v.is_none()).count();
        }
        // The ratios are single divisions, so each must be the correctly
        // rounded quotient of its integer terms.
        let got = logical_assessment_metric_build(&c, &all_metrics());
        for (v, num, den) in [
            (got.lprecision, ltp, ltp + lfp),
            (got.lrecall, ltp, ltp + lfn),
            (got.laccuracy, ltp + ltn, ltp + lfp + ltn + lfn),
            (got.liou, ltp, ltp + lfp + lfn),
        ] {
            if let Some(v) = v {
                if num == 0 {
                    ensure!(v == 0.0, "zero numerator gave {v} for {c:?}");
                } else {
                    ensure!(is_correctly_rounded(v, num, den), "{v} is not {num}/{den} rounded");
                }
            }
        }
        // LF1 agrees with the count form 2TP / (2TP + FP + FN) to a few ulps.
        if let Some(f1) = got.lf1 {
            let direct = (2 * ltp) as f64 / (2 * ltp + lfp + lfn) as f64;
            ensure!((f1 - direct).abs() <= 4.0 * f64::EPSILON * direct.max(f64::MIN_POSITIVE), "LF1 {f1} vs {direct} for {c:?}");
        }
    }
    ensure!(undefined_seen > 0, "no zero-denominator case was exercised");
    Ok(format!("{} count vectors, both zero-division policies", cases.len()))
}

fn restriction_equivalence() -> Result<String> {
    let mut rng = SplitMix64::new(0x2E57);
    let params = all_metrics();
    for case in 0..RESTRICTION_CASES {
        let (reference, m, pred) = generated_triple(&mut rng, 0.0);
        let determined = |px: usize| m.targets().iter().any(|t| t.get(px) != CellState::Unknown);
        let (c, laf) = evaluate(&pred, &m, &params)?;
        let want = conventional_counts(&pred, &reference, determined);
        let undetermined = (0..pred.len()).filter(|&px| !determined(px)).count() as u64;
        ensure!(
            [c.ltp, c.lfp, c.ltn, c.lfn, c.undetermined] == [want[0], want[1], want[2], want[3], undetermined],
            "case {case}: counts {c:?}, restricted reference counts {want:?}, {undetermined} undetermined"
        );
        let [tp, fp, tn, fn_] = want;
        ensure!(
            metric_vector(&laf).map(bits) == table_metrics(tp, fp, tn, fn_, false).map(bits),
            "case {case}: metrics differ from the restricted conventional metrics"
        );

        let (reference, m, pred) = generated_triple(&mut rng, 1.0);
        ensure!(
            (0..reference.len()).all(|px| m.targets().iter().any(|t| t.get(px) != CellState::Unknown)),
            "case {case}: full-coverage set leaves pixels undetermined"
        );
        let (c, laf) = evaluate(&pred, &m, &params)?;
        let [tp, fp, tn, fn_] = conventional_counts(&pred, &reference, |_| true);
        ensure!(
            [c.ltp, c.lfp, c.ltn, c.lfn, c.undetermined] == [tp, fp, tn, fn_, 0],
            "case {case}: full coverage counts {c:?} vs conventional {:?}",
            [tp, fp, tn, fn_]
        );
        ensure!(
            metric_vector(&laf).map(bits) == table_metrics(tp, fp, tn, fn_, false).map(bits) && laf.lerrors == Some(fp + fn_),
            "case {case}: full coverage metrics {laf:?} differ from conventional metrics"
        );
    }
    Ok(format!("{RESTRICTION_CASES} partial and {RESTRICTION_CASES} full-coverage triples on grids up to 8x8"))
}

fn assessment_soundness() -> Result<String> {
    let mut conflicts_checked = 0;
    for seed in 0..SOUNDNESS_SEEDS {
        let scene = SceneParams { seed, ..SceneParams::default() };
        let (_, reference) = generate_synthetic_scene(&scene)?;
        let m = generate_miatts_abductive(&reference, &GenParams { seed, ..GenParams::default() })?;
        ensure!(brute_force_passes(&m), "seed {seed}: generator output breaks the membership rules");
        let report = assess_miatts(&m)?;
        ensure!(report.passed, "seed {seed}: generator output failed assessment: {:?}", report.conflicts);

        let flips = 1 + (seed as usize % 3);
        let bad = inject_conflicts(&m, flips, seed ^ 0xC0FF)?;
        let brute = brute_force_conflicts(&bad);
        ensure!(!brute.is_empty(), "seed {seed}: injection produced no conflict");
        let report = assess_miatts(&bad)?;
        ensure!(!report.passed, "seed {seed}: conflict-injected set passed");
        let reported: Vec<usize> = report.conflicts.iter().map(|c| c.pixel).collect();
        ensure!(reported == brute, "seed {seed}: reported conflicts {reported:?}, pairwise scan {brute:?}");
        for c in &report.conflicts {
            let (a, b) = (bad.targets()[c.first].get(c.pixel), bad.targets()[c.second].get(c.pixel));
            ensure!(a.is_determined() && b.is_determined() && a != b, "seed {seed}: conflict {c:?} names agreeing targets");
        }
        conflicts_checked += brute.len();
    }
    Ok(format!("{SOUNDNESS_SEEDS} seeds, {conflicts_checked} injected conflict pixels located"))
}

/// A passing set drawn without the generator: each reference fact goes to a
/// random nonempty subset of targets, or to none.
fn scattered_set(rng: &mut SplitMix64) -> Option<MiattSet> {
    let (w, h) = (2 + rng.below(15), 2 + rng.below(15));
    let reference = random_reference(rng, w, h);
    let n = 2 + rng.below(4);
    let mut targets = vec![PartialLabeling::unknown(w, h).unwrap(); n];
    for px in 0..w * h {
        if rng.next_f64() < 0.2 {
            continue;
        }
        for t in targets.iter_mut() {
            if rng.next_f64() < 0.5 {
                t.set(px, reference.get(px));
            }
        }
    }
    let m = MiattSet::new(targets).ok()?;
    brute_force_passes(&m).then_some(m)
}

fn ltt_union() -> Result<String> {
    let mut rng = SplitMix64::new(0x0417);
    let mut sets = Vec::new();
    while sets.len() < UNION_CASES / 2 {
        let (w, h) = (2 + rng.below(15), 2 + rng.below(15));
        let reference = random_reference(&mut rng, w, h);
        let c = rng.uniform(0.1, 1.0);
        if let Ok(m) = generate_miatts_abductive(&reference, &random_gen_params(&mut rng, c)) {
            sets.push(m);
        }
    }
    while sets.len() < UNION_CASES {
        if let Some(m) = scattered_set(&mut rng) {
            sets.push(m);
        }
    }
    for (i, m) in sets.iter().enumerate() {
        ensure!(assess_miatts(m)?.passed, "set {i} should pass");
        let ltt = derive_ltt(m)?;
        for px in 0..ltt.len() {
            let asserted: Vec<CellState> =
                m.targets().iter().map(|t| t.get(px)).filter(|c| *c != CellState::Unknown).collect();
            let want = asserted.first().copied().unwrap_or(CellState::Unknown);
            ensure!(ltt.get(px) == want, "set {i}, pixel {px}: LTT {:?}, union {want:?}", ltt.get(px));
        }
    }
    Ok(format!("{UNION_CASES} passing sets, every pixel enumerated"))
}

struct GradientCase {
    model: Model,
    instance: Instance,
    set: MiattSet,
    alpha: Vec<f64>,
}

fn gradient_case(seed: u64) -> GradientCase {
    let mut rng = SplitMix64::new(seed);
    let (w, h) = (3 + rng.below(6), 3 + rng.below(6));
    let instance = Instance::new(w, h, (0..w * h).map(|_| rng.next_f64()).collect()).unwrap();
    let set = loop {
        let reference = random_reference(&mut rng, w, h);
        let params = GenParams {
            n_targets: 2 + rng.below(3),
            object_coverage_range: (0.2, 0.7),
            nonobject_coverage_range: (0.2, 0.7),
            blob_seeds_per_target: 2,
            target_collective_coverage: 0.8,
            seed: rng.next_u64(),
        };
        if let Ok(set) = generate_miatts_abductive(&reference, &params) {
            break set;
        }
    };
    let raw: Vec<f64> = (0..set.len()).map(|_| rng.uniform(0.1, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut alpha: Vec<f64> = raw.iter().map(|a| a / total).collect();
    alpha[0] += 1.0 - alpha.iter().sum::<f64>();
    let mut model = Model::init(rng.below(3), 1 + rng.below(6), &mut rng);
    // Larger weights push hidden units out of their linear regime.
    for v in model.weights_in.iter_mut().chain(model.weights_out.iter_mut()) {
        *v *= 3.0;
    }
    GradientCase { model, instance, set, alpha }
}

fn gradient_check() -> Result<String> {
    let start = Instant::now();
    let eps = TrainConfig::default().prob_clamp_epsilon;
    let mut worst = 0.0f64;
    let mut params_checked = 0;
    for seed in 0..GRADIENT_CASES {
        let c = gradient_case(0x6AD0 + seed);
        let (_, grad) = surrogate_loss_and_grad(&c.model, &c.instance, &c.set, &c.alpha, eps)?;
        let base = c.model.flatten();
        let mut probe = c.model.clone();
        for (i, analytic) in grad.flatten().into_iter().enumerate() {
            let mut at = |delta: f64| -> Result<f64> {
                let mut p = base.clone();
                p[i] += delta;
                probe.set_flat(&p);
                Ok(surrogate_loss(&probe, &c.instance, &c.set, &c.alpha, eps)?)
            };
            let numeric = (at(GRADIENT_STEP)? - at(-GRADIENT_STEP)?) / (2.0 * GRADIENT_STEP);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max(err);
            params_checked += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(worst < GRADIENT_TOLERANCE, "max relative error {worst:.3e} over {GRADIENT_CASES} cases");
    ensure!(elapsed < GRADIENT_BUDGET, "took {elapsed:?}");
    Ok(format!("{GRADIENT_CASES} cases, {params_checked} parameters, max relative error {worst:.2e}"))
}

fn end_to_end() -> Result<String> {
    let (img, reference) = generate_synthetic_scene(&SceneParams::default())?;
    ensure!((img.width(), img.height()) == (64, 64), "scene is {}x{}", img.width(), img.height());
    let gen = GenParams::default();
    let set = generate_miatts_abductive(&reference, &gen)?;
    ensure!(set.len() == 4, "{} targets", set.len());
    let determined = (0..reference.len())
        .filter(|&px| set.targets().iter().any(|t| t.get(px) != CellState::Unknown))
        .count();
    let coverage = determined as f64 / reference.len() as f64;
    ensure!(coverage >= 0.95, "collective coverage {coverage}");

    let cfg = TrainConfig::default();
    ensure!(cfg.max_epochs == EPOCH_BUDGET, "epoch budget is {}", cfg.max_epochs);
    let start = Instant::now();
    let (_, history) = train_uttl(&[(img, set)], &cfg)?;
    let elapsed = start.elapsed();

    let selected = history.selected().context("no selected record")?;
    let liou = selected.metrics.liou;
    let errors = selected.metrics.lerrors;
    ensure!(
        matches!(liou, Some(v) if v > 0.999) && matches!(errors, Some(e) if e < 100),
        "selected epoch {} has LIoU {liou:?}, LErrors {errors:?}",
        selected.epoch
    );
    ensure!(selected.epoch <= EPOCH_BUDGET, "selected epoch {}", selected.epoch);
    ensure!(elapsed < TRAINING_BUDGET, "training took {elapsed:?}");

    let first = &history.records[0];
    ensure!(first.epoch == 1, "first record is epoch {}", first.epoch);
    ensure!(selected.loss < first.loss, "loss {} at selection, {} at epoch 1", selected.loss, first.loss);

    // Moving average of LIoU over the first half of the evaluated records,
    // recomputed here with Undefined read as 0.
    let half: Vec<f64> = history.records[..history.records.len() / 2]
        .iter()
        .map(|r| r.metrics.liou.unwrap_or(0.0))
        .collect();
    let smoothed: Vec<f64> = half
        .windows(SMOOTHING_WINDOW)
        .map(|w| w.iter().sum::<f64>() / SMOOTHING_WINDOW as f64)
        .collect();
    ensure!(smoothed.len() >= 2, "only {} smoothed points", smoothed.len());
    if let Some(i) = smoothed.windows(2).position(|w| w[1] < w[0]) {
        bail!("smoothed LIoU drops at point {i}: {} -> {}", smoothed[i], smoothed[i + 1]);
    }
    Ok(format!(
        "epoch {}, LIoU {:.6}, LErrors {}, loss {:.4} < {:.4}, {:.1}s training",
        selected.epoch,
        liou.unwrap_or(f64::NAN),
        errors.unwrap_or(0),
        selected.loss,
        first.loss,
        elapsed.as_secs_f64()
    ))
}

fn cli(args: &[&str]) -> Result<()> {
    let out = Command::new(env!("CARGO_BIN_EXE_miatt-forge"))
        .args(args)
        .env_remove("MIATT_FORGE_OUT")
        .output()
        .context("spawning the CLI")?;
    ensure!(out.status.success(), "`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn determinism() -> Result<String> {
    let tmp = tempfile::tempdir()?;
    let root = tmp.path();
    let path = |name: &str| root.join(name).to_string_lossy().into_owned();
    cli(&["gen-data", "--out", &path("first")])?;
    let manifest = path("first/manifest.json");
    cli(&["gen-data", "--manifest", &manifest, "--out", &path("second")])?;
    cli(&["gen-data", "--manifest", &manifest, "--out", &path("third")])?;
    for run in ["first", "second", "third"] {
        cli(&["train", "--quiet", "--run", &path(run)])?;
    }

    let mut files: Vec<String> = fs::read_dir(root.join("first"))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".mlab"))
        .collect();
    files.sort();
    ensure!(files.len() == 5, "expected reference and four targets, found {files:?}");
    files.extend(["history.csv", "model.json", "selected.json", "instance.pgm", "manifest.json"].map(String::from));
    for name in &files {
        let a = read(&root.join("first"), name)?;
        for other in ["second", "third"] {
            ensure!(a == read(&root.join(other), name)?, "{name} differs between first and {other}");
        }
    }
    Ok(format!("{} files identical across three runs", files.len()))
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    fs::read(dir.join(name)).with_context(|| format!("{}", dir.join(name).display()))
}

fn check_stop_table() -> Result<String> {
    let cfg = TrainConfig::default();
    ensure!(
        cfg.stop_liou_min == 0.999 && cfg.stop_lerrors_max == 100,
        "default thresholds are {} and {}",
        cfg.stop_liou_min,
        cfg.stop_lerrors_max
    );
    let rows: [(Option<f64>, u64, bool); 4] =
        [(Some(1.0), 53, true), (Some(0.9995), 120, false), (Some(0.998), 50, false), (None, 0, false)];
    for (liou, lerrors, want) in rows {
        let m = MetricSet { lprecision: None, lrecall: None, lf1: None, laccuracy: None, liou, lerrors: Some(lerrors) };
        ensure!(check_stop(&m, &cfg) == want, "check_stop({liou:?}, {lerrors}) should be {want}");
    }
    Ok("4 rows".into())
}
