use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use miatt_forge::formats::{parse_mlab, write_mlab, write_probability_pgm};
use miatt_forge::uttl::{forward, Model};
use miatt_forge::{
    assess_miatts, derive_ltt, evaluate, AgreementClass, AgreementCounts, CellState, LafParams, MiattSet,
    PartialLabeling, ProbabilityMap,
};
use miatt_forge_cli::history::{read_history, HEADER};
use miatt_forge_cli::manifest::RunManifest;
use miatt_forge_cli::pipeline::{
    read_instance, read_miatts, read_overlay, target_overlay_file, CompareSummary, EvalOutput, SelectedSummary,
};
use miatt_forge_cli::report::{parse_report_points, parse_selected_epoch};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_miatt-forge"));
    c.env("SOURCE_DATE_EPOCH", "1700000000").env_remove("MIATT_FORGE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect()
}

/// Pixels where two targets assert opposite labels.
fn brute_force_conflicts(m: &MiattSet) -> Vec<usize> {
    let t = m.targets();
    (0..t[0].len())
        .filter(|&px| {
            (0..t.len()).any(|i| {
                (i + 1..t.len()).any(|j| {
                    let (a, b) = (t[i].get(px), t[j].get(px));
                    a.is_determined() && b.is_determined() && a != b
                })
            })
        })
        .collect()
}

fn small_run(dir: &Path, extra: &[&str]) {
    let mut args = vec!["gen-data", "--size", "24", "--seed", "3", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn gen_data_writes_a_passing_run() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    let stdout = ok(&["gen-data", "--size", "64", "--n-targets", "4", "--seed", "7", "--out", p(&run1)]);
    let mut names: Vec<_> = dir_bytes(&run1).into_keys().collect();
    names.sort();
    assert_eq!(
        names,
        ["instance.pgm", "manifest.json", "miatt_0.mlab", "miatt_1.mlab", "miatt_2.mlab", "miatt_3.mlab", "reference.mlab"]
    );
    let m = read_miatts(&run1).unwrap();
    let report = assess_miatts(&m).unwrap();
    assert!(report.passed);
    assert!(report.coverage.at_least(0.95));
    assert!(stdout.contains(&format!("coverage: {}/{}", report.coverage.determined, report.coverage.domain)));
    assert!(stdout.contains("assessment: PASS"));

    let reference = parse_mlab(&fs::read_to_string(run1.join("reference.mlab")).unwrap()).unwrap();
    for t in m.targets() {
        assert!(t.facts().all(|(px, s)| reference.get(px) == s));
    }
    let instance = read_instance(&run1.join("instance.pgm")).unwrap();
    assert_eq!((instance.width(), instance.height()), (64, 64));
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_run(&a, &[]);
    small_run(&b, &[]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn single_target_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["gen-data", "--n-targets", "1", "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("N >= 2"));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn out_defaults_to_env_var() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("envrun");
    let out = bin().args(["gen-data", "--size", "16"]).env("MIATT_FORGE_OUT", &dir).output().unwrap();
    assert!(out.status.success());
    assert!(dir.join("miatt_0.mlab").is_file());
    let out = bin().args(["assess"]).env("MIATT_FORGE_OUT", &dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn assess_exit_status_tracks_passed() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    small_run(&run1, &[]);
    assert_eq!(run(&["assess", "--run", p(&run1)]).status.code(), Some(0));

    let neg = tmp.path().join("neg");
    ok(&["gen-miatts", "--run", p(&run1), "--out", p(&neg), "--inject-conflicts", "2"]);
    let out = run(&["assess", "--run", p(&neg)]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let listed: Vec<usize> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix("pixel "))
        .map(|l| l.split(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(listed, brute_force_conflicts(&read_miatts(&neg).unwrap()));
    assert_eq!(listed.len(), 2);

    // A single target fails on N >= 2 alone.
    let single = run(&["assess", p(&run1.join("miatt_0.mlab"))]);
    assert_eq!(single.status.code(), Some(1));

    // JSON report agrees with the exit status.
    let out = run(&["assess", "--json", "--run", p(&neg)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], false);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_inputs_name_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.mlab");
    fs::write(&bad, "MLAB1\n2 1\nOQ\n").unwrap();
    let out = run(&["assess", p(&bad), p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bad.mlab") && stderr.contains("invalid mask character"), "{stderr}");

    let manifest = tmp.path().join("manifest.json");
    fs::write(&manifest, "{\"format_version\": 2}").unwrap();
    let out = run(&["gen-data", "--manifest", p(&manifest), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("manifest.json"));
}

#[test]
fn gen_miatts_replaces_targets_and_updates_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    small_run(&run1, &["--n-targets", "5"]);
    ok(&["gen-miatts", "--run", p(&run1), "--n-targets", "3", "--seed", "11"]);
    let m = read_miatts(&run1).unwrap();
    assert_eq!(m.len(), 3);
    let manifest = RunManifest::load(&run1.join("manifest.json")).unwrap();
    assert_eq!((manifest.gen_params.n_targets, manifest.gen_params.seed), (3, 11));
    // The manifest alone reproduces the redrawn set.
    let again = tmp.path().join("again");
    ok(&["gen-data", "--manifest", p(&run1.join("manifest.json")), "--out", p(&again)]);
    assert_eq!(dir_bytes(&run1), dir_bytes(&again));
}

#[test]
fn eval_matches_in_process_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    small_run(&run1, &[]);
    let m = read_miatts(&run1).unwrap();
    let (w, h) = m.shape().unwrap();

    // A labeling prediction: the reference with a stripe flipped.
    let mut pred = parse_mlab(&fs::read_to_string(run1.join("reference.mlab")).unwrap()).unwrap();
    for x in 0..w {
        pred.set(x, pred.get(x).flipped());
    }
    let pred_path = tmp.path().join("pred.mlab");
    fs::write(&pred_path, write_mlab(&pred)).unwrap();
    let out_path = tmp.path().join("m.json");
    ok(&["eval", "--run", p(&run1), "--prediction", p(&pred_path), "--out", p(&out_path)]);
    let got: EvalOutput = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let (counts, metrics) = evaluate(&pred, &m, &LafParams::default()).unwrap();
    assert_eq!((got.counts, got.metrics), (counts, metrics));

    // A probability map, including exact 0.5 ties, under a custom threshold.
    let probs: Vec<f64> = (0..w * h).map(|i| (i % 256) as f64 / 255.0).collect();
    let probs = ProbabilityMap::new(w, h, probs).unwrap();
    let pgm_path = tmp.path().join("probs.pgm");
    fs::write(&pgm_path, write_probability_pgm(&probs)).unwrap();
    ok(&["eval", "--run", p(&run1), "--prediction", p(&pgm_path), "--binarize-threshold", "0.3"]);
    let got: EvalOutput = serde_json::from_str(&fs::read_to_string(run1.join("metrics.json")).unwrap()).unwrap();
    let laf = LafParams { binarize_threshold: 0.3, ..LafParams::default() };
    let (counts, metrics) = evaluate(&probs, &m, &laf).unwrap();
    assert_eq!((got.counts, got.metrics), (counts, metrics));
    assert_eq!(got.laf_params, laf);
}

#[test]
fn undefined_metrics_serialize_as_null() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    small_run(&run1, &[]);
    let (w, h) = read_miatts(&run1).unwrap().shape().unwrap();
    // Everything predicted NonObject: LTP = LFP = 0, so LPrecision is 0/0.
    let pred = PartialLabeling::filled(w, h, CellState::NonObject).unwrap();
    let pred_path = tmp.path().join("neg.mlab");
    fs::write(&pred_path, write_mlab(&pred)).unwrap();
    let stdout = ok(&["eval", "--run", p(&run1), "--prediction", p(&pred_path)]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["metrics"]["LPrecision"].is_null());
    assert_eq!(v["metrics"]["LRecall"], 0.0);
    let stdout = ok(&["eval", "--run", p(&run1), "--prediction", p(&pred_path), "--zero-division-policy", "zero-fill"]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["metrics"]["LPrecision"], 0.0);
}

fn trained_run(tmp: &Path) -> PathBuf {
    let run1 = tmp.join("run1");
    small_run(&run1, &["--max-epochs", "120", "--eval-every", "10"]);
    ok(&["train", "--run", p(&run1), "--quiet"]);
    run1
}

#[test]
fn train_writes_history_checkpoint_and_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = trained_run(tmp.path());
    let text = fs::read_to_string(run1.join("history.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "epoch,loss,LTP,LFP,LTN,LFN,LPrecision,LRecall,LF1,LAccuracy,LIoU,LErrors");
    assert_eq!(HEADER.join(","), text.lines().next().unwrap());
    let rows = read_history(&run1.join("history.csv")).unwrap();
    assert!(rows.iter().all(|r| r.lerrors == r.lfp + r.lfn));
    assert!(rows.windows(2).all(|w| w[0].epoch < w[1].epoch));
    assert_eq!(rows[0].epoch, 1);

    let selected: SelectedSummary =
        serde_json::from_str(&fs::read_to_string(run1.join("selected.json")).unwrap()).unwrap();
    let row = rows.iter().find(|r| r.epoch == selected.epoch).expect("selected epoch is in the history");
    assert_eq!(row.lfp + row.lfn, selected.counts.lfp + selected.counts.lfn);
    if !selected.stop_criteria_met {
        assert_eq!(selected.counts.lfp + selected.counts.lfn, rows.iter().map(|r| r.lerrors).min().unwrap());
    }

    // The checkpoint reproduces the selected counts.
    let model: Model = serde_json::from_str(&fs::read_to_string(run1.join("model.json")).unwrap()).unwrap();
    let instance = read_instance(&run1.join("instance.pgm")).unwrap();
    let m = read_miatts(&run1).unwrap();
    let (counts, _) = evaluate(&forward(&model, &instance), &m, &LafParams::default()).unwrap();
    assert_eq!(counts, selected.counts);
    let reserialized = serde_json::to_string_pretty(&model).unwrap() + "\n";
    assert_eq!(reserialized, fs::read_to_string(run1.join("model.json")).unwrap());
}

#[test]
fn train_rejects_conflicting_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    small_run(&run1, &["--inject-conflicts", "1"]);
    let out = run(&["train", "--run", p(&run1), "--quiet"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("fails assessment") && stderr.contains("pixel "), "{stderr}");
    assert!(!run1.join("history.csv").exists());
}

#[test]
fn report_points_parse_back_to_history() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = trained_run(tmp.path());
    ok(&["report", "--run", p(&run1)]);
    let svg = fs::read_to_string(run1.join("report.svg")).unwrap();
    let rows = read_history(&run1.join("history.csv")).unwrap();
    let points = parse_report_points(&svg);
    let series = |name: &str| -> Vec<(usize, Option<f64>)> {
        points.iter().filter(|p| p.0 == name).map(|p| (p.1, p.2)).collect()
    };
    assert_eq!(series("liou"), rows.iter().map(|r| (r.epoch, r.liou)).collect::<Vec<_>>());
    assert_eq!(series("lerrors"), rows.iter().map(|r| (r.epoch, Some(r.lerrors as f64))).collect::<Vec<_>>());
    assert_eq!(series("loss"), rows.iter().map(|r| (r.epoch, Some(r.loss))).collect::<Vec<_>>());
    let selected: SelectedSummary =
        serde_json::from_str(&fs::read_to_string(run1.join("selected.json")).unwrap()).unwrap();
    assert_eq!(parse_selected_epoch(&svg), Some(selected.epoch));
}

#[test]
fn compare_overlays_match_an_independent_recount() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = trained_run(tmp.path());
    let out = tmp.path().join("cmp");
    ok(&["compare", "--run", p(&run1), "--model", p(&run1.join("model.json")), "--out", p(&out)]);
    let m = read_miatts(&run1).unwrap();
    let summary: CompareSummary =
        serde_json::from_str(&fs::read_to_string(out.join("compare_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.targets.len(), m.len());
    let ppm_count = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "ppm").count();
    assert_eq!(ppm_count, m.len() + 1);

    let pred = parse_mlab(&fs::read_to_string(out.join("prediction.mlab")).unwrap()).unwrap();
    let recount = |classes: &[AgreementClass]| {
        let mut c = AgreementCounts::default();
        for k in classes {
            *match k {
                AgreementClass::AgreeObject => &mut c.agree_object,
                AgreementClass::AgreeNonObject => &mut c.agree_nonobject,
                AgreementClass::FalsePositive => &mut c.false_positive,
                AgreementClass::FalseNegative => &mut c.false_negative,
                AgreementClass::Undetermined => &mut c.undetermined,
            } += 1;
        }
        c
    };
    // Expected class from first principles for one labeling.
    let expected = |facts: &PartialLabeling| -> Vec<AgreementClass> {
        (0..facts.len())
            .map(|px| match (facts.get(px), pred.get(px)) {
                (CellState::Unknown, _) => AgreementClass::Undetermined,
                (CellState::Object, CellState::Object) => AgreementClass::AgreeObject,
                (CellState::Object, _) => AgreementClass::FalseNegative,
                (CellState::NonObject, CellState::Object) => AgreementClass::FalsePositive,
                (CellState::NonObject, _) => AgreementClass::AgreeNonObject,
            })
            .collect()
    };

    let (_, _, ltt_classes) = read_overlay(&out.join("overlay_ltt.ppm")).unwrap();
    assert_eq!(recount(&ltt_classes), summary.ltt);
    assert_eq!(ltt_classes, expected(&derive_ltt(&m).unwrap()));
    for (i, t) in m.targets().iter().enumerate() {
        let (w, h, classes) = read_overlay(&out.join(target_overlay_file(i))).unwrap();
        assert_eq!((w, h), (t.width(), t.height()));
        assert_eq!(recount(&classes), summary.targets[i]);
        assert_eq!(classes, expected(t));
    }

    // LTT overlay counts coincide with the logical confusion counts.
    let (counts, _) = evaluate(&pred, &m, &LafParams::default()).unwrap();
    assert_eq!(
        (summary.ltt.agree_object, summary.ltt.agree_nonobject, summary.ltt.false_positive, summary.ltt.false_negative, summary.ltt.undetermined),
        (counts.ltp, counts.ltn, counts.lfp, counts.lfn, counts.undetermined)
    );
}

#[test]
fn manifest_rerun_reproduces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let a = trained_run(tmp.path());
    let b = tmp.path().join("b");
    ok(&["gen-data", "--manifest", p(&a.join("manifest.json")), "--out", p(&b)]);
    ok(&["train", "--run", p(&b), "--quiet"]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn train_flags_are_recorded_in_the_output_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let run1 = tmp.path().join("run1");
    small_run(&run1, &[]);
    let out = tmp.path().join("out");
    ok(&[
        "train", "--run", p(&run1), "--out", p(&out), "--quiet", "--max-epochs", "15", "--eval-every", "5",
        "--alpha", "0.4,0.3,0.2,0.1", "--hidden-width", "4", "--seed", "99",
    ]);
    let manifest = RunManifest::load(&out.join("manifest.json")).unwrap();
    let c = &manifest.train_config;
    assert_eq!((c.max_epochs, c.eval_every, c.hidden_width, c.seed), (15, 5, 4, 99));
    assert_eq!(c.alpha.as_deref(), Some(&[0.4, 0.3, 0.2, 0.1][..]));
    let epochs: Vec<usize> = read_history(&out.join("history.csv")).unwrap().iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, [1, 5, 10, 15]);

    let bad = run(&["train", "--run", p(&run1), "--out", p(&out), "--alpha", "0.5,0.5"]);
    assert_eq!(bad.status.code(), Some(2));
}
