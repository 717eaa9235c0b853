use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use miatt_forge::uttl::TrainConfig;
use miatt_forge::{assess_miatts, GenParams, LafParams, MetricName, MiattSet, SceneParams, ZeroDivisionPolicy};

use crate::history::read_history;
use crate::manifest::{ConflictInjection, RunManifest, MANIFEST_FILE};
use crate::pipeline::{self, PredictionSource, SelectedSummary};
use crate::report::render_report;

#[derive(Debug, Parser)]
#[command(name = "miatt-forge", version, about = "Generate, assess, evaluate and train with multiple inaccurate true targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic scene, its reference labeling and a MIATTs set
    GenData(GenDataArgs),
    /// Redraw the MIATTs set of a run from a reference labeling
    GenMiatts(GenMiattsArgs),
    /// Assess a MIATTs set; exit 0 if it passes, 1 if not
    Assess(AssessArgs),
    /// Logical assessment metrics of a prediction against a MIATTs set
    Eval(EvalArgs),
    /// Train a patch classifier on one or more runs
    Train(TrainArgs),
    /// Render history.csv as an SVG report
    Report(ReportArgs),
    /// Emit agreement overlays of a prediction against the LTT and every target
    Compare(CompareArgs),
    /// Run the supervision HTTP service
    Serve(ServeArgs),
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

#[derive(Debug, Clone, Args)]
pub struct SceneFlags {
    /// Sets width and height; also centres the lane unless --lane-offset is given
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub lane_half_width: Option<f64>,
    /// Radians
    #[arg(long, allow_hyphen_values = true)]
    pub lane_angle: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lane_offset: Option<f64>,
    #[arg(long)]
    pub lane_intensity: Option<f64>,
    #[arg(long)]
    pub background_intensity: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub scene_seed: Option<u64>,
}

impl SceneFlags {
    pub fn apply(&self, p: &mut SceneParams) {
        if let Some(size) = self.size {
            p.width = size;
            p.height = size;
            p.lane_offset = size as f64 / 2.0;
        }
        set(&mut p.width, self.width);
        set(&mut p.height, self.height);
        set(&mut p.lane_half_width, self.lane_half_width);
        set(&mut p.lane_angle, self.lane_angle);
        set(&mut p.lane_offset, self.lane_offset);
        set(&mut p.lane_intensity, self.lane_intensity);
        set(&mut p.background_intensity, self.background_intensity);
        set(&mut p.noise_sigma, self.noise_sigma);
        set(&mut p.seed, self.scene_seed);
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenFlags {
    #[arg(long)]
    pub n_targets: Option<usize>,
    /// Per-target fraction of the object pixels, as LO,HI
    #[arg(long, value_parser = parse_range)]
    pub object_coverage: Option<(f64, f64)>,
    /// Per-target fraction of the non-object pixels, as LO,HI
    #[arg(long, value_parser = parse_range)]
    pub nonobject_coverage: Option<(f64, f64)>,
    #[arg(long)]
    pub blob_seeds_per_target: Option<usize>,
    #[arg(long)]
    pub target_collective_coverage: Option<f64>,
    #[arg(long)]
    pub gen_seed: Option<u64>,
}

impl GenFlags {
    pub fn apply(&self, p: &mut GenParams) {
        set(&mut p.n_targets, self.n_targets);
        set(&mut p.object_coverage_range, self.object_coverage);
        set(&mut p.nonobject_coverage_range, self.nonobject_coverage);
        set(&mut p.blob_seeds_per_target, self.blob_seeds_per_target);
        set(&mut p.target_collective_coverage, self.target_collective_coverage);
        set(&mut p.seed, self.gen_seed);
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// One weight per target, comma-separated, summing to 1
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Reset alpha to uniform 1/N
    #[arg(long, conflicts_with = "alpha")]
    pub uniform_alpha: bool,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub stop_liou_min: Option<f64>,
    #[arg(long)]
    pub stop_lerrors_max: Option<u64>,
    #[arg(long)]
    pub prob_clamp_epsilon: Option<f64>,
    #[arg(long)]
    pub patch_radius: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub train_seed: Option<u64>,
}

impl TrainFlags {
    pub fn apply(&self, c: &mut TrainConfig) {
        if let Some(alpha) = &self.alpha {
            c.alpha = Some(alpha.clone());
        }
        if self.uniform_alpha {
            c.alpha = None;
        }
        set(&mut c.learning_rate, self.learning_rate);
        set(&mut c.momentum, self.momentum);
        set(&mut c.max_epochs, self.max_epochs);
        set(&mut c.eval_every, self.eval_every);
        set(&mut c.stop_liou_min, self.stop_liou_min);
        set(&mut c.stop_lerrors_max, self.stop_lerrors_max);
        set(&mut c.prob_clamp_epsilon, self.prob_clamp_epsilon);
        set(&mut c.patch_radius, self.patch_radius);
        set(&mut c.hidden_width, self.hidden_width);
        set(&mut c.seed, self.train_seed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZeroDivisionArg {
    Undefined,
    ZeroFill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    #[value(name = "LPrecision")]
    LPrecision,
    #[value(name = "LRecall")]
    LRecall,
    #[value(name = "LF1")]
    LF1,
    #[value(name = "LAccuracy")]
    LAccuracy,
    #[value(name = "LIoU")]
    LIoU,
    #[value(name = "LErrors")]
    LErrors,
}

impl From<MetricArg> for MetricName {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::LPrecision => MetricName::LPrecision,
            MetricArg::LRecall => MetricName::LRecall,
            MetricArg::LF1 => MetricName::LF1,
            MetricArg::LAccuracy => MetricName::LAccuracy,
            MetricArg::LIoU => MetricName::LIoU,
            MetricArg::LErrors => MetricName::LErrors,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LafFlags {
    /// Probabilities strictly above the threshold are Object
    #[arg(long)]
    pub binarize_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub zero_division_policy: Option<ZeroDivisionArg>,
    /// Comma-separated metric names to report
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metric_selection: Option<Vec<MetricArg>>,
}

impl LafFlags {
    pub fn apply(&self, p: &mut LafParams) {
        set(&mut p.binarize_threshold, self.binarize_threshold);
        if let Some(z) = self.zero_division_policy {
            p.zero_division_policy = match z {
                ZeroDivisionArg::Undefined => ZeroDivisionPolicy::Undefined,
                ZeroDivisionArg::ZeroFill => ZeroDivisionPolicy::ZeroFill,
            };
        }
        if let Some(sel) = &self.metric_selection {
            p.metric_selection = sel.iter().map(|&m| m.into()).collect();
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output run directory
    #[arg(long, env = "MIATT_FORGE_OUT")]
    pub out: PathBuf,
    /// Start from an existing manifest; other flags override its values
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Sets the scene, generator and training seeds
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flip this many multiply-asserted pixels in one target each
    #[arg(long)]
    pub inject_conflicts: Option<usize>,
    #[arg(long, requires = "inject_conflicts")]
    pub conflict_seed: Option<u64>,
    #[command(flatten)]
    pub scene: SceneFlags,
    #[command(flatten)]
    pub gen: GenFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub laf: LafFlags,
}

#[derive(Debug, Args)]
pub struct GenMiattsArgs {
    /// Run directory holding the manifest
    #[arg(long, env = "MIATT_FORGE_OUT")]
    pub run: PathBuf,
    /// Reference labeling [default: <run>/reference.mlab]
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output directory [default: <run>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Generator seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub inject_conflicts: Option<usize>,
    #[arg(long, requires = "inject_conflicts")]
    pub conflict_seed: Option<u64>,
    #[command(flatten)]
    pub gen: GenFlags,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Run directory whose miatt_*.mlab files form the set
    #[arg(long, env = "MIATT_FORGE_OUT", required_unless_present = "targets")]
    pub run: Option<PathBuf>,
    /// Explicit .mlab target files, used instead of --run
    pub targets: Vec<PathBuf>,
    /// Print the full report as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["prediction", "model"]))]
pub struct PredictionArgs {
    #[arg(long, env = "MIATT_FORGE_OUT")]
    pub run: PathBuf,
    /// A .mlab labeling or a probability .pgm
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    /// A model.json checkpoint applied to the instance
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Instance for --model [default: <run>/instance.pgm]
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[command(flatten)]
    pub laf: LafFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: PredictionArgs,
    /// Metrics file [default: <run>/metrics.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run directory; repeat to train on several instances
    #[arg(long = "run", env = "MIATT_FORGE_OUT", required = true, value_delimiter = ',')]
    pub runs: Vec<PathBuf>,
    /// Output directory [default: the first run]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress per-evaluation progress lines
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub laf: LafFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, env = "MIATT_FORGE_OUT", required_unless_present = "history")]
    pub run: Option<PathBuf>,
    /// History file [default: <run>/history.csv]
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Epoch to mark [default: from selected.json beside the history]
    #[arg(long)]
    pub selected_epoch: Option<usize>,
    /// SVG file [default: report.svg beside the history]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: PredictionArgs,
    /// Output directory [default: <run>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value = "miatt-forge-data")]
    pub data_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::GenMiatts(a) => gen_miatts(a),
        Command::Assess(a) => assess(a),
        Command::Eval(a) => eval(a),
        Command::Train(a) => train(a),
        Command::Report(a) => report(a),
        Command::Compare(a) => compare(a),
        Command::Serve(a) => serve(a),
    }
}

fn load_manifest_if_present(dir: &Path) -> Result<Option<RunManifest>> {
    let path = dir.join(MANIFEST_FILE);
    if path.is_file() {
        RunManifest::load(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let mut manifest = match &a.manifest {
        Some(path) => RunManifest::load(path)?,
        None => RunManifest::new(SceneParams::default(), GenParams::default()),
    };
    if let Some(seed) = a.seed {
        manifest.scene_params.seed = seed;
        manifest.gen_params.seed = seed;
        manifest.train_config.seed = seed;
    }
    a.scene.apply(&mut manifest.scene_params);
    a.gen.apply(&mut manifest.gen_params);
    a.train.apply(&mut manifest.train_config);
    a.laf.apply(&mut manifest.laf_params);
    if let Some(n_flips) = a.inject_conflicts {
        let seed = a.conflict_seed.unwrap_or(manifest.gen_params.seed);
        manifest.conflict_injection = Some(ConflictInjection { n_flips, seed });
    }
    manifest.validate()?;
    let report = pipeline::generate_run(&manifest, &a.out)?;
    print!("{}", pipeline::assessment_summary(&report, manifest.gen_params.n_targets));
    println!("wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn gen_miatts(a: GenMiattsArgs) -> Result<ExitCode> {
    let existing = load_manifest_if_present(&a.run)?;
    let mut gen = existing.as_ref().map(|m| m.gen_params.clone()).unwrap_or_default();
    set(&mut gen.seed, a.seed);
    a.gen.apply(&mut gen);
    gen.validate()?;
    let injection = a.inject_conflicts.map(|n_flips| ConflictInjection {
        n_flips,
        seed: a.conflict_seed.unwrap_or(gen.seed),
    });
    let reference_path = a.reference.clone().unwrap_or_else(|| a.run.join(pipeline::REFERENCE_FILE));
    let reference = pipeline::read_mlab(&reference_path)?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    let report = pipeline::regenerate_miatts(&reference, &gen, injection.as_ref(), &out)?;
    if let Some(mut manifest) = existing {
        manifest.gen_params = gen.clone();
        manifest.conflict_injection = injection;
        pipeline::write_file(&out.join(MANIFEST_FILE), &manifest.to_json())?;
    }
    print!("{}", pipeline::assessment_summary(&report, gen.n_targets));
    for line in pipeline::conflict_lines(&report, reference.width()) {
        println!("{line}");
    }
    Ok(ExitCode::SUCCESS)
}

fn assess(a: AssessArgs) -> Result<ExitCode> {
    let m = if a.targets.is_empty() {
        pipeline::read_miatts(a.run.as_deref().expect("clap requires --run without targets"))?
    } else {
        let targets = a.targets.iter().map(|p| pipeline::read_mlab(p)).collect::<Result<Vec<_>>>()?;
        MiattSet::new(targets).context("target files differ in size")?
    };
    let report = assess_miatts(&m)?;
    if a.json {
        print!("{}", pipeline::to_json(&report));
    } else {
        print!("{}", pipeline::assessment_summary(&report, m.len()));
        let width = m.shape().map_or(1, |(w, _)| w);
        for line in pipeline::conflict_lines(&report, width) {
            println!("{line}");
        }
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn laf_for(run: &Path, flags: &LafFlags) -> Result<LafParams> {
    let mut laf = load_manifest_if_present(run)?.map(|m| m.laf_params).unwrap_or_default();
    flags.apply(&mut laf);
    laf.validate()?;
    Ok(laf)
}

fn load_prediction(a: &PredictionArgs, laf: &LafParams) -> Result<miatt_forge::PartialLabeling> {
    let instance = a.instance.clone().unwrap_or_else(|| a.run.join(pipeline::INSTANCE_FILE));
    let src = match (&a.prediction, &a.model) {
        (Some(p), _) => PredictionSource::File(p),
        (None, Some(model)) => PredictionSource::Model { model, instance: &instance },
        (None, None) => bail!("one of --prediction or --model is required"),
    };
    pipeline::load_prediction(&src, laf)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let laf = laf_for(&a.source.run, &a.source.laf)?;
    let m = pipeline::read_miatts(&a.source.run)?;
    let pred = load_prediction(&a.source, &laf)?;
    let output = pipeline::eval_prediction(&pred, &m, &laf)?;
    let json = pipeline::to_json(&output);
    let out = a.out.unwrap_or_else(|| a.source.run.join(pipeline::METRICS_FILE));
    pipeline::write_file(&out, &json)?;
    print!("{json}");
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let first = &a.runs[0];
    let mut manifest = load_manifest_if_present(first)?
        .unwrap_or_else(|| RunManifest::new(SceneParams::default(), GenParams::default()));
    set(&mut manifest.train_config.seed, a.seed);
    a.train.apply(&mut manifest.train_config);
    a.laf.apply(&mut manifest.laf_params);
    manifest.validate()?;
    let out = a.out.clone().unwrap_or_else(|| first.clone());
    let quiet = a.quiet;
    let (_, history) = pipeline::train_runs(&a.runs, &manifest, &out, |p| {
        if let (false, Some(r)) = (quiet, p.record) {
            eprintln!(
                "epoch {}/{} loss {:.6} LIoU {} LErrors {}",
                p.epoch,
                p.max_epochs,
                r.loss,
                r.metrics.liou.map_or("undefined".into(), |v| format!("{v:.6}")),
                r.counts.errors()
            );
        }
    })?;
    let selected: SelectedSummary = pipeline::read_json(&out.join(pipeline::SELECTED_FILE))?;
    println!(
        "selected epoch {} ({} evaluations): loss {:.6} LIoU {} LErrors {} stop criteria {}",
        selected.epoch,
        history.records.len(),
        selected.loss,
        selected.metrics.liou.map_or("undefined".into(), |v| format!("{v:.6}")),
        selected.counts.errors(),
        if selected.stop_criteria_met { "met" } else { "not met" }
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let history_path = match (&a.history, &a.run) {
        (Some(h), _) => h.clone(),
        (None, Some(run)) => run.join(pipeline::HISTORY_FILE),
        (None, None) => bail!("one of --history or --run is required"),
    };
    let rows = read_history(&history_path)?;
    let dir = history_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let selected = match a.selected_epoch {
        Some(e) => Some(e),
        None => {
            let path = dir.join(pipeline::SELECTED_FILE);
            if path.is_file() {
                Some(pipeline::read_json::<SelectedSummary>(&path)?.epoch)
            } else {
                None
            }
        }
    };
    let out = a.out.unwrap_or_else(|| dir.join("report.svg"));
    pipeline::write_file(&out, &render_report(&rows, selected))?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn compare(a: CompareArgs) -> Result<ExitCode> {
    let laf = laf_for(&a.source.run, &a.source.laf)?;
    let m = pipeline::read_miatts(&a.source.run)?;
    let pred = load_prediction(&a.source, &laf)?;
    let out = a.out.unwrap_or_else(|| a.source.run.clone());
    let summary = pipeline::compare_run(&pred, &m, &out)?;
    print!("{}", pipeline::to_json(&summary));
    Ok(ExitCode::SUCCESS)
}

fn serve(a: ServeArgs) -> Result<ExitCode> {
    let addr = format!("{}:{}", a.host, a.port);
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        miatt_forge_service::serve(listener, &a.data_dir).await?;
        Ok::<(), anyhow::Error>(())
    })?;
    Ok(ExitCode::SUCCESS)
}
