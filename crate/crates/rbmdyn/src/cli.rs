//! Command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rbmdyn_core::biasing::{BiasKind, BiasTarget, HiddenBias};
use rbmdyn_core::classifier::Classifier;
use rbmdyn_core::dataset::Dataset;
use rbmdyn_core::rbm::Rbm;
use rbmdyn_core::rng::named_seed;

use crate::analysis::{read_trajectories_file, ConditionRecords, Evaluation};
use crate::config::{ChimeraK, ExperimentConfig};
use crate::error::{AppError, Result, StageExt};
use crate::formats::{self, write_atomic};
use crate::idx::{encode_images, encode_labels};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::pipeline::{self as pl, Cache, ConditionRun, Data, Models, Timings, TrajectoryWriter};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "rbmdyn", version, about = "Generative dynamics of label-biased RBM sampling on MNIST")]
pub struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set generation.steps=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Neither read nor write the model cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Directory to create.
    #[arg(long, short, value_name = "DIR")]
    pub out: PathBuf,
    /// Replace an existing results directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ModelPaths {
    /// Use this RBM file instead of training (or reusing the cached one).
    #[arg(long, value_name = "FILE")]
    pub rbm: Option<PathBuf>,
    /// Readout file; needs `--projection` too.
    #[arg(long, value_name = "FILE", requires = "projection")]
    pub readout: Option<PathBuf>,
    /// Label projection file; needs `--readout` too.
    #[arg(long, value_name = "FILE", requires = "readout")]
    pub projection: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub classifier: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the classifier training, validation and non-digit holdout sets as IDX files.
    PrepareData {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Train the RBM with CD-1.
    TrainRbm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Train the digit/non-digit classifier.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Fit the hidden-to-label readout used for label biasing.
    TrainReadout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        #[arg(long, value_name = "FILE")]
        rbm: Option<PathBuf>,
    },
    /// Generate and classify trajectories.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        models: ModelPaths,
        /// `all`, `single`, `intersection`, `double`, or one condition
        /// such as `single/3` or `double/3+6`.
        #[arg(long, default_value = "all")]
        bias: String,
    },
    /// Compute the summary metrics of a trajectory table.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
        /// A `trajectories.csv` written by `generate` or `run-experiment`.
        #[arg(long, value_name = "FILE")]
        trajectories: PathBuf,
    },
    /// Render CSV and SVG figures from a complete results directory.
    Report {
        results: PathBuf,
        /// Defaults to `<results>/report`.
        #[arg(long, short, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Every stage end to end: training, generation, analysis and report.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    crate::set_quiet(cli.quiet);
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::PrepareData { common, output } => prepare_data(&common, &output),
        Command::TrainRbm { common, output } => train_rbm(&common, &output),
        Command::TrainClassifier { common, output } => train_classifier(&common, &output),
        Command::TrainReadout { common, output, rbm } => train_readout(&common, &output, rbm.as_deref()),
        Command::Generate {
            common,
            output,
            models,
            bias,
        } => generate(&common, &output, &models, &bias),
        Command::Analyze {
            common,
            output,
            trajectories,
        } => analyze(&common, &output, &trajectories),
        Command::Report { results, out, force } => cmd_report(&results, out, force),
        Command::RunExperiment { common, output } => run_experiment(&common, &output),
    }
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(common.config.as_deref(), &common.overrides)
}

fn cache(common: &Common, cfg: &ExperimentConfig) -> Cache {
    Cache::new((!common.no_cache).then(|| cfg.output.cache_dir.clone()))
}

/// Output directory built under a temporary name and renamed into place on
/// success, so a failed command leaves nothing behind.
pub struct Staging {
    target: PathBuf,
    tmp: PathBuf,
    done: bool,
}

impl Staging {
    pub fn begin(target: &Path, force: bool) -> Result<Self> {
        if target.exists() {
            if !target.is_dir() {
                return Err(AppError::usage(format!("{} exists and is not a directory", target.display())));
            }
            let empty = fs::read_dir(target).map_err(|e| AppError::io(target, e))?.next().is_none();
            if !empty {
                if !force {
                    return Err(AppError::usage(format!(
                        "{} already exists; pass --force to replace it",
                        target.display()
                    )));
                }
                let ours = target.join(MANIFEST_FILE).is_file() || target.join(pl::CONFIG_FILE).is_file();
                if !ours {
                    return Err(AppError::usage(format!(
                        "{} does not look like a results directory; refusing to replace it",
                        target.display()
                    )));
                }
            }
        }
        let name = target
            .file_name()
            .ok_or_else(|| AppError::usage(format!("{} is not a usable directory name", target.display())))?
            .to_string_lossy();
        let tmp = target.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| AppError::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| AppError::io(&tmp, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            tmp,
            done: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    /// Records checksums, writes the manifest and moves the directory into place.
    pub fn commit(mut self, mut manifest: RunManifest) -> Result<()> {
        manifest.record_files(&self.tmp)?;
        manifest.write(&self.tmp)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| AppError::io(&self.target, e))?;
        }
        fs::rename(&self.tmp, &self.target).map_err(|e| AppError::io(&self.target, e))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn begin(output: &Output, cfg: &ExperimentConfig) -> Result<Staging> {
    let s = Staging::begin(&output.out, output.force)?;
    write_atomic(&s.path().join(pl::CONFIG_FILE), cfg.to_toml().as_bytes())?;
    Ok(s)
}

fn write_idx(dir: &Path, stem: &str, ds: &Dataset) -> Result<()> {
    let images: Vec<_> = ds.images().to_vec();
    write_atomic(&dir.join(format!("{stem}-images-idx3-ubyte")), &encode_images(&images)?)?;
    write_atomic(&dir.join(format!("{stem}-labels-idx1-ubyte")), &encode_labels(&ds.labels()?))
}

fn prepare_data(common: &Common, output: &Output) -> Result<()> {
    let cfg = config(common)?;
    let data = pl::load_data(&cfg).stage("load data")?;
    let staging = begin(output, &cfg)?;
    let (train, validation) = pl::classifier_data(&cfg, &data).stage("classifier data")?;
    let holdout = pl::non_digit_holdout(&cfg, &data).stage("non-digit holdout")?;
    let dir = staging.path().join("data");
    write_idx(&dir, "classifier-train", &train)?;
    write_idx(&dir, "classifier-validation", &validation)?;
    write_idx(&dir, "non-digit-holdout", &holdout)?;
    let mut m = RunManifest::new("prepare-data", &cfg);
    m.seeds.insert("classifier_data".into(), named_seed(cfg.seed, "classifier_data"));
    m.seeds.insert("holdout".into(), named_seed(cfg.seed, "holdout"));
    staging.commit(m)
}

fn train_rbm(common: &Common, output: &Output) -> Result<()> {
    let cfg = config(common)?;
    let data = pl::load_data(&cfg).stage("load data")?;
    let staging = begin(output, &cfg)?;
    let rbm = pl::rbm_stage(&cfg, &data, &cache(common, &cfg)).stage("train-rbm")?;
    pl::write_rbm_outputs(staging.path(), &rbm)?;
    let mut m = RunManifest::new("train-rbm", &cfg);
    m.seeds.insert("train_rbm".into(), named_seed(cfg.seed, "train_rbm"));
    m.stage_keys.insert("rbm".into(), rbm.key.clone());
    staging.commit(m)
}

fn train_classifier(common: &Common, output: &Output) -> Result<()> {
    let cfg = config(common)?;
    let data = pl::load_data(&cfg).stage("load data")?;
    let staging = begin(output, &cfg)?;
    let c = pl::classifier_stage(&cfg, &data, &cache(common, &cfg)).stage("train-classifier")?;
    pl::write_classifier_outputs(staging.path(), &c)?;
    let mut m = RunManifest::new("train-classifier", &cfg);
    m.seeds.insert("classifier_data".into(), named_seed(cfg.seed, "classifier_data"));
    m.seeds.insert("train_classifier".into(), named_seed(cfg.seed, "train_classifier"));
    m.stage_keys.insert("classifier".into(), c.key.clone());
    staging.commit(m)
}

fn train_readout(common: &Common, output: &Output, rbm_path: Option<&Path>) -> Result<()> {
    let cfg = config(common)?;
    let data = pl::load_data(&cfg).stage("load data")?;
    let staging = begin(output, &cfg)?;
    let cache = cache(common, &cfg);
    let rbm = match rbm_path {
        Some(p) => loaded(formats::load_rbm(p)?, p),
        None => pl::rbm_stage(&cfg, &data, &cache).stage("train-rbm")?,
    };
    let readout = pl::readout_stage(&rbm, &data, &cache).stage("train-readout")?;
    pl::write_readout_outputs(staging.path(), &readout)?;
    let mut m = RunManifest::new("train-readout", &cfg);
    m.stage_keys.insert("rbm".into(), rbm.key.clone());
    m.stage_keys.insert("readout".into(), readout.key.clone());
    staging.commit(m)
}

/// Wraps a model read from disk; its key is the file checksum.
fn loaded<M>(model: M, path: &Path) -> pl::Trained<M, pl::RbmMeta> {
    let key = fs::read(path).map(|b| crate::config::sha256_hex(&b)).unwrap_or_default();
    pl::Trained {
        model,
        meta: pl::RbmMeta {
            rmse: Vec::new(),
            seconds: 0.0,
        },
        key: format!("file:{key}"),
        cached: true,
    }
}

/// Which conditions `generate --bias` selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    All,
    Kind(BiasKind),
    One(BiasKind, BiasTarget),
}

impl Selection {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Self::All);
        }
        let bad = || AppError::usage(format!("--bias {s:?}: expected all, a kind, or kind/target such as double/3+6"));
        match s.split_once('/') {
            None => BiasKind::parse(s).map(Self::Kind).ok_or_else(bad),
            Some((k, t)) => {
                let kind = BiasKind::parse(k).ok_or_else(bad)?;
                let target = BiasTarget::parse(t).ok_or_else(bad)?;
                if matches!(target, BiasTarget::Digit(_)) == kind.is_chimera() {
                    return Err(bad());
                }
                Ok(Self::One(kind, target))
            }
        }
    }

    fn includes(self, b: &HiddenBias) -> bool {
        match self {
            Self::All => true,
            Self::Kind(k) => b.kind() == k,
            Self::One(k, t) => b.kind() == k && b.target() == t,
        }
    }

    fn needs_chimeras(self) -> bool {
        match self {
            Self::All => true,
            Self::Kind(k) | Self::One(k, _) => k.is_chimera(),
        }
    }
}

struct Loaded {
    rbm: pl::Trained<Rbm, pl::RbmMeta>,
    readout: pl::Trained<pl::LabelMaps, pl::ReadoutMeta>,
    classifier: pl::Trained<Classifier<f32>, pl::ClassifierMeta>,
}

fn obtain_models(cfg: &ExperimentConfig, data: &Data, cache: &Cache, paths: &ModelPaths) -> Result<Loaded> {
    let rbm = match &paths.rbm {
        Some(p) => loaded(formats::load_rbm(p)?, p),
        None => pl::rbm_stage(cfg, data, cache).stage("train-rbm")?,
    };
    let readout = match (&paths.readout, &paths.projection) {
        (Some(r), Some(p)) => {
            let maps = pl::LabelMaps::new(formats::load_readout(r)?, formats::load_projection(p)?)?;
            let l = loaded(maps, r);
            pl::Trained {
                model: l.model,
                meta: pl::ReadoutMeta { seconds: 0.0 },
                key: l.key,
                cached: true,
            }
        }
        _ => pl::readout_stage(&rbm, data, cache).stage("train-readout")?,
    };
    let classifier = match &paths.classifier {
        Some(p) => {
            let l = loaded(formats::load_classifier(p)?, p);
            pl::Trained {
                model: l.model,
                meta: pl::ClassifierMeta {
                    epochs: Vec::new(),
                    best_epoch: 0,
                    seconds: 0.0,
                },
                key: l.key,
                cached: true,
            }
        }
        None => pl::classifier_stage(cfg, data, cache).stage("train-classifier")?,
    };
    if readout.model.n_hidden() != rbm.model.n_hidden() {
        return Err(AppError::data(format!(
            "readout expects {} hidden units, the RBM has {}",
            readout.model.n_hidden(),
            rbm.model.n_hidden()
        )));
    }
    Ok(Loaded {
        rbm,
        readout,
        classifier,
    })
}

/// Result of generating a set of conditions into a directory.
struct Generated {
    records: Vec<ConditionRecords>,
    chimera_k: Option<usize>,
    seeds: Vec<(String, u64)>,
}

/// Runs the selected conditions, writing `trajectories.csv`, frame grids
/// and biasing vectors into `dir`.
fn generate_into(dir: &Path, cfg: &ExperimentConfig, m: &Loaded, selection: Selection) -> Result<Generated> {
    let models = Models {
        rbm: &m.rbm.model,
        classifier: &m.classifier.model,
    };
    let run_id = &cfg.experiment_hash()[..12];
    let mut writer = TrajectoryWriter::create(&dir.join(pl::TRAJECTORIES_FILE), run_id, cfg.output.save_visibles)?;
    let mut out = Generated {
        records: Vec::new(),
        chimera_k: None,
        seeds: Vec::new(),
    };
    let mut emit = |run: ConditionRun, out: &mut Generated| -> Result<()> {
        writer.write(&run)?;
        pl::write_condition_files(dir, &run)?;
        out.seeds.push((format!("generation/{}", run.bias.name()), pl::generation_seed(cfg.seed, &run.bias)));
        out.records.push(run.records);
        Ok(())
    };

    let singles = pl::single_biases(m.readout.model.inversion(cfg.generation.label_biasing)).stage("label biasing")?;
    let auto_k = cfg.generation.chimera_k == ChimeraK::Auto && selection.needs_chimeras();
    let wanted: Vec<HiddenBias> = singles
        .iter()
        .filter(|b| auto_k || selection.includes(b))
        .cloned()
        .collect();
    let mut single_runs = Vec::new();
    pl::run_conditions(&models, &wanted, cfg, |run| {
        single_runs.push(run);
        Ok(())
    })?;
    if selection.needs_chimeras() {
        let k = pl::resolve_chimera_k(cfg.generation.chimera_k, &single_runs, m.rbm.model.n_hidden())?;
        out.chimera_k = Some(k);
        crate::note(&format!("chimeras: k = {k}"));
        for run in single_runs.into_iter().filter(|r| selection.includes(&r.bias)) {
            emit(run, &mut out)?;
        }
        let chimeras: Vec<HiddenBias> = pl::chimera_biases(m.readout.model.inversion(cfg.generation.label_biasing), &singles, k)
            .stage("chimera biasing")?
            .into_iter()
            .filter(|b| selection.includes(b))
            .collect();
        pl::run_conditions(&models, &chimeras, cfg, |run| emit(run, &mut out))?;
    } else {
        for run in single_runs {
            emit(run, &mut out)?;
        }
    }
    writer.finish()?;
    Ok(out)
}

fn generate(common: &Common, output: &Output, paths: &ModelPaths, bias: &str) -> Result<()> {
    let selection = Selection::parse(bias)?;
    let cfg = config(common)?;
    let data = pl::load_data(&cfg).stage("load data")?;
    let staging = begin(output, &cfg)?;
    let models = obtain_models(&cfg, &data, &cache(common, &cfg), paths)?;
    let g = generate_into(staging.path(), &cfg, &models, selection).stage("generate")?;
    let mut m = RunManifest::new("generate", &cfg);
    record_models(&mut m, &cfg, &models);
    m.seeds.extend(g.seeds);
    staging.commit(m)
}

fn record_models(m: &mut RunManifest, cfg: &ExperimentConfig, models: &Loaded) {
    for name in ["train_rbm", "classifier_data", "train_classifier"] {
        m.seeds.insert(name.into(), named_seed(cfg.seed, name));
    }
    m.stage_keys.insert("rbm".into(), models.rbm.key.clone());
    m.stage_keys.insert("readout".into(), models.readout.key.clone());
    m.stage_keys.insert("classifier".into(), models.classifier.key.clone());
}

fn analyze(common: &Common, output: &Output, trajectories: &Path) -> Result<()> {
    let cfg = config(common)?;
    let records = read_trajectories_file(trajectories)?;
    if records.is_empty() {
        return Err(AppError::data(format!("{} holds no trajectories", trajectories.display())));
    }
    let staging = begin(output, &cfg)?;
    let summary = pl::summarize(&cfg, &records, None, None).stage("analyze")?;
    pl::write_summary(staging.path(), &summary)?;
    staging.commit(RunManifest::new("analyze", &cfg))
}

fn cmd_report(results: &Path, out: Option<PathBuf>, force: bool) -> Result<()> {
    let missing = report::missing_stages(results);
    if !missing.is_empty() {
        return Err(AppError::data(format!(
            "{} is incomplete; missing stages: {}",
            results.display(),
            missing.join(", ")
        )));
    }
    let out = out.unwrap_or_else(|| results.join("report"));
    if out.exists() && fs::read_dir(&out).map_err(|e| AppError::io(&out, e))?.next().is_some() {
        if !force {
            return Err(AppError::usage(format!("{} already exists; pass --force to replace it", out.display())));
        }
        fs::remove_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
    }
    let files = report::write_report(results, &out)?;
    crate::note(&format!("report: {} files in {}", files.len(), out.display()));
    Ok(())
}

fn run_experiment(common: &Common, output: &Output) -> Result<()> {
    let start = Instant::now();
    let cfg = config(common)?;
    let data = pl::load_data(&cfg).stage("load data")?;
    let staging = begin(output, &cfg)?;
    let dir = staging.path();
    let cache = cache(common, &cfg);
    let mut timings = Timings::default();

    let models = obtain_models(&cfg, &data, &cache, &ModelPaths {
        rbm: None,
        readout: None,
        projection: None,
        classifier: None,
    })?;
    pl::write_rbm_outputs(dir, &models.rbm)?;
    pl::write_classifier_outputs(dir, &models.classifier)?;
    pl::write_readout_outputs(dir, &models.readout)?;
    timings.rbm_training_seconds = Some(models.rbm.meta.seconds);
    timings.rbm_cached = Some(models.rbm.cached);
    timings.classifier_training_seconds = Some(models.classifier.meta.seconds);
    timings.classifier_cached = Some(models.classifier.cached);
    timings.readout_seconds = Some(models.readout.meta.seconds);

    crate::note("evaluate: classifier and readout on the test split");
    let evaluation = evaluate(&cfg, &data, &models).stage("evaluate")?;

    let gen_start = Instant::now();
    let g = generate_into(dir, &cfg, &models, Selection::All).stage("generate")?;
    timings.generation_seconds = Some(gen_start.elapsed().as_secs_f64());

    let summary = pl::summarize(&cfg, &g.records, g.chimera_k, Some(evaluation)).stage("analyze")?;
    pl::write_summary(dir, &summary)?;
    report::write_report(dir, &dir.join("report")).stage("report")?;

    let mut m = RunManifest::new("run-experiment", &cfg);
    record_models(&mut m, &cfg, &models);
    m.seeds.insert("holdout".into(), named_seed(cfg.seed, "holdout"));
    m.seeds.extend(g.seeds);
    timings.total_seconds = start.elapsed().as_secs_f64();
    timings.write(dir)?;
    staging.commit(m)?;
    crate::note(&format!("done in {:.0} s: {}", timings.total_seconds, output.out.display()));
    Ok(())
}

fn evaluate(cfg: &ExperimentConfig, data: &Data, m: &Loaded) -> Result<Evaluation> {
    let holdout = pl::non_digit_holdout(cfg, data)?;
    let singles = pl::single_biases(m.readout.model.inversion(cfg.generation.label_biasing))?;
    Ok(Evaluation {
        rbm_final_rmse: m.rbm.meta.rmse.last().copied().unwrap_or(f64::NAN),
        classifier_best_epoch: m.classifier.meta.best_epoch,
        classifier_validation_accuracy: m.classifier.meta.best_validation_accuracy(),
        classifier_test_accuracy: pl::classifier_accuracy(&m.classifier.model, &data.test)?,
        non_digit_holdout_accuracy: pl::classifier_accuracy(&m.classifier.model, &holdout)?,
        readout_test_accuracy: pl::readout_accuracy(&m.rbm.model, &m.readout.model.readout, &data.test)?,
        biasing_skewness: singles.iter().map(pl::bias_skewness).collect(),
    })
}
