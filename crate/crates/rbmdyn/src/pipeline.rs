//! Experiment stages: data, cached model training, evaluation, trajectory
//! generation and the files each stage leaves behind.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use rbmdyn_core::biasing::{
    self, chimera_double, chimera_intersection, digit_pairs, hidden_representation, HiddenBias, LabelInversion,
    LabelProjection, LinearReadout,
};
use rbmdyn_core::classifier::{accuracy, classify_rows, train_classifier_with, Classifier};
use rbmdyn_core::dataset::{build_classifier_dataset_scaled, build_non_digit_holdout, Dataset, Image};
use rbmdyn_core::generation::{run_batch, stack_visible, GenerationConfig, Trajectory};
use rbmdyn_core::rbm::{self, Rbm};
use rbmdyn_core::rng::{self, named_seed};
use rbmdyn_core::stats;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{self, AnalysisOptions, ConditionRecords, Evaluation, SampleRecord, Summary, TRAJECTORY_COLUMNS};
use crate::config::{hash_json, sha256_hex, ChimeraK, ExperimentConfig, LabelBiasing};
use crate::error::{AppError, Result, StageExt};
use crate::formats::{self, write_atomic, FORMAT_VERSION};
use crate::idx::{load_mnist, MnistPaths};
use crate::manifest::TOOL_VERSION;
use crate::note;

pub const RBM_FILE: &str = "models/rbm.bin";
pub const READOUT_FILE: &str = "models/readout.bin";
pub const PROJECTION_FILE: &str = "models/projection.bin";
pub const CLASSIFIER_FILE: &str = "models/classifier.bin";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Generation steps shown as rows of the frame grids.
pub const FRAME_STEPS: [usize; 8] = [1, 2, 3, 5, 10, 20, 50, 100];
const SIDE: usize = 28;

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
    /// Identifies the IDX bytes and the limits applied to them.
    pub checksum: String,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    let dir = cfg.mnist_dir();
    if !dir.is_dir() {
        return Err(AppError::data(format!(
            "MNIST directory {} not found (set data.mnist_dir or RBMDYN_DATA_DIR)",
            dir.display()
        )));
    }
    let paths = MnistPaths::in_dir(&dir)?;
    let mut sums = Vec::new();
    for p in paths.all() {
        sums.push(sha256_hex(&formats::read_file(p)?));
    }
    let mnist = load_mnist(&paths)?;
    let limit = |ds: Dataset, n: Option<usize>| -> Result<Dataset> {
        match n {
            Some(n) if n < ds.len() => {
                let split = ds.split();
                let mut images = ds.into_images();
                images.truncate(n);
                Ok(Dataset::new(images, split)?)
            }
            _ => Ok(ds),
        }
    };
    Ok(Data {
        train: limit(mnist.train, cfg.data.train_limit)?,
        test: limit(mnist.test, cfg.data.test_limit)?,
        checksum: hash_json(&json!({
            "files": sums,
            "train_limit": cfg.data.train_limit,
            "test_limit": cfg.data.test_limit,
        })),
    })
}

/// Trained models stored under a key derived from everything that shaped them.
pub struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    fn paths(&self, stage: &str, key: &str) -> Option<(PathBuf, PathBuf)> {
        let dir = self.dir.as_ref()?;
        let stem = format!("{stage}-{}", &key[..16]);
        Some((dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json"))))
    }

    fn load<T: for<'de> Deserialize<'de>>(&self, stage: &str, key: &str) -> Option<(Vec<u8>, T)> {
        let (bin, meta) = self.paths(stage, key)?;
        let bytes = fs::read(bin).ok()?;
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(meta).ok()?).ok()?;
        if meta.get("key")?.as_str()? != key {
            return None;
        }
        Some((bytes, serde_json::from_value(meta.get("meta")?.clone()).ok()?))
    }

    fn store<T: Serialize>(&self, stage: &str, key: &str, bytes: &[u8], meta: &T) -> Result<()> {
        let Some((bin, meta_path)) = self.paths(stage, key) else {
            return Ok(());
        };
        let dir = self.dir.as_ref().expect("paths imply a directory");
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        write_atomic(&bin, bytes)?;
        let text = serde_json::to_vec_pretty(&json!({ "key": key, "meta": meta })).expect("serializable");
        write_atomic(&meta_path, &text)
    }
}

/// A model, what its training reported, and where it came from.
pub struct Trained<M, T> {
    pub model: M,
    pub meta: T,
    pub key: String,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmMeta {
    pub rmse: Vec<f64>,
    /// Wall time of the original training run.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMeta {
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub seconds: f64,
}

impl ClassifierMeta {
    pub fn best_validation_accuracy(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(f64::NAN, |e| e.validation_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutMeta {
    pub seconds: f64,
}

pub fn rbm_key(cfg: &ExperimentConfig, data: &Data) -> String {
    hash_json(&json!({
        "stage": "rbm",
        "format": FORMAT_VERSION,
        "data": data.checksum,
        "config": cfg.rbm,
        "seed": named_seed(cfg.seed, "train_rbm"),
    }))
}

pub fn rbm_stage(cfg: &ExperimentConfig, data: &Data, cache: &Cache) -> Result<Trained<Rbm, RbmMeta>> {
    let key = rbm_key(cfg, data);
    if let Some((bytes, meta)) = cache.load::<RbmMeta>("rbm", &key) {
        if let Ok(model) = formats::decode_rbm(&bytes) {
            note(&format!("rbm: reusing cached model {}", &key[..12]));
            return Ok(Trained { model, meta, key, cached: true });
        }
    }
    let tc = cfg.rbm_train_config();
    note(&format!(
        "rbm: training {}x{} for {} epochs on {} images",
        tc.n_visible,
        tc.n_hidden,
        tc.epochs,
        data.train.len()
    ));
    let start = Instant::now();
    let mut rng = rng::stream(named_seed(cfg.seed, "train_rbm"));
    let matrix = data.train.to_matrix();
    let outcome = rbm::train_with(matrix.view(), &tc, &mut rng, |epoch, rmse| {
        note(&format!("rbm: epoch {epoch}/{} rmse {rmse:.5}", tc.epochs));
    })?;
    let meta = RbmMeta {
        rmse: outcome.rmse,
        seconds: start.elapsed().as_secs_f64(),
    };
    cache.store("rbm", &key, &formats::encode_rbm(&outcome.rbm), &meta)?;
    Ok(Trained {
        model: outcome.rbm,
        meta,
        key,
        cached: false,
    })
}

/// Training and validation sets for the classifier: digits plus scrambled
/// and masked non-digit copies.
pub fn classifier_data(cfg: &ExperimentConfig, data: &Data) -> Result<(Dataset, Dataset)> {
    let mut rng = rng::stream(named_seed(cfg.seed, "classifier_data"));
    Ok(build_classifier_dataset_scaled(&data.train, &mut rng)?)
}

pub fn non_digit_holdout(cfg: &ExperimentConfig, data: &Data) -> Result<Dataset> {
    let mut rng = rng::stream(named_seed(cfg.seed, "holdout"));
    Ok(build_non_digit_holdout(&data.test, &mut rng)?)
}

pub fn classifier_stage(
    cfg: &ExperimentConfig,
    data: &Data,
    cache: &Cache,
) -> Result<Trained<Classifier<f32>, ClassifierMeta>> {
    let key = hash_json(&json!({
        "stage": "classifier",
        "format": FORMAT_VERSION,
        "data": data.checksum,
        "config": cfg.classifier,
        "seed": named_seed(cfg.seed, "train_classifier"),
        "data_seed": named_seed(cfg.seed, "classifier_data"),
    }));
    if let Some((bytes, meta)) = cache.load::<ClassifierMeta>("classifier", &key) {
        if let Ok(model) = formats::decode_classifier(&bytes) {
            note(&format!("classifier: reusing cached model {}", &key[..12]));
            return Ok(Trained { model, meta, key, cached: true });
        }
    }
    let (train, validation) = classifier_data(cfg, data)?;
    let cc = cfg.classifier_config();
    note(&format!(
        "classifier: training for {} epochs on {} images ({} validation)",
        cc.epochs,
        train.len(),
        validation.len()
    ));
    let start = Instant::now();
    let mut rng = rng::stream(named_seed(cfg.seed, "train_classifier"));
    let (model, log) = train_classifier_with(&train, &validation, &cc, &mut rng, |e| {
        note(&format!(
            "classifier: epoch {}/{} loss {:.4} validation {:.4}",
            e.epoch, cc.epochs, e.train_loss, e.validation_accuracy
        ));
    })?;
    let meta = ClassifierMeta {
        epochs: log
            .epochs
            .iter()
            .map(|e| EpochRow {
                epoch: e.epoch,
                train_loss: e.train_loss,
                validation_accuracy: e.validation_accuracy,
            })
            .collect(),
        best_epoch: log.best_epoch,
        seconds: start.elapsed().as_secs_f64(),
    };
    cache.store("classifier", &key, &formats::encode_classifier(&model), &meta)?;
    Ok(Trained {
        model,
        meta,
        key,
        cached: false,
    })
}

/// The readout and the label projection, both fitted on the same hidden
/// representations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMaps {
    pub readout: LinearReadout,
    pub projection: LabelProjection,
}

impl LabelMaps {
    pub fn new(readout: LinearReadout, projection: LabelProjection) -> Result<Self> {
        if readout.n_hidden() != projection.n_hidden() {
            return Err(AppError::data(format!(
                "readout has {} hidden units, the label projection {}",
                readout.n_hidden(),
                projection.n_hidden()
            )));
        }
        Ok(Self { readout, projection })
    }

    pub fn n_hidden(&self) -> usize {
        self.readout.n_hidden()
    }

    pub fn inversion(&self, how: LabelBiasing) -> LabelInversion<'_> {
        match how {
            LabelBiasing::Projection => LabelInversion::Projection(&self.projection),
            LabelBiasing::MinimumNorm => LabelInversion::MinimumNorm(&self.readout),
        }
    }
}

pub fn readout_stage(
    rbm: &Trained<Rbm, RbmMeta>,
    data: &Data,
    cache: &Cache,
) -> Result<Trained<LabelMaps, ReadoutMeta>> {
    let key = hash_json(&json!({
        "stage": "readout",
        "format": FORMAT_VERSION,
        "data": data.checksum,
        "rbm": rbm.key,
    }));
    let cached = cache.load::<ReadoutMeta>("readout", &key).zip(cache.load::<ReadoutMeta>("projection", &key));
    if let Some(((r, meta), (p, _))) = cached {
        if let (Ok(readout), Ok(projection)) = (formats::decode_readout(&r), formats::decode_projection(&p)) {
            if let Ok(model) = LabelMaps::new(readout, projection) {
                note(&format!("readout: reusing cached maps {}", &key[..12]));
                return Ok(Trained { model, meta, key, cached: true });
            }
        }
    }
    note("readout: fitting the hidden-to-label and label-to-hidden maps");
    let start = Instant::now();
    let labels = data.train.labels()?;
    let features = hidden_representation(&rbm.model, &data.train)?;
    let readout = biasing::fit_readout(features.view(), &labels, biasing::READOUT_RIDGE)?;
    let projection = biasing::fit_label_projection(features.view(), &labels)?;
    let model = LabelMaps::new(readout, projection)?;
    let meta = ReadoutMeta {
        seconds: start.elapsed().as_secs_f64(),
    };
    cache.store("readout", &key, &formats::encode_readout(&model.readout), &meta)?;
    cache.store("projection", &key, &formats::encode_projection(&model.projection), &meta)?;
    Ok(Trained {
        model,
        meta,
        key,
        cached: false,
    })
}

pub fn readout_accuracy(rbm: &Rbm, readout: &LinearReadout, data: &Dataset) -> Result<f64> {
    let h = hidden_representation(rbm, data)?;
    let predicted = readout.predict(h.view())?;
    let labels = data.labels()?;
    let correct = predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len().max(1) as f64)
}

pub fn classifier_accuracy(c: &Classifier<f32>, data: &Dataset) -> Result<f64> {
    let refs: Vec<&Image> = data.images().iter().collect();
    Ok(accuracy(c, &refs)?)
}

/// Sample skewness of a biasing vector's entries.
pub fn bias_skewness(bias: &HiddenBias) -> f64 {
    let v: Vec<f64> = bias.values().iter().map(|&x| f64::from(x)).collect();
    stats::skewness(&v).unwrap_or(f64::NAN)
}

/// Models needed to generate and classify trajectories.
pub struct Models<'a> {
    pub rbm: &'a Rbm,
    pub classifier: &'a Classifier<f32>,
}

/// One biasing condition after generation and classification.
pub struct ConditionRun {
    pub bias: HiddenBias,
    pub records: ConditionRecords,
    /// Grid of visible states: rows are [`FRAME_STEPS`], columns trajectories.
    pub frames: Option<(usize, usize, Vec<f32>)>,
    /// Visible states, trajectory-major, when they are to be saved.
    pub visibles: Option<Array2<f32>>,
}

pub fn generation_seed(master: u64, bias: &HiddenBias) -> u64 {
    named_seed(master, &format!("generation/{}", bias.name()))
}

pub fn run_condition(
    models: &Models<'_>,
    bias: &HiddenBias,
    gen: &GenerationConfig,
    master_seed: u64,
    frame_samples: usize,
    keep_visibles: bool,
) -> Result<ConditionRun> {
    let trajectories = run_batch(models.rbm, bias, gen, generation_seed(master_seed, bias))?;
    let stacked = stack_visible(&trajectories);
    let verdicts = classify_rows(models.classifier, stacked.view(), SIDE)?;
    let samples = trajectories
        .iter()
        .zip(verdicts.chunks(gen.steps))
        .map(|(t, v)| SampleRecord {
            states: v.iter().map(|x| x.class).collect(),
            entropy: v.iter().map(|x| x.entropy).collect(),
            active: t.active_fraction_curve().unwrap_or_default(),
        })
        .collect();
    Ok(ConditionRun {
        bias: bias.clone(),
        records: ConditionRecords {
            kind: bias.kind(),
            target: bias.target(),
            samples,
        },
        frames: (frame_samples > 0).then(|| frame_grid(&trajectories, frame_samples)),
        visibles: keep_visibles.then_some(stacked),
    })
}

/// Tiles the first `n` trajectories (columns) at [`FRAME_STEPS`] (rows),
/// separated by mid-grey gaps.
pub fn frame_grid(trajectories: &[Trajectory], n: usize) -> (usize, usize, Vec<f32>) {
    const GAP: usize = 2;
    let cols = n.min(trajectories.len());
    let steps = trajectories.first().map_or(0, |t| t.steps());
    let rows: Vec<usize> = FRAME_STEPS.iter().copied().filter(|&s| s <= steps).collect();
    let w = (cols * (SIDE + GAP)).saturating_sub(GAP);
    let h = (rows.len() * (SIDE + GAP)).saturating_sub(GAP);
    let mut px = vec![0.5; w * h];
    for (c, t) in trajectories.iter().take(cols).enumerate() {
        for (r, &step) in rows.iter().enumerate() {
            let v = t.visible_at(step);
            for y in 0..SIDE {
                for x in 0..SIDE {
                    px[(r * (SIDE + GAP) + y) * w + c * (SIDE + GAP) + x] = v[y * SIDE + x];
                }
            }
        }
    }
    (w, h, px)
}

/// Number of hidden units the chimera binarization keeps; `auto` is the
/// floor of the mean step-1 active count of the single-digit runs, at least 1.
pub fn resolve_chimera_k(k: ChimeraK, singles: &[ConditionRun], n_hidden: usize) -> Result<usize> {
    match k {
        ChimeraK::Fixed(k) => Ok(k),
        ChimeraK::Auto => {
            let counts: Vec<f64> = singles
                .iter()
                .flat_map(|c| c.records.samples.iter())
                .map(|s| s.active.first().map(|a| (a * n_hidden as f64 / 100.0).round()))
                .collect::<Option<Vec<_>>>()
                .filter(|c| !c.is_empty())
                .ok_or_else(|| AppError::usage("chimera_k = \"auto\" needs trajectories of at least two steps"))?;
            Ok((stats::mean(&counts)?.floor() as usize).max(1))
        }
    }
}

pub fn single_biases(inv: LabelInversion<'_>) -> Result<Vec<HiddenBias>> {
    Ok(biasing::all_single_digit_biases(inv)?)
}

/// The 45 intersection chimeras followed by the 45 double-label chimeras.
pub fn chimera_biases(inv: LabelInversion<'_>, singles: &[HiddenBias], k: usize) -> Result<Vec<HiddenBias>> {
    let mut out = Vec::new();
    for (a, b) in digit_pairs() {
        out.push(chimera_intersection(&singles[usize::from(a)], &singles[usize::from(b)], k)?);
    }
    for (a, b) in digit_pairs() {
        out.push(chimera_double(inv, a, b, k)?);
    }
    Ok(out)
}

/// Appends condition rows to `trajectories.csv` in condition order.
pub struct TrajectoryWriter {
    out: BufWriter<fs::File>,
    path: PathBuf,
    run_id: String,
    visibles: bool,
}

impl TrajectoryWriter {
    pub fn create(path: &Path, run_id: &str, visibles: bool) -> Result<Self> {
        let f = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
            run_id: run_id.to_string(),
            visibles,
        };
        let mut header = TRAJECTORY_COLUMNS.join(",");
        if visibles {
            for i in 0..SIDE * SIDE {
                header.push_str(&format!(",v{i}"));
            }
        }
        writeln!(w.out, "{header}").map_err(|e| AppError::io(path, e))?;
        Ok(w)
    }

    pub fn write(&mut self, run: &ConditionRun) -> Result<()> {
        self.write_rows(run).map_err(|e| AppError::io(&self.path, e))
    }

    fn write_rows(&mut self, run: &ConditionRun) -> std::io::Result<()> {
        let r = &run.records;
        let (kind, spec) = (r.kind.as_str(), r.target.label());
        for (i, s) in r.samples.iter().enumerate() {
            for step in 0..s.states.len() {
                write!(
                    self.out,
                    "{},{kind},{spec},{i},{},{},{}",
                    self.run_id,
                    step + 1,
                    s.states[step],
                    s.entropy[step]
                )?;
                match s.active.get(step) {
                    Some(a) => write!(self.out, ",{a}")?,
                    None => write!(self.out, ",")?,
                }
                if let (true, Some(v)) = (self.visibles, &run.visibles) {
                    for x in v.row(i * s.states.len() + step) {
                        write!(self.out, ",{x}")?;
                    }
                }
                writeln!(self.out)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| AppError::io(&self.path, e))
    }
}

/// Generates and classifies every bias, in parallel chunks, handing each
/// finished condition to `sink` in input order.
pub fn run_conditions(
    models: &Models<'_>,
    biases: &[HiddenBias],
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(ConditionRun) -> Result<()>,
) -> Result<()> {
    let gen = cfg.generation_config();
    let chunk = rayon::current_num_threads().max(1);
    for (n, group) in biases.chunks(chunk).enumerate() {
        let runs: Vec<Result<ConditionRun>> = group
            .par_iter()
            .map(|b| {
                run_condition(
                    models,
                    b,
                    &gen,
                    cfg.seed,
                    cfg.output.frame_samples,
                    cfg.output.save_visibles,
                )
                .stage(&format!("generate {}", b.name()))
            })
            .collect();
        for run in runs {
            sink(run?)?;
        }
        note(&format!("generate: {}/{} conditions", (n * chunk + group.len()).min(biases.len()), biases.len()));
    }
    Ok(())
}

/// Writes a condition's frame grid and biasing vector.
pub fn write_condition_files(dir: &Path, run: &ConditionRun) -> Result<()> {
    let stem = format!("{}_{}", run.bias.kind().as_str(), run.bias.target().label());
    write_atomic(&dir.join("biases").join(format!("{stem}.csv")), &formats::bias_csv(&run.bias))?;
    if let Some((w, h, px)) = &run.frames {
        write_atomic(&dir.join("frames").join(format!("{stem}.pgm")), &formats::pgm(*w, *h, px))?;
    }
    Ok(())
}

pub fn summarize(
    cfg: &ExperimentConfig,
    conditions: &[ConditionRecords],
    chimera_k: Option<usize>,
    evaluation: Option<Evaluation>,
) -> Result<Summary> {
    let opts = AnalysisOptions {
        transitions: cfg.analysis.transitions,
        correlation: cfg.analysis.correlation,
    };
    let (stats, groups, single_digit, tests) = analysis::analyze(conditions, opts)?;
    Ok(Summary {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: cfg.experiment_hash(),
        seed: cfg.seed,
        chimera_k,
        transition_counting: opts.transitions,
        correlation: opts.correlation,
        evaluation,
        groups,
        single_digit,
        tests,
        conditions: stats,
    })
}

/// `summary.json` plus the per-condition table.
pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(summary).expect("summary serializes");
    text.push(b'\n');
    write_atomic(&dir.join(SUMMARY_FILE), &text)?;
    let mut csv = String::from(
        "condition,kind,target,n_samples,visited_states_mean,visited_states_sem,transitions_mean,transitions_sem,non_digit_time_mean,non_digit_time_sem,accuracy_first,accuracy_last\n",
    );
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for c in &summary.conditions {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.name,
            c.kind,
            c.target,
            c.n_samples,
            c.visited_states.mean,
            opt(c.visited_states.sem),
            c.transitions.mean,
            opt(c.transitions.sem),
            c.non_digit_time.mean,
            opt(c.non_digit_time.sem),
            c.accuracy[0],
            c.accuracy[c.accuracy.len() - 1],
        ));
    }
    write_atomic(&dir.join("conditions.csv"), csv.as_bytes())
}

pub fn write_rbm_outputs(dir: &Path, rbm: &Trained<Rbm, RbmMeta>) -> Result<()> {
    write_atomic(&dir.join(RBM_FILE), &formats::encode_rbm(&rbm.model))?;
    let series = vec![rbm.meta.rmse.clone()];
    write_atomic(
        &dir.join("logs/rbm_training.csv"),
        &formats::curves_csv(&["rmse".to_string()], &series),
    )
}

pub fn write_classifier_outputs(dir: &Path, c: &Trained<Classifier<f32>, ClassifierMeta>) -> Result<()> {
    write_atomic(&dir.join(CLASSIFIER_FILE), &formats::encode_classifier(&c.model))?;
    let mut csv = String::from("epoch,train_loss,validation_accuracy\n");
    for e in &c.meta.epochs {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.validation_accuracy));
    }
    write_atomic(&dir.join("logs/classifier_training.csv"), csv.as_bytes())
}

pub fn write_readout_outputs(dir: &Path, r: &Trained<LabelMaps, ReadoutMeta>) -> Result<()> {
    write_atomic(&dir.join(READOUT_FILE), &formats::encode_readout(&r.model.readout))?;
    write_atomic(&dir.join(PROJECTION_FILE), &formats::encode_projection(&r.model.projection))
}

/// Wall-clock record kept apart from the deterministic summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub rbm_training_seconds: Option<f64>,
    pub rbm_cached: Option<bool>,
    pub classifier_training_seconds: Option<f64>,
    pub classifier_cached: Option<bool>,
    pub readout_seconds: Option<f64>,
    pub generation_seconds: Option<f64>,
    pub total_seconds: f64,
}

impl Timings {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(self).expect("timings serialize");
        text.push(b'\n');
        write_atomic(&dir.join(TIMINGS_FILE), &text)
    }
}
