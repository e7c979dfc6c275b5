//! Experiment configuration: a TOML file with sections, overridable from
//! the command line with `--set section.key=value`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rbmdyn_core::biasing::DEFAULT_CHIMERA_K;
use rbmdyn_core::classifier::{Architecture, ClassifierConfig};
use rbmdyn_core::generation::GenerationConfig;
use rbmdyn_core::metrics::TransitionPolicy;
use rbmdyn_core::rbm::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

/// Writes an `f32` as the shortest decimal that reads back to it.
fn short_f32<S: serde::Serializer>(x: &f32, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(x.to_string().parse().unwrap_or(f64::from(*x)))
}

/// Environment variable naming the default MNIST directory.
pub const DATA_DIR_ENV: &str = "RBMDYN_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSection,
    pub rbm: RbmSection,
    pub classifier: ClassifierSection,
    pub generation: GenerationSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            data: DataSection::default(),
            rbm: RbmSection::default(),
            classifier: ClassifierSection::default(),
            generation: GenerationSection::default(),
            analysis: AnalysisSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding the four MNIST IDX files. Falls back to
    /// `$RBMDYN_DATA_DIR`, then `data/mnist`.
    pub mnist_dir: Option<PathBuf>,
    /// Use only the first `n` training images (smoke runs).
    pub train_limit: Option<usize>,
    /// Use only the first `n` test images (smoke runs).
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbmSection {
    pub n_hidden: usize,
    #[serde(serialize_with = "short_f32")]
    pub learning_rate: f32,
    #[serde(serialize_with = "short_f32")]
    pub initial_momentum: f32,
    #[serde(serialize_with = "short_f32")]
    pub final_momentum: f32,
    pub momentum_switch_epoch: usize,
    #[serde(serialize_with = "short_f32")]
    pub weight_decay: f32,
    pub decay_biases: bool,
    pub scale_decay: bool,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(serialize_with = "short_f32")]
    pub init_std: f32,
}

impl Default for RbmSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            n_hidden: t.n_hidden,
            learning_rate: t.learning_rate,
            initial_momentum: t.initial_momentum,
            final_momentum: t.final_momentum,
            momentum_switch_epoch: t.momentum_switch_epoch,
            weight_decay: t.weight_decay,
            decay_biases: t.decay_biases,
            scale_decay: t.scale_decay,
            epochs: t.epochs,
            batch_size: t.batch_size,
            init_std: t.init_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitecturePreset {
    Compact,
    Vgg,
}

impl ArchitecturePreset {
    pub fn architecture(self) -> Architecture {
        match self {
            Self::Compact => Architecture::compact(),
            Self::Vgg => Architecture::vgg(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub architecture: ArchitecturePreset,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(serialize_with = "short_f32")]
    pub learning_rate: f32,
    #[serde(serialize_with = "short_f32")]
    pub momentum: f32,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        Self {
            architecture: ArchitecturePreset::Compact,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
        }
    }
}

/// Chimera top-k size: a fixed count, or `"auto"` for the rounded-down mean
/// active-hidden count at step 1 over the single-digit runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KValue", into = "KValue")]
pub enum ChimeraK {
    Fixed(usize),
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KValue {
    Count(usize),
    Word(String),
}

impl TryFrom<KValue> for ChimeraK {
    type Error = String;

    fn try_from(v: KValue) -> std::result::Result<Self, String> {
        match v {
            KValue::Count(0) => Err("chimera_k must be positive".into()),
            KValue::Count(k) => Ok(Self::Fixed(k)),
            KValue::Word(w) if w == "auto" => Ok(Self::Auto),
            KValue::Word(w) => Err(format!("chimera_k must be a count or \"auto\", got {w:?}")),
        }
    }
}

impl From<ChimeraK> for KValue {
    fn from(k: ChimeraK) -> Self {
        match k {
            ChimeraK::Fixed(k) => Self::Count(k),
            ChimeraK::Auto => Self::Word("auto".into()),
        }
    }
}

impl fmt::Display for ChimeraK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(k) => write!(f, "{k}"),
            Self::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub n_samples: usize,
    pub steps: usize,
    #[serde(serialize_with = "short_f32")]
    pub temperature: f32,
    pub chimera_k: ChimeraK,
    pub label_biasing: LabelBiasing,
}

/// How digit labels are turned into hidden biasing vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelBiasing {
    /// Least-squares label-to-hidden map (class-mean hidden states).
    #[default]
    Projection,
    /// Minimum-norm hidden vector reproducing the label through the readout.
    MinimumNorm,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            n_samples: g.n_samples,
            steps: g.steps,
            temperature: g.temperature,
            chimera_k: ChimeraK::Fixed(DEFAULT_CHIMERA_K),
            label_biasing: LabelBiasing::Projection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionCounting {
    /// Count every change except changes into the non-digit state.
    #[default]
    ExcludeIntoNonDigit,
    /// Count only digit-to-digit changes.
    DigitToDigit,
}

impl From<TransitionCounting> for TransitionPolicy {
    fn from(t: TransitionCounting) -> Self {
        match t {
            TransitionCounting::ExcludeIntoNonDigit => Self::ExcludeIntoNonDigit,
            TransitionCounting::DigitToDigit => Self::DigitToDigit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub transitions: TransitionCounting,
    pub correlation: Correlation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Stage cache for trained models, keyed by configuration hash.
    pub cache_dir: PathBuf,
    /// Include the 784 visible values of every step in `trajectories.csv`.
    pub save_visibles: bool,
    /// Trajectories per condition shown in the frame grids.
    pub frame_samples: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            cache_dir: PathBuf::from(".rbmdyn-cache"),
            save_visibles: false,
            frame_samples: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| AppError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| AppError::usage(format!("{}: {e}", path.display())))
    }

    /// Loads `path` (or the defaults), then applies `key=value` overrides.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        for o in overrides {
            cfg = cfg.with_override(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies one `section.key=value` override. The value is read as a TOML
    /// literal, falling back to a bare string. Cross-field checks are left to
    /// [`Self::validate`].
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| AppError::usage(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));

        let mut root = toml::Value::try_from(self).expect("config serializes");
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .as_table_mut()
                .and_then(|t| t.get_mut(*part))
                .filter(|v| v.is_table())
                .ok_or_else(|| AppError::usage(format!("unknown config section in {key:?}")))?;
        }
        let table = node.as_table_mut().expect("sections are tables");
        table.insert(parts[parts.len() - 1].to_string(), value);
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| AppError::usage(format!("override {key}: {}", e.message())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(AppError::usage(format!("config: {msg}")));
        self.rbm_train_config().validate().map_err(|e| AppError::usage(format!("config: {e}")))?;
        if self.classifier.epochs > 0 && (self.classifier.batch_size == 0 || !(self.classifier.learning_rate > 0.0)) {
            return bad("classifier batch_size and learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.classifier.momentum) {
            return bad("classifier momentum must be in [0, 1)");
        }
        if self.generation.n_samples == 0 || self.generation.steps == 0 {
            return bad("generation n_samples and steps must be positive");
        }
        if !(self.generation.temperature > 0.0) || !self.generation.temperature.is_finite() {
            return bad("generation temperature must be positive");
        }
        if let ChimeraK::Fixed(k) = self.generation.chimera_k {
            if k > self.rbm.n_hidden {
                return bad("chimera_k exceeds the number of hidden units");
            }
        }
        if matches!(self.data.train_limit, Some(n) if n < 10) || self.data.test_limit == Some(0) {
            return bad("data limits must keep at least 10 training and 1 test image");
        }
        Ok(())
    }

    pub fn mnist_dir(&self) -> PathBuf {
        self.data
            .mnist_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
    }

    pub fn rbm_train_config(&self) -> TrainConfig {
        let r = &self.rbm;
        TrainConfig {
            n_visible: 784,
            n_hidden: r.n_hidden,
            learning_rate: r.learning_rate,
            initial_momentum: r.initial_momentum,
            final_momentum: r.final_momentum,
            momentum_switch_epoch: r.momentum_switch_epoch,
            weight_decay: r.weight_decay,
            decay_biases: r.decay_biases,
            scale_decay: r.scale_decay,
            epochs: r.epochs,
            batch_size: r.batch_size,
            init_std: r.init_std,
        }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        let c = &self.classifier;
        ClassifierConfig {
            architecture: c.architecture.architecture(),
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
        }
    }

    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            steps: self.generation.steps,
            temperature: self.generation.temperature,
            n_samples: self.generation.n_samples,
        }
    }

    /// Hash of everything that determines the experiment's numbers (output
    /// locations excluded).
    pub fn experiment_hash(&self) -> String {
        let mut c = self.clone();
        c.data.mnist_dir = None;
        c.output = OutputSection {
            cache_dir: PathBuf::new(),
            ..c.output
        };
        hash_json(&c)
    }
}

/// SHA-256 of the JSON encoding, hex.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_experiment_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!((c.rbm.n_hidden, c.rbm.epochs, c.rbm.batch_size), (1000, 100, 125));
        assert_eq!((c.rbm.learning_rate, c.rbm.weight_decay), (0.1, 0.0002));
        assert_eq!((c.classifier.epochs, c.classifier.batch_size, c.classifier.learning_rate), (20, 64, 0.01));
        assert_eq!((c.generation.n_samples, c.generation.steps, c.generation.temperature), (100, 100, 1.0));
        assert_eq!(c.generation.chimera_k, ChimeraK::Fixed(149));
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let text = c.to_toml();
        assert!(text.contains("learning_rate = 0.1\n"), "{text}");
        assert!(text.contains("weight_decay = 0.0002\n"), "{text}");
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("seed = 7\n[rbm]\nepochs = 3\n[generation]\nchimera_k = \"auto\"\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.rbm.epochs, 3);
        assert_eq!(c.rbm.n_hidden, 1000);
        assert_eq!(c.generation.chimera_k, ChimeraK::Auto);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        for text in ["bogus = 1", "[rbm]\nepoch = 3", "[generation]\nchimera_k = \"many\"", "[generation]\nsteps = 0"] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn overrides_apply_typed_values() {
        let c = ExperimentConfig::default();
        let c = c.with_override("rbm.epochs=2").unwrap();
        let c = c.with_override("generation.chimera_k=auto").unwrap();
        let c = c.with_override("classifier.architecture=vgg").unwrap();
        let c = c.with_override("seed = 99").unwrap();
        let c = c.with_override("data.mnist_dir=/tmp/m").unwrap();
        assert_eq!(c.rbm.epochs, 2);
        assert_eq!(c.generation.chimera_k, ChimeraK::Auto);
        assert_eq!(c.classifier.architecture, ArchitecturePreset::Vgg);
        assert_eq!(c.seed, 99);
        assert_eq!(c.mnist_dir(), PathBuf::from("/tmp/m"));
        assert!(c.with_override("rbm.nope=1").is_err());
        let sets = ["rbm.n_hidden=32".to_string(), "generation.chimera_k=8".to_string()];
        assert!(ExperimentConfig::resolve(None, &sets).is_ok());
        assert!(ExperimentConfig::resolve(None, &sets[..1]).is_err());
        assert!(c.with_override("nosection.x=1").is_err());
        assert!(c.with_override("rbm.epochs").is_err());
        assert!(c.with_override("rbm.epochs=\"x\"").is_err());
    }

    #[test]
    fn hash_ignores_output_locations() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.cache_dir = PathBuf::from("elsewhere");
        b.data.mnist_dir = Some(PathBuf::from("x"));
        assert_eq!(a.experiment_hash(), b.experiment_hash());
        b.seed += 1;
        assert_ne!(a.experiment_hash(), b.experiment_hash());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
