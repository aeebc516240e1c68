//! Experiment configuration and the staged, cached workflow behind the CLI.
//!
//! Each stage writes its artifacts under the output directory together with
//! a provenance block. The block records a digest of the stage's inputs
//! (the relevant config sections plus upstream artifacts). A stage whose
//! primary artifact already carries the current digest is skipped, so
//! reruns are no-ops and leave every file byte-identical.
//!
//! ```text
//! ingest ─► optimize-sp ─► extract ─► train ─► compare ─► report
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{apply_pipeline, StageKind};
use crate::error::{Error, Result};
use crate::estimators::{
    compute_metrics, EstimatorKind, GbtParams, Hyperparams, MetricsReport, Model, ModelFile,
};
use crate::features::{extract_matrix, FeatureCatalog, FeatureMatrix, Preprocessor};
use crate::ml_opt::{rfecv, tune_classifier, RfecvSchedule, TracePoint, TuneResult};
use crate::pipeline_opt::{optimize_fold, FeatureCache, FoldSearch, GridMode, SearchOptions, StageGrid};
use crate::signal_io::{
    assign_folds, decimate, load_directory_with, synth_dataset, truncate, Dataset, DatasetManifest, FaultClass,
    LoadOptions, ManifestSource, SignalWindow, SynthSpec, DEFAULT_FOLD_SEED,
};
use crate::stats::{compare, error_vectors, CompareOptions, ErrorVector, StatReport, ZeroMethod};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Window length above which the full stage grid is refused.
pub const SHRUNKEN_GRID_ABOVE: usize = 100_000;

/// Writes via a temporary sibling file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

fn default_seed() -> u64 {
    DEFAULT_FOLD_SEED
}
fn default_folds() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub paths: PathsConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub ml: MlConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
    #[serde(rename = "comparison", default)]
    pub comparisons: Vec<ComparisonConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            output_dir: "reports".into(),
            cache_dir: "cache".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    /// Seeded synthetic corpus generated in memory.
    Synthetic {
        per_class: usize,
        sampling_rate_hz: f64,
        duration_s: f64,
        #[serde(default = "default_noise")]
        noise_level: f64,
    },
    /// One CSV file per window under class-named directories.
    Directory {
        root: PathBuf,
        #[serde(default = "default_columns")]
        channel_columns: Vec<usize>,
        #[serde(default = "default_rate")]
        sampling_rate_hz: f64,
    },
}

impl DataConfig {
    /// Generator parameters for synthetic data.
    pub fn synth_spec(&self) -> Option<SynthSpec> {
        match self {
            DataConfig::Synthetic {
                per_class,
                sampling_rate_hz,
                duration_s,
                noise_level,
            } => Some(SynthSpec {
                noise_level: *noise_level,
                ..SynthSpec::balanced(*per_class, *sampling_rate_hz, *duration_s)
            }),
            DataConfig::Directory { .. } => None,
        }
    }
}

fn default_noise() -> f64 {
    SynthSpec::balanced(1, 1.0, 1.0).noise_level
}
fn default_columns() -> Vec<usize> {
    LoadOptions::default().channel_columns
}
fn default_rate() -> f64 {
    LoadOptions::default().sampling_rate_hz
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub aic_lambda: f64,
    pub stages: Vec<StageKind>,
    pub joint: bool,
    pub bands: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let o = SearchOptions::default();
        Self {
            aic_lambda: o.aic_lambda,
            stages: o.stages,
            joint: o.joint,
            bands: o.catalog.bands,
        }
    }
}

impl SearchConfig {
    pub fn options(&self) -> SearchOptions {
        SearchOptions {
            catalog: FeatureCatalog { bands: self.bands },
            aic_lambda: self.aic_lambda,
            stages: self.stages.clone(),
            joint: self.joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtGrid {
    pub max_depth: Vec<usize>,
    pub n_trees: Vec<usize>,
    pub l2_leaf: Vec<f64>,
    pub learning_rate: f64,
    pub max_bins: usize,
}

impl Default for GbtGrid {
    fn default() -> Self {
        Self {
            max_depth: vec![3, 6],
            n_trees: vec![100, 300],
            l2_leaf: vec![1.0, 3.0],
            learning_rate: GbtParams::default().learning_rate,
            max_bins: GbtParams::default().max_bins,
        }
    }
}

impl GbtGrid {
    pub fn points(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &n_trees in &self.n_trees {
                for &l2_leaf in &self.l2_leaf {
                    out.push(Hyperparams::Gbt(GbtParams {
                        max_depth,
                        n_trees,
                        l2_leaf,
                        learning_rate: self.learning_rate,
                        max_bins: self.max_bins,
                    }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlConfig {
    pub inner_k: usize,
    pub schedule: RfecvSchedule,
    /// Penalty of the logistic regression used inside feature elimination.
    pub rfecv_lambda: f64,
    /// Boosting parameters used inside feature elimination.
    pub rfecv_gbt: GbtParams,
    pub logreg_lambdas: Vec<f64>,
    pub gbt_grid: GbtGrid,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            inner_k: crate::ml_opt::DEFAULT_INNER_K,
            schedule: RfecvSchedule::default(),
            rfecv_lambda: 1.0,
            rfecv_gbt: GbtParams::default(),
            logreg_lambdas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            gbt_grid: GbtGrid::default(),
        }
    }
}

impl MlConfig {
    pub fn rfecv_params(&self, kind: EstimatorKind) -> Hyperparams {
        match kind {
            EstimatorKind::Logreg => Hyperparams::Logreg {
                l2_lambda: self.rfecv_lambda,
            },
            EstimatorKind::Gbt => Hyperparams::Gbt(self.rfecv_gbt),
        }
    }

    pub fn grid(&self, kind: EstimatorKind) -> Vec<Hyperparams> {
        match kind {
            EstimatorKind::Logreg => self
                .logreg_lambdas
                .iter()
                .map(|&l2_lambda| Hyperparams::Logreg { l2_lambda })
                .collect(),
            EstimatorKind::Gbt => self.gbt_grid.points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub alpha: f64,
    pub n_boot: usize,
    pub zero_method: ZeroMethod,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_boot: crate::stats::DEFAULT_BOOTSTRAP,
            zero_method: ZeroMethod::Wilcox,
        }
    }
}

/// How windows are resampled before processing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Full rate, full window.
    Native,
    /// 50 kHz → 1 kHz by keeping every 50th sample.
    #[serde(rename = "decimate_1khz_5s")]
    Decimate1Khz5s,
    /// First 5000 samples (0.1 s at 50 kHz).
    #[serde(rename = "truncate_50khz_0p1s")]
    Truncate50Khz0p1s,
    Decimate { factor: usize },
    Truncate { samples: usize },
    /// Decimate by `factor`, then keep the first `samples`.
    Custom { factor: usize, samples: usize },
}

impl Sampling {
    fn parts(&self) -> (usize, Option<usize>) {
        match *self {
            Sampling::Native => (1, None),
            Sampling::Decimate1Khz5s => (50, None),
            Sampling::Truncate50Khz0p1s => (1, Some(5000)),
            Sampling::Decimate { factor } => (factor, None),
            Sampling::Truncate { samples } => (1, Some(samples)),
            Sampling::Custom { factor, samples } => (factor, Some(samples)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (factor, samples) = self.parts();
        if factor == 0 {
            return Err(Error::Config("decimation factor must be >= 1".into()));
        }
        if samples.is_some_and(|s| s < crate::signal_io::MIN_WINDOW_LEN) {
            return Err(Error::Config(format!(
                "truncated windows need at least {} samples",
                crate::signal_io::MIN_WINDOW_LEN
            )));
        }
        Ok(())
    }

    pub fn apply(&self, w: &SignalWindow) -> Result<SignalWindow> {
        let (factor, samples) = self.parts();
        let mut out = if factor > 1 { decimate(w, factor)? } else { w.clone() };
        if let Some(n) = samples {
            out = truncate(&out, n)?;
        }
        Ok(out)
    }

    /// Window length after sampling a window of `n` samples.
    pub fn output_len(&self, n: usize) -> usize {
        let (factor, samples) = self.parts();
        let dec = n.div_ceil(factor);
        samples.map_or(dec, |s| s.min(dec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub sampling: Sampling,
    pub grid_mode: GridMode,
    pub estimators: Vec<EstimatorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub name: String,
    /// Experiment expected to have the smaller errors.
    pub alt: String,
    pub null: String,
    pub estimator: EstimatorKind,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        match &self.data {
            DataConfig::Synthetic {
                per_class,
                sampling_rate_hz,
                duration_s,
                noise_level,
            } => {
                if *per_class < self.folds {
                    return Err(Error::Config("synthetic per_class must be at least the fold count".into()));
                }
                if !(*sampling_rate_hz > 0.0 && *duration_s > 0.0 && *noise_level >= 0.0) {
                    return Err(Error::Config("synthetic rate, duration and noise must be positive".into()));
                }
            }
            DataConfig::Directory {
                channel_columns,
                sampling_rate_hz,
                ..
            } => {
                if channel_columns.is_empty() || !(*sampling_rate_hz > 0.0) {
                    return Err(Error::Config("directory data needs channel columns and a positive rate".into()));
                }
            }
        }
        if self.search.bands == 0 || self.search.stages.is_empty() || !(self.search.aic_lambda >= 0.0) {
            return Err(Error::Config("search needs bands >= 1, at least one stage and aic_lambda >= 0".into()));
        }
        if self.ml.inner_k < 2 {
            return Err(Error::Config("ml.inner_k must be >= 2".into()));
        }
        self.ml.schedule.validate()?;
        if self.ml.logreg_lambdas.is_empty() || self.ml.gbt_grid.points().is_empty() {
            return Err(Error::Config("estimator grids must be non-empty".into()));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) || self.stats.n_boot < 2 {
            return Err(Error::Config("stats.alpha must be in (0, 1) and n_boot >= 2".into()));
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("at least one [[experiment]] is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.experiments {
            if !valid_name(&e.name) || !seen.insert(e.name.as_str()) {
                return Err(Error::Config(format!("experiment name {:?} is invalid or repeated", e.name)));
            }
            if e.estimators.is_empty() {
                return Err(Error::Config(format!("experiment {} lists no estimators", e.name)));
            }
            e.sampling.validate()?;
        }
        let mut cseen = std::collections::BTreeSet::new();
        for c in &self.comparisons {
            if !valid_name(&c.name) || !cseen.insert(c.name.as_str()) {
                return Err(Error::Config(format!("comparison name {:?} is invalid or repeated", c.name)));
            }
            for side in [&c.alt, &c.null] {
                let e = self.experiment(side)?;
                if !e.estimators.contains(&c.estimator) {
                    return Err(Error::Config(format!(
                        "comparison {} needs estimator {} in experiment {side}",
                        c.name, c.estimator
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn experiment(&self, name: &str) -> Result<&ExperimentConfig> {
        self.experiments
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment {name:?}")))
    }

    /// Digest of everything except output locations.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
    }
}

/// Desk-scale configuration on the synthetic fixture corpus: six classes ×
/// 30 windows of one second at 5 kHz.
pub fn fixture_config() -> Config {
    let both = vec![EstimatorKind::Logreg, EstimatorKind::Gbt];
    Config {
        seed: DEFAULT_FOLD_SEED,
        folds: 3,
        paths: PathsConfig::default(),
        data: DataConfig::Synthetic {
            per_class: 30,
            sampling_rate_hz: 5000.0,
            duration_s: 1.0,
            noise_level: default_noise(),
        },
        search: SearchConfig::default(),
        ml: MlConfig {
            rfecv_gbt: GbtParams {
                max_depth: 3,
                n_trees: 30,
                ..GbtParams::default()
            },
            gbt_grid: GbtGrid {
                max_depth: vec![2, 3],
                n_trees: vec![100, 200],
                l2_leaf: vec![1.0, 3.0],
                ..GbtGrid::default()
            },
            ..MlConfig::default()
        },
        stats: StatsConfig {
            n_boot: 2000,
            ..StatsConfig::default()
        },
        experiments: vec![
            ExperimentConfig {
                name: "full".into(),
                sampling: Sampling::Native,
                grid_mode: GridMode::Full,
                estimators: both.clone(),
            },
            ExperimentConfig {
                name: "decimated".into(),
                sampling: Sampling::Decimate { factor: 5 },
                grid_mode: GridMode::Full,
                estimators: both.clone(),
            },
            ExperimentConfig {
                name: "truncated".into(),
                sampling: Sampling::Truncate { samples: 100 },
                grid_mode: GridMode::Full,
                estimators: both,
            },
        ],
        comparisons: comparisons_for("full", "decimated", "truncated"),
    }
}

fn comparisons_for(full: &str, decimated: &str, truncated: &str) -> Vec<ComparisonConfig> {
    let mut out = Vec::new();
    for (rq, null) in [("rq1", decimated), ("rq2", truncated)] {
        for est in [EstimatorKind::Logreg, EstimatorKind::Gbt] {
            out.push(ComparisonConfig {
                name: format!("{rq}-{est}"),
                alt: full.into(),
                null: null.into(),
                estimator: est,
            });
        }
    }
    out
}

/// The three sampling configurations of the original study on the real
/// database: 50 kHz/5 s (shrunken grid), 1 kHz/5 s and 50 kHz/0.1 s.
pub fn paper_config(data_root: &Path) -> Config {
    let both = vec![EstimatorKind::Logreg, EstimatorKind::Gbt];
    Config {
        seed: DEFAULT_FOLD_SEED,
        folds: 3,
        paths: PathsConfig::default(),
        data: DataConfig::Directory {
            root: data_root.to_path_buf(),
            channel_columns: default_columns(),
            sampling_rate_hz: default_rate(),
        },
        search: SearchConfig::default(),
        ml: MlConfig::default(),
        stats: StatsConfig::default(),
        experiments: vec![
            ExperimentConfig {
                name: "native_50khz_5s".into(),
                sampling: Sampling::Native,
                grid_mode: GridMode::Shrunken,
                estimators: both.clone(),
            },
            ExperimentConfig {
                name: "decimate_1khz_5s".into(),
                sampling: Sampling::Decimate1Khz5s,
                grid_mode: GridMode::Full,
                estimators: both.clone(),
            },
            ExperimentConfig {
                name: "truncate_50khz_0p1s".into(),
                sampling: Sampling::Truncate50Khz0p1s,
                grid_mode: GridMode::Full,
                estimators: both,
            },
        ],
        comparisons: comparisons_for("native_50khz_5s", "decimate_1khz_5s", "truncate_50khz_0p1s"),
    }
}

// ---------------------------------------------------------------------------
// Provenance and artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub input_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Stamped<T> {
    provenance: Provenance,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Deserialize)]
struct ProvenanceOnly {
    provenance: Provenance,
}

/// Result of running one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: String,
    pub target: String,
    pub cached: bool,
    pub artifacts: Vec<PathBuf>,
}

struct InputHasher(Sha256);

impl InputHasher {
    fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(VERSION.as_bytes());
        h.update(stage.as_bytes());
        Self(h)
    }

    fn json<T: Serialize>(mut self, v: &T) -> Self {
        self.0.update(serde_json::to_vec(v).expect("serialisable"));
        self.0.update([0]);
        self
    }

    fn file(mut self, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.0.update(Sha256::digest(&bytes));
        Ok(self)
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Drives the stages of one configuration.
pub struct Workspace {
    pub config: Config,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
    config_hash: String,
    features: FeatureCache,
}

impl Workspace {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            out_dir: config.paths.output_dir.clone(),
            cache_dir: config.paths.cache_dir.clone(),
            config_hash: config.digest(),
            config,
            features: FeatureCache::new(),
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn provenance(&self, stage: &str, input_hash: String) -> Provenance {
        Provenance {
            tool: "vibropt".into(),
            version: VERSION.into(),
            stage: stage.into(),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            input_hash,
        }
    }

    fn is_current(path: &Path, input_hash: &str) -> bool {
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str::<ProvenanceOnly>(&t).ok())
            .is_some_and(|p| p.provenance.input_hash == input_hash)
    }

    fn write_stamped<T: Serialize>(&self, path: &Path, stage: &str, input_hash: &str, body: &T) -> Result<()> {
        let stamped = Stamped {
            provenance: self.provenance(stage, input_hash.to_string()),
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped).map_err(|e| Error::parse(path, e))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    fn read_stamped<T: for<'de> Deserialize<'de>>(path: &Path, producer: &str) -> Result<T> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingArtifact {
            path: path.to_path_buf(),
            producer: producer.into(),
        })?;
        let s: Stamped<T> = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Ok(s.body)
    }

    fn require(path: &Path, producer: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                producer: producer.into(),
            })
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }

    pub fn experiment_dir(&self, exp: &str) -> PathBuf {
        self.out_dir.join(exp)
    }

    fn outcome(stage: &str, target: &str, cached: bool, artifacts: Vec<PathBuf>) -> StageOutcome {
        if cached {
            log::info!("{stage} {target}: up to date");
        } else {
            log::info!("{stage} {target}: done");
        }
        StageOutcome {
            stage: stage.into(),
            target: target.into(),
            cached,
            artifacts,
        }
    }

    fn selected_experiments(&self, only: &[String]) -> Result<Vec<ExperimentConfig>> {
        if only.is_empty() {
            return Ok(self.config.experiments.clone());
        }
        only.iter().map(|n| self.config.experiment(n).cloned()).collect()
    }

    // ----- ingest -------------------------------------------------------

    pub fn ingest(&self) -> Result<StageOutcome> {
        let path = self.manifest_path();
        let input = InputHasher::new("ingest")
            .json(&self.config.data)
            .json(&(self.config.folds, self.config.seed))
            .finish();
        if Self::is_current(&path, &input) {
            return Ok(Self::outcome("ingest", "dataset", true, vec![path]));
        }
        let (dataset, source) = match &self.config.data {
            DataConfig::Synthetic { .. } => {
                let spec = self.config.data.synth_spec().expect("synthetic");
                let d = synth_dataset(&spec, self.config.seed)?;
                (d, ManifestSource::Synthetic {
                    spec,
                    seed: self.config.seed,
                })
            }
            DataConfig::Directory {
                root,
                channel_columns,
                sampling_rate_hz,
            } => {
                let options = LoadOptions {
                    channel_columns: channel_columns.clone(),
                    sampling_rate_hz: *sampling_rate_hz,
                };
                // only ids and labels are needed here; keep one sample per window
                let d = load_directory_with(root, &options, |w| truncate(&w, crate::signal_io::MIN_WINDOW_LEN))?;
                (d, ManifestSource::Directory {
                    root: root.clone(),
                    options,
                })
            }
        };
        let d = assign_folds(&dataset, self.config.folds, self.config.seed)?;
        let manifest = DatasetManifest::from_dataset(&d, source)?;
        self.write_stamped(&path, "ingest", &input, &ManifestBody { manifest })?;
        Ok(Self::outcome("ingest", "dataset", false, vec![path]))
    }

    fn load_manifest(&self) -> Result<DatasetManifest> {
        let body: ManifestBody = Self::read_stamped(&self.manifest_path(), "ingest")?;
        Ok(body.manifest)
    }

    /// The dataset with `exp`'s sampling applied and the recorded folds.
    pub fn load_dataset(&self, exp: &ExperimentConfig) -> Result<Dataset> {
        let manifest = self.load_manifest()?;
        let sampling = exp.sampling;
        manifest.materialize_with(move |w| sampling.apply(&w))
    }

    // ----- optimize-sp --------------------------------------------------

    pub fn optimize_sp(&self, only: &[String]) -> Result<Vec<StageOutcome>> {
        self.selected_experiments(only)?
            .iter()
            .map(|e| self.optimize_experiment(e))
            .collect()
    }

    fn optimize_experiment(&self, exp: &ExperimentConfig) -> Result<StageOutcome> {
        let manifest_path = self.manifest_path();
        Self::require(&manifest_path, "ingest")?;
        let dir = self.experiment_dir(&exp.name);
        let json = dir.join("search.json");
        let input = InputHasher::new("optimize-sp")
            .file(&manifest_path)?
            .json(&(exp.sampling, exp.grid_mode))
            .json(&self.config.search)
            .finish();
        let artifacts = vec![json.clone(), dir.join("search.txt")];
        if Self::is_current(&json, &input) {
            return Ok(Self::outcome("optimize-sp", &exp.name, true, artifacts));
        }
        let d = self.load_dataset(exp)?;
        let len = d.windows()[0].n_samples();
        if exp.grid_mode == GridMode::Full && len > SHRUNKEN_GRID_ABOVE {
            return Err(Error::Config(format!(
                "experiment {}: windows of {len} samples require grid_mode = \"shrunken\"",
                exp.name
            )));
        }
        let grid = StageGrid::for_mode(exp.grid_mode);
        let opts = self.config.search.options();
        let mut folds = Vec::new();
        for f in 0..d.n_folds()? {
            // per-fold files let an interrupted search resume
            let part = dir.join(format!("search_fold{f}.json"));
            if Self::is_current(&part, &input) {
                folds.push(Self::read_stamped::<FoldSearch>(&part, "optimize-sp")?);
                continue;
            }
            let fs = optimize_fold(&d, f, &grid, &opts, &self.features)?;
            self.write_stamped(&part, "optimize-sp", &input, &fs)?;
            folds.push(fs);
        }
        let body = SearchBody {
            experiment: exp.name.clone(),
            grid_mode: exp.grid_mode,
            aic_lambda: opts.aic_lambda,
            joint: opts.joint,
            window_len: len,
            folds,
        };
        write_atomic(&dir.join("search.txt"), render_search(&body).as_bytes())?;
        self.write_stamped(&json, "optimize-sp", &input, &body)?;
        for f in 0..body.folds.len() {
            let _ = std::fs::remove_file(dir.join(format!("search_fold{f}.json")));
        }
        Ok(Self::outcome("optimize-sp", &exp.name, false, artifacts))
    }

    // ----- extract ------------------------------------------------------

    pub fn extract(&self, only: &[String]) -> Result<Vec<StageOutcome>> {
        self.selected_experiments(only)?
            .iter()
            .map(|e| self.extract_experiment(e))
            .collect()
    }

    fn extract_experiment(&self, exp: &ExperimentConfig) -> Result<StageOutcome> {
        let dir = self.experiment_dir(&exp.name);
        let search_path = dir.join("search.json");
        Self::require(&search_path, "optimize-sp")?;
        let json = dir.join("features.json");
        let input = InputHasher::new("extract")
            .file(&self.manifest_path())?
            .file(&search_path)?
            .json(&exp.sampling)
            .json(&self.config.search.bands)
            .finish();
        if Self::is_current(&json, &input) && self.feature_files_present(&json)? {
            return Ok(Self::outcome("extract", &exp.name, true, vec![json]));
        }
        let search: SearchBody = Self::read_stamped(&search_path, "optimize-sp")?;
        let d = self.load_dataset(exp)?;
        let cat = FeatureCatalog {
            bands: self.config.search.bands,
        };
        let folds_of: Vec<usize> = (0..d.len()).map(|i| d.fold_of(i)).collect::<Result<_>>()?;
        let all: Vec<usize> = (0..d.len()).collect();
        let mut entries = Vec::new();
        let mut done: BTreeMap<String, (String, usize)> = BTreeMap::new();
        for fs in &search.folds {
            let pipeline = fs.winner.to_string();
            let key = InputHasher::new("features")
                .json(&input)
                .json(&fs.winner)
                .finish();
            let file = format!("{key}.csv");
            if !done.contains_key(&pipeline) {
                let processed = d.map_windows(|w| apply_pipeline(w, &fs.winner))?;
                let m = extract_matrix(processed.windows(), &folds_of, &all, &cat)?;
                m.write_csv(&self.cache_dir.join("features").join(&file))?;
                done.insert(pipeline.clone(), (file.clone(), m.n_features()));
            }
            entries.push(FeatureEntry {
                fold: fs.fold,
                pipeline,
                file: done[&fs.winner.to_string()].0.clone(),
                n_rows: d.len(),
                n_features: done[&fs.winner.to_string()].1,
            });
        }
        self.write_stamped(
            &json,
            "extract",
            &input,
            &FeaturesBody {
                experiment: exp.name.clone(),
                folds: entries,
            },
        )?;
        Ok(Self::outcome("extract", &exp.name, false, vec![json]))
    }

    fn feature_files_present(&self, index: &Path) -> Result<bool> {
        let body: FeaturesBody = Self::read_stamped(index, "extract")?;
        Ok(body
            .folds
            .iter()
            .all(|e| self.cache_dir.join("features").join(&e.file).is_file()))
    }

    /// Feature matrix used for outer fold `fold` of `exp`.
    pub fn fold_features(&self, exp: &str, fold: usize) -> Result<FeatureMatrix> {
        let index = self.experiment_dir(exp).join("features.json");
        let body: FeaturesBody = Self::read_stamped(&index, "extract")?;
        let entry = body
            .folds
            .iter()
            .find(|e| e.fold == fold)
            .ok_or_else(|| Error::InvalidArgument(format!("no features for fold {fold}")))?;
        let path = self.cache_dir.join("features").join(&entry.file);
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                path,
                producer: "extract".into(),
            });
        }
        FeatureMatrix::read_csv(&path)
    }

    // ----- train --------------------------------------------------------

    pub fn train(&self, only: &[String]) -> Result<Vec<StageOutcome>> {
        let mut out = Vec::new();
        for exp in self.selected_experiments(only)? {
            for &est in &exp.estimators {
                out.push(self.train_one(&exp, est)?);
            }
        }
        Ok(out)
    }

    fn train_one(&self, exp: &ExperimentConfig, est: EstimatorKind) -> Result<StageOutcome> {
        let dir = self.experiment_dir(&exp.name);
        let index = dir.join("features.json");
        Self::require(&index, "extract")?;
        let json = dir.join(format!("train_{est}.json"));
        let input = InputHasher::new("train")
            .file(&index)?
            .json(&self.config.ml)
            .json(&(est, self.config.seed))
            .finish();
        let target = format!("{}/{est}", exp.name);
        let artifacts = vec![
            json.clone(),
            dir.join(format!("train_{est}.txt")),
            dir.join(format!("predictions_{est}.csv")),
            dir.join(format!("confusion_{est}.csv")),
            dir.join(format!("rfecv_trace_{est}.csv")),
        ];
        if Self::is_current(&json, &input) && artifacts.iter().all(|p| p.is_file()) {
            return Ok(Self::outcome("train", &target, true, artifacts));
        }
        let folds: FeaturesBody = Self::read_stamped(&index, "extract")?;
        let mut fold_results = Vec::new();
        let mut predictions: Vec<PredictionRow> = Vec::new();
        for entry in &folds.folds {
            let m = self.fold_features(&exp.name, entry.fold)?;
            let (res, preds, model) = self.train_fold(&m, entry.fold, est)?;
            let model_path = dir.join(format!("model_{est}_fold{}.json", entry.fold));
            model.save(&model_path)?;
            fold_results.push(res);
            predictions.extend(preds);
        }
        // dataset order, independent of fold order
        let manifest = self.load_manifest()?;
        let order: BTreeMap<&str, usize> = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.source_id.as_str(), i))
            .collect();
        predictions.sort_by_key(|p| order.get(p.id.as_str()).copied().unwrap_or(usize::MAX));
        let proba = Array2::from_shape_fn((predictions.len(), FaultClass::COUNT), |(i, k)| predictions[i].proba[k]);
        let labels: Vec<usize> = predictions.iter().map(|p| p.label).collect();
        let pooled = compute_metrics(proba.view(), &labels)?;
        let body = TrainBody {
            experiment: exp.name.clone(),
            estimator: est,
            pooled,
            folds: fold_results,
        };
        write_atomic(&artifacts[2], render_predictions(&predictions).as_bytes())?;
        write_atomic(&artifacts[3], render_confusion(&body.pooled).as_bytes())?;
        write_atomic(&artifacts[4], render_trace(&body).as_bytes())?;
        write_atomic(&artifacts[1], render_train(&body).as_bytes())?;
        self.write_stamped(&json, "train", &input, &body)?;
        Ok(Self::outcome("train", &target, false, artifacts))
    }

    fn train_fold(
        &self,
        m: &FeatureMatrix,
        fold: usize,
        est: EstimatorKind,
    ) -> Result<(FoldTrainResult, Vec<PredictionRow>, FoldModel)> {
        let ml = &self.config.ml;
        let train: Vec<usize> = (0..m.n_rows()).filter(|&r| m.folds[r] != fold).collect();
        let test: Vec<usize> = (0..m.n_rows()).filter(|&r| m.folds[r] == fold).collect();
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidArgument(format!("fold {fold} has an empty partition")));
        }
        let seed = self.config.seed.wrapping_add(fold as u64);
        let m_train = m.select_rows(&train);
        let selection = rfecv(&m_train, &ml.rfecv_params(est), &ml.schedule, ml.inner_k, seed)?;
        let cols: Vec<usize> = selection
            .selected_features
            .iter()
            .map(|n| m.column_index(n).expect("selected column exists"))
            .collect();
        let m_sel = m.select_columns(&cols);
        let tuned = tune_classifier(&m_sel.select_rows(&train), &ml.grid(est), ml.inner_k, seed)?;
        check_no_leakage(&[&selection, &tuned], m, &test)?;

        let pre = Preprocessor::fit(&m_sel, &train)?;
        let x = pre.transform(&m_sel)?;
        let xtr = x.select_rows(&train);
        let xte = x.select_rows(&test);
        let model = Model::fit(xtr.values.view(), &xtr.label_codes(), FaultClass::COUNT, &tuned.best_hyperparams)?;
        let proba = model.predict_proba(xte.values.view())?;
        let metrics = compute_metrics(proba.view(), &xte.label_codes())?;
        let preds = proba
            .outer_iter()
            .enumerate()
            .map(|(i, row)| PredictionRow {
                id: xte.row_ids[i].clone(),
                label: xte.labels[i].code(),
                fold,
                proba: row.to_vec(),
            })
            .collect();
        let result = FoldTrainResult {
            fold,
            n_features_in: m.n_features(),
            n_features_selected: selection.selected_features.len(),
            selected_features: selection.selected_features.clone(),
            hyperparams: tuned.best_hyperparams,
            rfecv_trace: selection.cv_score_trace.clone(),
            grid_scores: tuned
                .grid_scores
                .iter()
                .map(|g| (g.hyperparams.to_string(), g.mean_f1))
                .collect(),
            metrics,
        };
        let fold_model = FoldModel {
            fold,
            estimator: est,
            preprocessor: pre,
            model: ModelFile::new(model, x.feature_names.clone()),
        };
        Ok((result, preds, fold_model))
    }

    /// Re-scores each fold's test rows with the saved fold models and checks
    /// the result against the stored predictions.
    pub fn evaluate(&self, exp: &str, est: EstimatorKind) -> Result<Evaluation> {
        let exp_cfg = self.config.experiment(exp)?;
        if !exp_cfg.estimators.contains(&est) {
            return Err(Error::Config(format!("experiment {exp} does not train {est}")));
        }
        let dir = self.experiment_dir(exp);
        let stored_path = dir.join(format!("predictions_{est}.csv"));
        Self::require(&stored_path, "train")?;
        let stored = read_error_vector(&stored_path)?;
        let index: FeaturesBody = Self::read_stamped(&dir.join("features.json"), "extract")?;
        let mut folds = Vec::new();
        let mut recomputed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut all_proba = Vec::new();
        let mut all_labels = Vec::new();
        for entry in &index.folds {
            let model_path = dir.join(format!("model_{est}_fold{}.json", entry.fold));
            Self::require(&model_path, "train")?;
            let model = FoldModel::load(&model_path)?;
            let m = self.fold_features(exp, entry.fold)?;
            let test: Vec<usize> = (0..m.n_rows()).filter(|&r| m.folds[r] == entry.fold).collect();
            let mt = m.select_rows(&test);
            let proba = model.predict(&mt)?;
            let labels = mt.label_codes();
            folds.push((entry.fold, compute_metrics(proba.view(), &labels)?));
            let errs = error_vectors(proba.view(), &labels, &mt.row_ids)?;
            for (i, id) in mt.row_ids.iter().enumerate() {
                recomputed.insert(id.clone(), errs.values[i * errs.n_classes..(i + 1) * errs.n_classes].to_vec());
            }
            all_proba.push(proba);
            all_labels.extend(labels);
        }
        let pooled = compute_metrics(crate::estimators::stack_rows(&all_proba).view(), &all_labels)?;
        let k = stored.n_classes;
        let matches_stored = stored.ids.len() == recomputed.len()
            && stored
                .ids
                .iter()
                .enumerate()
                .all(|(i, id)| recomputed.get(id).is_some_and(|v| v[..] == stored.values[i * k..(i + 1) * k]));
        Ok(Evaluation {
            experiment: exp.into(),
            estimator: est,
            folds,
            pooled,
            matches_stored,
        })
    }

    // ----- compare ------------------------------------------------------

    /// Runs configured comparisons, or an ad hoc one when `pair` is given.
    pub fn compare(&self, pair: Option<(&str, &str)>, estimator: Option<EstimatorKind>) -> Result<Vec<StageOutcome>> {
        let family = self.config.comparisons.len().max(1);
        match pair {
            Some((alt, null)) => {
                let est = estimator.unwrap_or(EstimatorKind::Logreg);
                let c = ComparisonConfig {
                    name: format!("{alt}_vs_{null}_{est}"),
                    alt: alt.into(),
                    null: null.into(),
                    estimator: est,
                };
                for side in [alt, null] {
                    self.config.experiment(side)?;
                }
                Ok(vec![self.compare_one(&c, family)?])
            }
            None => self
                .config
                .comparisons
                .iter()
                .filter(|c| estimator.is_none_or(|e| e == c.estimator))
                .map(|c| self.compare_one(c, family))
                .collect(),
        }
    }

    fn compare_one(&self, c: &ComparisonConfig, n_tests: usize) -> Result<StageOutcome> {
        let alt_path = self.experiment_dir(&c.alt).join(format!("predictions_{}.csv", c.estimator));
        let null_path = self.experiment_dir(&c.null).join(format!("predictions_{}.csv", c.estimator));
        Self::require(&alt_path, "train")?;
        Self::require(&null_path, "train")?;
        let json = self.out_dir.join(format!("compare_{}.json", c.name));
        let input = InputHasher::new("compare")
            .file(&alt_path)?
            .file(&null_path)?
            .json(&self.config.stats)
            .json(&(n_tests, self.config.seed, c))
            .finish();
        let artifacts = vec![json.clone(), self.out_dir.join(format!("compare_{}.txt", c.name))];
        if Self::is_current(&json, &input) {
            return Ok(Self::outcome("compare", &c.name, true, artifacts));
        }
        let alt = read_error_vector(&alt_path)?;
        let null = read_error_vector(&null_path)?;
        let opts = CompareOptions {
            alpha: self.config.stats.alpha,
            n_tests,
            n_boot: self.config.stats.n_boot,
            seed: self.config.seed,
            zero_method: self.config.stats.zero_method,
        };
        let report = compare(&alt, &null, &opts)?;
        let body = CompareBody {
            comparison: c.clone(),
            report,
        };
        write_atomic(&artifacts[1], render_compare(&body).as_bytes())?;
        self.write_stamped(&json, "compare", &input, &body)?;
        Ok(Self::outcome("compare", &c.name, false, artifacts))
    }

    // ----- report -------------------------------------------------------

    pub fn report(&self) -> Result<StageOutcome> {
        let mut inputs = InputHasher::new("report").json(&self.config_hash);
        let mut sources = Vec::new();
        for e in &self.config.experiments {
            let dir = self.experiment_dir(&e.name);
            sources.push((dir.join("search.json"), "optimize-sp"));
            for est in &e.estimators {
                sources.push((dir.join(format!("train_{est}.json")), "train"));
            }
        }
        for c in &self.config.comparisons {
            sources.push((self.out_dir.join(format!("compare_{}.json", c.name)), "compare"));
        }
        for (p, producer) in &sources {
            Self::require(p, producer)?;
            inputs = inputs.file(p)?;
        }
        let input = inputs.finish();
        let json = self.out_dir.join("report.json");
        let artifacts = vec![json.clone(), self.out_dir.join("report.txt")];
        if Self::is_current(&json, &input) {
            return Ok(Self::outcome("report", "summary", true, artifacts));
        }
        let mut experiments = Vec::new();
        for e in &self.config.experiments {
            let dir = self.experiment_dir(&e.name);
            let search: SearchBody = Self::read_stamped(&dir.join("search.json"), "optimize-sp")?;
            let mut estimators = Vec::new();
            for est in &e.estimators {
                let t: TrainBody = Self::read_stamped(&dir.join(format!("train_{est}.json")), "train")?;
                estimators.push(EstimatorSummary {
                    estimator: *est,
                    f1_weighted: t.pooled.f1_weighted,
                    precision_weighted: t.pooled.precision_weighted,
                    recall_weighted: t.pooled.recall_weighted,
                    accuracy: t.pooled.accuracy,
                    mae: t.pooled.mae,
                    selected_per_fold: t.folds.iter().map(|f| f.n_features_selected).collect(),
                });
            }
            experiments.push(ExperimentSummary {
                name: e.name.clone(),
                sampling: e.sampling,
                window_len: search.window_len,
                folds: search
                    .folds
                    .iter()
                    .map(|f| FoldSummary {
                        fold: f.fold,
                        emd: f.tuned_emd.map(|c| crate::dsp::StageConfig::Emd(c).to_string()),
                        wavelet: f.tuned_wavelet.map(|c| crate::dsp::StageConfig::Wavelet(c).to_string()),
                        ordering: f.winner.to_string(),
                        winner_aic: f.winner_aic,
                        candidates: f.records.len(),
                    })
                    .collect(),
                estimators,
            });
        }
        let mut comparisons = Vec::new();
        for c in &self.config.comparisons {
            let b: CompareBody = Self::read_stamped(&self.out_dir.join(format!("compare_{}.json", c.name)), "compare")?;
            comparisons.push(b);
        }
        let body = ReportBody {
            experiments,
            comparisons,
        };
        write_atomic(&artifacts[1], render_report(&body).as_bytes())?;
        self.write_stamped(&json, "report", &input, &body)?;
        Ok(Self::outcome("report", "summary", false, artifacts))
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        let mut out = vec![self.ingest()?];
        out.extend(self.optimize_sp(&[])?);
        out.extend(self.extract(&[])?);
        out.extend(self.train(&[])?);
        out.extend(self.compare(None, None)?);
        out.push(self.report()?);
        Ok(out)
    }
}

fn check_no_leakage(results: &[&TuneResult], m: &FeatureMatrix, test: &[usize]) -> Result<()> {
    let test_ids: std::collections::BTreeSet<&str> = test.iter().map(|&r| m.row_ids[r].as_str()).collect();
    for r in results {
        if let Some(id) = r.row_ids.iter().find(|id| test_ids.contains(id.as_str())) {
            return Err(Error::Numerical(format!("test row {id} entered model selection")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Artifact bodies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestBody {
    manifest: DatasetManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBody {
    pub experiment: String,
    pub grid_mode: GridMode,
    pub aic_lambda: f64,
    pub joint: bool,
    pub window_len: usize,
    pub folds: Vec<FoldSearch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub fold: usize,
    pub pipeline: String,
    pub file: String,
    pub n_rows: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesBody {
    pub experiment: String,
    pub folds: Vec<FeatureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTrainResult {
    pub fold: usize,
    pub n_features_in: usize,
    pub n_features_selected: usize,
    pub selected_features: Vec<String>,
    pub hyperparams: Hyperparams,
    pub rfecv_trace: Vec<TracePoint>,
    pub grid_scores: Vec<(String, f64)>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainBody {
    pub experiment: String,
    pub estimator: EstimatorKind,
    /// Metrics over the pooled out-of-fold predictions.
    pub pooled: MetricsReport,
    pub folds: Vec<FoldTrainResult>,
}

/// Preprocessing and classifier fitted on one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub fold: usize,
    pub estimator: EstimatorKind,
    pub preprocessor: Preprocessor,
    pub model: ModelFile,
}

impl FoldModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    /// Class probabilities for a raw (unprocessed) feature matrix.
    pub fn predict(&self, m: &FeatureMatrix) -> Result<Array2<f64>> {
        let x = self.preprocessor.transform(m)?;
        self.model.model.predict_proba(x.values.view())
    }
}

/// Output of [`Workspace::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub experiment: String,
    pub estimator: EstimatorKind,
    pub folds: Vec<(usize, MetricsReport)>,
    pub pooled: MetricsReport,
    /// Whether re-scored errors equal the stored predictions exactly.
    pub matches_stored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub label: usize,
    pub fold: usize,
    pub proba: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareBody {
    pub comparison: ComparisonConfig,
    pub report: StatReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub emd: Option<String>,
    pub wavelet: Option<String>,
    pub ordering: String,
    pub winner_aic: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub f1_weighted: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub accuracy: f64,
    pub mae: f64,
    pub selected_per_fold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub sampling: Sampling,
    pub window_len: usize,
    pub folds: Vec<FoldSummary>,
    pub estimators: Vec<EstimatorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub experiments: Vec<ExperimentSummary>,
    pub comparisons: Vec<CompareBody>,
}

/// Reads the `report.json` body of a finished run.
pub fn read_report(path: &Path) -> Result<ReportBody> {
    Workspace::read_stamped(path, "report")
}

pub fn read_search(path: &Path) -> Result<SearchBody> {
    Workspace::read_stamped(path, "optimize-sp")
}

pub fn read_train(path: &Path) -> Result<TrainBody> {
    Workspace::read_stamped(path, "train")
}

pub fn read_compare(path: &Path) -> Result<CompareBody> {
    Workspace::read_stamped(path, "compare")
}

// ---------------------------------------------------------------------------
// Text rendering
// ---------------------------------------------------------------------------

fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn fmt_aic(v: Option<f64>) -> String {
    v.map_or_else(|| "skipped".into(), |a| format!("{a:.3}"))
}

fn render_search(b: &SearchBody) -> String {
    let mut out = format!(
        "Signal-processing search: {} (window {} samples, {:?} grid)\n\n",
        b.experiment, b.window_len, b.grid_mode
    );
    let rows: Vec<Vec<String>> = b
        .folds
        .iter()
        .map(|f| {
            vec![
                f.fold.to_string(),
                f.tuned_emd.map_or("-".into(), |c| crate::dsp::StageConfig::Emd(c).to_string()),
                f.tuned_wavelet
                    .map_or("-".into(), |c| crate::dsp::StageConfig::Wavelet(c).to_string()),
                f.winner.to_string(),
                format!("{:.3}", f.winner_aic),
            ]
        })
        .collect();
    out += &render_table(&["fold", "emd", "wavelet", "ordering", "aic"], &rows);
    for f in &b.folds {
        let _ = write!(out, "\nFold {} candidates\n", f.fold);
        let mut recs: Vec<_> = f.records.iter().collect();
        recs.sort_by_key(|r| (r.phase, r.rank));
        let rows: Vec<Vec<String>> = recs
            .iter()
            .map(|r| {
                vec![
                    format!("{:?}", r.phase).to_lowercase(),
                    r.rank.to_string(),
                    r.candidate.clone(),
                    fmt_aic(r.aic),
                    r.n_features.to_string(),
                ]
            })
            .collect();
        out += &render_table(&["phase", "rank", "candidate", "aic", "features"], &rows);
    }
    out
}

fn render_predictions(rows: &[PredictionRow]) -> String {
    let mut out = String::from("id,label,fold");
    for k in 0..FaultClass::COUNT {
        let _ = write!(out, ",p{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.id, r.label, r.fold);
        for p in &r.proba {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

/// Reads a predictions file into per-entry, per-class absolute errors.
pub fn read_error_vector(path: &Path) -> Result<ErrorVector> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let bad = || Error::Malformed {
            file: path.to_path_buf(),
            line: line + 2,
            msg: "invalid prediction row".into(),
        };
        if rec.len() != 3 + FaultClass::COUNT {
            return Err(bad());
        }
        ids.push(rec[0].to_string());
        labels.push(rec[1].parse::<usize>().map_err(|_| bad())?);
        for f in rec.iter().skip(3) {
            values.push(f.parse::<f64>().map_err(|_| bad())?);
        }
    }
    let proba = Array2::from_shape_vec((ids.len(), FaultClass::COUNT), values).map_err(|e| Error::parse(path, e))?;
    error_vectors(proba.view(), &labels, &ids)
}

fn render_confusion(m: &MetricsReport) -> String {
    let mut out = String::from("true\\predicted");
    for c in FaultClass::ALL {
        let _ = write!(out, ",{}", c.dir_name());
    }
    out.push('\n');
    for (c, row) in FaultClass::ALL.iter().zip(&m.confusion) {
        out += c.dir_name();
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn render_trace(b: &TrainBody) -> String {
    let mut out = String::from("fold,n_features,mean_f1,failed_folds\n");
    for f in &b.folds {
        for t in &f.rfecv_trace {
            let _ = writeln!(out, "{},{},{},{}", f.fold, t.n_features, t.mean_f1, t.failed_folds);
        }
    }
    out
}

fn render_train(b: &TrainBody) -> String {
    let mut out = format!("Classification: {} / {}\n\n", b.experiment, b.estimator);
    let mut rows: Vec<Vec<String>> = b
        .folds
        .iter()
        .map(|f| {
            vec![
                f.fold.to_string(),
                format!("{:.4}", f.metrics.f1_weighted),
                format!("{:.4}", f.metrics.precision_weighted),
                format!("{:.4}", f.metrics.recall_weighted),
                format!("{:.4}", f.metrics.accuracy),
                format!("{:.4}", f.metrics.mae),
                format!("{}/{}", f.n_features_selected, f.n_features_in),
                f.hyperparams.to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        "pooled".into(),
        format!("{:.4}", b.pooled.f1_weighted),
        format!("{:.4}", b.pooled.precision_weighted),
        format!("{:.4}", b.pooled.recall_weighted),
        format!("{:.4}", b.pooled.accuracy),
        format!("{:.4}", b.pooled.mae),
        String::new(),
        String::new(),
    ]);
    out += &render_table(
        &["fold", "f1", "precision", "recall", "accuracy", "mae", "features", "hyperparameters"],
        &rows,
    );
    out
}

fn render_compare(b: &CompareBody) -> String {
    let r = &b.report;
    let c = &b.comparison;
    let g = r.g_av.map_or("n/a".into(), |g| format!("{g:.3}±{:.3}", r.ci_half_width));
    let mut out = format!(
        "Comparison {}: alt = {}, null = {} ({})\n\n",
        c.name, c.alt, c.null, c.estimator
    );
    out += &render_table(
        &["statistic", "value"],
        &[
            vec!["wilcoxon p (one-tailed)".into(), format!("{:.3e}", r.p_value)],
            vec!["W".into(), format!("{}", r.test_statistic)],
            vec!["alpha (corrected)".into(), format!("{}", r.alpha_corrected)],
            vec!["significant".into(), r.significant.to_string()],
            vec![format!("g_av ({:.4} CI)", r.ci_level), g],
            vec!["mean alt / null".into(), format!("{:.4} / {:.4}", r.mae_alt, r.mae_null)],
            vec!["median alt / null".into(), format!("{:.4} / {:.4}", r.median_alt, r.median_null)],
            vec!["sd alt / null".into(), format!("{:.4} / {:.4}", r.sd_alt, r.sd_null)],
        ],
    );
    out
}

fn render_report(b: &ReportBody) -> String {
    let mut out = String::from("Summary\n=======\n\nSignal-processing winners\n\n");
    let mut rows = Vec::new();
    for e in &b.experiments {
        for f in &e.folds {
            rows.push(vec![
                e.name.clone(),
                f.fold.to_string(),
                f.emd.clone().unwrap_or_else(|| "-".into()),
                f.wavelet.clone().unwrap_or_else(|| "-".into()),
                f.ordering.clone(),
            ]);
        }
    }
    out += &render_table(&["experiment", "fold", "emd", "wavelet", "ordering"], &rows);
    out += "\nClassification (pooled out-of-fold)\n\n";
    let mut rows = Vec::new();
    for e in &b.experiments {
        for s in &e.estimators {
            rows.push(vec![
                e.name.clone(),
                s.estimator.to_string(),
                format!("{:.4}", s.f1_weighted),
                format!("{:.4}", s.precision_weighted),
                format!("{:.4}", s.recall_weighted),
                format!("{:.4}", s.accuracy),
                format!("{:.4}", s.mae),
                s.selected_per_fold
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", "),
            ]);
        }
    }
    out += &render_table(
        &["experiment", "estimator", "f1", "precision", "recall", "accuracy", "mae", "features per fold"],
        &rows,
    );
    if !b.comparisons.is_empty() {
        out += "\nComparisons\n\n";
        let rows: Vec<Vec<String>> = b
            .comparisons
            .iter()
            .map(|c| {
                let r = &c.report;
                vec![
                    c.comparison.name.clone(),
                    format!("{} vs {}", c.comparison.alt, c.comparison.null),
                    c.comparison.estimator.to_string(),
                    format!("{:.3e}", r.p_value),
                    r.g_av.map_or("n/a".into(), |g| format!("{g:.3}±{:.3}", r.ci_half_width)),
                    format!("{:.4} / {:.4}", r.mae_alt, r.mae_null),
                ]
            })
            .collect();
        out += &render_table(&["name", "alt vs null", "estimator", "p", "g_av", "mae alt / null"], &rows);
    }
    out
}
