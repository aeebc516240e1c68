//! Labelled multi-channel vibration windows: loading, subsampling, synthetic
//! corpora and stratified fold assignment.
//!
//! Subsampling is plain index decimation without an anti-alias filter. The
//! low-rate configuration emulates a cheap accelerometer that natively
//! samples at the lower rate, so filtering first would answer a different
//! question.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples per channel in a window.
pub const MIN_WINDOW_LEN: usize = 16;

/// Native sampling rate of the MAFAULDA recordings.
pub const NATIVE_RATE_HZ: f64 = 50_000.0;

/// Default fold-assignment seed.
pub const DEFAULT_FOLD_SEED: u64 = 2021;

/// The six operating modes used as classification labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultClass {
    Normal,
    HorizontalMisalignment,
    VerticalMisalignment,
    ShaftImbalance,
    OverhangBearing,
    UnderhangBearing,
}

impl FaultClass {
    pub const ALL: [FaultClass; 6] = [
        FaultClass::Normal,
        FaultClass::HorizontalMisalignment,
        FaultClass::VerticalMisalignment,
        FaultClass::ShaftImbalance,
        FaultClass::OverhangBearing,
        FaultClass::UnderhangBearing,
    ];

    pub const COUNT: usize = 6;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// Directory name used in the on-disk corpus layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            FaultClass::Normal => "normal",
            FaultClass::HorizontalMisalignment => "horizontal-misalignment",
            FaultClass::VerticalMisalignment => "vertical-misalignment",
            FaultClass::ShaftImbalance => "imbalance",
            FaultClass::OverhangBearing => "overhang",
            FaultClass::UnderhangBearing => "underhang",
        }
    }

    pub fn from_dir_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.dir_name() == name)
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// One labelled window: `channels × n_samples` accelerations at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    samples: Vec<Vec<f64>>,
    sampling_rate_hz: f64,
    label: FaultClass,
    source_id: String,
}

impl SignalWindow {
    pub fn new(
        samples: Vec<Vec<f64>>,
        sampling_rate_hz: f64,
        label: FaultClass,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("window has no channels".into()));
        }
        let len = samples[0].len();
        if len < MIN_WINDOW_LEN {
            return Err(Error::SignalTooShort {
                len,
                min: MIN_WINDOW_LEN,
            });
        }
        if let Some(bad) = samples.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: bad.len(),
            });
        }
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("window samples"));
        }
        Ok(Self {
            samples,
            sampling_rate_hz,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn label(&self) -> FaultClass {
        self.label
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate_hz
    }

    /// Same label, rate and id with new channel data (validated).
    pub fn with_channels(&self, samples: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(samples, self.sampling_rate_hz, self.label, self.source_id.clone())
    }
}

/// Keeps samples `0, factor, 2·factor, …` and divides the rate by `factor`.
pub fn decimate(w: &SignalWindow, factor: usize) -> Result<SignalWindow> {
    if factor == 0 {
        return Err(Error::InvalidArgument("decimation factor must be >= 1".into()));
    }
    if factor > w.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "decimation factor {factor} exceeds window length {}",
            w.n_samples()
        )));
    }
    if factor == 1 {
        return Ok(w.clone());
    }
    let samples = w.channels().iter().map(|c| decimate_series(c, factor)).collect();
    SignalWindow::new(
        samples,
        w.sampling_rate_hz / factor as f64,
        w.label,
        w.source_id.clone(),
    )
}

fn decimate_series(x: &[f64], factor: usize) -> Vec<f64> {
    x.iter().step_by(factor).copied().collect()
}

/// First `n` samples per channel; the rate is unchanged.
pub fn truncate(w: &SignalWindow, n: usize) -> Result<SignalWindow> {
    if n > w.n_samples() {
        return Err(Error::InvalidArgument(format!(
            "cannot truncate {} samples to {n}",
            w.n_samples()
        )));
    }
    let samples = w.channels().iter().map(|c| c[..n].to_vec()).collect();
    SignalWindow::new(samples, w.sampling_rate_hz, w.label, w.source_id.clone())
}

/// Windows plus their (optional until assigned) outer fold indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    windows: Vec<SignalWindow>,
    folds: Option<FoldAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub fold_of: Vec<usize>,
}

impl Dataset {
    pub fn new(windows: Vec<SignalWindow>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            windows,
            folds: None,
        })
    }

    pub fn windows(&self) -> &[SignalWindow] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> Vec<FaultClass> {
        self.windows.iter().map(|w| w.label()).collect()
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        self.folds.as_ref()
    }

    pub fn fold_of(&self, i: usize) -> Result<usize> {
        self.folds
            .as_ref()
            .map(|f| f.fold_of[i])
            .ok_or(Error::NoFolds)
    }

    pub fn n_folds(&self) -> Result<usize> {
        self.folds.as_ref().map(|f| f.k).ok_or(Error::NoFolds)
    }

    /// Indices of windows outside `fold` (the training part).
    pub fn train_indices(&self, fold: usize) -> Result<Vec<usize>> {
        let f = self.folds.as_ref().ok_or(Error::NoFolds)?;
        check_fold(fold, f.k)?;
        Ok((0..self.len()).filter(|&i| f.fold_of[i] != fold).collect())
    }

    /// Indices of windows in `fold` (the test part).
    pub fn test_indices(&self, fold: usize) -> Result<Vec<usize>> {
        let f = self.folds.as_ref().ok_or(Error::NoFolds)?;
        check_fold(fold, f.k)?;
        Ok((0..self.len()).filter(|&i| f.fold_of[i] == fold).collect())
    }

    pub fn class_counts(&self) -> BTreeMap<FaultClass, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.windows {
            *counts.entry(w.label()).or_insert(0) += 1;
        }
        counts
    }

    /// Applies `f` to every window, keeping the fold assignment.
    pub fn map_windows<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&SignalWindow) -> Result<SignalWindow> + Sync + Send,
    {
        let windows = self.windows.par_iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            windows,
            folds: self.folds.clone(),
        })
    }

    /// Attaches a previously computed assignment (e.g. from a manifest).
    pub fn with_folds(mut self, folds: FoldAssignment) -> Result<Self> {
        if folds.fold_of.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: folds.fold_of.len(),
            });
        }
        if folds.fold_of.iter().any(|&f| f >= folds.k) {
            return Err(Error::InvalidArgument("fold index out of range".into()));
        }
        self.folds = Some(folds);
        Ok(self)
    }
}

fn check_fold(fold: usize, k: usize) -> Result<()> {
    if fold >= k {
        return Err(Error::InvalidArgument(format!(
            "fold {fold} out of range for {k} folds"
        )));
    }
    Ok(())
}

/// Stratified k-fold assignment, deterministic given `seed`.
///
/// Each class is shuffled and dealt round-robin; the dealing offset carries
/// over between classes so global fold sizes differ by at most one.
pub fn assign_folds(d: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    let labels = d.labels();
    let fold_of = stratified_fold_ids(&labels, k, seed)?;
    d.clone().with_folds(FoldAssignment { k, seed, fold_of })
}

/// Fold index per entry of `labels`, stratified by label value.
pub fn stratified_fold_ids<L: Ord + Copy + fmt::Display>(labels: &[L], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need k >= 2 folds, got {k}")));
    }
    let mut by_class: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    for (class, idx) in &by_class {
        if idx.len() < k {
            return Err(Error::TooFewWindows {
                class: class.to_string(),
                count: idx.len(),
                needed: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            fold_of[i] = (offset + j) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(fold_of)
}

// ---------------------------------------------------------------------------
// Directory loading
// ---------------------------------------------------------------------------

/// Column selection and rate for [`load_directory_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub channel_columns: Vec<usize>,
    pub sampling_rate_hz: f64,
}

impl Default for LoadOptions {
    /// MAFAULDA layout: column 0 is the tachometer, 1–3 the underhang
    /// accelerometer, 4–6 the overhang accelerometer, 7 the microphone.
    fn default() -> Self {
        Self {
            channel_columns: vec![1, 2, 3, 4, 5, 6],
            sampling_rate_hz: NATIVE_RATE_HZ,
        }
    }
}

/// Loads a class-per-directory corpus of headerless CSV files at 50 kHz.
pub fn load_directory(root: &Path, channel_columns: &[usize]) -> Result<Dataset> {
    let opts = LoadOptions {
        channel_columns: channel_columns.to_vec(),
        ..LoadOptions::default()
    };
    load_directory_with(root, &opts, |w| Ok(w))
}

/// Lists `(relative id, path, label)` for every CSV file under `root`.
///
/// Anything nested below a class directory (bearing sub-faults, imbalance
/// masses, misalignment offsets) collapses onto that class.
pub fn scan_directory(root: &Path) -> Result<Vec<(String, PathBuf, FaultClass)>> {
    if !root.is_dir() {
        return Err(Error::MissingDirectory(root.to_path_buf()));
    }
    let mut files = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut class_dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            class_dirs.push(path);
        }
    }
    class_dirs.sort();
    for dir in class_dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let class = FaultClass::from_dir_name(&name).ok_or_else(|| Error::UnknownClass {
            root: root.to_path_buf(),
            dir: name.clone(),
        })?;
        for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::parse(&dir, e))?;
            let path = entry.path();
            let is_csv = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if entry.file_type().is_file() && is_csv {
                let rel = path
                    .strip_prefix(root)
                    .unwrap_or(path)
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                files.push((rel, path.to_path_buf(), class));
            }
        }
    }
    if files.is_empty() {
        return Err(Error::EmptyDataset);
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

/// Loads every file in parallel, passing each window through `transform`
/// (typically decimation or truncation) before it is kept in memory.
pub fn load_directory_with<F>(root: &Path, opts: &LoadOptions, transform: F) -> Result<Dataset>
where
    F: Fn(SignalWindow) -> Result<SignalWindow> + Sync + Send,
{
    if opts.channel_columns.is_empty() {
        return Err(Error::InvalidArgument("no channel columns selected".into()));
    }
    let files = scan_directory(root)?;
    let windows = files
        .par_iter()
        .map(|(id, path, class)| {
            let samples = read_csv_channels(path, &opts.channel_columns)?;
            let w = SignalWindow::new(samples, opts.sampling_rate_hz, *class, id.clone())
                .map_err(|e| Error::Malformed {
                    file: path.clone(),
                    line: 0,
                    msg: e.to_string(),
                })?;
            transform(w)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(windows)
}

/// Reads the selected columns of a headerless CSV file as channels.
pub fn read_csv_channels(path: &Path, columns: &[usize]) -> Result<Vec<Vec<f64>>> {
    let needed = columns.iter().max().map_or(0, |m| m + 1);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut channels = vec![Vec::new(); columns.len()];
    let mut record = csv::StringRecord::new();
    let mut line = 0;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(Error::parse(path, e)),
        }
        line = record.position().map_or(line + 1, |p| p.line() as usize);
        if record.len() < needed {
            return Err(Error::Malformed {
                file: path.to_path_buf(),
                line,
                msg: format!("expected at least {needed} columns, found {}", record.len()),
            });
        }
        for (ch, &col) in channels.iter_mut().zip(columns) {
            let field = record[col].trim();
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                file: path.to_path_buf(),
                line,
                msg: format!("column {col}: non-numeric value {field:?}"),
            })?;
            ch.push(v);
        }
    }
    Ok(channels)
}

/// Writes a dataset in the class-per-directory CSV layout that
/// [`load_directory_with`] reads back. Column 0 is a zero tachometer
/// placeholder and the last column a zero microphone placeholder, so the
/// default column selection applies unchanged.
pub fn write_corpus(d: &Dataset, root: &Path) -> Result<()> {
    d.windows.par_iter().try_for_each(|w| {
        let path = root.join(&w.source_id);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut out = String::with_capacity(w.n_samples() * w.n_channels() * 22);
        for i in 0..w.n_samples() {
            out.push('0');
            for ch in w.channels() {
                out.push(',');
                out.push_str(&ch[i].to_string());
            }
            out.push_str(",0\n");
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
    })
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// Parameters of the synthetic fixture corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Number of windows per class; classes absent from the map get none.
    pub class_counts: BTreeMap<FaultClass, usize>,
    /// Shaft rotation frequency range in Hz.
    pub rotation_hz: (f64, f64),
    /// Standard deviation of the additive white noise.
    pub noise_level: f64,
    pub sampling_rate_hz: f64,
    pub duration_s: f64,
    /// Bearing resonance carrier; `None` means 0.3 × sampling rate.
    #[serde(default)]
    pub carrier_hz: Option<f64>,
}

impl SynthSpec {
    /// Every class with the same window count.
    pub fn balanced(per_class: usize, sampling_rate_hz: f64, duration_s: f64) -> Self {
        Self {
            class_counts: FaultClass::ALL.iter().map(|&c| (c, per_class)).collect(),
            rotation_hz: (11.7, 60.0),
            noise_level: 0.5,
            sampling_rate_hz,
            duration_s,
            carrier_hz: None,
        }
    }
}

/// Gains of the shaft tones on the six channels (underhang triple, then
/// overhang triple).
const SHAFT_GAINS: [f64; 6] = [1.0, 0.8, 0.6, 0.9, 0.7, 0.5];

/// Amplitudes of the 1×, 2× and 3× shaft harmonics per class.
fn harmonic_amplitudes(class: FaultClass) -> [f64; 3] {
    match class {
        FaultClass::ShaftImbalance => [2.5, 0.1, 0.05],
        _ => [1.0, 0.1, 0.05],
    }
}

/// Misalignment signature: 2× and 3× amplitudes, routed mostly to the
/// horizontal (tangential) or vertical (radial) axes of both bearings.
fn misalignment_signature(class: FaultClass) -> Option<([f64; 2], [f64; 6])> {
    match class {
        FaultClass::HorizontalMisalignment => Some(([1.2, 0.4], [0.2, 0.2, 1.0, 0.2, 0.2, 1.0])),
        FaultClass::VerticalMisalignment => Some(([0.4, 1.2], [0.2, 1.0, 0.2, 0.2, 1.0, 0.2])),
        _ => None,
    }
}

/// Bearing signature: (fault-frequency multiple of shaft speed, carrier
/// scale, per-channel routing).
fn bearing_signature(class: FaultClass) -> Option<(f64, f64, [f64; 6])> {
    match class {
        FaultClass::OverhangBearing => Some((3.05, 1.0, [0.15, 0.15, 0.15, 1.0, 1.0, 1.0])),
        FaultClass::UnderhangBearing => Some((4.7, 0.85, [1.0, 1.0, 1.0, 0.15, 0.15, 0.15])),
        _ => None,
    }
}

/// Generates a deterministic six-channel corpus.
///
/// Rotation speeds are spread evenly over the range by window index and all
/// tone phases are fixed, so the only seeded randomness is the additive
/// noise: with `noise_level == 0` the output does not depend on `seed`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    let total: usize = spec.class_counts.values().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("synthetic spec has no windows".into()));
    }
    if !(spec.duration_s > 0.0 && spec.duration_s.is_finite()) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    if !(spec.sampling_rate_hz > 0.0 && spec.sampling_rate_hz.is_finite()) {
        return Err(Error::InvalidArgument("sampling rate must be positive".into()));
    }
    if !(spec.noise_level >= 0.0) {
        return Err(Error::InvalidArgument("noise level must be non-negative".into()));
    }
    let (lo, hi) = spec.rotation_hz;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument("invalid rotation frequency range".into()));
    }
    let n = (spec.sampling_rate_hz * spec.duration_s).round() as usize;
    let fs = spec.sampling_rate_hz;
    let carrier = spec.carrier_hz.unwrap_or(0.3 * fs);
    let noise = Normal::new(0.0, spec.noise_level.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut jobs = Vec::with_capacity(total);
    for (&class, &count) in &spec.class_counts {
        for i in 0..count {
            jobs.push((class, i, count));
        }
    }
    let windows = jobs
        .into_par_iter()
        .enumerate()
        .map(|(global, (class, i, count))| {
            let f_rot = lo + (hi - lo) * (i as f64 + 0.5) / count as f64;
            let harmonics = harmonic_amplitudes(class);
            let bearing = bearing_signature(class);
            let misalign = misalignment_signature(class);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(global as u64);
            let channels = (0..6)
                .map(|ch| {
                    (0..n)
                        .map(|s| {
                            let t = s as f64 / fs;
                            let mut v = 0.0;
                            for (h, amp) in harmonics.iter().enumerate() {
                                let order = (h + 1) as f64;
                                let phase = 0.7 * order + 0.3 * ch as f64;
                                v += SHAFT_GAINS[ch] * amp * (2.0 * PI * order * f_rot * t + phase).sin();
                            }
                            if let Some((amps, route)) = misalign {
                                for (order, amp) in [(2.0, amps[0]), (3.0, amps[1])] {
                                    let phase = 0.4 * order + 0.3 * ch as f64;
                                    v += route[ch] * amp * (2.0 * PI * order * f_rot * t + phase).sin();
                                }
                            }
                            if let Some((mult, cscale, route)) = bearing {
                                let f_fault = mult * f_rot;
                                let env = 1.0 + 0.8 * (2.0 * PI * f_fault * t).cos();
                                v += route[ch] * 0.8 * env * (2.0 * PI * cscale * carrier * t).sin();
                            }
                            if spec.noise_level > 0.0 {
                                v += noise.sample(&mut rng);
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            let id = format!("{}/synth_{:04}.csv", class.dir_name(), i);
            SignalWindow::new(channels, fs, class, id)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(windows)
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

/// Where the windows of a manifest come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ManifestSource {
    Directory { root: PathBuf, options: LoadOptions },
    Synthetic { spec: SynthSpec, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_id: String,
    pub label: FaultClass,
    pub fold: usize,
}

/// Persisted record of a dataset: file ids, labels, folds and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: ManifestSource,
    pub k: usize,
    pub fold_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_dataset(d: &Dataset, source: ManifestSource) -> Result<Self> {
        let folds = d.folds().ok_or(Error::NoFolds)?;
        let entries = d
            .windows()
            .iter()
            .zip(&folds.fold_of)
            .map(|(w, &fold)| ManifestEntry {
                source_id: w.source_id().to_string(),
                label: w.label(),
                fold,
            })
            .collect();
        Ok(Self {
            source,
            k: folds.k,
            fold_seed: folds.seed,
            entries,
        })
    }

    /// Loads (or regenerates) the windows and re-attaches the recorded folds.
    pub fn materialize(&self) -> Result<Dataset> {
        self.materialize_with(|w| Ok(w))
    }

    /// Like [`materialize`](Self::materialize), transforming each window as
    /// it is loaded (e.g. decimation) so full-rate data is never held at once.
    pub fn materialize_with<F>(&self, transform: F) -> Result<Dataset>
    where
        F: Fn(SignalWindow) -> Result<SignalWindow> + Sync + Send,
    {
        let d = match &self.source {
            ManifestSource::Directory { root, options } => load_directory_with(root, options, transform)?,
            ManifestSource::Synthetic { spec, seed } => {
                let windows = synth_dataset(spec, *seed)?
                    .windows()
                    .par_iter()
                    .map(|w| transform(w.clone()))
                    .collect::<Result<Vec<_>>>()?;
                Dataset::new(windows)?
            }
        };
        self.attach(d)
    }

    /// Re-attaches the recorded folds to a dataset holding the same windows.
    pub fn attach(&self, d: Dataset) -> Result<Dataset> {
        if d.len() != self.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                got: d.len(),
            });
        }
        let mut fold_of = Vec::with_capacity(d.len());
        for (w, e) in d.windows().iter().zip(&self.entries) {
            if w.source_id() != e.source_id || w.label() != e.label {
                return Err(Error::Config(format!(
                    "manifest entry {} does not match loaded window {}",
                    e.source_id,
                    w.source_id()
                )));
            }
            fold_of.push(e.fold);
        }
        d.with_folds(FoldAssignment {
            k: self.k,
            seed: self.fold_seed,
            fold_of,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }
}

impl FromStr for DatasetManifest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("manifest", e))
    }
}
