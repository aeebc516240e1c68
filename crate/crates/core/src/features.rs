//! Spectral feature catalog and feature-matrix preprocessing.
//!
//! Every channel contributes 15 scalar spectral descriptors computed on the
//! one-sided power spectrum of an untapered FFT, followed by `B` band means
//! of the FFT magnitude over equal-width bands from DC to Nyquist. Vectors
//! are concatenated channel-major, so a window with `C` channels yields
//! `C · (15 + B)` features.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{FaultClass, SignalWindow, MIN_WINDOW_LEN};

/// Variance (or standard deviation) below which a feature counts as constant.
pub const ZERO_VARIANCE_TOL: f64 = 1e-12;

pub const DEFAULT_BANDS: usize = 64;

/// Names of the scalar descriptors, in output order.
pub const SCALAR_FEATURES: [&str; 15] = [
    "spectral_centroid",
    "spectral_spread",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_entropy",
    "spectral_flatness",
    "spectral_slope",
    "spectral_decrease",
    "spectral_variation",
    "spectral_rolloff",
    "spectral_rollon",
    "median_frequency",
    "max_power_frequency",
    "fundamental_frequency",
    "power_bandwidth",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub bands: usize,
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        Self {
            bands: DEFAULT_BANDS,
        }
    }
}

impl FeatureCatalog {
    pub fn per_channel(&self) -> usize {
        SCALAR_FEATURES.len() + self.bands
    }

    pub fn dimension(&self, channels: usize) -> usize {
        channels * self.per_channel()
    }

    pub fn names(&self, channels: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dimension(channels));
        for c in 0..channels {
            for f in SCALAR_FEATURES {
                names.push(format!("ch{c}_{f}"));
            }
            for b in 0..self.bands {
                names.push(format!("ch{c}_fft_band_{b:02}"));
            }
        }
        names
    }
}

/// Feature vector of one window.
pub fn extract_features(w: &SignalWindow, cat: &FeatureCatalog) -> Result<Vec<f64>> {
    if cat.bands == 0 {
        return Err(Error::InvalidArgument("feature catalog needs at least one band".into()));
    }
    if w.n_samples() < MIN_WINDOW_LEN {
        return Err(Error::SignalTooShort {
            len: w.n_samples(),
            min: MIN_WINDOW_LEN,
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(w.n_samples());
    let mut out = Vec::with_capacity(cat.dimension(w.n_channels()));
    for ch in w.channels() {
        let mut buf: Vec<Complex64> = ch.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        channel_features(&buf, w.sampling_rate_hz(), cat.bands, &mut out);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector"));
    }
    Ok(out)
}

fn channel_features(spectrum: &[Complex64], fs: f64, bands: usize, out: &mut Vec<f64>) {
    let n = spectrum.len();
    let nb = n / 2 + 1;
    let mag: Vec<f64> = spectrum[..nb].iter().map(|z| z.norm()).collect();
    let power: Vec<f64> = mag
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            one_sided * m * m / n as f64
        })
        .collect();
    let freq: Vec<f64> = (0..nb).map(|k| k as f64 * fs / n as f64).collect();
    out.extend_from_slice(&scalar_descriptors(&power, &freq));
    out.extend(band_means(&mag, n, bands));
}

fn scalar_descriptors(p: &[f64], f: &[f64]) -> [f64; 15] {
    let total: f64 = p.iter().sum();
    let pmax = p.iter().copied().fold(0.0, f64::max);
    if !(total > 0.0) || pmax == 0.0 {
        // silent channel: flatness 1, everything else 0
        let mut z = [0.0; 15];
        z[5] = 1.0;
        return z;
    }
    let nb = p.len() as f64;
    let centroid = f.iter().zip(p).map(|(fi, pi)| fi * pi).sum::<f64>() / total;
    let moment = |k: i32| f.iter().zip(p).map(|(fi, pi)| (fi - centroid).powi(k) * pi).sum::<f64>() / total;
    let spread = moment(2).sqrt();
    let (skewness, kurtosis) = if spread > 0.0 {
        (moment(3) / spread.powi(3), moment(4) / spread.powi(4))
    } else {
        (0.0, 0.0)
    };
    let entropy = -p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let q = v / total;
            q * q.ln()
        })
        .sum::<f64>();
    let floor = f64::EPSILON * pmax;
    let log_mean = p.iter().map(|&v| (v + floor).ln()).sum::<f64>() / nb;
    let flatness = log_mean.exp() / (total / nb);

    let f_mean = f.iter().sum::<f64>() / nb;
    let p_mean = total / nb;
    let (mut sfp, mut sff) = (0.0, 0.0);
    for (fi, pi) in f.iter().zip(p) {
        sfp += (fi - f_mean) * (pi - p_mean);
        sff += (fi - f_mean).powi(2);
    }
    let slope = if sff > 0.0 { sfp / sff } else { 0.0 };

    let tail: f64 = p[1..].iter().sum();
    let decrease = if tail > 0.0 {
        p[1..]
            .iter()
            .enumerate()
            .map(|(k, v)| (v - p[0]) / (k + 1) as f64)
            .sum::<f64>()
            / tail
    } else {
        0.0
    };

    let (mut cross, mut a2, mut b2) = (0.0, 0.0, 0.0);
    for k in 1..p.len() {
        cross += p[k] * p[k - 1];
        a2 += p[k - 1] * p[k - 1];
        b2 += p[k] * p[k];
    }
    let variation = if a2 > 0.0 && b2 > 0.0 {
        1.0 - cross / (a2.sqrt() * b2.sqrt())
    } else {
        0.0
    };

    let quantile = |q: f64| -> f64 {
        let target = q * total;
        let mut acc = 0.0;
        for (k, v) in p.iter().enumerate() {
            acc += v;
            if acc >= target {
                return f[k];
            }
        }
        f[f.len() - 1]
    };
    let rolloff = quantile(0.85);
    let rollon = quantile(0.05);
    let median = quantile(0.5);
    let bandwidth = quantile(0.975) - quantile(0.025);

    let argmax = p
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > p[best] { k } else { best });
    let max_freq = f[argmax];

    let peak_floor = 0.1 * p[1..].iter().copied().fold(0.0, f64::max);
    let fundamental = (1..p.len())
        .find(|&k| {
            let left = p[k - 1];
            let right = if k + 1 < p.len() { p[k + 1] } else { f64::NEG_INFINITY };
            p[k] > 0.0 && p[k] >= peak_floor && p[k] >= left && p[k] >= right
        })
        .map_or(max_freq, |k| f[k]);

    [
        centroid, spread, skewness, kurtosis, entropy, flatness, slope, decrease, variation,
        rolloff, rollon, median, max_freq, fundamental, bandwidth,
    ]
}

/// Mean FFT magnitude in each of `bands` equal-width bands over `[0, fs/2]`.
/// A band containing no bin takes the bin nearest its centre.
fn band_means(mag: &[f64], n: usize, bands: usize) -> impl Iterator<Item = f64> + '_ {
    let nb = mag.len();
    let mut sums = vec![0.0; bands];
    let mut counts = vec![0usize; bands];
    for (k, m) in mag.iter().enumerate() {
        let b = ((2 * bands * k) / n).min(bands - 1);
        sums[b] += m;
        counts[b] += 1;
    }
    (0..bands).map(move |b| {
        if counts[b] > 0 {
            sums[b] / counts[b] as f64
        } else {
            let centre = (b as f64 + 0.5) * n as f64 / (2.0 * bands as f64);
            mag[(centre.round() as usize).min(nb - 1)]
        }
    })
}

// ---------------------------------------------------------------------------
// Feature matrix
// ---------------------------------------------------------------------------

/// Per-feature affine standardiser and the rows it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fit_rows: Vec<usize>,
}

/// Columns kept by [`drop_zero_variance`], reusable on future rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMask {
    pub kept: Vec<usize>,
    pub kept_names: Vec<String>,
    pub dropped_names: Vec<String>,
}

/// Windows × named features with labels, folds and preprocessing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    pub labels: Vec<FaultClass>,
    pub folds: Vec<usize>,
    /// Source ids of the windows, used to trace row provenance.
    pub row_ids: Vec<String>,
    pub scaler: Option<Scaler>,
}

impl FeatureMatrix {
    pub fn new(
        values: Array2<f64>,
        feature_names: Vec<String>,
        labels: Vec<FaultClass>,
        folds: Vec<usize>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if feature_names.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: feature_names.len(),
            });
        }
        for len in [labels.len(), folds.len(), row_ids.len()] {
            if len != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: len,
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        Ok(Self {
            values,
            feature_names,
            labels,
            folds,
            row_ids,
            scaler: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn label_codes(&self) -> Vec<usize> {
        self.labels.iter().map(|c| c.code()).collect()
    }

    /// Rows in the given order (metadata follows the rows).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            folds: rows.iter().map(|&r| self.folds[r]).collect(),
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            scaler: self.scaler.clone(),
        }
    }

    /// Columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), cols),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            labels: self.labels.clone(),
            folds: self.folds.clone(),
            row_ids: self.row_ids.clone(),
            scaler: self.scaler.as_ref().map(|s| Scaler {
                mean: cols.iter().map(|&c| s.mean[c]).collect(),
                std: cols.iter().map(|&c| s.std[c]).collect(),
                fit_rows: s.fit_rows.clone(),
            }),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Writes `id,<features…>,label,fold` with a header row. Values use the
    /// shortest round-trip representation, so reading back is exact.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("id");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",label,fold\n");
        for (r, row) in self.values.outer_iter().enumerate() {
            out.push_str(&self.row_ids[r]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", self.labels[r].code(), self.folds[r]);
        }
        crate::experiment::write_atomic(path, out.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let header = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
        let ncol = header.len();
        if ncol < 3 || &header[0] != "id" || &header[ncol - 2] != "label" || &header[ncol - 1] != "fold" {
            return Err(Error::parse(path, "unexpected feature cache header"));
        }
        let names: Vec<String> = header.iter().skip(1).take(ncol - 3).map(String::from).collect();
        let mut values = Vec::new();
        let (mut labels, mut folds, mut ids) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let malformed = |msg: &str| Error::Malformed {
                file: path.to_path_buf(),
                line: line + 2,
                msg: msg.to_string(),
            };
            if rec.len() != ncol {
                return Err(malformed("wrong column count"));
            }
            ids.push(rec[0].to_string());
            for field in rec.iter().skip(1).take(ncol - 3) {
                values.push(field.parse::<f64>().map_err(|_| malformed("non-numeric value"))?);
            }
            let code: usize = rec[ncol - 2].parse().map_err(|_| malformed("bad label"))?;
            labels.push(FaultClass::from_code(code).ok_or_else(|| malformed("bad label"))?);
            folds.push(rec[ncol - 1].parse().map_err(|_| malformed("bad fold"))?);
        }
        let values = Array2::from_shape_vec((ids.len(), names.len()), values)
            .map_err(|e| Error::parse(path, e))?;
        Self::new(values, names, labels, folds, ids)
    }
}

/// Extracts features for `rows` of `windows`, in parallel.
pub fn extract_matrix(
    windows: &[SignalWindow],
    folds: &[usize],
    rows: &[usize],
    cat: &FeatureCatalog,
) -> Result<FeatureMatrix> {
    let first = windows.first().ok_or(Error::EmptyDataset)?;
    let dim = cat.dimension(first.n_channels());
    let vectors = rows
        .par_iter()
        .map(|&r| extract_features(&windows[r], cat))
        .collect::<Result<Vec<_>>>()?;
    assemble(vectors, dim, first.n_channels(), cat, rows, windows, folds)
}

/// Builds a matrix from precomputed feature vectors for `rows`.
pub fn assemble(
    vectors: Vec<Vec<f64>>,
    dim: usize,
    channels: usize,
    cat: &FeatureCatalog,
    rows: &[usize],
    windows: &[SignalWindow],
    folds: &[usize],
) -> Result<FeatureMatrix> {
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for v in &vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        flat.extend_from_slice(v);
    }
    let values = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape checked");
    FeatureMatrix::new(
        values,
        cat.names(channels),
        rows.iter().map(|&r| windows[r].label()).collect(),
        rows.iter().map(|&r| folds[r]).collect(),
        rows.iter().map(|&r| windows[r].source_id().to_string()).collect(),
    )
}

fn column_stats(m: &FeatureMatrix, fit_rows: &[usize]) -> (Array1<f64>, Array1<f64>) {
    let sub = m.values.select(Axis(0), fit_rows);
    let n = fit_rows.len() as f64;
    let mean = sub.sum_axis(Axis(0)) / n;
    let mut var = Array1::zeros(m.n_features());
    for row in sub.outer_iter() {
        for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - mu) * (x - mu);
        }
    }
    (mean, var / n)
}

fn check_fit_rows(m: &FeatureMatrix, fit_rows: &[usize]) -> Result<()> {
    if fit_rows.is_empty() {
        return Err(Error::InvalidArgument("fit rows must be non-empty".into()));
    }
    if let Some(&bad) = fit_rows.iter().find(|&&r| r >= m.n_rows()) {
        return Err(Error::InvalidArgument(format!("fit row {bad} out of range")));
    }
    Ok(())
}

/// Removes features whose variance over `fit_rows` is below
/// [`ZERO_VARIANCE_TOL`]; the mask is returned for reuse on other rows.
pub fn drop_zero_variance(m: &FeatureMatrix, fit_rows: &[usize]) -> Result<(FeatureMatrix, ColumnMask)> {
    check_fit_rows(m, fit_rows)?;
    let (_, var) = column_stats(m, fit_rows);
    let (kept, dropped): (Vec<usize>, Vec<usize>) =
        (0..m.n_features()).partition(|&c| var[c] >= ZERO_VARIANCE_TOL);
    if kept.is_empty() {
        return Err(Error::AllFeaturesRemoved);
    }
    let mask = ColumnMask {
        kept_names: kept.iter().map(|&c| m.feature_names[c].clone()).collect(),
        dropped_names: dropped.iter().map(|&c| m.feature_names[c].clone()).collect(),
        kept,
    };
    Ok((m.select_columns(&mask.kept), mask))
}

impl ColumnMask {
    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        let cols = self
            .kept_names
            .iter()
            .map(|name| {
                m.column_index(name)
                    .ok_or_else(|| Error::Config(format!("feature {name} missing from matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(m.select_columns(&cols))
    }
}

/// `(x − mean) / std` with statistics from `fit_rows` only.
pub fn standardize(m: &FeatureMatrix, fit_rows: &[usize]) -> Result<FeatureMatrix> {
    check_fit_rows(m, fit_rows)?;
    let (mean, var) = column_stats(m, fit_rows);
    let std = var.mapv(f64::sqrt);
    if let Some(c) = (0..m.n_features()).find(|&c| !(std[c] >= ZERO_VARIANCE_TOL)) {
        return Err(Error::ZeroVariance {
            name: m.feature_names[c].clone(),
        });
    }
    let scaler = Scaler {
        mean: mean.to_vec(),
        std: std.to_vec(),
        fit_rows: fit_rows.to_vec(),
    };
    let mut out = apply_scaler(m, &scaler);
    out.scaler = Some(scaler);
    Ok(out)
}

/// Applies an already fitted scaler to every row of `m`.
pub fn apply_scaler(m: &FeatureMatrix, scaler: &Scaler) -> FeatureMatrix {
    let mut values = m.values.clone();
    for mut row in values.outer_iter_mut() {
        for ((v, mu), sd) in row.iter_mut().zip(&scaler.mean).zip(&scaler.std) {
            *v = (*v - mu) / sd;
        }
    }
    FeatureMatrix {
        values,
        scaler: Some(scaler.clone()),
        ..m.clone()
    }
}

/// Inverse of [`standardize`].
pub fn unstandardize(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    let scaler = m
        .scaler
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("matrix is not standardised".into()))?;
    let mut values = m.values.clone();
    for mut row in values.outer_iter_mut() {
        for ((v, mu), sd) in row.iter_mut().zip(&scaler.mean).zip(&scaler.std) {
            *v = *v * sd + mu;
        }
    }
    Ok(FeatureMatrix {
        values,
        scaler: None,
        ..m.clone()
    })
}

/// Zero-variance mask and standardiser fitted on one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub mask: ColumnMask,
    pub scaler: Scaler,
}

impl Preprocessor {
    pub fn fit(m: &FeatureMatrix, fit_rows: &[usize]) -> Result<Self> {
        let (dropped, mask) = drop_zero_variance(m, fit_rows)?;
        let scaled = standardize(&dropped, fit_rows)?;
        Ok(Self {
            mask,
            scaler: scaled.scaler.expect("standardize sets the scaler"),
        })
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        Ok(apply_scaler(&self.mask.apply(m)?, &self.scaler))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn window(ch: Vec<f64>, fs: f64) -> SignalWindow {
        SignalWindow::new(vec![ch], fs, FaultClass::Normal, "w").unwrap()
    }

    fn idx(name: &str) -> usize {
        SCALAR_FEATURES.iter().position(|f| *f == name).unwrap()
    }

    #[test]
    fn pure_tone_descriptors() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 100.0 * i as f64 / fs).sin()).collect();
        let f = extract_features(&window(x, fs), &FeatureCatalog::default()).unwrap();
        let bin = fs / 1000.0;
        assert!((f[idx("spectral_centroid")] - 100.0).abs() <= bin);
        assert!((f[idx("max_power_frequency")] - 100.0).abs() <= bin);
        assert!((f[idx("fundamental_frequency")] - 100.0).abs() <= bin);
    }

    #[test]
    fn white_noise_is_flat_and_high_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = extract_features(&window(x.clone(), 1.0), &FeatureCatalog::default()).unwrap();
        assert!(f[idx("spectral_flatness")] > 0.5);
        let bins = (4096 / 2 + 1) as f64;
        let ent = f[idx("spectral_entropy")];
        assert!((ent - bins.ln()).abs() / bins.ln() < 0.1, "entropy {ent}");

        // direct periodogram oracle for the entropy
        let mut p = vec![0.0; 2049];
        for (k, pk) in p.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / 4096.0;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let scale = if k == 0 || k == 2048 { 1.0 } else { 2.0 };
            *pk = scale * (re * re + im * im) / 4096.0;
        }
        let total: f64 = p.iter().sum();
        let oracle = -p.iter().map(|v| v / total).map(|q| q * q.ln()).sum::<f64>();
        assert!((oracle - ent).abs() < 1e-9);
    }

    #[test]
    fn silent_channel_uses_conventions() {
        let cat = FeatureCatalog::default();
        let f = extract_features(&window(vec![0.0; 64], 100.0), &cat).unwrap();
        assert_eq!(f.len(), cat.per_channel());
        assert!(f.iter().all(|v| v.is_finite()));
        assert_eq!(f[idx("spectral_centroid")], 0.0);
        assert_eq!(f[idx("spectral_entropy")], 0.0);
        assert_eq!(f[idx("spectral_flatness")], 1.0);
    }

    #[test]
    fn dimension_and_names() {
        let cat = FeatureCatalog::default();
        assert_eq!(cat.dimension(6), 474);
        let names = cat.names(6);
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        // fewer bins than bands still gives full-length, finite vectors
        let w = SignalWindow::new(vec![vec![1.0; 40]; 6], 10.0, FaultClass::Normal, "s").unwrap();
        let f = extract_features(&w, &cat).unwrap();
        assert_eq!(f.len(), 474);
    }

    fn toy_matrix(values: Array2<f64>) -> FeatureMatrix {
        let rows = values.nrows();
        let cols = values.ncols();
        FeatureMatrix::new(
            values,
            (0..cols).map(|c| format!("f{c}")).collect(),
            vec![FaultClass::Normal; rows],
            vec![0; rows],
            (0..rows).map(|r| format!("r{r}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_column_dropped() {
        let m = toy_matrix(array![[1.0, 5.0, 2.0], [2.0, 5.0, 3.0], [3.0, 5.0, 7.0]]);
        let (out, mask) = drop_zero_variance(&m, &[0, 1, 2]).unwrap();
        assert_eq!(out.feature_names, vec!["f0", "f2"]);
        assert_eq!(mask.dropped_names, vec!["f1"]);
        let m2 = toy_matrix(array![[1.0, 4.0], [2.0, 3.0]]);
        let (out2, _) = drop_zero_variance(&m2, &[0, 1]).unwrap();
        assert_eq!(out2, m2);
    }

    #[test]
    fn mask_fitted_on_subset_is_reused() {
        // f1 is constant on rows 0..2 but varies on row 2
        let m = toy_matrix(array![[1.0, 5.0], [2.0, 5.0], [3.0, 9.0]]);
        let (out, mask) = drop_zero_variance(&m, &[0, 1]).unwrap();
        assert_eq!(out.feature_names, vec!["f0"]);
        assert_eq!(out.n_rows(), 3);
        let again = mask.apply(&m).unwrap();
        assert_eq!(again.feature_names, vec!["f0"]);
    }

    #[test]
    fn all_constant_is_an_error() {
        let m = toy_matrix(array![[1.0, 5.0], [1.0, 5.0]]);
        assert!(matches!(drop_zero_variance(&m, &[0, 1]), Err(Error::AllFeaturesRemoved)));
    }

    #[test]
    fn standardize_all_rows() {
        let m = toy_matrix(array![[1.0, 10.0], [2.0, 30.0], [4.0, 20.0], [9.0, 0.0]]);
        let s = standardize(&m, &[0, 1, 2, 3]).unwrap();
        for col in s.values.columns() {
            let mean = col.mean().unwrap();
            let std = (col.mapv(|v| (v - mean).powi(2)).sum() / 4.0).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((std - 1.0).abs() < 1e-9);
        }
        let back = unstandardize(&s).unwrap();
        for (a, b) in back.values.iter().zip(m.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_has_no_test_leakage() {
        // test rows are shifted: fitted on rows 0..4, applied to all
        let m = toy_matrix(array![[0.0], [1.0], [2.0], [3.0], [10.0], [11.0]]);
        let s = standardize(&m, &[0, 1, 2, 3]).unwrap();
        let test_mean = (s.values[[4, 0]] + s.values[[5, 0]]) / 2.0;
        assert!(test_mean.abs() > 1.0);
        assert_eq!(s.scaler.as_ref().unwrap().fit_rows, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_row_fit_fails() {
        let m = toy_matrix(array![[0.0], [1.0]]);
        assert!(standardize(&m, &[0]).is_err());
        assert!(standardize(&m, &[]).is_err());
    }
}
