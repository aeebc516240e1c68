#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vibropt::features::FeatureMatrix;
use vibropt::signal_io::{FaultClass, SignalWindow};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma).powi(2);
        bb += (y - mb).powi(2);
    }
    ab / (aa * bb).sqrt()
}

pub fn sine(n: usize, fs: f64, f: f64, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
        .collect()
}

/// Naive one-sided periodogram `|X_k|²`, independent of the crate's FFT path.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

pub fn window(channels: Vec<Vec<f64>>, fs: f64, label: FaultClass, id: &str) -> SignalWindow {
    SignalWindow::new(channels, fs, label, id).unwrap()
}

/// `n` rows of `p` columns with labels cycling through `classes`.
pub fn matrix(values: Array2<f64>, labels: Vec<FaultClass>) -> FeatureMatrix {
    let (n, p) = values.dim();
    FeatureMatrix::new(
        values,
        (0..p).map(|j| format!("f{j:03}")).collect(),
        labels,
        vec![0; n],
        (0..n).map(|i| format!("row{i:04}")).collect(),
    )
    .unwrap()
}

pub fn cycle_labels(n: usize, classes: usize) -> Vec<FaultClass> {
    (0..n).map(|i| FaultClass::ALL[i % classes]).collect()
}
