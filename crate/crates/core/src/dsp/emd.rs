//! Empirical mode decomposition by envelope-mean sifting.
//!
//! Envelopes are natural cubic splines through the local extrema of the
//! signal after whole-sample mirror extension at both ends. Sifting stops on
//! the Cauchy-type criterion `Σ(h_prev − h)² / Σ h_prev² < sd_threshold` or
//! after `max_sift_iters`; decomposition stops when the residual has fewer
//! than four extrema or `max_imfs` IMFs have been extracted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_EMD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmdConfig {
    /// First IMF (0-based) kept by [`emd_filter`].
    pub imf_lower: usize,
    /// Last IMF kept (inclusive); `None` keeps every IMF and the residual.
    pub imf_upper: Option<usize>,
    pub max_imfs: usize,
    pub sift_sd_threshold: f64,
    pub max_sift_iters: usize,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self {
            imf_lower: 0,
            imf_upper: None,
            max_imfs: 10,
            sift_sd_threshold: 0.2,
            max_sift_iters: 50,
        }
    }
}

impl EmdConfig {
    pub fn band(imf_lower: usize, imf_upper: Option<usize>) -> Self {
        Self {
            imf_lower,
            imf_upper,
            ..Self::default()
        }
    }

    /// Maps the "second largest" upper bound onto a concrete IMF index.
    pub fn second_largest_upper(&self) -> usize {
        self.max_imfs.saturating_sub(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_imfs == 0 {
            return Err(Error::InvalidArgument("max_imfs must be >= 1".into()));
        }
        if let Some(upper) = self.imf_upper {
            if upper < self.imf_lower {
                return Err(Error::InvalidArgument(format!(
                    "IMF upper bound {upper} below lower bound {}",
                    self.imf_lower
                )));
            }
        }
        if !(self.sift_sd_threshold > 0.0) || self.max_sift_iters == 0 {
            return Err(Error::InvalidArgument("invalid sifting stop criteria".into()));
        }
        Ok(())
    }
}

/// IMFs (highest frequency first) and the final residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

/// Output of a band selection; `empty_band` is set when the requested lower
/// bound lies beyond the IMFs actually produced.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSignal {
    pub values: Vec<f64>,
    pub empty_band: bool,
}

impl Decomposition {
    pub fn n_imfs(&self) -> usize {
        self.imfs.len()
    }

    /// Sum of IMFs `lower..=upper`. With `upper == None` the residual is
    /// included, so `(0, None)` reproduces the input.
    pub fn band(&self, lower: usize, upper: Option<usize>) -> BandSignal {
        let n = self.residual.len();
        if lower == 0 && upper.is_none() {
            let mut values = self.residual.clone();
            for imf in &self.imfs {
                add_assign(&mut values, imf);
            }
            return BandSignal {
                values,
                empty_band: false,
            };
        }
        if lower >= self.imfs.len() {
            return BandSignal {
                values: vec![0.0; n],
                empty_band: true,
            };
        }
        let last = upper.map_or(self.imfs.len() - 1, |u| u.min(self.imfs.len() - 1));
        let mut values = vec![0.0; n];
        for imf in &self.imfs[lower..=last] {
            add_assign(&mut values, imf);
        }
        if upper.is_none() {
            add_assign(&mut values, &self.residual);
        }
        BandSignal {
            values,
            empty_band: false,
        }
    }
}

fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn check_input(x: &[f64]) -> Result<()> {
    if x.len() < MIN_EMD_LEN {
        return Err(Error::SignalTooShort {
            len: x.len(),
            min: MIN_EMD_LEN,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("EMD input"));
    }
    Ok(())
}

pub fn emd_decompose(x: &[f64], cfg: &EmdConfig) -> Result<Decomposition> {
    check_input(x)?;
    cfg.validate()?;
    let mut residual = x.to_vec();
    let mut imfs = Vec::new();
    while imfs.len() < cfg.max_imfs {
        let (maxima, minima) = extrema(&residual);
        if maxima.len() + minima.len() < 4 {
            break;
        }
        let Some(imf) = sift(&residual, cfg) else {
            break;
        };
        for (r, h) in residual.iter_mut().zip(&imf) {
            *r -= h;
        }
        imfs.push(imf);
    }
    Ok(Decomposition { imfs, residual })
}

impl EmdConfig {
    /// Whether the band keeps every IMF and the residual, i.e. the input.
    pub fn is_identity(&self) -> bool {
        self.imf_lower == 0 && self.imf_upper.is_none()
    }
}

/// The input unchanged when the band is the identity, after the same checks
/// a decomposition would make.
pub(crate) fn identity_band(x: &[f64], cfg: &EmdConfig) -> Result<Option<BandSignal>> {
    if !cfg.is_identity() {
        return Ok(None);
    }
    check_input(x)?;
    cfg.validate()?;
    Ok(Some(BandSignal {
        values: x.to_vec(),
        empty_band: false,
    }))
}

pub fn emd_filter(x: &[f64], cfg: &EmdConfig) -> Result<BandSignal> {
    if let Some(out) = identity_band(x, cfg)? {
        return Ok(out);
    }
    let d = emd_decompose(x, cfg)?;
    let out = d.band(cfg.imf_lower, cfg.imf_upper);
    if out.empty_band {
        log::warn!(
            "EMD band starts at IMF {} but only {} IMFs were produced; returning zeros",
            cfg.imf_lower,
            d.n_imfs()
        );
    }
    Ok(out)
}

/// Extracts one IMF candidate from `x`, or `None` when no envelope can be
/// built.
fn sift(x: &[f64], cfg: &EmdConfig) -> Option<Vec<f64>> {
    let mut h = x.to_vec();
    let mut mean = vec![0.0; x.len()];
    for iter in 0..cfg.max_sift_iters {
        if !envelope_mean(&h, &mut mean) {
            return if iter == 0 { None } else { Some(h) };
        }
        let energy: f64 = h.iter().map(|v| v * v).sum();
        let change: f64 = mean.iter().map(|m| m * m).sum();
        for (hv, m) in h.iter_mut().zip(&mean) {
            *hv -= m;
        }
        if energy == 0.0 || change / energy < cfg.sift_sd_threshold {
            break;
        }
    }
    Some(h)
}

/// Indices of local maxima and minima. Flat runs count once, at their
/// centre, and maxima and minima strictly alternate.
pub fn extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let n = x.len();
    if n < 3 {
        return (maxima, minima);
    }
    // direction of the last strict change: +1 rising, -1 falling
    let mut dir = 0i8;
    let mut run_start = 0;
    for i in 1..n {
        if x[i] == x[i - 1] {
            continue;
        }
        let new_dir = if x[i] > x[i - 1] { 1 } else { -1 };
        if dir != 0 && new_dir != dir {
            // the run x[run_start..i] is the turning point
            let centre = (run_start + i - 1) / 2;
            if dir == 1 {
                maxima.push(centre);
            } else {
                minima.push(centre);
            }
        }
        dir = new_dir;
        run_start = i;
    }
    (maxima, minima)
}

/// Writes the mean of the upper and lower spline envelopes into `out`.
/// Returns false when either envelope has fewer than two knots.
fn envelope_mean(h: &[f64], out: &mut [f64]) -> bool {
    let n = h.len();
    let (maxima, minima) = extrema(h);
    if maxima.len() + minima.len() < 2 {
        return false;
    }
    // reflect far enough to pick up at least four extrema past each edge
    let mut all: Vec<usize> = maxima.iter().chain(&minima).copied().collect();
    all.sort_unstable();
    let left = if all.len() >= 4 { all[3] + 1 } else { n - 1 };
    let right = if all.len() >= 4 {
        n - all[all.len() - 4]
    } else {
        n - 1
    };
    let left = left.min(n - 1);
    let right = right.min(n - 1);

    let mut ext = Vec::with_capacity(n + left + right);
    ext.extend((1..=left).rev().map(|k| h[k]));
    ext.extend_from_slice(h);
    ext.extend((1..=right).map(|k| h[n - 1 - k]));
    let (emax, emin) = extrema(&ext);
    if emax.len() < 2 || emin.len() < 2 {
        return false;
    }
    let offset = left as f64;
    let knots = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        (
            idx.iter().map(|&i| i as f64 - offset).collect(),
            idx.iter().map(|&i| ext[i]).collect(),
        )
    };
    let (tu, yu) = knots(&emax);
    let (tl, yl) = knots(&emin);
    let upper = NaturalSpline::new(&tu, &yu);
    let lower = NaturalSpline::new(&tl, &yl);
    upper.eval_grid(out);
    let mut tmp = vec![0.0; n];
    lower.eval_grid(&mut tmp);
    for (o, l) in out.iter_mut().zip(&tmp) {
        *o = 0.5 * (*o + l);
    }
    true
}

/// Natural cubic spline through strictly increasing knots.
struct NaturalSpline<'a> {
    t: &'a [f64],
    y: &'a [f64],
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl<'a> NaturalSpline<'a> {
    fn new(t: &'a [f64], y: &'a [f64]) -> Self {
        let k = t.len();
        let mut m = vec![0.0; k];
        if k > 2 {
            // tridiagonal system for interior second derivatives (Thomas)
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 1..k - 1 {
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 2..k - 1 {
                let lower = t[i] - t[i - 1];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k - 2] = rhs[k - 2] / diag[k - 2];
            for i in (1..k - 2).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Self { t, y, m }
    }

    /// Evaluates at 0, 1, …, out.len()-1. Knots must bracket that range.
    fn eval_grid(&self, out: &mut [f64]) {
        let t = self.t;
        let mut seg = 0;
        for (i, o) in out.iter_mut().enumerate() {
            let x = i as f64;
            while seg + 2 < t.len() && x > t[seg + 1] {
                seg += 1;
            }
            let (t0, t1) = (t[seg], t[seg + 1]);
            let h = t1 - t0;
            let a = (t1 - x) / h;
            let b = (x - t0) / h;
            *o = a * self.y[seg]
                + b * self.y[seg + 1]
                + ((a * a * a - a) * self.m[seg] + (b * b * b - b) * self.m[seg + 1]) * h * h / 6.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    fn two_tone() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let fs = 1000.0;
        let slow: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 5.0 * i as f64 / fs).sin()).collect();
        let fast: Vec<f64> = (0..1000).map(|i| (2.0 * PI * 80.0 * i as f64 / fs).sin()).collect();
        let x = slow.iter().zip(&fast).map(|(a, b)| a + b).collect();
        (x, slow, fast)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
        num / den
    }

    #[test]
    fn ramp_has_no_imfs() {
        let x: Vec<f64> = (0..64).map(|i| i as f64 * 0.5).collect();
        let d = emd_decompose(&x, &EmdConfig::default()).unwrap();
        assert_eq!(d.n_imfs(), 0);
        assert_eq!(d.residual, x);
    }

    #[test]
    fn constant_input_is_not_an_error() {
        let x = vec![3.0; 32];
        let d = emd_decompose(&x, &EmdConfig::default()).unwrap();
        assert_eq!(d.n_imfs(), 0);
        assert_eq!(d.residual, x);
        let f = emd_filter(&x, &EmdConfig::default()).unwrap();
        assert_eq!(f.values, x);
    }

    #[test]
    fn separates_two_tones() {
        let (x, slow, fast) = two_tone();
        let d = emd_decompose(&x, &EmdConfig::default()).unwrap();
        assert!(d.n_imfs() >= 2);
        let r1 = pearson(&d.imfs[0], &fast);
        let r2 = pearson(&d.imfs[1], &slow);
        assert!(r1.abs() > 0.95, "IMF1 vs 80 Hz: {r1}");
        assert!(r2.abs() > 0.95, "IMF2 vs 5 Hz: {r2}");
    }

    #[test]
    fn full_band_is_identity() {
        let (x, _, _) = two_tone();
        let f = emd_filter(&x, &EmdConfig::band(0, None)).unwrap();
        assert!(!f.empty_band);
        assert!(rel_err(&f.values, &x) < 1e-9);
    }

    #[test]
    fn first_imf_band_keeps_fast_tone() {
        let (x, _, fast) = two_tone();
        let f = emd_filter(&x, &EmdConfig::band(0, Some(0))).unwrap();
        assert!(pearson(&f.values, &fast) > 0.9);
    }

    #[test]
    fn empty_band_returns_zeros_with_flag() {
        let (x, _, _) = two_tone();
        let cfg = EmdConfig {
            max_imfs: 3,
            ..EmdConfig::band(5, None)
        };
        let f = emd_filter(&x, &cfg).unwrap();
        assert!(f.empty_band);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(EmdConfig::band(3, Some(2)).validate().is_err());
        assert!(EmdConfig { max_imfs: 0, ..EmdConfig::default() }.validate().is_err());
        assert_eq!(EmdConfig::default().second_largest_upper(), 8);
        assert!(emd_decompose(&[1.0; 8], &EmdConfig::default()).is_err());
    }

    #[test]
    fn extrema_handles_plateaus() {
        let x = [0.0, 1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 0.0, 2.0, 2.0, 3.0];
        let (mx, mn) = extrema(&x);
        assert_eq!(mx, vec![2]);
        assert_eq!(mn, vec![5]);
    }

    #[test]
    fn spline_reproduces_cubic_interior() {
        // natural spline through a straight line is the line itself
        let t = [0.0, 2.0, 5.0, 9.0];
        let y = [1.0, 5.0, 11.0, 19.0];
        let s = NaturalSpline::new(&t, &y);
        let mut out = vec![0.0; 10];
        s.eval_grid(&mut out);
        for (i, v) in out.iter().enumerate() {
            assert!((v - (1.0 + 2.0 * i as f64)).abs() < 1e-12);
        }
    }
}
