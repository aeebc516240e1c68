//! Paired comparison of two configurations through their per-entry,
//! per-class absolute errors.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX_PAIRS: usize = 25;
pub const DEFAULT_BOOTSTRAP: usize = 10_000;

/// Flattened `|p_c − y_c|`, entry-major and class-minor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector {
    pub ids: Vec<String>,
    pub n_classes: usize,
    pub values: Vec<f64>,
}

impl ErrorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

pub fn error_vectors(proba: ArrayView2<f64>, labels: &[usize], ids: &[String]) -> Result<ErrorVector> {
    let (n, k) = proba.dim();
    for len in [labels.len(), ids.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut values = Vec::with_capacity(n * k);
    for (row, &c) in proba.outer_iter().zip(labels) {
        if c >= k {
            return Err(Error::InvalidArgument(format!("label {c} outside {k} classes")));
        }
        values.extend(row.iter().enumerate().map(|(j, p)| (p - f64::from(u8::from(j == c))).abs()));
    }
    Ok(ErrorVector {
        ids: ids.to_vec(),
        n_classes: k,
        values,
    })
}

fn check_paired(alt: &ErrorVector, null: &ErrorVector) -> Result<()> {
    if alt.values.len() != null.values.len() {
        return Err(Error::DimensionMismatch {
            expected: null.values.len(),
            got: alt.values.len(),
        });
    }
    if alt.ids != null.ids || alt.n_classes != null.n_classes {
        return Err(Error::InvalidArgument("error vectors are not paired by entry id".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroMethod {
    /// Discard zero differences before ranking.
    #[default]
    Wilcox,
    /// Rank zeros with the rest, then drop their ranks.
    Pratt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Sum of the ranks of positive differences.
    pub statistic: f64,
    pub n_nonzero: usize,
    pub method: WilcoxonMethod,
}

/// Average ranks (1-based) of `values`.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Ranks of the non-zero |d| and whether each difference is positive.
fn signed_ranks(d: &[f64], zero: ZeroMethod) -> (Vec<f64>, Vec<bool>) {
    match zero {
        ZeroMethod::Wilcox => {
            let nz: Vec<f64> = d.iter().copied().filter(|&v| v != 0.0).collect();
            let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
            (average_ranks(&abs), nz.iter().map(|&v| v > 0.0).collect())
        }
        ZeroMethod::Pratt => {
            let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
            let all = average_ranks(&abs);
            d.iter()
                .zip(all)
                .filter(|(v, _)| **v != 0.0)
                .map(|(v, r)| (r, *v > 0.0))
                .unzip()
        }
    }
}

/// One-tailed signed-rank test of `H1: median(d) < 0` on differences `d`.
/// Exact for up to [`EXACT_MAX_PAIRS`] non-zero differences, normal
/// approximation above.
pub fn wilcoxon_signed_rank(d: &[f64], zero: ZeroMethod) -> WilcoxonResult {
    let m = signed_ranks(d, zero).0.len();
    let method = if m <= EXACT_MAX_PAIRS {
        WilcoxonMethod::Exact
    } else {
        WilcoxonMethod::Normal
    };
    wilcoxon_signed_rank_by(d, zero, method)
}

/// As [`wilcoxon_signed_rank`] with the tail computation forced.
pub fn wilcoxon_signed_rank_by(d: &[f64], zero: ZeroMethod, method: WilcoxonMethod) -> WilcoxonResult {
    let (ranks, signs) = signed_ranks(d, zero);
    let m = ranks.len();
    if m == 0 || method == WilcoxonMethod::Degenerate {
        return WilcoxonResult {
            p_value: 1.0,
            statistic: 0.0,
            n_nonzero: m,
            method: WilcoxonMethod::Degenerate,
        };
    }
    let w: f64 = ranks.iter().zip(&signs).filter(|(_, &pos)| pos).map(|(r, _)| r).sum();
    // sign-assignment counts are u64
    let method = if m > 62 { WilcoxonMethod::Normal } else { method };
    let p_value = match method {
        WilcoxonMethod::Exact => exact_lower_tail(&ranks, w),
        _ => normal_lower_tail(&ranks, w),
    };
    WilcoxonResult {
        p_value: p_value.clamp(0.0, 1.0),
        statistic: w,
        n_nonzero: m,
        method,
    }
}

/// `P(W ≤ w)` over all `2^m` equally likely sign assignments.
fn exact_lower_tail(ranks: &[f64], w: f64) -> f64 {
    // doubled ranks are integers even with average ties
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let target = (2.0 * w).round() as usize;
    let hits: u64 = counts[..=target.min(total)].iter().sum();
    hits as f64 / 2f64.powi(ranks.len() as i32)
}

fn normal_lower_tail(ranks: &[f64], w: f64) -> f64 {
    let m = ranks.len() as f64;
    let mean = m * (m + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = m * (m + 1.0) * (2.0 * m + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w - mean + 0.5) / var.sqrt();
    Normal::standard().cdf(z)
}

pub fn wilcoxon_one_tailed(alt: &ErrorVector, null: &ErrorVector) -> Result<WilcoxonResult> {
    wilcoxon_with(alt, null, ZeroMethod::default())
}

pub fn wilcoxon_with(alt: &ErrorVector, null: &ErrorVector, zero: ZeroMethod) -> Result<WilcoxonResult> {
    check_paired(alt, null)?;
    let d: Vec<f64> = alt.values.iter().zip(&null.values).map(|(a, b)| a - b).collect();
    let r = wilcoxon_signed_rank(&d, zero);
    if r.method == WilcoxonMethod::Degenerate {
        log::warn!("all paired differences are zero; p-value set to 1");
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Effect size
// ---------------------------------------------------------------------------

fn gav_raw(alt: &[f64], null: &[f64]) -> Result<f64> {
    let n = alt.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("g_av needs at least 3 pairs, got {n}")));
    }
    let (sa, sn) = (sample_sd(alt), sample_sd(null));
    if sa < 1e-12 && sn < 1e-12 {
        return Err(Error::DegenerateVariance);
    }
    let d_av = (mean(null) - mean(alt)) / ((sa + sn) / 2.0);
    let j = 1.0 - 3.0 / (4.0 * (n as f64 - 1.0) - 1.0);
    Ok(d_av * j)
}

/// Hedges' g_av; positive when `alt` has the lower mean error.
pub fn hedges_gav(alt: &ErrorVector, null: &ErrorVector) -> Result<f64> {
    check_paired(alt, null)?;
    gav_raw(&alt.values, &null.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
    pub level: f64,
    pub n_boot: usize,
    /// Resamples skipped because both groups had zero variance.
    pub skipped: usize,
}

/// Percentile at `q ∈ [0, 1]` with linear interpolation between order statistics.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Paired percentile bootstrap of g_av. Resample `b` draws from its own
/// ChaCha stream, so the result does not depend on thread scheduling.
pub fn bootstrap_ci(alt: &ErrorVector, null: &ErrorVector, level: f64, n_boot: usize, seed: u64) -> Result<BootstrapCi> {
    check_paired(alt, null)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("CI level must be in (0, 1), got {level}")));
    }
    let n = alt.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 10 pairs, got {n}")));
    }
    if n_boot < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 resamples".into()));
    }
    let draws: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let (mut a, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let i = rng.random_range(0..n);
                a.push(alt.values[i]);
                z.push(null.values[i]);
            }
            gav_raw(&a, &z).ok()
        })
        .collect();
    let mut values: Vec<f64> = draws.iter().flatten().copied().collect();
    let skipped = n_boot - values.len();
    if values.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lower = percentile(&values, tail);
    let upper = percentile(&values, 1.0 - tail);
    Ok(BootstrapCi {
        lower,
        upper,
        half_width: (upper - lower) / 2.0,
        level,
        n_boot,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bonferroni {
    pub alpha: f64,
    pub n_tests: usize,
    pub alpha_corrected: f64,
    pub ci_level: f64,
}

pub fn bonferroni(alpha: f64, n_tests: usize) -> Result<Bonferroni> {
    if !(alpha > 0.0 && alpha < 1.0) || n_tests == 0 {
        return Err(Error::InvalidArgument(format!(
            "bonferroni needs alpha in (0, 1) and n_tests >= 1, got {alpha} and {n_tests}"
        )));
    }
    let alpha_corrected = alpha / n_tests as f64;
    Ok(Bonferroni {
        alpha,
        n_tests,
        alpha_corrected,
        ci_level: 1.0 - alpha_corrected,
    })
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub p_value: f64,
    pub test_statistic: f64,
    pub wilcoxon_method: WilcoxonMethod,
    pub n_pairs: usize,
    pub n_nonzero: usize,
    /// `None` when both groups have zero variance.
    pub g_av: Option<f64>,
    pub ci_half_width: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_level: f64,
    pub mae_alt: f64,
    pub mae_null: f64,
    pub median_alt: f64,
    pub median_null: f64,
    pub sd_alt: f64,
    pub sd_null: f64,
    pub alpha: f64,
    pub alpha_corrected: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub alpha: f64,
    pub n_tests: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub zero_method: ZeroMethod,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_tests: 1,
            n_boot: DEFAULT_BOOTSTRAP,
            seed: 0,
            zero_method: ZeroMethod::Wilcox,
        }
    }
}

/// Full paired comparison: Wilcoxon, g_av with a Bonferroni-level bootstrap
/// CI, and group summaries.
pub fn compare(alt: &ErrorVector, null: &ErrorVector, opts: &CompareOptions) -> Result<StatReport> {
    let bonf = bonferroni(opts.alpha, opts.n_tests)?;
    let w = wilcoxon_with(alt, null, opts.zero_method)?;
    let (g_av, ci) = match hedges_gav(alt, null) {
        Ok(g) => {
            let ci = bootstrap_ci(alt, null, bonf.ci_level, opts.n_boot, opts.seed)?;
            (Some(g), ci)
        }
        Err(Error::DegenerateVariance) => (
            None,
            BootstrapCi {
                lower: 0.0,
                upper: 0.0,
                half_width: 0.0,
                level: bonf.ci_level,
                n_boot: 0,
                skipped: 0,
            },
        ),
        Err(e) => return Err(e),
    };
    Ok(StatReport {
        p_value: w.p_value,
        test_statistic: w.statistic,
        wilcoxon_method: w.method,
        n_pairs: alt.len(),
        n_nonzero: w.n_nonzero,
        g_av,
        ci_half_width: ci.half_width,
        ci_lower: ci.lower,
        ci_upper: ci.upper,
        ci_level: bonf.ci_level,
        mae_alt: alt.mean(),
        mae_null: null.mean(),
        median_alt: median(&alt.values),
        median_null: median(&null.values),
        sd_alt: sample_sd(&alt.values),
        sd_null: sample_sd(&null.values),
        alpha: opts.alpha,
        alpha_corrected: bonf.alpha_corrected,
        significant: w.p_value < bonf.alpha_corrected,
    })
}
