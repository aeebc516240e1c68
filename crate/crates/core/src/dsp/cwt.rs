//! Dyadic continuous wavelet transform and band-limited reconstruction.
//!
//! Coefficients are computed at scales `s = 2^j`, `j = 0..=9`, by linear
//! convolution with the sampled, `1/√s`-normalised analysing wavelet (done
//! through zero-padded FFTs). A band `[2^lo, 2^hi]` is reconstructed by
//! summing per-scale contributions:
//!
//! * Morlet (complex, `ω₀ = 6`): `C · ln2 · Re W(s, t) / √s`, the usual
//!   single-integral inverse.
//! * Gaussian (first derivative of a Gaussian, real and odd): the single
//!   integral of a real odd wavelet returns a quadrature (Hilbert-like)
//!   signal, so each scale is instead re-synthesised by convolving the
//!   coefficients with the wavelet again, `C · ln2 · (W ∗ ψ_s)(t) / s`.
//!
//! `C` is a per-wavelet constant calibrated by least squares against a unit
//! sinusoid at the centre frequency of scale `2^4`; see
//! [`calibrate_reconstruction`] and the `calibrate_cwt` example.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest scale exponent computed (`2^9 = 512`).
pub const MAX_SCALE_EXP: u32 = 9;

/// Morlet centre frequency parameter.
pub const MORLET_OMEGA0: f64 = 6.0;

/// Wavelet support half-width in units of the scale.
const SUPPORT: f64 = 4.0;

/// Scale exponent whose centre frequency is used for calibration.
const CALIBRATION_SCALE_EXP: u32 = 4;

/// Reconstruction constants produced by `cargo run --example calibrate_cwt`.
pub const MORLET_RECON_CONSTANT: f64 = 0.5449890471162003;
pub const GAUSSIAN_RECON_CONSTANT: f64 = 0.2850960901556759;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Morlet,
    Gaussian,
}

impl WaveletKind {
    pub const ALL: [WaveletKind; 2] = [WaveletKind::Morlet, WaveletKind::Gaussian];

    pub fn short_name(self) -> &'static str {
        match self {
            WaveletKind::Morlet => "morl",
            WaveletKind::Gaussian => "gaus",
        }
    }

    pub fn recon_constant(self) -> f64 {
        match self {
            WaveletKind::Morlet => MORLET_RECON_CONSTANT,
            WaveletKind::Gaussian => GAUSSIAN_RECON_CONSTANT,
        }
    }

    /// Angular frequency (rad/sample) where scale `s` responds most.
    pub fn centre_omega(self, scale: f64) -> f64 {
        match self {
            WaveletKind::Morlet => MORLET_OMEGA0 / scale,
            WaveletKind::Gaussian => 1.0 / scale,
        }
    }

    /// Mother wavelet at `t` (complex conjugate not applied).
    fn mother(self, t: f64) -> Complex64 {
        let g = (-0.5 * t * t).exp();
        match self {
            WaveletKind::Morlet => {
                let norm = PI.powf(-0.25);
                Complex64::from_polar(norm * g, MORLET_OMEGA0 * t)
            }
            WaveletKind::Gaussian => {
                let norm = (2.0 / PI.sqrt()).sqrt();
                Complex64::new(-norm * t * g, 0.0)
            }
        }
    }
}

impl fmt::Display for WaveletKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for WaveletKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "morl" | "morlet" => Ok(WaveletKind::Morlet),
            "gaus" | "gaussian" | "gaus1" => Ok(WaveletKind::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown wavelet {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub scale_lower_exp: u32,
    pub scale_upper_exp: u32,
    pub kind: WaveletKind,
}

impl WaveletConfig {
    pub fn new(scale_lower_exp: u32, scale_upper_exp: u32, kind: WaveletKind) -> Self {
        Self {
            scale_lower_exp,
            scale_upper_exp,
            kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_lower_exp > self.scale_upper_exp || self.scale_upper_exp > MAX_SCALE_EXP {
            return Err(Error::InvalidArgument(format!(
                "invalid wavelet scale band 2^{}..2^{} (max 2^{MAX_SCALE_EXP})",
                self.scale_lower_exp, self.scale_upper_exp
            )));
        }
        Ok(())
    }
}

/// Per-scale reconstruction contributions for scales `2^0 ..= 2^9`.
///
/// Summing any contiguous range reconstructs that band; [`cwt_filter`] is
/// exactly such a sum, so band selection from cached components is
/// bit-identical to filtering from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct CwtComponents {
    pub kind: WaveletKind,
    pub per_scale: Vec<Vec<f64>>,
    /// Set when at least one wavelet was longer than the signal and had to
    /// be cut to the signal extent.
    pub truncated: bool,
}

impl CwtComponents {
    pub fn band(&self, lower_exp: u32, upper_exp: u32) -> Vec<f64> {
        let n = self.per_scale[0].len();
        let mut out = vec![0.0; n];
        for comp in &self.per_scale[lower_exp as usize..=upper_exp as usize] {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += c;
            }
        }
        out
    }
}

fn check_input(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::SignalTooShort { len: 0, min: 1 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CWT input"));
    }
    Ok(())
}

/// Raw coefficients `W(2^j, t)` for `j = 0..=9`.
pub fn cwt_coefficients(x: &[f64], kind: WaveletKind) -> Result<Vec<Vec<Complex64>>> {
    check_input(x)?;
    let plan = ConvPlan::new(x.len());
    let spectrum = plan.forward_real(x);
    Ok((0..=MAX_SCALE_EXP)
        .map(|j| {
            let kernel = plan.analysis_kernel(kind, j);
            plan.convolve(&spectrum, &kernel.spectrum)
        })
        .collect())
}

/// Reconstruction contributions of every dyadic scale.
pub fn cwt_components(x: &[f64], kind: WaveletKind) -> Result<CwtComponents> {
    components_with_constant(x, kind, kind.recon_constant())
}

fn components_with_constant(x: &[f64], kind: WaveletKind, c: f64) -> Result<CwtComponents> {
    check_input(x)?;
    let n = x.len();
    let plan = ConvPlan::new(n);
    let spectrum = plan.forward_real(x);
    let mut truncated = false;
    let per_scale = (0..=MAX_SCALE_EXP)
        .map(|j| {
            let s = f64::from(1u32 << j);
            let kernel = plan.analysis_kernel(kind, j);
            truncated |= kernel.truncated;
            let w = plan.convolve(&spectrum, &kernel.spectrum);
            match kind {
                WaveletKind::Morlet => {
                    let gain = c * LN_2 / s.sqrt();
                    w.iter().map(|z| gain * z.re).collect()
                }
                WaveletKind::Gaussian => {
                    let re: Vec<f64> = w.iter().map(|z| z.re).collect();
                    let ws = plan.forward_real(&re);
                    let synth = plan.synthesis_kernel(kind, j);
                    let y = plan.convolve(&ws, &synth.spectrum);
                    let gain = c * LN_2 / s;
                    y.iter().map(|z| gain * z.re).collect()
                }
            }
        })
        .collect();
    if truncated {
        log::debug!("wavelet support exceeds signal length {n}; kernels cut to the signal extent");
    }
    Ok(CwtComponents {
        kind,
        per_scale,
        truncated,
    })
}

/// Band-limited CWT reconstruction over scales `2^lo ..= 2^hi`.
pub fn cwt_filter(x: &[f64], cfg: &WaveletConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let comps = cwt_components(x, cfg.kind)?;
    Ok(comps.band(cfg.scale_lower_exp, cfg.scale_upper_exp))
}

/// Least-squares reconstruction constant for `kind`: the full-band output
/// with `C = 1` is regressed onto a unit sinusoid at the centre frequency of
/// scale `2^4`, ignoring the edges.
pub fn calibrate_reconstruction(kind: WaveletKind) -> f64 {
    let n = 16_384;
    let omega = kind.centre_omega(f64::from(1u32 << CALIBRATION_SCALE_EXP));
    let x: Vec<f64> = (0..n).map(|i| (omega * i as f64).cos()).collect();
    let comps = components_with_constant(&x, kind, 1.0).expect("finite calibration input");
    let y = comps.band(0, MAX_SCALE_EXP);
    let edge = n / 4;
    let (mut xy, mut yy) = (0.0, 0.0);
    for i in edge..n - edge {
        xy += x[i] * y[i];
        yy += y[i] * y[i];
    }
    xy / yy
}

// ---------------------------------------------------------------------------
// FFT convolution machinery
// ---------------------------------------------------------------------------

struct Kernel {
    spectrum: Arc<Vec<Complex64>>,
    truncated: bool,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static KERNELS: RefCell<HashMap<(usize, usize, WaveletKind, u32, bool), (Arc<Vec<Complex64>>, bool)>> =
        RefCell::new(HashMap::new());
}

/// Zero-padded FFT size and plans for signals of one length.
struct ConvPlan {
    n: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl ConvPlan {
    fn new(n: usize) -> Self {
        let max_half = half_width(MAX_SCALE_EXP).min(n.saturating_sub(1));
        // room for two successive convolutions without wrap-around into [0, n)
        let size = (n + 2 * max_half + 1).next_power_of_two();
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(size), p.plan_fft_inverse(size))
        });
        Self { n, size, fwd, inv }
    }

    fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse of `spectrum · kernel`, keeping output samples `0..n`.
    fn convolve(&self, spectrum: &[Complex64], kernel: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum.iter().zip(kernel).map(|(a, b)| a * b).collect();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf.truncate(self.n);
        for v in &mut buf {
            *v *= scale;
        }
        buf
    }

    /// Kernel for `W(s, b) = Σ_m x(b + m) · s^{-1/2} ψ*(m / s)`.
    fn analysis_kernel(&self, kind: WaveletKind, j: u32) -> Kernel {
        self.kernel(kind, j, true)
    }

    /// Kernel for `y(t) = Σ_b W(s, b) · s^{-1/2} ψ((t − b) / s)`.
    fn synthesis_kernel(&self, kind: WaveletKind, j: u32) -> Kernel {
        self.kernel(kind, j, false)
    }

    fn kernel(&self, kind: WaveletKind, j: u32, analysis: bool) -> Kernel {
        let key = (self.size, self.n, kind, j, analysis);
        if let Some((spectrum, truncated)) = KERNELS.with(|k| k.borrow().get(&key).cloned()) {
            return Kernel {
                spectrum,
                truncated,
            };
        }
        let s = f64::from(1u32 << j);
        let full = half_width(j);
        let half = full.min(self.n.saturating_sub(1));
        let norm = 1.0 / s.sqrt();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for m in -(half as i64)..=(half as i64) {
            let psi = kind.mother(m as f64 / s);
            // analysis is a correlation: tap at lag m sits at index -m
            let (idx, v) = if analysis {
                (-m, psi.conj() * norm)
            } else {
                (m, psi * norm)
            };
            buf[idx.rem_euclid(self.size as i64) as usize] = v;
        }
        self.fwd.process(&mut buf);
        let spectrum = Arc::new(buf);
        let truncated = half < full;
        KERNELS.with(|k| {
            k.borrow_mut().insert(key, (spectrum.clone(), truncated));
        });
        Kernel {
            spectrum,
            truncated,
        }
    }
}

fn half_width(j: u32) -> usize {
    (SUPPORT * f64::from(1u32 << j)).ceil() as usize
}
