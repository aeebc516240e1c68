//! Signal-processing stages and ordered pipelines.
//!
//! A [`PipelineConfig`] is an ordered list of at most one stage of each kind.
//! Stages run left to right, independently on every channel. The textual
//! form mirrors the result tables, e.g. `EMD(0,None) | WAVELET(2^1,2^9,morl)`
//! or `NONE` for the empty pipeline.

pub mod cwt;
pub mod emd;
pub mod tkeo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cwt::{cwt_components, cwt_filter, CwtComponents, WaveletConfig, WaveletKind};
pub use emd::{emd_decompose, emd_filter, Decomposition, EmdConfig};
pub use tkeo::tkeo;

use crate::error::{Error, Result};
use crate::signal_io::SignalWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Emd,
    Wavelet,
    Tkeo,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageKind::Emd => "EMD",
            StageKind::Wavelet => "WAVELET",
            StageKind::Tkeo => "TKEO",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "lowercase")]
pub enum StageConfig {
    Emd(EmdConfig),
    Wavelet(WaveletConfig),
    Tkeo,
}

impl StageConfig {
    pub fn kind(&self) -> StageKind {
        match self {
            StageConfig::Emd(_) => StageKind::Emd,
            StageConfig::Wavelet(_) => StageKind::Wavelet,
            StageConfig::Tkeo => StageKind::Tkeo,
        }
    }

    /// Applies the stage to one channel.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            StageConfig::Emd(cfg) => Ok(emd_filter(x, cfg)?.values),
            StageConfig::Wavelet(cfg) => cwt_filter(x, cfg),
            StageConfig::Tkeo => tkeo(x),
        }
    }
}

impl fmt::Display for StageConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageConfig::Emd(c) => match c.imf_upper {
                Some(u) => write!(f, "EMD({},{})", c.imf_lower, u),
                None => write!(f, "EMD({},None)", c.imf_lower),
            },
            StageConfig::Wavelet(c) => write!(
                f,
                "WAVELET(2^{},2^{},{})",
                c.scale_lower_exp, c.scale_upper_exp, c.kind
            ),
            StageConfig::Tkeo => f.write_str("TKEO"),
        }
    }
}

impl FromStr for StageConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse stage {s:?}"));
        let upper = s.to_ascii_uppercase();
        if upper == "TKEO" {
            return Ok(StageConfig::Tkeo);
        }
        let open = s.find('(').ok_or_else(bad)?;
        let args = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let exp = |a: &str| -> Result<u32> {
            a.strip_prefix("2^").unwrap_or(a).parse().map_err(|_| bad())
        };
        match upper[..open].trim() {
            "EMD" if args.len() == 2 => {
                let lower = args[0].parse().map_err(|_| bad())?;
                let upper = if args[1].eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(args[1].parse().map_err(|_| bad())?)
                };
                let cfg = EmdConfig::band(lower, upper);
                cfg.validate()?;
                Ok(StageConfig::Emd(cfg))
            }
            "WAVELET" if args.len() == 3 => {
                let cfg = WaveletConfig::new(exp(args[0])?, exp(args[1])?, args[2].parse()?);
                cfg.validate()?;
                Ok(StageConfig::Wavelet(cfg))
            }
            _ => Err(bad()),
        }
    }
}

/// Ordered stages; empty means no processing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    stages: Vec<StageConfig>,
}

impl PipelineConfig {
    pub fn new(stages: Vec<StageConfig>) -> Result<Self> {
        for (i, a) in stages.iter().enumerate() {
            if stages[..i].iter().any(|b| b.kind() == a.kind()) {
                return Err(Error::InvalidArgument(format!(
                    "stage {} appears twice in pipeline",
                    a.kind()
                )));
            }
        }
        Ok(Self { stages })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn stages(&self) -> &[StageConfig] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn kinds(&self) -> Vec<StageKind> {
        self.stages.iter().map(StageConfig::kind).collect()
    }

    /// Runs every stage on one channel, attaching the stage index to errors.
    pub fn apply_series(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for (index, stage) in self.stages.iter().enumerate() {
            cur = stage.apply(&cur).map_err(|e| Error::Stage {
                index,
                stage: stage.to_string(),
                source: Box::new(e),
            })?;
        }
        Ok(cur)
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stages.is_empty() {
            return f.write_str("NONE");
        }
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Self::empty());
        }
        let stages = s.split('|').map(str::parse).collect::<Result<Vec<_>>>()?;
        Self::new(stages)
    }
}

/// Applies `cfg` to every channel of `w`; label, rate and length are kept.
pub fn apply_pipeline(w: &SignalWindow, cfg: &PipelineConfig) -> Result<SignalWindow> {
    if cfg.is_empty() {
        return Ok(w.clone());
    }
    let channels = w
        .channels()
        .iter()
        .map(|c| cfg.apply_series(c))
        .collect::<Result<Vec<_>>>()?;
    w.with_channels(channels)
}
