//! Data-driven optimisation of vibration-analysis signal-processing pipelines.
//!
//! The crate is organised along the experiment chain:
//!
//! * [`signal_io`] loads, subsamples, synthesises and fold-partitions labelled
//!   multi-channel windows.
//! * [`dsp`] holds the three processing stages (EMD band selection, dyadic CWT
//!   band filtering, Teager-Kaiser energy) and ordered pipeline composition.
//! * [`features`] turns windows into a spectral feature matrix and fits the
//!   zero-variance mask and standardiser on training rows.
//! * [`estimators`] provides multinomial logistic regression with AIC, a small
//!   softmax gradient-boosted-trees classifier and classification metrics.
//! * [`pipeline_opt`] runs the two-stage AIC search: per-stage hyperparameters,
//!   then every ordering of the tuned stages.
//! * [`ml_opt`] does recursive feature elimination with an annealed step
//!   schedule and grid search of classifier hyperparameters.
//! * [`stats`] compares two configurations on paired per-entry-per-class
//!   absolute errors (Wilcoxon signed-rank, Hedges g_av, bootstrap CI,
//!   Bonferroni).
//! * [`experiment`] wires everything into cached, deterministic stages that the
//!   CLI exposes as subcommands.

pub mod dsp;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod features;
pub mod ml_opt;
pub mod pipeline_opt;
pub mod signal_io;
pub mod stats;

pub use error::{Error, Result};
