//! Feature selection and classifier tuning on a training partition.
//!
//! [`rfecv`] removes features in an annealing schedule: large steps while
//! many features remain, smaller ones as the set shrinks. Every candidate set
//! is scored by mean weighted f1 over stratified inner folds, and the best
//! scoring set wins (smaller set on ties). [`tune_classifier`] then grid
//! searches hyperparameters on the selected features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{compute_metrics, GbtParams, Hyperparams, Model};
use crate::features::{FeatureMatrix, Preprocessor};
use crate::signal_io::{stratified_fold_ids, FaultClass};

pub const DEFAULT_INNER_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfecvSchedule {
    pub thresholds: Vec<usize>,
    pub steps: Vec<usize>,
}

impl Default for RfecvSchedule {
    fn default() -> Self {
        Self {
            thresholds: vec![700, 350, 125, 75, 37, 17, 8],
            steps: vec![400, 100, 50, 25, 12, 6, 3],
        }
    }
}

impl RfecvSchedule {
    pub fn new(thresholds: Vec<usize>, steps: Vec<usize>) -> Result<Self> {
        let s = Self { thresholds, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.len() != self.steps.len() {
            return Err(Error::Config("schedule needs equal, non-empty threshold and step lists".into()));
        }
        if self.thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("schedule thresholds must strictly decrease".into()));
        }
        if self.steps.contains(&0) {
            return Err(Error::Config("schedule steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Step for the first threshold the count exceeds; the last step below
    /// every threshold.
    pub fn step_for(&self, count: usize) -> usize {
        self.thresholds
            .iter()
            .position(|&t| count > t)
            .map_or(*self.steps.last().expect("non-empty"), |i| self.steps[i])
    }

    /// Feature counts visited from `start` down to 1.
    pub fn trace(&self, start: usize) -> Vec<usize> {
        let mut out = vec![start];
        let mut c = start;
        while c > 1 {
            c = c.saturating_sub(self.step_for(c)).max(1);
            out.push(c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub n_features: usize,
    pub mean_f1: f64,
    /// Inner folds whose fit failed and were scored 0.
    pub failed_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparams: Hyperparams,
    pub mean_f1: f64,
    pub failed_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub selected_features: Vec<String>,
    pub best_hyperparams: Hyperparams,
    pub cv_score_trace: Vec<TracePoint>,
    pub grid_scores: Vec<GridPoint>,
    /// Source ids of the rows used, for leakage checks.
    pub row_ids: Vec<String>,
}

pub fn default_logreg_grid() -> Vec<Hyperparams> {
    [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
        .into_iter()
        .map(|l2_lambda| Hyperparams::Logreg { l2_lambda })
        .collect()
}

pub fn default_gbt_grid() -> Vec<Hyperparams> {
    let mut out = Vec::new();
    for max_depth in [3, 6] {
        for n_trees in [100, 300] {
            for l2_leaf in [1.0, 3.0] {
                out.push(Hyperparams::Gbt(GbtParams {
                    max_depth,
                    n_trees,
                    l2_leaf,
                    ..GbtParams::default()
                }));
            }
        }
    }
    out
}

/// Mean weighted f1 over inner folds; failed folds score 0.
fn cross_validate(m: &FeatureMatrix, inner: &[usize], k: usize, hp: &Hyperparams) -> (f64, usize) {
    let scores: Vec<Option<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..m.n_rows()).filter(|&r| inner[r] != f).collect();
            let test: Vec<usize> = (0..m.n_rows()).filter(|&r| inner[r] == f).collect();
            let run = || -> Result<f64> {
                let pre = Preprocessor::fit(m, &train)?;
                let x = pre.transform(m)?;
                let xtr = x.select_rows(&train);
                let xte = x.select_rows(&test);
                let model = Model::fit(xtr.values.view(), &xtr.label_codes(), FaultClass::COUNT, hp)?;
                let proba = model.predict_proba(xte.values.view())?;
                Ok(compute_metrics(proba.view(), &xte.label_codes())?.f1_weighted)
            };
            match run() {
                Ok(s) => Some(s),
                Err(e) => {
                    log::debug!("inner fold {f} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let failed = scores.iter().filter(|s| s.is_none()).count();
    let mean = scores.iter().map(|s| s.unwrap_or(0.0)).sum::<f64>() / k as f64;
    (mean, failed)
}

/// Importance per column of `m`, from a fit on every row. Columns removed
/// as zero-variance get importance 0.
fn importances(m: &FeatureMatrix, hp: &Hyperparams) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..m.n_rows()).collect();
    let pre = match Preprocessor::fit(m, &all) {
        Ok(p) => p,
        Err(Error::AllFeaturesRemoved) => return Ok(vec![0.0; m.n_features()]),
        Err(e) => return Err(e),
    };
    let x = pre.transform(m)?;
    let model = Model::fit(x.values.view(), &x.label_codes(), FaultClass::COUNT, hp)?;
    let imp = model.importances();
    let mut out = vec![0.0; m.n_features()];
    for (j, name) in x.feature_names.iter().enumerate() {
        out[m.column_index(name).expect("kept column")] = imp[j];
    }
    Ok(out)
}

fn inner_folds(m: &FeatureMatrix, inner_k: usize, seed: u64) -> Result<Vec<usize>> {
    if m.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    stratified_fold_ids(&m.labels, inner_k, seed)
}

/// Recursive feature elimination scored by inner cross-validation.
pub fn rfecv(
    m: &FeatureMatrix,
    hp: &Hyperparams,
    schedule: &RfecvSchedule,
    inner_k: usize,
    seed: u64,
) -> Result<TuneResult> {
    schedule.validate()?;
    if m.n_features() == 0 {
        return Err(Error::InvalidArgument("rfecv needs at least one feature".into()));
    }
    let inner = inner_folds(m, inner_k, seed)?;
    let mut current: Vec<usize> = (0..m.n_features()).collect();
    let mut trace = Vec::new();
    let mut sets = Vec::new();
    loop {
        let sub = m.select_columns(&current);
        let (mean_f1, failed_folds) = cross_validate(&sub, &inner, inner_k, hp);
        trace.push(TracePoint {
            n_features: current.len(),
            mean_f1,
            failed_folds,
        });
        sets.push(current.clone());
        if current.len() <= 1 {
            break;
        }
        let target = current.len().saturating_sub(schedule.step_for(current.len())).max(1);
        let imp = importances(&sub, hp)?;
        let mut order: Vec<usize> = (0..current.len()).collect();
        // most important first; ties keep the earlier column
        order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
        let mut keep: Vec<usize> = order[..target].iter().map(|&j| current[j]).collect();
        keep.sort_unstable();
        current = keep;
    }
    // best score; later (smaller) sets win ties
    let best = (0..trace.len())
        .max_by(|&a, &b| trace[a].mean_f1.total_cmp(&trace[b].mean_f1).then(a.cmp(&b)))
        .expect("trace non-empty");
    Ok(TuneResult {
        selected_features: sets[best].iter().map(|&c| m.feature_names[c].clone()).collect(),
        best_hyperparams: *hp,
        cv_score_trace: trace,
        grid_scores: Vec::new(),
        row_ids: m.row_ids.clone(),
    })
}

/// Exhaustive grid search by mean inner-fold weighted f1. Ties go to the
/// more strongly regularised point.
pub fn tune_classifier(m: &FeatureMatrix, grid: &[Hyperparams], inner_k: usize, seed: u64) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let inner = inner_folds(m, inner_k, seed)?;
    let grid_scores: Vec<GridPoint> = grid
        .par_iter()
        .map(|hp| {
            let (mean_f1, failed_folds) = cross_validate(m, &inner, inner_k, hp);
            GridPoint {
                hyperparams: *hp,
                mean_f1,
                failed_folds,
            }
        })
        .collect();
    let mut best = 0;
    for (i, g) in grid_scores.iter().enumerate().skip(1) {
        let b = &grid_scores[best];
        let tie = (g.mean_f1 - b.mean_f1).abs() <= 1e-12;
        let stronger = g
            .hyperparams
            .regularization_key()
            .partial_cmp(&b.hyperparams.regularization_key())
            == Some(std::cmp::Ordering::Greater);
        if g.mean_f1 > b.mean_f1 + 1e-12 || (tie && stronger) {
            best = i;
        }
    }
    Ok(TuneResult {
        selected_features: m.feature_names.clone(),
        best_hyperparams: grid_scores[best].hyperparams,
        cv_score_trace: vec![TracePoint {
            n_features: m.n_features(),
            mean_f1: grid_scores[best].mean_f1,
            failed_folds: grid_scores[best].failed_folds,
        }],
        grid_scores,
        row_ids: m.row_ids.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_trace_from_474() {
        let s = RfecvSchedule::default();
        assert_eq!(
            s.trace(474),
            vec![474, 374, 274, 224, 174, 124, 99, 74, 62, 50, 38, 26, 20, 14, 11, 8, 5, 2, 1]
        );
        assert_eq!(s.step_for(8), 3);
        assert_eq!(s.trace(8), vec![8, 5, 2, 1]);
        assert_eq!(s.trace(1), vec![1]);
    }

    #[test]
    fn degenerate_schedule_is_classic_rfe() {
        let s = RfecvSchedule::new(vec![1000], vec![1]).unwrap();
        assert_eq!(s.trace(5), vec![5, 4, 3, 2, 1]);
    }

    #[test]
    fn invalid_schedules() {
        assert!(RfecvSchedule::new(vec![10, 20], vec![1, 1]).is_err());
        assert!(RfecvSchedule::new(vec![10], vec![1, 2]).is_err());
        assert!(RfecvSchedule::new(vec![10], vec![0]).is_err());
    }

    #[test]
    fn default_grid_sizes() {
        assert_eq!(default_logreg_grid().len(), 6);
        assert_eq!(default_gbt_grid().len(), 8);
    }
}
