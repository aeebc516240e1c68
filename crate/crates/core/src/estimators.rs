//! Classifiers and classification metrics.
//!
//! [`LogRegModel`] is a multinomial logistic regression with an L2 penalty on
//! the weights (bias unpenalised), trained by L-BFGS from zero. [`GbtModel`]
//! is a small softmax gradient-boosting classifier over histogram-binned
//! features with one regression tree per class per round.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOGREG_GRAD_TOL: f64 = 1e-6;
pub const LOGREG_MAX_ITERS: usize = 500;
/// Probability floor used when a true-class probability underflows in AIC.
pub const PROB_FLOOR: f64 = 1e-300;

fn check_training(x: ArrayView2<f64>, y: &[usize], n_classes: usize) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {n_classes} classes")));
    }
    let mut seen = vec![false; n_classes];
    y.iter().for_each(|&c| seen[c] = true);
    let present = seen.iter().filter(|&&s| s).count();
    if present < 2 {
        return Err(Error::NotEnoughClasses(present));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training features"));
    }
    Ok(())
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// `(features + 1) × classes`; the last row is the bias.
    pub weights: Array2<f64>,
    pub l2_lambda: f64,
    pub n_iters_used: usize,
    pub converged: bool,
}

/// Penalised negative log-likelihood and its gradient, with `params` laid
/// out as a row-major `(features + 1) × classes` matrix (bias last).
pub fn logreg_objective(
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    l2_lambda: f64,
    params: &[f64],
) -> (f64, Vec<f64>) {
    let p = x.ncols();
    let w = ArrayView2::from_shape((p + 1, n_classes), params).expect("parameter length");
    let weights = w.slice(ndarray::s![..p, ..]);
    let bias = w.row(p);
    let mut logits = x.dot(&weights);
    logits += &bias;
    let mut loss = 0.0;
    for (i, mut row) in logits.outer_iter_mut().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y[i]];
        row.mapv_inplace(|v| (v - lse).exp());
        row[y[i]] -= 1.0;
    }
    // logits now holds P − Y
    let mut grad = Array2::zeros((p + 1, n_classes));
    grad.slice_mut(ndarray::s![..p, ..]).assign(&x.t().dot(&logits));
    grad.row_mut(p).assign(&logits.sum_axis(Axis(0)));
    if l2_lambda > 0.0 {
        loss += 0.5 * l2_lambda * weights.iter().map(|v| v * v).sum::<f64>();
        grad.slice_mut(ndarray::s![..p, ..]).scaled_add(l2_lambda, &weights);
    }
    (loss, grad.into_raw_vec_and_offset().0)
}

struct LbfgsOutcome {
    x: Vec<f64>,
    iters: usize,
    converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Limited-memory BFGS with Armijo backtracking.
fn lbfgs<F>(mut f: F, x0: Vec<f64>, tol: f64, max_iters: usize) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 10;
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("logistic loss"));
    }
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    for iter in 0..max_iters {
        if max_abs(&g) < tol {
            return Ok(LbfgsOutcome { x, iters: iter, converged: true });
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = hist
            .back()
            .map_or(1.0 / dot(&g, &g).sqrt().max(1.0), |(s, yv, _)| dot(s, yv) / dot(yv, yv));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, yv, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no further decrease representable
            let converged = max_abs(&g) < tol;
            return Ok(LbfgsOutcome { x, iters: iter, converged });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).max(f64::MIN_POSITIVE) {
            if hist.len() == MEMORY {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    let converged = max_abs(&g) < tol;
    Ok(LbfgsOutcome { x, iters: max_iters, converged })
}

/// Fits a multinomial logistic regression with `n_classes` outputs.
pub fn fit_logreg(x: ArrayView2<f64>, y: &[usize], n_classes: usize, l2_lambda: f64) -> Result<LogRegModel> {
    if !(l2_lambda >= 0.0) || !l2_lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("l2_lambda must be finite and >= 0, got {l2_lambda}")));
    }
    check_training(x, y, n_classes)?;
    let p = x.ncols();
    let out = lbfgs(
        |theta| logreg_objective(x, y, n_classes, l2_lambda, theta),
        vec![0.0; (p + 1) * n_classes],
        LOGREG_GRAD_TOL,
        LOGREG_MAX_ITERS,
    )?;
    if out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic weights"));
    }
    if !out.converged {
        log::debug!("logistic regression stopped after {} iterations without converging", out.iters);
    }
    Ok(LogRegModel {
        weights: Array2::from_shape_vec((p + 1, n_classes), out.x).expect("shape"),
        l2_lambda,
        n_iters_used: out.iters,
        converged: out.converged,
    })
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let p = self.n_features();
        if x.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.ncols(),
            });
        }
        let mut logits = x.dot(&self.weights.slice(ndarray::s![..p, ..]));
        logits += &self.weights.row(p);
        softmax_rows(&mut logits);
        Ok(logits)
    }

    /// Mean absolute weight across classes per feature.
    pub fn importances(&self) -> Vec<f64> {
        let p = self.n_features();
        self.weights
            .slice(ndarray::s![..p, ..])
            .outer_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AicResult {
    pub aic: f64,
    pub log_likelihood: f64,
    pub k: usize,
    /// Some true-class probability was clamped at [`PROB_FLOOR`].
    pub clamped: bool,
}

/// `2k − 2 lnL` with `k = (features + 1)(classes − 1)`.
pub fn aic(model: &LogRegModel, x: ArrayView2<f64>, y: &[usize]) -> Result<AicResult> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let proba = model.predict_proba(x)?;
    let mut clamped = false;
    let mut ll = 0.0;
    for (row, &c) in proba.outer_iter().zip(y) {
        let mut p = row[c];
        if !(p >= PROB_FLOOR) {
            p = PROB_FLOOR;
            clamped = true;
        }
        ll += p.ln();
    }
    let k = aic_parameter_count(model.n_features(), model.n_classes());
    Ok(AicResult {
        aic: aic_from_parts(k, ll),
        log_likelihood: ll,
        k,
        clamped,
    })
}

pub fn aic_parameter_count(features: usize, classes: usize) -> usize {
    (features + 1) * (classes - 1)
}

pub fn aic_from_parts(k: usize, log_likelihood: f64) -> f64 {
    2.0 * k as f64 - 2.0 * log_likelihood
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub l2_leaf: f64,
    /// Upper bound on histogram bins per feature.
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            n_trees: 100,
            learning_rate: 0.3,
            l2_leaf: 3.0,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// `trees[round][class]`.
    pub trees: Vec<Vec<RegressionTree>>,
    pub init_scores: Vec<f64>,
    pub params: GbtParams,
    pub n_features: usize,
    /// Total split gain per feature.
    pub importances: Vec<f64>,
    /// Training cross-entropy before the first round and after each round.
    pub loss_trace: Vec<f64>,
}

struct Binned {
    /// Column-major bin codes.
    codes: Vec<Vec<u16>>,
    thresholds: Vec<Vec<f64>>,
}

fn bin_features(x: ArrayView2<f64>, max_bins: usize) -> Binned {
    let mut codes = Vec::with_capacity(x.ncols());
    let mut thresholds = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mut vals: Vec<f64> = col.to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        let cuts: Vec<f64> = if vals.len() <= max_bins {
            vals.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut c: Vec<f64> = (1..max_bins)
                .map(|b| {
                    let i = b * vals.len() / max_bins;
                    0.5 * (vals[i - 1] + vals[i])
                })
                .collect();
            c.dedup();
            c
        };
        codes.push(
            col.iter()
                .map(|v| cuts.partition_point(|t| t < v) as u16)
                .collect(),
        );
        thresholds.push(cuts);
    }
    Binned { codes, thresholds }
}

struct SplitChoice {
    feature: usize,
    bin: usize,
    gain: f64,
    imbalance: usize,
}

fn leaf_score(sum: f64, count: usize, l2: f64) -> f64 {
    sum * sum / (count as f64 + l2)
}

fn grow_tree(
    binned: &Binned,
    residual: &[f64],
    rows: Vec<usize>,
    params: &GbtParams,
    importances: &mut [f64],
) -> RegressionTree {
    let mut nodes = Vec::new();
    grow_node(binned, residual, rows, 0, params, importances, &mut nodes);
    RegressionTree { nodes }
}

fn grow_node(
    binned: &Binned,
    residual: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &GbtParams,
    importances: &mut [f64],
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    let total: f64 = rows.iter().map(|&r| residual[r]).sum();
    let n = rows.len();
    nodes.push(TreeNode::Leaf(params.learning_rate * total / (n as f64 + params.l2_leaf)));
    if depth >= params.max_depth || n < 2 {
        return id;
    }
    let parent = leaf_score(total, n, params.l2_leaf);
    let mut best: Option<SplitChoice> = None;
    for (f, codes) in binned.codes.iter().enumerate() {
        let nb = binned.thresholds[f].len() + 1;
        if nb < 2 {
            continue;
        }
        let mut sums = vec![0.0; nb];
        let mut counts = vec![0usize; nb];
        for &r in &rows {
            let b = codes[r] as usize;
            sums[b] += residual[r];
            counts[b] += 1;
        }
        let (mut sl, mut nl) = (0.0, 0usize);
        for b in 0..nb - 1 {
            sl += sums[b];
            nl += counts[b];
            if nl == 0 || nl == n {
                continue;
            }
            let nr = n - nl;
            let gain = leaf_score(sl, nl, params.l2_leaf) + leaf_score(total - sl, nr, params.l2_leaf) - parent;
            let imbalance = nl.abs_diff(nr);
            let better = match &best {
                None => true,
                Some(c) => gain > c.gain + 1e-12 || (gain >= c.gain - 1e-12 && imbalance < c.imbalance),
            };
            if better {
                best = Some(SplitChoice {
                    feature: f,
                    bin: b,
                    gain,
                    imbalance,
                });
            }
        }
    }
    let Some(choice) = best.filter(|c| c.gain >= -1e-12) else {
        return id;
    };
    importances[choice.feature] += choice.gain.max(0.0);
    let codes = &binned.codes[choice.feature];
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| codes[r] as usize <= choice.bin);
    let left = grow_node(binned, residual, left_rows, depth + 1, params, importances, nodes);
    let right = grow_node(binned, residual, right_rows, depth + 1, params, importances, nodes);
    nodes[id] = TreeNode::Split {
        feature: choice.feature,
        threshold: binned.thresholds[choice.feature][choice.bin],
        left,
        right,
    };
    id
}

fn cross_entropy(scores: &Array2<f64>, y: &[usize]) -> f64 {
    scores
        .outer_iter()
        .zip(y)
        .map(|(row, &c)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - row[c]
        })
        .sum()
}

pub fn fit_gbt(x: ArrayView2<f64>, y: &[usize], n_classes: usize, params: &GbtParams) -> Result<GbtModel> {
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
    }
    if params.max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
    }
    if !(params.learning_rate > 0.0) || !(params.l2_leaf >= 0.0) || params.max_bins < 2 {
        return Err(Error::InvalidArgument(
            "learning_rate must be > 0, l2_leaf >= 0 and max_bins >= 2".into(),
        ));
    }
    check_training(x, y, n_classes)?;
    let n = x.nrows();
    let binned = bin_features(x, params.max_bins.min(u16::MAX as usize));
    let mut counts = vec![0usize; n_classes];
    y.iter().for_each(|&c| counts[c] += 1);
    let init_scores: Vec<f64> = counts
        .iter()
        .map(|&c| ((c as f64).max(1e-12) / n as f64).ln())
        .collect();
    let mut scores = Array2::from_shape_fn((n, n_classes), |(_, k)| init_scores[k]);
    let mut importances = vec![0.0; x.ncols()];
    let mut loss_trace = vec![cross_entropy(&scores, y)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let all_rows: Vec<usize> = (0..n).collect();
    for _ in 0..params.n_trees {
        let mut proba = scores.clone();
        softmax_rows(&mut proba);
        let mut round = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let residual: Vec<f64> = (0..n)
                .map(|i| f64::from(u8::from(y[i] == k)) - proba[[i, k]])
                .collect();
            round.push(grow_tree(&binned, &residual, all_rows.clone(), params, &mut importances));
        }
        for (i, row) in x.outer_iter().enumerate() {
            let row = row.to_vec();
            for (k, tree) in round.iter().enumerate() {
                scores[[i, k]] += tree.predict_row(&row);
            }
        }
        let loss = cross_entropy(&scores, y);
        if !loss.is_finite() {
            return Err(Error::NonFinite("boosting loss"));
        }
        loss_trace.push(loss);
        trees.push(round);
    }
    Ok(GbtModel {
        trees,
        init_scores,
        params: *params,
        n_features: x.ncols(),
        importances,
        loss_trace,
    })
}

impl GbtModel {
    pub fn n_classes(&self) -> usize {
        self.init_scores.len()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut scores = Array2::from_shape_fn((x.nrows(), self.n_classes()), |(_, k)| self.init_scores[k]);
        for (i, row) in x.outer_iter().enumerate() {
            let row = row.to_vec();
            for round in &self.trees {
                for (k, tree) in round.iter().enumerate() {
                    scores[[i, k]] += tree.predict_row(&row);
                }
            }
        }
        softmax_rows(&mut scores);
        Ok(scores)
    }

    pub fn tree_count(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }
}

// ---------------------------------------------------------------------------
// Estimator dispatch and persistence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Logreg,
    Gbt,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Logreg => "logreg",
            EstimatorKind::Gbt => "gbt",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logreg" => Ok(EstimatorKind::Logreg),
            "gbt" => Ok(EstimatorKind::Gbt),
            _ => Err(Error::Config(format!("unknown estimator {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum Hyperparams {
    Logreg { l2_lambda: f64 },
    Gbt(GbtParams),
}

impl Hyperparams {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Hyperparams::Logreg { .. } => EstimatorKind::Logreg,
            Hyperparams::Gbt(_) => EstimatorKind::Gbt,
        }
    }

    /// Larger means stronger regularisation; used to break score ties.
    pub fn regularization_key(&self) -> (f64, f64, f64) {
        match self {
            Hyperparams::Logreg { l2_lambda } => (*l2_lambda, 0.0, 0.0),
            Hyperparams::Gbt(p) => (p.l2_leaf, -(p.max_depth as f64), -(p.n_trees as f64)),
        }
    }
}

impl std::fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hyperparams::Logreg { l2_lambda } => write!(f, "lambda={l2_lambda}"),
            Hyperparams::Gbt(p) => write!(
                f,
                "depth={} trees={} l2_leaf={} lr={}",
                p.max_depth, p.n_trees, p.l2_leaf, p.learning_rate
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum Model {
    Logreg(LogRegModel),
    Gbt(GbtModel),
}

impl Model {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], n_classes: usize, hp: &Hyperparams) -> Result<Self> {
        match hp {
            Hyperparams::Logreg { l2_lambda } => fit_logreg(x, y, n_classes, *l2_lambda).map(Model::Logreg),
            Hyperparams::Gbt(p) => fit_gbt(x, y, n_classes, p).map(Model::Gbt),
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Model::Logreg(m) => m.predict_proba(x),
            Model::Gbt(m) => m.predict_proba(x),
        }
    }

    pub fn importances(&self) -> Vec<f64> {
        match self {
            Model::Logreg(m) => m.importances(),
            Model::Gbt(m) => m.importances.clone(),
        }
    }
}

pub const MODEL_FORMAT: &str = "vibropt-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk model with the feature names it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, feature_names: Vec<String>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            feature_names,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        crate::experiment::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported model format {} v{}", file.format, file.version),
            ));
        }
        Ok(file)
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_weighted: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub mae: f64,
    pub per_class: Vec<ClassScores>,
}

/// Index of the row maximum; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > row[best] { k } else { best })
}

pub fn compute_metrics(proba: ArrayView2<f64>, labels: &[usize]) -> Result<MetricsReport> {
    let (n, k) = proba.dim();
    if n != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {k} classes")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    let mut abs_err = 0.0;
    for (row, &c) in proba.outer_iter().zip(labels) {
        let row = row.to_vec();
        confusion[c][argmax(&row)] += 1;
        abs_err += row
            .iter()
            .enumerate()
            .map(|(j, p)| (p - f64::from(u8::from(j == c))).abs())
            .sum::<f64>();
    }
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|r| r[c]).sum();
        let tp = confusion[c][c] as f64;
        if support == 0 {
            log::warn!("class {c} absent from labels; its scores are set to 0");
        }
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScores {
            precision,
            recall,
            f1,
            support,
        });
    }
    let weighted = |get: fn(&ClassScores) -> f64| {
        per_class.iter().map(|s| get(s) * s.support as f64).sum::<f64>() / n as f64
    };
    let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        f1_weighted: weighted(|s| s.f1),
        precision_weighted: weighted(|s| s.precision),
        recall_weighted: weighted(|s| s.recall),
        accuracy: trace as f64 / n as f64,
        confusion,
        mae: abs_err / (n * k) as f64,
        per_class,
    })
}

/// Row-wise concatenation helper for per-fold predictions.
pub fn stack_rows(parts: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("equal column counts")
}

/// Uniform class probabilities, the baseline of an untrained model.
pub fn uniform_proba(rows: usize, classes: usize) -> Array2<f64> {
    Array2::from_elem((rows, classes), 1.0 / classes as f64)
}

pub fn class_priors(y: &[usize], n_classes: usize) -> Array1<f64> {
    let mut p = Array1::zeros(n_classes);
    y.iter().for_each(|&c| p[c] += 1.0);
    p / y.len() as f64
}
