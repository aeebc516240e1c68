//! AIC-guided search over signal-processing pipelines.
//!
//! Per outer fold, EMD and wavelet hyperparameters are first tuned with each
//! stage applied alone; the tuned stages are then frozen and every ordered
//! subset of them (including the empty pipeline) is scored. Every score is
//! the training-set AIC of a logistic regression on standardised features
//! of the fold's training windows.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{
    cwt_components, emd_decompose, tkeo, CwtComponents, Decomposition, EmdConfig, PipelineConfig, StageConfig,
    StageKind, WaveletConfig, WaveletKind,
};
use crate::error::{Error, Result};
use crate::estimators::{aic, fit_logreg};
use crate::features::{assemble, extract_features, FeatureCatalog, FeatureMatrix, Preprocessor};
use crate::signal_io::{Dataset, FaultClass, SignalWindow};

/// Relative AIC difference treated as a tie.
pub const AIC_TIE_TOL: f64 = 1e-9;
pub const DEFAULT_AIC_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Full,
    Shrunken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGrid {
    pub mode: GridMode,
    pub emd: Vec<EmdConfig>,
    pub wavelet: Vec<WaveletConfig>,
}

impl StageGrid {
    /// 6 × 5 EMD bands and 4 × 3 × 2 wavelet bands.
    pub fn full() -> Self {
        let mut emd = Vec::new();
        for lower in 0..=5 {
            for upper in [Some(6), Some(7), Some(8), Some(9), None] {
                emd.push(EmdConfig::band(lower, upper));
            }
        }
        Self {
            mode: GridMode::Full,
            emd,
            wavelet: wavelet_grid(&[0, 1, 2, 3], &[5, 7, 9]),
        }
    }

    /// 2 × 2 EMD bands and 2 × 1 × 2 wavelet bands.
    pub fn shrunken() -> Self {
        let second = EmdConfig::default().second_largest_upper();
        let mut emd = Vec::new();
        for lower in 0..=1 {
            for upper in [Some(second), None] {
                emd.push(EmdConfig::band(lower, upper));
            }
        }
        Self {
            mode: GridMode::Shrunken,
            emd,
            wavelet: wavelet_grid(&[0, 1], &[9]),
        }
    }

    pub fn for_mode(mode: GridMode) -> Self {
        match mode {
            GridMode::Full => Self::full(),
            GridMode::Shrunken => Self::shrunken(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.emd.is_empty() || self.wavelet.is_empty() {
            return Err(Error::Config("stage grids must be non-empty".into()));
        }
        self.emd.iter().try_for_each(EmdConfig::validate)?;
        self.wavelet.iter().try_for_each(WaveletConfig::validate)
    }
}

fn wavelet_grid(lowers: &[u32], uppers: &[u32]) -> Vec<WaveletConfig> {
    let mut out = Vec::new();
    for &lo in lowers {
        for &hi in uppers {
            for kind in WaveletKind::ALL {
                out.push(WaveletConfig::new(lo, hi, kind));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchPhase {
    Emd,
    Wavelet,
    Ordering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub fold: usize,
    pub phase: SearchPhase,
    pub candidate: String,
    /// `None` when the candidate was skipped.
    pub aic: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub n_features: usize,
    pub converged: bool,
    pub clamped: bool,
    pub skipped: Option<String>,
    /// 1-based position after sorting by AIC and the tie-break rules.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub catalog: FeatureCatalog,
    /// Penalty of the logistic fit behind every AIC score.
    pub aic_lambda: f64,
    pub stages: Vec<StageKind>,
    /// Score every ordering with every grid combination instead of freezing
    /// stage hyperparameters first.
    pub joint: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            catalog: FeatureCatalog::default(),
            aic_lambda: DEFAULT_AIC_LAMBDA,
            stages: vec![StageKind::Emd, StageKind::Wavelet, StageKind::Tkeo],
            joint: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Feature cache
// ---------------------------------------------------------------------------

/// Content digest of a window's samples, rate and label.
pub fn window_digest(w: &SignalWindow) -> String {
    let mut h = Sha256::new();
    h.update(w.sampling_rate_hz().to_le_bytes());
    h.update((w.label().code() as u64).to_le_bytes());
    for ch in w.channels() {
        h.update((ch.len() as u64).to_le_bytes());
        for v in ch {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Feature vectors keyed by (window digest, pipeline, catalog); safe for
/// concurrent insertion.
#[derive(Debug, Default)]
pub struct FeatureCache {
    map: DashMap<(String, String), Arc<Vec<f64>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(digest: &str, pipeline: &PipelineConfig, cat: &FeatureCatalog) -> (String, String) {
        let p = serde_json::to_string(pipeline).expect("pipeline serialises");
        (digest.to_string(), format!("{}|{p}", cat.bands))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

/// Per-window memo of stage outputs, EMD decompositions and CWT components,
/// so pipelines sharing a prefix or a decomposition reuse the work. Results
/// are bit-identical to [`crate::dsp::apply_pipeline`].
#[derive(Default)]
struct WindowMemo {
    outputs: HashMap<String, Arc<Vec<Vec<f64>>>>,
    decomps: HashMap<String, Arc<Vec<Decomposition>>>,
    comps: HashMap<String, Arc<Vec<CwtComponents>>>,
}

impl WindowMemo {
    fn run(&mut self, w: &SignalWindow, pipeline: &PipelineConfig) -> Result<Arc<Vec<Vec<f64>>>> {
        let stages = pipeline.stages();
        let mut key = String::new();
        let mut cur: Arc<Vec<Vec<f64>>> = self
            .outputs
            .entry(String::new())
            .or_insert_with(|| Arc::new(w.channels().to_vec()))
            .clone();
        for (index, stage) in stages.iter().enumerate() {
            let input_key = key.clone();
            key.push_str(&serde_json::to_string(stage).expect("stage serialises"));
            key.push('|');
            if let Some(out) = self.outputs.get(&key) {
                cur = out.clone();
                continue;
            }
            let out = self.apply(stage, &input_key, &cur).map_err(|e| Error::Stage {
                index,
                stage: stage.to_string(),
                source: Box::new(e),
            })?;
            let out = Arc::new(out);
            self.outputs.insert(key.clone(), out.clone());
            cur = out;
        }
        Ok(cur)
    }

    fn apply(&mut self, stage: &StageConfig, input_key: &str, input: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match stage {
            StageConfig::Emd(cfg) if cfg.is_identity() => input
                .iter()
                .map(|ch| Ok(crate::dsp::emd::identity_band(ch, cfg)?.expect("identity band").values))
                .collect(),
            StageConfig::Emd(cfg) => {
                let dkey = format!(
                    "{input_key}#{}:{}:{}",
                    cfg.max_imfs, cfg.sift_sd_threshold, cfg.max_sift_iters
                );
                let decomps = match self.decomps.get(&dkey) {
                    Some(d) => d.clone(),
                    None => {
                        let d = Arc::new(
                            input
                                .iter()
                                .map(|ch| emd_decompose(ch, cfg))
                                .collect::<Result<Vec<_>>>()?,
                        );
                        self.decomps.insert(dkey, d.clone());
                        d
                    }
                };
                Ok(decomps
                    .iter()
                    .map(|d| d.band(cfg.imf_lower, cfg.imf_upper).values)
                    .collect())
            }
            StageConfig::Wavelet(cfg) => {
                cfg.validate()?;
                let ckey = format!("{input_key}#{}", cfg.kind);
                let comps = match self.comps.get(&ckey) {
                    Some(c) => c.clone(),
                    None => {
                        let c = Arc::new(
                            input
                                .iter()
                                .map(|ch| cwt_components(ch, cfg.kind))
                                .collect::<Result<Vec<_>>>()?,
                        );
                        self.comps.insert(ckey, c.clone());
                        c
                    }
                };
                Ok(comps
                    .iter()
                    .map(|c| c.band(cfg.scale_lower_exp, cfg.scale_upper_exp))
                    .collect())
            }
            StageConfig::Tkeo => input.iter().map(|ch| tkeo(ch)).collect(),
        }
    }
}

/// Feature vectors of every candidate on every listed row: `[candidate][row]`.
pub fn candidate_features(
    d: &Dataset,
    rows: &[usize],
    candidates: &[PipelineConfig],
    cat: &FeatureCatalog,
    cache: &FeatureCache,
) -> Result<Vec<Vec<Arc<Vec<f64>>>>> {
    let per_row = rows
        .par_iter()
        .map(|&r| {
            let w = &d.windows()[r];
            let digest = window_digest(w);
            let mut memo = WindowMemo::default();
            candidates
                .iter()
                .map(|p| {
                    let key = FeatureCache::key(&digest, p, cat);
                    if let Some(v) = cache.map.get(&key) {
                        cache.hits.fetch_add(1, Ordering::Relaxed);
                        return Ok(v.clone());
                    }
                    cache.misses.fetch_add(1, Ordering::Relaxed);
                    let channels = memo.run(w, p)?;
                    let processed = w.with_channels(channels.as_ref().clone())?;
                    let v = Arc::new(extract_features(&processed, cat)?);
                    cache.map.insert(key, v.clone());
                    Ok(v)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..candidates.len())
        .map(|c| per_row.iter().map(|v| v[c].clone()).collect())
        .collect())
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub aic: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub n_features: usize,
    pub converged: bool,
    pub clamped: bool,
    pub skipped: Option<String>,
}

/// Training-set AIC of a logistic fit on a preprocessed feature matrix.
pub fn score_matrix(m: &FeatureMatrix, aic_lambda: f64) -> Result<CandidateScore> {
    let all: Vec<usize> = (0..m.n_rows()).collect();
    let pre = match Preprocessor::fit(m, &all) {
        Ok(p) => p,
        Err(Error::AllFeaturesRemoved) => {
            return Ok(CandidateScore {
                aic: None,
                log_likelihood: None,
                n_features: 0,
                converged: false,
                clamped: false,
                skipped: Some("all features have zero variance".into()),
            })
        }
        Err(e) => return Err(e),
    };
    let x = pre.transform(m)?;
    let y = x.label_codes();
    let model = fit_logreg(x.values.view(), &y, FaultClass::COUNT, aic_lambda)?;
    let a = aic(&model, x.values.view(), &y)?;
    Ok(CandidateScore {
        aic: Some(a.aic),
        log_likelihood: Some(a.log_likelihood),
        n_features: x.n_features(),
        converged: model.converged,
        clamped: a.clamped,
        skipped: None,
    })
}

fn score_candidates(
    d: &Dataset,
    rows: &[usize],
    candidates: &[PipelineConfig],
    opts: &SearchOptions,
    cache: &FeatureCache,
) -> Result<Vec<CandidateScore>> {
    let feats = candidate_features(d, rows, candidates, &opts.catalog, cache)?;
    let folds: Vec<usize> = (0..d.len()).map(|i| d.fold_of(i).unwrap_or(0)).collect();
    let channels = d.windows()[0].n_channels();
    feats
        .into_par_iter()
        .map(|vectors| {
            let vectors = vectors.iter().map(|v| v.as_ref().clone()).collect();
            let m = assemble(
                vectors,
                opts.catalog.dimension(channels),
                channels,
                &opts.catalog,
                rows,
                d.windows(),
                &folds,
            )?;
            score_matrix(&m, opts.aic_lambda)
        })
        .collect()
}

fn aic_ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= AIC_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Ranks candidates: lower AIC first, skipped last, ties broken by
/// `tie_key` (smaller first) and then by text form.
fn rank_records<K: PartialOrd>(
    fold: usize,
    phase: SearchPhase,
    candidates: &[PipelineConfig],
    scores: &[CandidateScore],
    tie_key: impl Fn(&PipelineConfig) -> K,
) -> Vec<SearchRecord> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let names: Vec<String> = candidates.iter().map(ToString::to_string).collect();
    order.sort_by(|&i, &j| {
        use std::cmp::Ordering as O;
        match (scores[i].aic, scores[j].aic) {
            (None, None) => names[i].cmp(&names[j]),
            (None, Some(_)) => O::Greater,
            (Some(_), None) => O::Less,
            (Some(a), Some(b)) if !aic_ties(a, b) => a.total_cmp(&b),
            _ => tie_key(&candidates[i])
                .partial_cmp(&tie_key(&candidates[j]))
                .unwrap_or(O::Equal)
                .then_with(|| names[i].cmp(&names[j])),
        }
    });
    let mut records = vec![None; candidates.len()];
    for (rank, &i) in order.iter().enumerate() {
        let s = &scores[i];
        records[i] = Some(SearchRecord {
            fold,
            phase,
            candidate: names[i].clone(),
            aic: s.aic,
            log_likelihood: s.log_likelihood,
            n_features: s.n_features,
            converged: s.converged,
            clamped: s.clamped,
            skipped: s.skipped.clone(),
            rank: rank + 1,
        });
    }
    records.into_iter().map(|r| r.expect("every record ranked")).collect()
}

fn winner(records: &[SearchRecord]) -> Result<usize> {
    let i = records.iter().position(|r| r.rank == 1).ok_or(Error::AllFeaturesRemoved)?;
    if records[i].aic.is_none() {
        return Err(Error::AllFeaturesRemoved);
    }
    Ok(i)
}

/// Wider retained band sorts first (negated width).
fn band_width_key(p: &PipelineConfig) -> i64 {
    match p.stages().first() {
        Some(StageConfig::Emd(c)) => {
            let upper = c.imf_upper.map_or(c.max_imfs as i64 + 1, |u| u as i64);
            -(upper - c.imf_lower as i64)
        }
        Some(StageConfig::Wavelet(c)) => -(i64::from(c.scale_upper_exp) - i64::from(c.scale_lower_exp)),
        _ => 0,
    }
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTuning {
    pub fold: usize,
    pub emd: Option<EmdConfig>,
    pub wavelet: Option<WaveletConfig>,
    pub records: Vec<SearchRecord>,
}

fn check_dataset(d: &Dataset, fold: usize) -> Result<Vec<usize>> {
    let rows = d.train_indices(fold)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

/// Tunes EMD and wavelet bands independently on the training rows of `fold`.
pub fn tune_stage_hyperparams(
    d: &Dataset,
    fold: usize,
    grid: &StageGrid,
    opts: &SearchOptions,
    cache: &FeatureCache,
) -> Result<StageTuning> {
    grid.validate()?;
    let rows = check_dataset(d, fold)?;
    let mut tuning = StageTuning {
        fold,
        emd: None,
        wavelet: None,
        records: Vec::new(),
    };
    if opts.stages.contains(&StageKind::Emd) {
        let cands: Vec<PipelineConfig> = grid
            .emd
            .iter()
            .map(|c| PipelineConfig::new(vec![StageConfig::Emd(*c)]))
            .collect::<Result<_>>()?;
        let scores = score_candidates(d, &rows, &cands, opts, cache)?;
        let recs = rank_records(fold, SearchPhase::Emd, &cands, &scores, band_width_key);
        tuning.emd = Some(grid.emd[winner(&recs)?]);
        tuning.records.extend(recs);
    }
    if opts.stages.contains(&StageKind::Wavelet) {
        let cands: Vec<PipelineConfig> = grid
            .wavelet
            .iter()
            .map(|c| PipelineConfig::new(vec![StageConfig::Wavelet(*c)]))
            .collect::<Result<_>>()?;
        let scores = score_candidates(d, &rows, &cands, opts, cache)?;
        let recs = rank_records(fold, SearchPhase::Wavelet, &cands, &scores, band_width_key);
        tuning.wavelet = Some(grid.wavelet[winner(&recs)?]);
        tuning.records.extend(recs);
    }
    Ok(tuning)
}

/// Ordered arrangements of every subset of `kinds`, smallest subsets first.
pub fn enumerate_kind_orderings(kinds: &[StageKind]) -> Result<Vec<Vec<StageKind>>> {
    if kinds.len() > 4 {
        return Err(Error::InvalidArgument(format!(
            "at most 4 stages can be ordered, got {}",
            kinds.len()
        )));
    }
    let mut sorted = kinds.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != kinds.len() {
        return Err(Error::InvalidArgument("stage kinds must be distinct".into()));
    }
    fn extend(prefix: &mut Vec<StageKind>, pool: &[StageKind], size: usize, out: &mut Vec<Vec<StageKind>>) {
        if prefix.len() == size {
            out.push(prefix.clone());
            return;
        }
        for &k in pool {
            if !prefix.contains(&k) {
                prefix.push(k);
                extend(prefix, pool, size, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    for size in 0..=sorted.len() {
        extend(&mut Vec::new(), &sorted, size, &mut out);
    }
    Ok(out)
}

/// All orderings of the given stages (with their hyperparameters), including
/// the empty pipeline.
pub fn enumerate_orderings(stages: &[StageConfig]) -> Result<Vec<PipelineConfig>> {
    let kinds: Vec<StageKind> = stages.iter().map(StageConfig::kind).collect();
    let by_kind: BTreeMap<StageKind, StageConfig> = stages.iter().map(|s| (s.kind(), *s)).collect();
    enumerate_kind_orderings(&kinds)?
        .into_iter()
        .map(|order| PipelineConfig::new(order.iter().map(|k| by_kind[k]).collect()))
        .collect()
}

/// Scores every ordering of the frozen `tuned` stages on `fold`.
pub fn search_ordering(
    d: &Dataset,
    fold: usize,
    tuned: &[StageConfig],
    opts: &SearchOptions,
    cache: &FeatureCache,
) -> Result<(PipelineConfig, Vec<SearchRecord>)> {
    let rows = check_dataset(d, fold)?;
    let cands = enumerate_orderings(tuned)?;
    rank_orderings(d, fold, &rows, cands, opts, cache)
}

fn rank_orderings(
    d: &Dataset,
    fold: usize,
    rows: &[usize],
    cands: Vec<PipelineConfig>,
    opts: &SearchOptions,
    cache: &FeatureCache,
) -> Result<(PipelineConfig, Vec<SearchRecord>)> {
    let scores = score_candidates(d, rows, &cands, opts, cache)?;
    let recs = rank_records(fold, SearchPhase::Ordering, &cands, &scores, PipelineConfig::len);
    let best = winner(&recs)?;
    Ok((cands[best].clone(), recs))
}

/// Every ordering crossed with every grid combination of its stages.
pub fn joint_candidates(kinds: &[StageKind], grid: &StageGrid) -> Result<Vec<PipelineConfig>> {
    let options = |k: StageKind| -> Vec<StageConfig> {
        match k {
            StageKind::Emd => grid.emd.iter().map(|c| StageConfig::Emd(*c)).collect(),
            StageKind::Wavelet => grid.wavelet.iter().map(|c| StageConfig::Wavelet(*c)).collect(),
            StageKind::Tkeo => vec![StageConfig::Tkeo],
        }
    };
    let mut out = Vec::new();
    for order in enumerate_kind_orderings(kinds)? {
        let mut partial: Vec<Vec<StageConfig>> = vec![Vec::new()];
        for k in order {
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    options(k).into_iter().map(move |s| {
                        let mut q = p.clone();
                        q.push(s);
                        q
                    })
                })
                .collect();
        }
        for stages in partial {
            out.push(PipelineConfig::new(stages)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSearch {
    pub fold: usize,
    pub tuned_emd: Option<EmdConfig>,
    pub tuned_wavelet: Option<WaveletConfig>,
    pub winner: PipelineConfig,
    pub winner_aic: f64,
    pub records: Vec<SearchRecord>,
    /// Source ids of the rows that entered the search.
    pub train_ids: Vec<String>,
}

/// Two-stage (or joint) search for one fold.
pub fn optimize_fold(
    d: &Dataset,
    fold: usize,
    grid: &StageGrid,
    opts: &SearchOptions,
    cache: &FeatureCache,
) -> Result<FoldSearch> {
    let rows = check_dataset(d, fold)?;
    let train_ids = rows.iter().map(|&r| d.windows()[r].source_id().to_string()).collect();
    if opts.joint {
        grid.validate()?;
        let cands = joint_candidates(&opts.stages, grid)?;
        let (winner, records) = rank_orderings(d, fold, &rows, cands, opts, cache)?;
        let winner_aic = records.iter().find(|r| r.rank == 1).and_then(|r| r.aic).expect("winner scored");
        return Ok(FoldSearch {
            fold,
            tuned_emd: None,
            tuned_wavelet: None,
            winner,
            winner_aic,
            records,
            train_ids,
        });
    }
    let tuning = tune_stage_hyperparams(d, fold, grid, opts, cache)?;
    let mut frozen = Vec::new();
    for kind in &opts.stages {
        frozen.push(match kind {
            StageKind::Emd => StageConfig::Emd(tuning.emd.expect("tuned")),
            StageKind::Wavelet => StageConfig::Wavelet(tuning.wavelet.expect("tuned")),
            StageKind::Tkeo => StageConfig::Tkeo,
        });
    }
    let (winner, ordering) = search_ordering(d, fold, &frozen, opts, cache)?;
    let winner_aic = ordering.iter().find(|r| r.rank == 1).and_then(|r| r.aic).expect("winner scored");
    let mut records = tuning.records;
    records.extend(ordering);
    Ok(FoldSearch {
        fold,
        tuned_emd: tuning.emd,
        tuned_wavelet: tuning.wavelet,
        winner,
        winner_aic,
        records,
        train_ids,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub grid_mode: GridMode,
    pub aic_lambda: f64,
    pub joint: bool,
    pub folds: Vec<FoldSearch>,
}

pub fn optimize_all(d: &Dataset, grid: &StageGrid, opts: &SearchOptions, cache: &FeatureCache) -> Result<SearchReport> {
    let folds = (0..d.n_folds()?)
        .map(|f| optimize_fold(d, f, grid, opts, cache))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchReport {
        grid_mode: grid.mode,
        aic_lambda: opts.aic_lambda,
        joint: opts.joint,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::apply_pipeline;
    use crate::signal_io::{assign_folds, synth_dataset, SynthSpec};

    #[test]
    fn grid_sizes() {
        let full = StageGrid::full();
        assert_eq!((full.emd.len(), full.wavelet.len()), (30, 24));
        let s = StageGrid::shrunken();
        assert_eq!((s.emd.len(), s.wavelet.len()), (4, 4));
        assert!(s.emd.iter().any(|c| c.imf_upper == Some(8)));
    }

    #[test]
    fn ordering_counts() {
        use StageKind::*;
        assert_eq!(enumerate_kind_orderings(&[Emd, Wavelet, Tkeo]).unwrap().len(), 16);
        assert_eq!(enumerate_kind_orderings(&[Emd]).unwrap(), vec![vec![], vec![Emd]]);
        assert_eq!(enumerate_kind_orderings(&[]).unwrap(), vec![Vec::<StageKind>::new()]);
        assert!(enumerate_kind_orderings(&[Emd, Emd]).is_err());
    }

    #[test]
    fn memo_matches_direct_application() {
        let spec = SynthSpec::balanced(1, 2000.0, 0.1);
        let d = synth_dataset(&spec, 3).unwrap();
        let w = &d.windows()[0];
        let tuned = [
            StageConfig::Emd(EmdConfig::band(1, None)),
            StageConfig::Wavelet(WaveletConfig::new(1, 7, WaveletKind::Gaussian)),
            StageConfig::Tkeo,
        ];
        let mut memo = WindowMemo::default();
        for p in enumerate_orderings(&tuned).unwrap() {
            let got = memo.run(w, &p).unwrap();
            let expected = apply_pipeline(w, &p).unwrap();
            assert_eq!(got.as_slice(), expected.channels(), "{p}");
        }
    }

    #[test]
    fn single_candidate_grid_wins() {
        let spec = SynthSpec::balanced(6, 2000.0, 0.1);
        let d = assign_folds(&synth_dataset(&spec, 4).unwrap(), 3, 1).unwrap();
        let grid = StageGrid {
            mode: GridMode::Full,
            emd: vec![EmdConfig::band(0, Some(7))],
            wavelet: vec![WaveletConfig::new(1, 9, WaveletKind::Morlet)],
        };
        let opts = SearchOptions {
            catalog: FeatureCatalog { bands: 8 },
            ..Default::default()
        };
        let cache = FeatureCache::new();
        let t = tune_stage_hyperparams(&d, 0, &grid, &opts, &cache).unwrap();
        assert_eq!(t.emd, Some(grid.emd[0]));
        assert_eq!(t.wavelet, Some(grid.wavelet[0]));
        let misses = cache.misses();
        tune_stage_hyperparams(&d, 0, &grid, &opts, &cache).unwrap();
        assert_eq!(cache.misses(), misses);
        assert!(cache.hits() > 0);
    }
}
